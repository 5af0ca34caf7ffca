import numpy as np
import pytest

from cpico.cp_model import (CPDecomposition, compose, covariance_tensor, data_matrix,
                            gen_basis, gen_noisy_cp, gen_spiked_samples, geometric_weights,
                            make_rng, random_cp, sorted_cp)


def test_make_rng_streams_reproducible_and_distinct():
    a = make_rng(7, 1, 2).standard_normal(5)
    np.testing.assert_array_equal(a, make_rng(7, 1, 2).standard_normal(5))
    assert not np.allclose(a, make_rng(7, 2, 1).standard_normal(5))
    assert not np.allclose(a, make_rng(8, 1, 2).standard_normal(5))


@pytest.mark.parametrize("theta", [-0.2, 0.0, 0.3162, 0.7])
def test_gen_basis_has_exact_pairwise_cosine(theta):
    a = gen_basis(12, 4, theta, make_rng(3))
    g = a.T @ a
    np.testing.assert_allclose(np.diag(g), 1.0, atol=1e-14)
    np.testing.assert_allclose(g[~np.eye(4, dtype=bool)], theta, atol=1e-13)


def test_gen_basis_rejects_infeasible_coherence():
    with pytest.raises(ValueError):
        gen_basis(10, 3, -0.6, make_rng(0))
    with pytest.raises(ValueError):
        gen_basis(2, 3, 0.1, make_rng(0))


def test_geometric_weights():
    np.testing.assert_allclose(geometric_weights(10, 1.25, 3), [10, 10 / 1.25 ** 0.5, 8])
    np.testing.assert_array_equal(geometric_weights(4, 2, 1), [4])


def test_decomposition_validation():
    f = np.eye(3)[:, :2]
    with pytest.raises(ValueError):
        CPDecomposition([1.0, 2.0], [f, f])       # ascending
    with pytest.raises(ValueError):
        CPDecomposition([2.0, -1.0], [f, f])      # negative
    with pytest.raises(ValueError):
        CPDecomposition([2.0, 1.0], [2 * f, f])   # not unit norm
    with pytest.raises(ValueError):
        CPDecomposition([2.0, 1.0], [f[:, :1], f])
    cp = sorted_cp([1.0, 2.0], [f, f])
    np.testing.assert_array_equal(cp.factors[0][:, 0], [0, 1, 0])


def test_json_roundtrip():
    cp = random_cp((4, 5), [3.0, 2.0], 0.1, make_rng(1), symmetric_pair=True)
    back = CPDecomposition.from_json(cp.to_json())
    assert back.symmetric_pair and back.order == 4
    np.testing.assert_array_equal(back.weights, cp.weights)
    for a, b in zip(back.factors, cp.factors):
        np.testing.assert_array_equal(a, b)
    doc = cp.to_dict()
    np.testing.assert_array_equal(doc["factors"][1][0], cp.factors[1][:, 0])


def test_compose_matches_explicit_sum():
    cp = random_cp((3, 4, 5), [3.0, 1.0], 0.2, make_rng(2))
    a, b, c = cp.factors
    expected = np.einsum("r,ir,jr,kr->ijk", cp.weights, a, b, c)
    np.testing.assert_allclose(compose(cp), expected, atol=1e-14)
    sym = random_cp((3, 4), [2.0], 0.0, make_rng(2), symmetric_pair=True)
    x, y = sym.factors
    np.testing.assert_allclose(compose(sym), 2.0 * np.einsum("i,j,k,l->ijkl", x[:, 0], y[:, 0],
                                                             x[:, 0], y[:, 0]))


def test_spiked_samples_structure_and_covariance():
    cp = random_cp((3, 4), [9.0, 4.0], 0.2, make_rng(4), symmetric_pair=True)
    scores = np.array([[1.0, 0.0], [0.0, 2.0]])
    batch = gen_spiked_samples(cp, 2, 0.0, make_rng(5), scores=scores)
    a, b = cp.factors
    np.testing.assert_allclose(batch.samples[0], 3.0 * np.outer(a[:, 0], b[:, 0]))
    np.testing.assert_allclose(batch.samples[1], 4.0 * np.outer(a[:, 1], b[:, 1]))
    big = gen_spiked_samples(cp, 4000, 1.0, make_rng(6))
    cov = covariance_tensor(big).reshape(12, 12, order="F")
    expected = compose(cp).reshape(12, 12, order="F") + np.eye(12)
    assert np.abs(cov - expected).max() < 0.6
    dm = data_matrix(big)
    assert dm.shape == (12, 4000)
    np.testing.assert_allclose(dm[:, 7] * np.sqrt(4000), big.samples[7].reshape(-1, order="F"))


def test_spiked_samples_need_paired_model():
    cp = random_cp((3, 4, 5), [1.0], 0.0, make_rng(0))
    with pytest.raises(ValueError):
        gen_spiked_samples(cp, 10, 1.0, make_rng(0))


def test_noisy_cp_noise_level():
    cp = random_cp((10, 10, 10), [5.0], 0.0, make_rng(0))
    t = gen_noisy_cp(cp, 0.5, make_rng(1))
    assert np.std(t - compose(cp)) == pytest.approx(0.5, rel=0.1)
    np.testing.assert_array_equal(gen_noisy_cp(cp, 0.0, make_rng(1)), compose(cp))
