import math

import numpy as np
import pytest

from cpico.coherence import coherence_report, eigengaps, match_components
from cpico.cp_model import (CPDecomposition, compose, covariance_tensor, data_matrix,
                            gen_spiked_samples, make_rng, random_cp)
from cpico.cpca import (RankError, carry_sign_last, choose_subset, cpca_general,
                        cpca_symmetric, cpca_symmetric_from_data)

from conftest import orthonormal


def test_choose_subset():
    assert choose_subset((10, 12, 14)) == (2,)
    assert choose_subset((20, 20, 20, 20)) == (0, 1)
    assert choose_subset((5, 5, 5, 5, 5, 5)) == (0, 1, 2)
    assert choose_subset((2, 3, 100)) == (2,)


@pytest.mark.parametrize("K", [2, 3])
def test_symmetric_orthogonal_exact(K, rng):
    dims = (5, 4, 3)[:K]
    factors = [orthonormal(rng, d, 3) for d in dims]
    truth = CPDecomposition([5.0, 3.0, 2.0], factors, symmetric_pair=True)
    out = cpca_symmetric(compose(truth), 3)
    m = match_components(out.cp, truth)
    assert m.max_error < 1e-10 and m.weight_rel_error < 1e-10
    assert out.cp.symmetric_pair


@pytest.mark.parametrize("dims", [(6, 7, 8), (4, 5, 3, 4)])
def test_general_orthogonal_exact_and_reconstructs(dims, rng):
    factors = [orthonormal(rng, d, 3) for d in dims]
    truth = CPDecomposition([5.0, 3.0, 2.0], factors)
    t = compose(truth)
    out = cpca_general(t, 3)
    m = match_components(out.cp, truth)
    assert m.max_error < 1e-10 and m.weight_rel_error < 1e-10
    np.testing.assert_allclose(compose(out.cp), t, atol=1e-10)


def test_rank_one_any_coherence_is_exact(rng):
    truth = random_cp((5, 6, 7), [2.5], 0.0, rng)
    out = cpca_general(-compose(truth), 1)  # negative tensor: sign lands in last mode
    assert match_components(out.cp, truth).max_error < 1e-12
    np.testing.assert_allclose(compose(out.cp), -compose(truth), atol=1e-12)


def test_symmetric_noiseless_bound():
    rng = make_rng(9)
    for _ in range(10):
        lam = np.array([10.0, 6.0, 3.0])
        truth = random_cp((6, 7), lam, rng.uniform(0.0, 0.1), rng, symmetric_pair=True)
        out = cpca_symmetric(compose(truth), 3)
        m = match_components(out.cp, truth)
        delta = coherence_report(truth.factors).delta
        gaps = eigengaps(lam)
        for j in range(3):
            bound = (1 + 2 * lam[0] / gaps[j]) ** 2 * delta ** 2
            err = m.errors[j].max()
            assert min(err ** 2, 0.5) <= bound + 1e-9
        assert np.max(np.abs(out.cp.weights[m.permutation] - lam)) <= delta * lam[0] + 1e-9


def test_data_matrix_path_matches_covariance_path():
    rng = make_rng(4)
    truth = random_cp((5, 6), [9.0, 4.0], 0.2, rng, symmetric_pair=True)
    batch = gen_spiked_samples(truth, 200, 1.0, rng)
    a = cpca_symmetric(covariance_tensor(batch), 2)
    b = cpca_symmetric_from_data(data_matrix(batch), (5, 6), 2)
    np.testing.assert_allclose(a.cp.weights, b.cp.weights, rtol=1e-10)
    for fa, fb in zip(a.cp.factors, b.cp.factors):
        np.testing.assert_allclose(fa, fb, atol=1e-9)


def test_rank_errors(rng):
    t = compose(random_cp((3, 4, 5), [1.0], 0.0, rng))
    with pytest.raises(RankError):
        cpca_general(t, 2)            # numerically rank one
    with pytest.raises(RankError):
        cpca_general(t, 6)
    with pytest.raises(ValueError):
        cpca_symmetric(np.zeros((3, 4, 3, 5)), 1)
    with pytest.raises(ValueError):
        cpca_general(np.ones((3, 3)), 1)


def test_carry_sign_last_makes_fit_positive(rng):
    truth = random_cp((4, 5, 6), [3.0, 2.0], 0.1, rng)
    t = compose(truth)
    flipped = [truth.factors[0] * -1, truth.factors[1], truth.factors[2]]
    fixed = carry_sign_last(t, truth.weights, flipped)
    np.testing.assert_allclose(compose(CPDecomposition(truth.weights, fixed)), t, atol=1e-12)
