import numpy as np
import pytest

from cpico.spectral import (DENSE_LIMIT, IllConditionedError, gram_delta, right_inverse,
                            sign_normalize, spectral_norm, top_eigs_sym, top_left_singular,
                            top_svd)

from conftest import orthonormal


def test_sign_normalize_largest_entry_positive_ties_to_lowest_index():
    v = np.array([[0.5, -1.0], [-0.5, 1.0], [0.2, 0.0]])
    out, signs = sign_normalize(v)
    np.testing.assert_array_equal(signs, [1.0, -1.0])
    np.testing.assert_array_equal(out[:, 1], [1.0, -1.0, 0.0])
    vec, s = sign_normalize(np.array([0.1, -0.9]))
    assert s[0] == -1 and vec[1] == 0.9


def test_top_eigs_matches_numpy(rng):
    g = rng.standard_normal((30, 30))
    m = g + g.T
    res = top_eigs_sym(m, 4)
    w = np.linalg.eigvalsh(m)[::-1][:4]
    np.testing.assert_allclose(res.values, w, rtol=1e-12)
    np.testing.assert_allclose(m @ res.vectors, res.vectors * res.values, atol=1e-10)
    assert np.all(np.abs(res.vectors).argmax(axis=0) == np.argmax(res.vectors, axis=0))


def test_top_svd_matches_numpy_and_flips_right_vectors(rng):
    m = rng.standard_normal((20, 12))
    u, s, v = top_svd(m, 3)
    np.testing.assert_allclose(s, np.linalg.svd(m, compute_uv=False)[:3], rtol=1e-12)
    np.testing.assert_allclose(m @ v, u * s, atol=1e-10)
    np.testing.assert_allclose(m.T @ u, v * s, atol=1e-10)


def test_iterative_path_above_dense_limit(rng):
    n = DENSE_LIMIT + 40
    q = orthonormal(rng, n, 3)
    m = q @ np.diag([5.0, 3.0, 2.0]) @ q.T + 1e-3 * np.eye(n)
    res = top_eigs_sym(m, 3)
    np.testing.assert_allclose(res.values, [5.001, 3.001, 2.001], rtol=1e-9)
    u, s, _ = top_svd(q * [5.0, 3.0, 2.0] @ orthonormal(rng, n, 3).T, 2)
    np.testing.assert_allclose(s, [5.0, 3.0], rtol=1e-9)
    np.testing.assert_allclose(np.abs(u.T @ q[:, :2]), np.eye(2), atol=1e-8)


def test_rank_out_of_range():
    with pytest.raises(ValueError):
        top_eigs_sym(np.eye(3), 4)
    with pytest.raises(ValueError):
        top_svd(np.ones((3, 2)), 0)


def test_top_left_singular_edge_cases():
    np.testing.assert_array_equal(top_left_singular(np.array([[3.0, 4.0]])), [1.0])
    np.testing.assert_allclose(top_left_singular(np.array([[-3.0], [4.0]])), [-0.6, 0.8])
    with pytest.raises(ArithmeticError):
        top_left_singular(np.zeros((3, 1)))
    a = np.outer([3.0, -4.0], [1.0, 2.0, 2.0])
    np.testing.assert_allclose(top_left_singular(a), [-0.6, 0.8])


def test_right_inverse_is_dual_basis(rng):
    a = rng.standard_normal((8, 3))
    b = right_inverse(a)
    np.testing.assert_allclose(a.T @ b, np.eye(3), atol=1e-12)
    ridged = right_inverse(a, ridge=0.5)
    np.testing.assert_allclose(ridged, a @ np.linalg.inv(a.T @ a + 0.5 * np.eye(3)))


def test_right_inverse_ill_conditioned_reports_eigenvalue():
    a = np.array([[1.0, 1.0], [0.0, 1e-9], [0.0, 0.0]])
    with pytest.raises(IllConditionedError) as err:
        right_inverse(a)
    assert err.value.min_eigenvalue == pytest.approx(5e-19, rel=0.1)
    right_inverse(a, ridge=1e-3)  # a ridge makes it solvable


def test_gram_delta_compound_symmetric():
    theta, r = 0.2, 4
    c = np.full((r, r), theta) + (1 - theta) * np.eye(r)
    w, v = np.linalg.eigh(c)
    a = (v * np.sqrt(w)) @ v.T
    # eigenvalues of C - I are (r-1) theta and -theta
    assert gram_delta(a) == pytest.approx((r - 1) * theta, rel=1e-12)
    assert spectral_norm(np.zeros((0, 0))) == 0.0
