import numpy as np
import pytest

from cpico.coherence import match_components
from cpico.cp_model import (CPDecomposition, compose, covariance_tensor, data_matrix,
                            gen_spiked_samples, make_rng, random_cp)
from cpico.cpca import cpca_general, cpca_symmetric
from cpico.ico import (DegenerateContractionError, ICOConfig, ico_general, ico_symmetric,
                       ico_symmetric_from_data, one_step_update)
from cpico.spectral import IllConditionedError


def _perturbed(factors, size, rng):
    out = []
    for f in factors:
        g = rng.standard_normal(f.shape)
        g -= f * np.sum(f * g, axis=0)
        g *= size / np.linalg.norm(g, axis=0)
        p = f + g
        out.append(p / np.linalg.norm(p, axis=0))
    return out


def test_config_validation():
    with pytest.raises(ValueError):
        ICOConfig(max_iter=0)
    with pytest.raises(ValueError):
        ICOConfig(tol=-1)
    with pytest.raises(ValueError):
        ICOConfig(ridge=-1)


def test_symmetric_noiseless_converges_from_cpca():
    truth = random_cp((20, 20), [100.0, 80.0, 64.0], 10 ** -0.5, make_rng(1), symmetric_pair=True)
    t = compose(truth)
    init = cpca_symmetric(t, 3).cp
    est, trace = ico_symmetric(t, 3, init, ICOConfig(tol=1e-12), truth=truth)
    m = match_components(est, truth)
    assert m.max_error < 1e-12 and m.weight_rel_error < 1e-12
    assert trace.stop_reason == "tolerance"
    ups = trace.sweep_updates()
    assert np.all(np.diff(ups[:3]) <= 0)


def test_general_noiseless_converges_and_reconstructs():
    truth = random_cp((10, 12, 14, 8), [10.0, 8.0, 6.0], 0.3, make_rng(2))
    t = compose(truth)
    est, trace = ico_general(t, 3, cpca_general(t, 3).cp, ICOConfig(tol=1e-13))
    assert match_components(est, truth).max_error < 1e-12
    np.testing.assert_allclose(compose(est), t, atol=1e-10)


@pytest.mark.parametrize("symmetric", [True, False])
def test_rank_one_exact_in_one_sweep(symmetric):
    rng = make_rng(3)
    dims = (4, 5) if symmetric else (4, 5, 6)
    truth = random_cp(dims, [3.0], 0.0, rng, symmetric_pair=symmetric)
    init = [g / np.linalg.norm(g) for g in (rng.standard_normal((d, 1)) for d in dims)]
    est = one_step_update(compose(truth), 1, init, symmetric=symmetric)
    assert match_components(est, truth).max_error < 1e-12


@pytest.mark.parametrize("symmetric", [True, False])
def test_truth_is_fixed_point(symmetric):
    dims = (5, 6) if symmetric else (5, 6, 7)
    truth = random_cp(dims, [4.0, 2.0], 0.3, make_rng(4), symmetric_pair=symmetric)
    t = compose(truth)
    fn = ico_symmetric if symmetric else ico_general
    est, trace = fn(t, 2, truth.factors, ICOConfig(max_iter=1))
    assert trace.sweep_updates()[0] <= 1e-10
    np.testing.assert_allclose(est.weights, truth.weights, rtol=1e-12)


def test_one_step_equals_single_sweep():
    truth = random_cp((6, 7, 8), [4.0, 2.0], 0.2, make_rng(5))
    t = compose(truth)
    init = _perturbed(truth.factors, 0.05, make_rng(6))
    a = one_step_update(t, 2, init)
    b, _ = ico_general(t, 2, init, ICOConfig(tol=0.0, max_iter=1))
    for fa, fb in zip(a.factors, b.factors):
        np.testing.assert_array_equal(fa, fb)


def test_permuted_and_flipped_init_gives_same_output():
    truth = random_cp((6, 7, 8), [4.0, 2.0, 1.0], 0.2, make_rng(7))
    t = compose(truth)
    init = _perturbed(truth.factors, 0.05, make_rng(8))
    perm = [2, 0, 1]
    other = [f[:, perm] * np.array([1.0, -1.0, 1.0]) for f in init]
    cfg = ICOConfig(max_iter=2)
    a, _ = ico_general(t, 3, init, cfg)
    b, _ = ico_general(t, 3, other, cfg)
    np.testing.assert_allclose(a.weights, b.weights, rtol=1e-10)
    for fa, fb in zip(a.factors, b.factors):
        np.testing.assert_allclose(fa, fb, atol=1e-10)


def test_scale_equivariance():
    truth = random_cp((6, 7), [4.0, 2.0], 0.2, make_rng(9), symmetric_pair=True)
    t = compose(truth)
    init = _perturbed(truth.factors, 0.05, make_rng(10))
    a, _ = ico_symmetric(t, 2, init, ICOConfig(max_iter=2))
    b, _ = ico_symmetric(7.0 * t, 2, init, ICOConfig(max_iter=2))
    np.testing.assert_allclose(b.weights, 7.0 * a.weights, rtol=1e-10)
    gen = random_cp((5, 6, 7), [4.0, 2.0], 0.2, make_rng(11))
    g = compose(gen)
    ginit = _perturbed(gen.factors, 0.05, make_rng(12))
    c, _ = ico_general(g, 2, ginit, ICOConfig(max_iter=2))
    d, _ = ico_general(-3.0 * g, 2, ginit, ICOConfig(max_iter=2))
    np.testing.assert_allclose(d.weights, 3.0 * c.weights, rtol=1e-10)


@pytest.mark.parametrize("symmetric", [True, False])
def test_superlinear_contraction(symmetric):
    dims = (8, 9) if symmetric else (8, 9, 10)
    truth = random_cp(dims, [4.0, 3.0, 2.0], 10 ** -0.5, make_rng(13), symmetric_pair=symmetric)
    t = compose(truth)
    before, after = [], []
    for size in np.geomspace(1e-4, 1e-1, 8):
        init = _perturbed(truth.factors, size, make_rng(14))
        est = one_step_update(t, 3, init, symmetric=symmetric)
        start = CPDecomposition(truth.weights, init, symmetric_pair=symmetric)
        before.append(match_components(start, truth).max_error)
        after.append(match_components(est, truth).max_error)
    slope = np.polyfit(np.log(before), np.log(after), 1)[0]
    assert slope >= 1.5


def test_data_matrix_path_matches_tensor_path():
    rng = make_rng(15)
    truth = random_cp((5, 6), [9.0, 4.0], 0.2, rng, symmetric_pair=True)
    batch = gen_spiked_samples(truth, 300, 1.0, rng)
    t = covariance_tensor(batch)
    init = cpca_symmetric(t, 2).cp
    cfg = ICOConfig(tol=1e-10)
    a, ta = ico_symmetric(t, 2, init, cfg)
    b, tb = ico_symmetric_from_data(data_matrix(batch), (5, 6), 2, init, cfg)
    assert ta.iterations == tb.iterations
    np.testing.assert_allclose(a.weights, b.weights, rtol=1e-9)
    for fa, fb in zip(a.factors, b.factors):
        np.testing.assert_allclose(fa, fb, atol=1e-8)


def test_trace_csv_and_true_errors():
    truth = random_cp((6, 7, 8), [4.0, 2.0], 0.2, make_rng(16))
    t = compose(truth)
    est, trace = ico_general(t, 2, _perturbed(truth.factors, 0.1, make_rng(17)),
                             ICOConfig(max_iter=3, tol=0.0, trace=True), truth=truth)
    lines = trace.to_csv().splitlines()
    assert lines[0] == "sweep,mode,max_update,max_true_error"
    assert len(lines) == 1 + 3 * 3
    assert trace.stop_reason == "max-iter" and trace.iterations == 3
    assert len(trace.snapshots) == 3 and len(trace.errors) == 3
    assert trace.errors[-1].shape == (2, 3)
    assert all(r["max_update"] >= 0 for r in trace.rows)


def test_collapsed_init_raises_ill_conditioned():
    truth = random_cp((5, 6, 7), [4.0, 2.0], 0.2, make_rng(18))
    same = [np.column_stack([f[:, 0], f[:, 0]]) for f in truth.factors]
    with pytest.raises(IllConditionedError):
        ico_general(compose(truth), 2, same)


def test_zero_contraction_raises():
    a = np.eye(3)[:, :1]
    truth = CPDecomposition([1.0], [a, a, a])
    perp = np.eye(3)[:, 1:2]
    with pytest.raises(DegenerateContractionError):
        ico_general(compose(truth), 1, [perp, perp, perp])


def test_init_validation():
    truth = random_cp((4, 5, 6), [1.0], 0.0, make_rng(19))
    with pytest.raises(ValueError):
        ico_general(compose(truth), 1, [2 * f for f in truth.factors])
    with pytest.raises(ValueError):
        ico_general(compose(truth), 1, truth.factors[:2])
