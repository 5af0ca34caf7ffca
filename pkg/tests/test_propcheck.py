import numpy as np
import pytest

from cpico.coherence import coherence_report
from cpico.cp_model import gen_basis, make_rng
from cpico.propcheck import (MARGIN_TOL, PROPS, _polar, _trial_prop1, check_prop2_transform,
                             check_prop3_rankone, run_check)


@pytest.mark.parametrize("prop", PROPS)
def test_each_check_passes_small_run(prop):
    rep = run_check(prop, 60, seed=3)
    assert rep.passed, rep.to_dict()
    assert rep.compliant + rep.skipped == 60
    assert rep.violating_trial is None


def test_reports_are_seed_reproducible():
    a = check_prop2_transform(50, seed=5)
    b = check_prop2_transform(50, seed=5)
    assert a.min_margin == b.min_margin
    assert check_prop3_rankone(50, seed=6).min_margin != a.min_margin


def test_threads_do_not_change_report():
    a = run_check(7, 40, seed=1)
    b = run_check(7, 40, seed=1, threads=3)
    assert a.to_dict() == b.to_dict()


def test_orthonormal_transform_is_exact():
    q, _ = np.linalg.qr(make_rng(0).standard_normal((6, 3)))
    np.testing.assert_allclose(_polar(q), q, atol=1e-14)


def test_prop3_equality_case():
    rng = make_rng(1)
    a, b = rng.standard_normal(4), rng.standard_normal(5)
    a /= np.linalg.norm(a)
    b /= np.linalg.norm(b)
    u, _, _ = np.linalg.svd(np.outer(a, b))
    assert abs(abs(u[:, 0] @ a) - 1) < 1e-14


def test_mu_below_one_with_four_modes_is_counted_not_failed():
    # trial 6483 of seed 1 has mu_S < 1 while every delta_S bound holds
    margin, flagged = _trial_prop1(make_rng(1, 1, 6483))
    assert flagged and margin >= -MARGIN_TOL


def test_compound_symmetric_delta_is_analytic():
    r, theta = 4, 0.25
    factors = [gen_basis(10, r, theta, make_rng(k)) for k in range(3)]
    rep = coherence_report(factors)
    assert rep.delta == pytest.approx((r - 1) * theta ** 3, abs=1e-12)
    assert rep.mu_S == pytest.approx(np.sqrt(r) / np.sqrt(r - 1) * 1.0, rel=1e-12)


def test_unknown_prop_and_bad_trials():
    with pytest.raises(ValueError):
        run_check(6, 10)
    with pytest.raises(ValueError):
        run_check(2, 0)
