import math

import numpy as np
import pytest

from tasep_lab.core import BoundaryMechanism, InvalidParamsError, ModelParams, Transition, concrete_mechanism
from tasep_lab.estimators import (
    density_profile,
    estimate_current,
    estimate_event_rate,
    estimate_first_order,
    estimate_survival,
    replica_seed,
    rho_from_current,
    run_replicas,
)
from tasep_lab.oracle import FiniteModelSpec, exact_event_rate, solve


def test_replica_seeds():
    assert replica_seed(5, 0) == 5
    assert replica_seed(0, 1) == 0x9E3779B97F4A7C15
    assert replica_seed(2**64 - 1, 3) < 2**64


def test_run_replicas_is_index_ordered():
    out1 = run_replicas(lambda i, s: (i, s), 17, 9, threads=1)
    out4 = run_replicas(lambda i, s: (i, s), 17, 9, threads=4)
    assert out1 == out4 == [(i, replica_seed(9, i)) for i in range(17)]


def test_zero_lambda_current_is_zero():
    e = estimate_current(ModelParams(0.0, 0.2), 100.0, 500.0, 4, 1)
    assert e.point == 0.0 and e.std_error == 0.0


def test_current_determinism_and_threads():
    p = ModelParams(0.3, 0.05)
    a = estimate_current(p, 200.0, 1000.0, 8, 11, threads=1)
    b = estimate_current(p, 200.0, 1000.0, 8, 11, threads=4)
    assert a.point == b.point and a.std_error == b.std_error
    assert a.details["per_replica"] == b.details["per_replica"]


def test_current_sandwich_small():
    e = estimate_current(ModelParams(0.25, 0.05), 2000.0, 1e4, 20, 3)
    assert 0.1875 - 3 * e.std_error <= e.point <= 0.21 + 3 * e.std_error


def test_rho_from_current():
    assert rho_from_current(0.0) == (0.0, False)
    assert rho_from_current(0.25) == (0.5, True)
    assert rho_from_current(0.21).rho == pytest.approx(0.3, abs=1e-12)
    with pytest.raises(InvalidParamsError):
        rho_from_current(0.2500001)
    for lam in np.linspace(0, 0.4999, 200):
        assert abs(rho_from_current(lam * (1 - lam)).rho - lam) <= 1e-12


def test_event_rate_matches_oracle():
    mech = concrete_mechanism(0.3, 0.0)
    ti = mech.index_of((0, 0), (1, 0))
    exact = exact_event_rate(solve(FiniteModelSpec(3, mech)), mech, ti, (0, None))
    est = estimate_event_rate(mech, ti, (0, None), 3, 100.0, 2e4, 5, replicas=10)
    assert abs(est.point - exact) <= 3 * est.std_error
    occ = est.details["occupation_estimate"]
    occ_se = est.details["occupation_std_error"]
    assert abs(est.point - occ) <= 3 * math.hypot(est.std_error, occ_se)


def test_event_rate_trivial_cases():
    # a transition with d = 0 never fires
    mech = BoundaryMechanism(2, (Transition((0, 0), (1, 0), 0.3), Transition((0, 1), (1, 1), 0.0)))
    assert estimate_event_rate(mech, 1, (0, None), 3, 10.0, 500.0, 1, replicas=3).point == 0.0
    # with no entries a pattern requiring a particle is never seen
    none = concrete_mechanism(0.0, 0.0)
    z = estimate_event_rate(none, 0, (1, None), 3, 10.0, 500.0, 1, replicas=3)
    assert z.point == 0.0 and z.details["occupation_estimate"] == 0.0


def test_event_rate_precondition():
    mech = concrete_mechanism(0.3, 0.0)
    with pytest.raises(InvalidParamsError):
        estimate_event_rate(mech, ((0, 0), (1, 0)), (1, 0), 3, 10.0, 100.0, 1)


def test_survival_trivial_endpoints():
    e = estimate_survival(0.0, x_far=50, replicas=20, seed=1)
    assert e.point == 1.0 and e.died == 0 and e.censored == 0
    with pytest.raises(InvalidParamsError):
        estimate_survival(0.6)
    with pytest.raises(InvalidParamsError):
        estimate_survival(0.2, x_far=5)


def test_survival_censoring_flag():
    e = estimate_survival(0.2, x_far=200, t_max=20.0, replicas=20, seed=2)
    assert e.unreliable and e.warning


def test_survival_records_consistent():
    e = estimate_survival(0.25, x_far=40, replicas=50, seed=4, path_cadence=5.0)
    for r in e.records:
        if r.classification == "died":
            assert r.death_time is not None
        if r.classification == "survived":
            assert r.max_position >= 40 and r.death_time is None
        assert r.path is not None


def test_first_order_preconditions():
    with pytest.raises(InvalidParamsError):
        estimate_first_order(0.25, [0.0, 0.01, 0.02], 10.0, 100.0, 2, 0)
    with pytest.raises(InvalidParamsError):
        estimate_first_order(0.25, [0.01, 0.02], 10.0, 100.0, 2, 0)
    with pytest.raises(InvalidParamsError):
        estimate_first_order(0.25, [0.01, 0.02, 0.3], 10.0, 100.0, 2, 0)


def test_first_order_small_lambda():
    """Near lam = 0 the tagged particle almost always survives, so the slope is close to lam(1-lam)."""
    lam = 0.05
    r = estimate_first_order(lam, [0.02, 0.04, 0.08], 500.0, 5000.0, 100, 7)
    assert r.slope.details["negative_differences"] == 0
    surv = estimate_survival(lam, x_far=200, replicas=400, seed=8)
    ratio = r.slope.point / (lam * (1 - lam))
    ratio_se = r.slope.std_error / (lam * (1 - lam))
    assert abs(ratio - 1.0) <= 3 * ratio_se, (ratio, ratio_se)
    assert abs(ratio - surv.point) <= 3 * math.hypot(ratio_se, surv.std_error), (ratio, surv.point)


def test_profile_zero_and_determinism():
    prof = density_profile(ModelParams(0.0), 10.0, 100.0, range(1, 6), 3, 0)
    assert np.all(prof.point == 0.0)
    p = ModelParams(0.3)
    a = density_profile(p, 100.0, 500.0, range(3, 11), 6, 4, threads=1)
    b = density_profile(p, 100.0, 500.0, range(3, 11), 6, 4, threads=3)
    assert np.array_equal(a.point, b.point) and np.array_equal(a.std_error, b.std_error)
    assert len(a) == 8 and a[0].point == a.point[0]
    with pytest.raises(InvalidParamsError):
        density_profile(p, 1.0, 1.0, [200], 2, 0)


def test_profile_at_zero_eps():
    prof = density_profile(ModelParams(0.3), 2000.0, 5000.0, range(3, 51), 20, 5)
    assert np.all(np.abs(prof.point - 0.3) <= 3 * prof.std_error)
