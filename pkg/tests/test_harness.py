import math

import numpy as np
import pytest

from heavytraffic.control import CapacityFace, ServiceSet
from heavytraffic.distributions import DistFamily, bernoulli
from heavytraffic.errors import DivergenceError, ValidationError
from heavytraffic.estimation import EstimatorConfig, run_steady_state
from heavytraffic.harness import (
    SWEEP_COLUMNS, SweepRow, collapse_check, face_saturation_check, fit_rate, fit_through_origin,
    ssc_bound_constants, ssc_empirical_check, stirling_factor, sweep,
)
from heavytraffic.system import SystemSpec, SystemTemplate

SINGLE = SystemTemplate("single_server", 1, "single", DistFamily("bernoulli"), service=(bernoulli(0.5),))
FACE = CapacityFace((1, 1), 1, (0.5, 0.5), delta=0.5)
SCHED = SystemTemplate("schedule", 2, "maxweight", DistFamily("bernoulli"),
                       service_set=ServiceSet(((1, 0), (0, 1), (0, 0))), face=FACE)


def _rows(eps, dw):
    return [SweepRow(e, d, d / e, 0, 0, 0, 0, 0, None, None) for e, d in zip(eps, dw)]


def test_fit_exact_models():
    eps = np.array([0.2, 0.1, 0.05])
    K, r2 = fit_rate(_rows(eps, 0.3 * eps), "linear")
    assert K == pytest.approx(0.3, abs=1e-12) and r2 == pytest.approx(1.0, abs=1e-12)
    K, r2 = fit_rate(_rows(eps, eps * np.log(1 / eps)), "eps_log")
    assert K == pytest.approx(1.0, abs=1e-12) and r2 == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValidationError):
        fit_rate(_rows([0.1], [0.01]))
    with pytest.raises(ValidationError):
        fit_rate(_rows(eps, eps), "cubic")
    assert fit_through_origin([1, 2], [3, 3]) == (pytest.approx(1.8), -math.inf)


def test_sweep_structure_and_determinism():
    cfg = EstimatorConfig(horizon=100_000, seed=1)
    a = sweep(SINGLE, [0.1, 0.2, 0.15, 0.3], cfg)
    assert [r.epsilon for r in a.rows] == [0.3, 0.2, 0.15, 0.1]
    assert a.to_csv().splitlines()[0] == ",".join(SWEEP_COLUMNS)
    assert len(a.to_csv().splitlines()) == 5
    for r in a.rows:
        assert r.dw >= 0 and r.dw_over_eps == r.dw / r.epsilon
        spec = SINGLE.at(r.epsilon)
        assert r.target_mean == 1 / spec.target_rate
    b = sweep(SINGLE, [0.1, 0.2, 0.15, 0.3], cfg, workers=2)
    assert a.to_csv() == b.to_csv() and a.fit_report() == b.fit_report()
    assert set(a.fit_report()) == {"linear", "eps_log"}
    with pytest.raises(ValidationError):
        sweep(SINGLE, [], cfg)


def test_sweep_divergence_names_epsilon():
    cfg = EstimatorConfig(horizon=50_000, guard=3)
    with pytest.raises(DivergenceError) as info:
        sweep(SINGLE, [0.2, 0.01], cfg)
    assert info.value.epsilon in (0.2, 0.01) and "epsilon=" in str(info.value)


def test_ssc_constants_worked_example():
    c = ssc_bound_constants(2, 1, 1, 0.1, 1)
    assert c.L == 2 and c.D == pytest.approx(math.sqrt(2), abs=1e-15)
    assert c.kappa == pytest.approx(40) and c.eta == pytest.approx(0.05)
    assert c.V_r == pytest.approx(80 + (16 + 4 * math.sqrt(2) * 0.1) / 0.1, abs=1e-9)
    assert c.V_r == pytest.approx(245.657, abs=1e-3)
    assert c.M_r_bound == pytest.approx(c.V_r, abs=1e-12)
    assert stirling_factor(1) == 1.0
    assert ssc_bound_constants(2, 1, 1, 0.2, 1).V_r < c.V_r
    with pytest.raises(ValidationError):
        ssc_bound_constants(2, 1, 1, 0.0, 1)


def test_stirling_step():
    for r in range(1, 11):
        assert stirling_factor(r) >= math.factorial(r) / math.e
        assert stirling_factor(r) >= math.factorial(r)


def test_ssc_empirical_trivial_cases():
    est = run_steady_state(SINGLE.at(0.1), EstimatorConfig(horizon=50_000, perp_orders=(1.0, 2.0)))
    chk = ssc_empirical_check(est, ssc_bound_constants(1, 1, 1, 0.5, 2))
    assert chk.estimate == 0 and chk.passed
    chk0 = ssc_empirical_check(est, ssc_bound_constants(1, 1, 1, 0.5, 0))
    assert chk0.estimate == 1.0 and chk0.passed
    with pytest.raises(ValidationError):
        ssc_empirical_check(est, ssc_bound_constants(1, 1, 1, 0.5, 3))


def test_face_saturation_definitions():
    all_on = SystemTemplate("schedule", 2, "maxweight", DistFamily("bernoulli"),
                            service_set=ServiceSet(((1, 0), (0, 1))), face=FACE)
    est = run_steady_state(all_on.at(0.1), EstimatorConfig(horizon=50_000))
    rep = face_saturation_check(est, FACE, 2.0)
    assert rep.one_minus_pi == 0 and rep.moment == 0 and est.face_saturation == 1.0
    est = run_steady_state(SCHED.at(0.1), EstimatorConfig(horizon=50_000))
    rep = face_saturation_check(est, FACE, 2.0)
    counts = np.array(est.schedule_counts, dtype=float)
    freq = counts / counts.sum()
    assert rep.moment == pytest.approx(freq[2] * 1.0**2)
    assert rep.one_minus_pi == pytest.approx(1 - est.face_saturation, abs=1e-12)
    with pytest.raises(ValidationError):
        face_saturation_check(est, FACE, 1.0)


def test_collapse_report_on_small_sweep():
    res = sweep(SCHED, [0.2, 0.1], EstimatorConfig(horizon=400_000, seed=2))
    rep = collapse_check(res)
    assert rep.perp_ratio >= 1.0 and len(rep.parallel_growth) == 1


def test_target_rate_general_face():
    spec = SCHED.at(0.1)
    # unit-gap convention: 2 * ||c||^2 / <c^2, sigma^2> for c = (1, 1)
    sigma2 = 2 * 0.4 * 0.6
    assert spec.target_rate == pytest.approx(2 * 2 / sigma2)
    single = SINGLE.at(0.05)
    assert single.target_mean == pytest.approx((0.2475 + 0.25) / 2)


def test_system_spec_validation():
    with pytest.raises(ValidationError):
        SystemSpec("load_balance", 1, "jsq", (bernoulli(0.5),), (bernoulli(0.5),), epsilon=0.1)
    with pytest.raises(ValidationError):
        SystemSpec("schedule", 2, "maxweight", (bernoulli(0.5),) * 2, None, epsilon=0.1)
    with pytest.raises(ValidationError):
        SystemSpec("single_server", 1, "jsq", (bernoulli(0.5),), (bernoulli(0.5),), epsilon=0.1)
    with pytest.raises(ValidationError):
        SINGLE.at(0.0)
    with pytest.raises(ValidationError):
        SystemTemplate("schedule", 2, "maxweight", DistFamily("bernoulli"),
                       service_set=ServiceSet(((1, 0),)), face=FACE)
