from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gridrm.life import WeibullLife, failure_probability, interval_probability
from gridrm.mt import (
    EvalCache, InnerPolicy, MaintenanceSchedule, SamplerSpec, Scenario, SeverityAggregator,
    ages_at, estimate_achievability, estimate_chance_constraint, estimate_expected_cost,
    failure_draw, initial_state, sample_scenario, stream, transition, wilson_interval,
)
from gridrm.mt.state import HOURS_PER_MONTH, TickStreams, draw_forecast, realize

from conftest import mt_case

POLICY = InnerPolicy.parse("nminus1")


# -- life model ---------------------------------------------------------------------

def test_zero_nu_never_fails():
    life = WeibullLife(0.0, 1.0, 1e-4, 1.0)
    assert all(failure_probability(life, t) == 0 for t in (0, 1e3, 1e6))


def test_zero_gamma_is_age_free():
    life = WeibullLife(0.01, 2.0, 0.0, 1.5)
    expect = 1 - math.exp(-0.01 * 2.0 ** 1.5)
    assert failure_probability(life, 0) == pytest.approx(expect, rel=1e-15)
    assert failure_probability(life, 5e5) == pytest.approx(expect, rel=1e-15)


def test_value_at_zero_age_exact():
    life = WeibullLife(0.003, 1.7, 1e-5, 2.0)
    assert failure_probability(life, 0.0) == pytest.approx(-math.expm1(-0.003 * 1.7 ** 2.0), rel=1e-15)


@given(st.floats(1e-6, 0.1), st.floats(0.1, 3), st.floats(1e-7, 1e-4), st.floats(0.5, 3),
       st.floats(0, 1e5), st.floats(1, 1e4))
def test_hazard_monotone_and_bounded(nu, alpha, gamma, s, tau, step):
    life = WeibullLife(nu, alpha, gamma, s)
    a, b = failure_probability(life, tau), failure_probability(life, tau + step)
    assert 0 <= a <= b <= 1
    if nu * (alpha * math.exp(gamma * (tau + step))) ** s < 30:
        assert b < 1


def test_strictly_increasing_with_positive_parameters():
    life = WeibullLife(0.002, 1.0, 2.6e-5, 1.0)
    assert failure_probability(life, 1001.0) > failure_probability(life, 1000.0)


def test_interval_probability_composes():
    life = WeibullLife(0.01, 1.0, 0.0, 1.0)
    h = failure_probability(life, 0)
    assert interval_probability(life, 0, 720) == pytest.approx(h)
    assert 1 - (1 - interval_probability(life, 0, 360)) ** 2 == pytest.approx(h)


# -- transition --------------------------------------------------------------------

def _state_with_forecast(case, seed=0):
    s = initial_state(case)
    lf, wf = draw_forecast(case, 1.0, stream(seed, 0))
    return replace(s, load_forecast=lf, wind_forecast=wf)


def test_quiet_tick_only_ages():
    case = mt_case(nu=0.0)
    s0 = _state_with_forecast(case)
    tr = transition(case, s0, None, np.random.default_rng(1), hour=0)
    assert tr.state.topology == s0.topology
    np.testing.assert_allclose(tr.state.ages, s0.ages + 1)
    assert tr.log_p == 0 and not tr.failed.any()


def test_completed_maintenance_resets_age():
    case = mt_case()
    sched = MaintenanceSchedule.from_actions(case, 2, [(1, "L13")])
    end = HOURS_PER_MONTH + 7 * 24
    assert ages_at(case, sched, end)[2] == 0
    assert ages_at(case, sched, end - 1)[2] == pytest.approx(10_000 + end - 1)
    assert ages_at(case, sched, end + 5)[2] == 5


def test_maintained_line_is_out():
    case = mt_case(nu=0.0)
    sched = MaintenanceSchedule.from_actions(case, 1, [(0, "L12")])
    tr = transition(case, _state_with_forecast(case), sched, np.random.default_rng(0), hour=3)
    assert tr.state.topology.line_status == (False, True, True)


def test_zero_sigma_reproduces_forecast():
    case = mt_case(load_sigma=0.0, wind_sigma=0.0)
    s = _state_with_forecast(case)
    load, wind = realize(case, s, 5, np.random.default_rng(3))
    np.testing.assert_array_equal(load, s.load_forecast[:, 5])
    np.testing.assert_array_equal(wind, s.wind_forecast[:, 5])


def test_single_tick_log_probability_by_hand():
    case = mt_case(nu=0.05)
    s0 = _state_with_forecast(case)
    tr = transition(case, s0, None, np.random.default_rng(8), hour=10)
    expect = 0.0
    for k, ln in enumerate(case.lines):
        p = interval_probability(ln.life, ln.life.initial_age + 11, 1.0)  # age at the tick's end
        expect += math.log(p) if tr.failed[k] else math.log1p(-p)
    assert tr.log_p == pytest.approx(expect, abs=1e-12)


def test_per_line_streams_unaffected_by_extra_lines():
    case = mt_case(nu=0.5)
    ages = np.array([ln.life.initial_age for ln in case.lines])
    a = TickStreams.keyed(7, (0, 1, 2), 3).line_uniforms()
    b = TickStreams.keyed(7, (0, 1, 2), 5).line_uniforms()
    np.testing.assert_array_equal(a, b[:3])
    fa, *_ = failure_draw(case, ages, np.ones(3, bool), a)
    fb, *_ = failure_draw(case, ages, np.ones(3, bool), b[:3])
    np.testing.assert_array_equal(fa, fb)


def test_tilt_shifts_log_weight():
    case = mt_case(nu=0.05)
    ages = np.array([ln.life.initial_age for ln in case.lines])
    u = np.array([0.0, 0.99, 0.5])
    _, lp, lg = failure_draw(case, ages, np.ones(3, bool), u, tilt=1.0)
    assert lp == lg
    _, lp2, lg2 = failure_draw(case, ages, np.ones(3, bool), u, tilt=3.0)
    assert lp2 == pytest.approx(lp) and lg2 != lp2


# -- scenarios ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def small():
    return mt_case(nu=0.02)


def test_scenario_seed_determinism(small):
    spec = SamplerSpec("quasistatic-sampling", n_short=2, horizon_months=2, seed=5)
    sched = MaintenanceSchedule.from_actions(small, 2, [(0, "L12")])
    a = sample_scenario(small, sched, POLICY, spec, 3)
    b = sample_scenario(small, sched, POLICY, spec, 3, cache=EvalCache())
    assert a.costs == b.costs and a.log_weight == b.log_weight and a.severities == b.severities
    for x, y in zip(a.states, b.states):
        np.testing.assert_array_equal(x.ages, y.ages)


def test_markov_factorisation(small):
    spec = SamplerSpec("window", window_days=2, n_rt=2, window_hours=24, n_short=2, horizon_months=2,
                       seed=1, fail_tilt=2.0)
    sc = sample_scenario(small, MaintenanceSchedule.empty(small, 2), POLICY, spec, 0)
    assert sc.log_prob == pytest.approx(sum(sc.log_p_steps), abs=1e-9)
    assert sc.log_weight == pytest.approx(sum(sc.log_p_steps) - sum(sc.log_g_steps), abs=1e-9)


def test_degenerate_window_replays_complete(small):
    sched = MaintenanceSchedule.from_actions(small, 2, [(1, "L23")])
    base = SamplerSpec("complete", horizon_months=2, seed=11)
    win = replace(base, scheme="window", window_days=30, n_short=1, n_rt=1, window_hours=24)
    a = sample_scenario(small, sched, POLICY, base, 0)
    b = sample_scenario(small, sched, POLICY, win, 0)
    assert a.costs == b.costs and a.log_prob == b.log_prob and a.severities == b.severities
    for x, y in zip(a.states, b.states):
        np.testing.assert_array_equal(x.ages, y.ages)
        assert x.topology == y.topology and x.growth == y.growth


def test_quasistatic_single_draw_zero_sigma_is_constant():
    case = mt_case(nu=0.0, load_sigma=0.0, wind_sigma=0.0)
    spec = SamplerSpec("quasistatic-sampling", n_short=1, horizon_months=3, seed=2, growth_per_month=0.0)
    sc = sample_scenario(case, MaintenanceSchedule.empty(case, 3), POLICY, spec, 0)
    assert sc.costs[0] == sc.costs[1] == sc.costs[2]


def test_overloaded_maintenance_month_breaks_achievability(pjm5):
    # AB, BC and BD out together strand the load at bus B
    sched = MaintenanceSchedule.from_actions(pjm5, 1, [(0, "AB"), (0, "BC"), (0, "BD")],
                                             month_cap=None)
    spec = SamplerSpec("quasistatic-sampling", n_short=2, horizon_months=1, seed=0)
    scen = [sample_scenario(pjm5, sched, POLICY, spec, z) for z in range(2)]
    ok, frac = estimate_achievability(scen, 0.01)
    assert not ok and frac == 1.0
    assert all(s.severities[0] > 0 for s in scen)


# -- estimators --------------------------------------------------------------------

def toy(costs, logw=None, sev=None, ach=None):
    logw = np.zeros(len(costs)) if logw is None else logw
    return [Scenario([], float(w), 0.0, [float(c)], [0.0 if sev is None else sev[k]],
                     [1 if ach is None else ach[k]]) for k, (c, w) in enumerate(zip(costs, logw))]


def test_constant_costs_have_zero_error():
    assert estimate_expected_cost(toy([7.0] * 5)) == (7.0, 0.0)


def test_two_point_mean():
    rng = np.random.default_rng(4)
    m, se = estimate_expected_cost(toy(rng.choice([10.0, 30.0], 1000)))
    assert abs(m - 20) <= 3 * se


def test_importance_sampling_unbiased_on_three_outcomes():
    values, pi, g = np.array([0.0, 100.0, 5000.0]), np.array([0.9, 0.09, 0.01]), np.array([0.5, 0.3, 0.2])
    rng = np.random.default_rng(2024)
    idx = rng.choice(3, 10_000, p=g)
    m, se = estimate_expected_cost(toy(values[idx], np.log(pi[idx]) - np.log(g[idx])))
    assert abs(m - values @ pi) <= 3 * se


def test_nominal_weights_equal_plain_mean():
    rng = np.random.default_rng(0)
    c = rng.uniform(0, 100, 50)
    m, _ = estimate_expected_cost(toy(c, np.zeros(50)))
    assert abs(m - c.mean()) <= 1e-12


@given(st.floats(1e-6, 1))
def test_all_below_threshold_satisfied(alpha):
    est = estimate_chance_constraint(toy([1.0] * 20, sev=[5.0] * 20), SeverityAggregator(), 10.0, alpha)
    assert est.probability == 1 and est.satisfied


def test_threshold_below_every_severity_violated():
    est = estimate_chance_constraint(toy([1.0] * 20, sev=[5.0] * 20), SeverityAggregator(), 1.0, 0.5)
    assert est.probability == 0 and not est.satisfied


def test_conservative_chance_uses_wilson_bound():
    scen = toy([1.0] * 20, sev=[5.0] * 20)
    est = estimate_chance_constraint(scen, SeverityAggregator(), 10.0, 0.01, conservative=True)
    lo, hi = wilson_interval(1.0, 20)
    assert est.ci == (lo, hi) and not est.satisfied and lo < 0.99 < hi


def test_wilson_matches_reference():
    from scipy.stats import binomtest
    ref = binomtest(7, 10).proportion_ci(0.95, method="wilson")
    lo, hi = wilson_interval(0.7, 10, 0.95)
    assert lo == pytest.approx(ref.low, abs=1e-12) and hi == pytest.approx(ref.high, abs=1e-12)


def test_aggregators():
    assert SeverityAggregator("mean")([1, 2, 3]) == 2
    assert SeverityAggregator("max")([1, 2, 3]) == 3
    assert SeverityAggregator("quantile", 0.5)([1, 2, 3, 4]) == 2


def test_achievability_fractions():
    assert estimate_achievability(toy([1.0] * 4), 0.0) == (True, 0.0)
    assert estimate_achievability(toy([1.0] * 4, ach=[1, 0, 1, 1]), 0.3) == (True, 0.25)
    assert estimate_achievability(toy([1.0] * 4, ach=[1, 0, 1, 1]), 0.2) == (False, 0.25)


def test_window_variance_below_complete(pjm5):
    from gridrm.mt import EvalCache, InnerPolicy, MaintenanceSchedule, SamplerSpec, sample_scenario

    pol = InnerPolicy.parse("nminus1")
    empty = MaintenanceSchedule.empty(pjm5, 1)
    cache = EvalCache()
    spread = {}
    for spec in (SamplerSpec("complete", horizon_months=1),
                 SamplerSpec("window", window_days=3, n_rt=30, window_hours=24, horizon_months=1)):
        month = [sample_scenario(pjm5, empty, pol, replace(spec, seed=s), 0, cache=cache).costs[0]
                 for s in range(20)]
        spread[spec.scheme] = np.var(month, ddof=1)
    assert spread["window"] < spread["complete"]
