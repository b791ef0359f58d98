from __future__ import annotations

import itertools
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gridrm.grid import Line
from gridrm.io import fixture_path
from gridrm.lt import (
    InfeasiblePlan, Interconnection, Participant, Project, ProjectPlan, RobustLtInstance,
    build_kkt_bigm, evaluate_project_plan, kkt_certificate, load_projects, market_clearing,
    robust_market_clearing, robust_mt_epigraph, solve_robust_lt, trapezoid_opex,
)
from gridrm.mt import InnerPolicy, MaintenanceSchedule, SamplerSpec, evaluate_schedule
from gridrm.solver import EQ, Infeasible, ProgramBuilder, format_program, solve_lp

from conftest import mt_case


@pytest.fixture(scope="module")
def appendix():
    return RobustLtInstance.load(fixture_path("appendix.json"))


def one_area(gens, loads):
    return RobustLtInstance([Participant(f"G{k}", "1", p, b) for k, (p, b) in enumerate(gens)],
                            [Participant(f"L{k}", "1", p, b) for k, (p, b) in enumerate(loads)], [])


def with_ic(inst, **kw):
    return replace(inst, interconnections=[replace(inst.interconnections[0], **kw)])


def test_single_pair_surplus():
    surplus, d = market_clearing(one_area([((10, 10), (0, 4))], [((30, 30), (0, 3))]))
    assert surplus == pytest.approx(60) and d.P[0] == pytest.approx(3) and d.L[0] == pytest.approx(3)


def test_no_trade_below_cost():
    surplus, d = market_clearing(one_area([((50, 50), (0, 4))], [((20, 30), (0, 3))]))
    assert surplus == pytest.approx(0) and np.allclose(d.P, 0)


def test_contradictory_bounds():
    with pytest.raises(Infeasible):
        market_clearing(one_area([((10, 10), (0, 1))], [((30, 30), (2, 3))]))


def test_isolated_areas_clear_independently(appendix):
    total, _ = market_clearing(appendix, capacities=[0])
    parts = 0.0
    for area in ("1", "2"):
        sub = RobustLtInstance([g for g in appendix.generators if g.area == area],
                               [l for l in appendix.loads if l.area == area], [])
        parts += market_clearing(sub)[0]
    assert total == pytest.approx(parts)


def test_degenerate_intervals_match_point_clearing(appendix):
    pin = lambda p, v: replace(p, price=(v, v))  # noqa: E731
    flat = replace(appendix, generators=[pin(g, g.price[1]) for g in appendix.generators],
                   loads=[pin(l, l.price[0]) for l in appendix.loads])
    for cap in (0, 1, 3):
        assert robust_market_clearing(flat, [cap])[0] == pytest.approx(market_clearing(flat, capacities=[cap])[0])


def test_wider_bid_weakly_lowers_w(appendix):
    base = robust_market_clearing(appendix, [1])[0]
    l0 = appendix.loads[0]
    wide = replace(appendix, loads=[replace(l0, price=(l0.price[0] - 100, l0.price[1]))] + appendix.loads[1:])
    assert robust_market_clearing(wide, [1])[0] <= base + 1e-9


@given(st.lists(st.floats(0, 1), min_size=14, max_size=14))
def test_robust_dominance(fracs):
    inst = RobustLtInstance.load(fixture_path("appendix.json"))
    parts = inst.generators + inst.loads
    prices = [p.price[0] + f * (p.price[1] - p.price[0]) for p, f in zip(parts, fracs)]
    for cap in (0, 2):
        point = market_clearing(inst, prices[:6], prices[6:], [cap])[0]
        assert robust_market_clearing(inst, [cap])[0] <= point + 1e-9


# -- KKT program -----------------------------------------------------------------

def test_kkt_program_shape(appendix):
    prog = build_kkt_bigm(appendix)
    assert prog.mip.lp.n_vars == 6 + 8 + 2 + 3
    text = format_program(prog.mip)
    assert "10000" in text


def test_u_forced_to_one(appendix):
    prog = build_kkt_bigm(appendix)
    u = prog.index["u"]
    lp = prog.mip.lp
    lp.upper[u] = 0.0  # the u = 0 branch
    assert solve_lp(lp).status.name == "INFEASIBLE"
    assert solve_robust_lt(appendix).u == 1


def test_appendix_solution_certified(appendix):
    sol = solve_robust_lt(appendix)
    assert sol.certificate.ok and sol.mu == pytest.approx(1.0)
    # at the chosen investment, W is the robust clearing value there
    assert sol.W == pytest.approx(robust_market_clearing(appendix, [sol.investment[0]])[0])
    assert sol.objective == pytest.approx(sol.W - 30 * sol.investment[0])


def test_investment_breakpoint(appendix):
    # marginal value of the first unit of capacity, from the clearing LP alone
    value = robust_market_clearing(appendix, [1e-3])[0] - robust_market_clearing(appendix, [0])[0]
    value /= 1e-3
    lo, hi = 0.0, 1000.0
    for _ in range(40):
        mid = (lo + hi) / 2
        if solve_robust_lt(with_ic(appendix, cost=mid)).investment[0] > 1e-9:
            lo = mid
        else:
            hi = mid
    assert hi == pytest.approx(value, rel=1e-6)
    assert solve_robust_lt(with_ic(appendix, cost=value + 1)).investment[0] == pytest.approx(0)


def test_no_investment_room(appendix):
    for existing in (0.0, 1.5):
        inst = with_ic(appendix, existing=existing, bounds=(0.0, 0.0))
        assert solve_robust_lt(inst).W == pytest.approx(robust_market_clearing(inst, [existing])[0])


def test_w_monotone_in_investment_cap(appendix):
    ws = [solve_robust_lt(with_ic(appendix, bounds=(0.0, cap), cost=0.0)).W for cap in (0, 0.5, 1, 2, 3, 4)]
    assert all(b >= a - 1e-9 for a, b in zip(ws, ws[1:]))


@given(st.floats(0, 80), st.floats(0, 5), st.floats(0, 2))
def test_kkt_certificate_property(cost, cap, existing):
    inst = with_ic(RobustLtInstance.load(fixture_path("appendix.json")),
                   cost=cost, bounds=(0.0, cap), existing=existing)
    assert solve_robust_lt(inst).certificate.ok


def test_certificate_flags_bad_point(appendix):
    prog = build_kkt_bigm(appendix)
    sol = solve_robust_lt(appendix)
    x = sol.result.x.copy()
    x[prog.index["mu"]] = 0.5
    assert not kkt_certificate(prog, x).ok


def test_literal_companion_collapses_surplus(appendix):
    assert solve_robust_lt(replace(appendix, literal_companion=True)).W == pytest.approx(0)


def test_instance_validation():
    with pytest.raises(ValueError, match="reversed"):
        one_area([((20, 10), (0, 1))], [])
    with pytest.raises(ValueError, match="big-M"):
        RobustLtInstance([], [], [], big_m=0)
    with pytest.raises(ValueError, match="existing"):
        RobustLtInstance([], [], [Interconnection("I", "1", "2", -1, (0, 1), 1)])


# -- robust mid-term epigraph ------------------------------------------------------

def test_epigraph_scalar():
    res = robust_mt_epigraph([([1.0], 0.0)], severity=([[1.0]], [0.0]), R=5)
    assert res.x[-1] == pytest.approx(0) and res.x[0] == pytest.approx(0)


def test_epigraph_unattainable_severity():
    with pytest.raises(Infeasible):
        robust_mt_epigraph([([1.0], 0.0)], severity=([[1.0]], [3.0]), R=2)


@given(st.integers(0, 10_000))
def test_epigraph_matches_grid(seed):
    rng = np.random.default_rng(seed)
    rows = [(rng.uniform(-2, 2, 2), rng.uniform(-1, 1)) for _ in range(3)]
    S, s0 = rng.uniform(0, 1, (1, 2)), rng.uniform(0, 0.5, 1)
    R = 2.0
    res = robust_mt_epigraph(rows, severity=(S, s0), R=R, upper=[3, 3])
    g = np.linspace(0, 3, 301)
    U = np.array(list(itertools.product(g, g)))
    ok = (U @ S.T + s0 <= R + 1e-12).ravel()
    t = np.max([U @ a + c for a, c in rows], axis=0)[ok]
    assert res.x[-1] <= t.min() + 1e-9
    assert t.min() - res.x[-1] <= 0.05


# -- project plans -------------------------------------------------------------------

def engine_for(months=1, n=3):
    spec = SamplerSpec("quasistatic-sampling", n_short=2, horizon_months=months, seed=0)

    def run(case, activation):
        return evaluate_schedule(case, MaintenanceSchedule.empty(case, months), InnerPolicy(), spec,
                                 seed=5, n_scenarios=n, activation=activation)
    return run


def test_empty_plan_is_operation_only():
    case = mt_case()
    ev = evaluate_project_plan(case, ProjectPlan([], {}, horizon=1), engine_for())
    assert ev.total_cost == pytest.approx(engine_for()(case, None).expected_operation)
    assert ev.construction == 0 and ev.opex == 0


def test_late_project_only_costs_construction():
    case = mt_case()
    late = Project("P", 5e5, 6, (Line("N12", "1", "2", 10.0, 200.0),))
    ev = evaluate_project_plan(case, ProjectPlan([late], {"P": 1}, horizon=1), engine_for())
    base = engine_for()(case, None).expected_operation
    assert ev.total_cost == pytest.approx(5e5 + base, rel=1e-12)


def test_relieving_line_lowers_operation(pjm5):
    # the re-entered 5-bus case is congested out of bus A; a second A-B circuit relieves it
    relief = Project("AB2", 0.0, 0, (Line("AB2", "A", "B", 35.587, 400.0),))
    eng = engine_for(n=3)
    plain = eng(pjm5, None)
    built = eng(pjm5.with_lines(relief.lines), {pjm5.n_lines: 0})
    assert np.all(built.scenario_costs < plain.scenario_costs)
    ev = evaluate_project_plan(pjm5, ProjectPlan([relief], {"AB2": 1}, horizon=1), eng)
    assert ev.operation == pytest.approx(built.expected_operation)


def test_plan_rules():
    a = Project("A", 1.0, 3)
    b = Project("B", 2.0, 1, requires=("A",))
    with pytest.raises(InfeasiblePlan, match="before A completes"):
        evaluate_project_plan(mt_case(), ProjectPlan([a, b], {"A": 1, "B": 2}), engine_for())
    assert ProjectPlan([a, b], {"A": 1, "B": 13}).violations() == ["project B starts at 13, outside [1, 12]"]
    assert "budget" in ProjectPlan([a, b], {"A": 1, "B": 4}, budget=2.5).violations()[0]


def test_construction_additive_and_deterministic():
    case = mt_case()
    ps = [Project(f"P{k}", 1000.0 * (k + 1), 24) for k in range(3)]
    ev = evaluate_project_plan(case, ProjectPlan(ps, {p.id: 1 for p in ps}, horizon=1), engine_for())
    again = evaluate_project_plan(case, ProjectPlan(ps, {p.id: 1 for p in ps}, horizon=1), engine_for())
    assert ev.construction == 6000.0 and ev == again


def test_trapezoid_opex():
    flat = Project("F", 0, 2, opex_per_year=1200.0)
    assert trapezoid_opex(flat, 2, 14) == pytest.approx(1200.0)
    assert trapezoid_opex(flat, 14, 12) == 0
    ramp = Project("R", 0, 0, opex=lambda m: 12.0 * m)  # 1 per month per month
    assert trapezoid_opex(ramp, 0, 4) == pytest.approx(8.0)  # exact for linear rates


def test_projects_fixture(pjm5):
    projects, starts = load_projects(fixture_path("pjm5_projects.json"))
    assert [p.id for p in projects] == ["AB2", "CE2"]
    assert ProjectPlan(projects, starts, horizon=240).violations() == []
