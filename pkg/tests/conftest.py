from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from gridrm.io import case_from_dict, fixture_path, load_case

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


def make_case(buses, lines=(), gens=(), loads=(), wind=(), **extra):
    """Compact case builder: lines (id, from, to, b[, rating]), gens (id, bus, pmax, cost[, pmin]),
    loads (id, bus, MW)."""
    data = {
        "buses": list(buses),
        "lines": [{"id": l[0], "from_bus": l[1], "to_bus": l[2], "susceptance": l[3],
                   "rating": l[4] if len(l) > 4 else None} for l in lines],
        "generators": [{"id": g[0], "bus": g[1], "pmax": g[2], "cost_linear": g[3],
                        "pmin": g[4] if len(g) > 4 else 0.0} for g in gens],
        "loads": [{"id": d[0], "bus": d[1], "peak": d[2]} for d in loads],
        "wind": list(wind),
    }
    data.update(extra)
    return case_from_dict(data)


@pytest.fixture(scope="session")
def bus2():
    return load_case(fixture_path("bus2.json"))


@pytest.fixture(scope="session")
def bus3():
    return load_case(fixture_path("bus3.json"))


@pytest.fixture(scope="session")
def pjm5():
    return load_case(fixture_path("pjm5.json"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_mip(rng, n_bin: int, n_cont: int = 0):
    """Random minimization MILP with mixed relations; may be infeasible."""
    from gridrm.solver import EQ, GE, LE, LinearProgram, MixedIntegerProgram

    n = n_bin + n_cont
    cost = rng.integers(-10, 11, n).astype(float)
    upper = np.r_[np.ones(n_bin), rng.integers(1, 5, n_cont).astype(float)]
    lp = LinearProgram(cost, "min", np.zeros(n), upper)
    for _ in range(int(rng.integers(1, 6))):
        row = rng.integers(-5, 6, n).astype(float)
        rel = [LE, LE, GE, EQ][int(rng.integers(0, 4))] if n_cont else [LE, LE, GE][int(rng.integers(0, 3))]
        rhs = float(rng.integers(-3, 10))
        lp.add_row(row, rel, rhs)
    return MixedIntegerProgram(lp, list(range(n_bin)))


def enumerate_mip(mip):
    """Independent oracle: every binary assignment, continuous part by scipy/HiGHS."""
    import itertools

    from scipy.optimize import linprog

    lp = mip.lp
    A, b = lp.matrix(), np.asarray(lp.rhs)
    nb = len(mip.binaries)
    cont = [j for j in range(lp.n_vars) if j not in mip.binaries]
    if not cont:
        X = np.array(list(itertools.product((0.0, 1.0), repeat=nb))).reshape(-1, nb)
        ax = X @ A.T
        ok = np.ones(len(X), bool)
        for i, rel in enumerate(lp.relations):
            if rel == "<=":
                ok &= ax[:, i] <= b[i] + 1e-9
            elif rel == ">=":
                ok &= ax[:, i] >= b[i] - 1e-9
            else:
                ok &= np.abs(ax[:, i] - b[i]) <= 1e-9
        return float((X[ok] @ lp.cost).min()) if ok.any() else None
    best = None
    Ab, Ac = A[:, mip.binaries], A[:, cont]
    for bits in itertools.product((0.0, 1.0), repeat=nb):
        rhs = b - Ab @ np.array(bits)
        ub = [(Ac[i], rhs[i]) for i, r in enumerate(lp.relations) if r == "<="]
        ub += [(-Ac[i], -rhs[i]) for i, r in enumerate(lp.relations) if r == ">="]
        eq = [(Ac[i], rhs[i]) for i, r in enumerate(lp.relations) if r == "=="]
        res = linprog(lp.cost[cont],
                      A_ub=np.array([u[0] for u in ub]) if ub else None,
                      b_ub=np.array([u[1] for u in ub]) if ub else None,
                      A_eq=np.array([e[0] for e in eq]) if eq else None,
                      b_eq=np.array([e[1] for e in eq]) if eq else None,
                      bounds=list(zip(lp.lower[cont], lp.upper[cont])), method="highs")
        if res.status == 0:
            val = float(lp.cost[mip.binaries] @ np.array(bits) + res.fun)
            best = val if best is None else min(best, val)
    return best


def mt_case(nu: float = 0.002, load_sigma: float = 0.02, wind_sigma: float = 0.15):
    """Small ageing 3-bus system for scenario-level tests."""
    life = {"nu": nu, "alpha": 1.0, "gamma": 2.6e-5, "s": 1.0, "period_hours": 720}
    profile = [0.7 + 0.3 * np.sin(np.pi * h / 24) for h in range(24)]
    data = {
        "buses": ["1", "2", "3"],
        "lines": [{"id": f"L{a}{b}", "from_bus": a, "to_bus": b, "susceptance": 10.0, "rating": 120,
                   "maintenance_cost": 1000, "life": dict(life, age_hours=age)}
                  for (a, b), age in ((("1", "2"), 90_000), (("2", "3"), 40_000), (("1", "3"), 10_000))],
        "generators": [
            {"id": "G1", "bus": "1", "pmin": 0, "pmax": 200, "cost_linear": 10, "startup_cost": 100},
            {"id": "G2", "bus": "2", "pmin": 10, "pmax": 100, "cost_linear": 30, "startup_cost": 300,
             "min_up": 4, "min_down": 4},
            {"id": "G3", "bus": "3", "pmin": 0, "pmax": 80, "cost_linear": 60, "startup_cost": 50},
        ],
        "loads": [{"id": "D3", "bus": "3", "peak": 120, "profile": profile},
                  {"id": "D2", "bus": "2", "peak": 40, "profile": profile}],
        "wind": [{"id": "W1", "bus": "1", "capacity": 40, "profile": [0.5] * 24, "sigma_fraction": wind_sigma}],
        "voll": 1000, "wind_curtail_cost": 100, "load_sigma_fraction": load_sigma,
    }
    return case_from_dict(data)


def separable_toy(seed: int):
    """4 lines x 3 months, no caps; each action adds a fixed amount (negative = saving).

    Returns (template, objective, optimal cost found by enumerating all 2^12 schedules).
    """
    import itertools

    from gridrm.mt import MaintenanceSchedule

    rng = np.random.default_rng(seed)
    gain = rng.choice([-1, 1], (4, 3)) * rng.integers(1, 10, (4, 3)).astype(float)
    template = MaintenanceSchedule(np.zeros((4, 3), bool), np.zeros(4), month_cap=None, line_cap=None)

    def objective(s):
        return 100.0 + float((gain * s.matrix).sum())

    best = min(100.0 + float((gain * np.array(bits).reshape(4, 3)).sum())
               for bits in itertools.product((0, 1), repeat=12))
    return template, objective, best


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.VERDICTS):
        terminalreporter.write_line(mod.VERDICTS[n])
