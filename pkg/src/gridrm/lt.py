"""Long-term planning: robust interconnection investment and project-plan evaluation.

The investment model is a bi-level program (investment above, robust market
clearing below) turned into a single-level MILP through the KKT conditions
of the lower program with a big-M linearisation of complementarity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from .grid import GridCase, Line
from .solver import EQ, GE, LE, Infeasible, ProgramBuilder, SolveResult, Status, solve_lp, solve_milp

KKT_TOL = 1e-6


@dataclass(frozen=True)
class Participant:
    """A generator (ask interval) or load (bid interval) in a price area."""

    id: str
    area: str
    price: tuple  # (min, max)
    bounds: tuple  # (min, max) quantity, p.u.


@dataclass(frozen=True)
class Interconnection:
    id: str
    from_area: str
    to_area: str
    existing: float  # I0
    bounds: tuple  # (I_min, I_max) investment
    cost: float  # c_I per p.u.


@dataclass
class RobustLtInstance:
    generators: list
    loads: list
    interconnections: list
    big_m: float = 10_000.0
    # True keeps the literal "<= 0" sign on the best-case surplus row
    literal_companion: bool = False

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        for p in list(self.generators) + list(self.loads):
            if p.price[0] > p.price[1]:
                out.append(f"{p.id}: price interval {p.price} is reversed")
            if p.bounds[0] > p.bounds[1]:
                out.append(f"{p.id}: quantity bounds {p.bounds} are reversed")
        for ic in self.interconnections:
            if ic.bounds[0] > ic.bounds[1]:
                out.append(f"{ic.id}: investment bounds {ic.bounds} are reversed")
            if ic.existing < 0:
                out.append(f"{ic.id}: existing capacity must be >= 0")
        if self.big_m <= 0:
            out.append("big-M must be positive")
        return out

    @property
    def areas(self) -> list[str]:
        seen = []
        for p in list(self.generators) + list(self.loads):
            if p.area not in seen:
                seen.append(p.area)
        for ic in self.interconnections:
            for a in (ic.from_area, ic.to_area):
                if a not in seen:
                    seen.append(a)
        return seen

    @classmethod
    def from_dict(cls, data: dict) -> "RobustLtInstance":
        def part(d):
            return Participant(str(d["id"]), str(d.get("area", "1")), tuple(map(float, d["price"])),
                               tuple(map(float, d["bounds"])))
        ics = [Interconnection(str(d["id"]), str(d["from_area"]), str(d["to_area"]),
                               float(d.get("existing", 0.0)), tuple(map(float, d["bounds"])),
                               float(d["cost"])) for d in data.get("interconnections", [])]
        return cls([part(d) for d in data["generators"]], [part(d) for d in data["loads"]], ics,
                   float(data.get("big_m", 10_000.0)), bool(data.get("literal_companion", False)))

    @classmethod
    def load(cls, path) -> "RobustLtInstance":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class Dispatch:
    P: np.ndarray
    L: np.ndarray
    E: np.ndarray


def _clearing_program(inst: RobustLtInstance, capacities, bld: ProgramBuilder, invest=None):
    """Dispatch variables, export bounds and one balance row per area.

    ``capacities`` fixes each interconnection's capacity when ``invest`` is
    None; otherwise the bound is ``existing + invest[i]`` with invest a
    variable index.
    """
    P = [bld.var(f"P_{g.id}", g.bounds[0], g.bounds[1]) for g in inst.generators]
    L = [bld.var(f"L_{l.id}", l.bounds[0], l.bounds[1]) for l in inst.loads]
    E = []
    for i, ic in enumerate(inst.interconnections):
        e = bld.var(f"E_{ic.id}", -np.inf, np.inf)
        E.append(e)
        if invest is None:
            cap = float(capacities[i])
            bld.row({e: 1.0}, LE, cap, f"emax_{ic.id}")
            bld.row({e: -1.0}, LE, cap, f"emin_{ic.id}")
        else:
            bld.row({e: 1.0, invest[i]: -1.0}, LE, ic.existing, f"emax_{ic.id}")
            bld.row({e: -1.0, invest[i]: -1.0}, LE, ic.existing, f"emin_{ic.id}")
    areas = inst.areas
    if len(areas) <= 1:
        row = {p: 1.0 for p in P}
        row.update({l: -1.0 for l in L})
        bld.row(row, EQ, 0.0, "balance")
    else:
        for a in areas:
            row = {P[k]: 1.0 for k, g in enumerate(inst.generators) if g.area == a}
            row.update({L[k]: -1.0 for k, l in enumerate(inst.loads) if l.area == a})
            for i, ic in enumerate(inst.interconnections):
                if ic.from_area == a:
                    row[E[i]] = row.get(E[i], 0.0) - 1.0
                if ic.to_area == a:
                    row[E[i]] = row.get(E[i], 0.0) + 1.0
            bld.row(row, EQ, 0.0, f"balance_{a}")
    return P, L, E


def _caps(inst, capacities):
    if capacities is None:
        return [ic.existing for ic in inst.interconnections]
    return list(capacities)


def market_clearing(inst: RobustLtInstance, c=None, w=None, capacities=None,
                    backend: str = "auto") -> tuple[float, Dispatch]:
    """Surplus-maximising clearing at point prices (defaults: interval midpoints)."""
    c = np.array([sum(g.price) / 2 for g in inst.generators]) if c is None else np.asarray(c, float)
    w = np.array([sum(l.price) / 2 for l in inst.loads]) if w is None else np.asarray(w, float)
    for k, g in enumerate(inst.generators):
        if not g.price[0] - 1e-12 <= c[k] <= g.price[1] + 1e-12:
            raise ValueError(f"ask price of {g.id} outside its interval")
    for k, l in enumerate(inst.loads):
        if not l.price[0] - 1e-12 <= w[k] <= l.price[1] + 1e-12:
            raise ValueError(f"bid price of {l.id} outside its interval")
    bld = ProgramBuilder("max")
    P, L, E = _clearing_program(inst, _caps(inst, capacities), bld)
    for k, j in enumerate(P):
        bld.add_cost(j, -c[k])
    for k, j in enumerate(L):
        bld.add_cost(j, w[k])
    res = solve_lp(bld.build(), backend=backend).require("market clearing")
    return float(res.objective), Dispatch(res.x[P], res.x[L], res.x[E])


def robust_market_clearing(inst: RobustLtInstance, capacities=None,
                           backend: str = "auto") -> tuple[float, Dispatch]:
    """Worst-case surplus: bids at their minimum, asks at their maximum."""
    bld = ProgramBuilder("max")
    P, L, E = _clearing_program(inst, _caps(inst, capacities), bld)
    W = bld.var("W", -np.inf, np.inf, 1.0)
    row = {W: 1.0}
    row.update({j: g.price[1] for j, g in zip(P, inst.generators)})
    row.update({j: -l.price[0] for j, l in zip(L, inst.loads)})
    bld.row(row, LE, 0.0, "surplus")
    res = solve_lp(bld.build(), backend=backend).require("robust market clearing")
    return float(res.x[W]), Dispatch(res.x[P], res.x[L], res.x[E])


@dataclass
class KktProgram:
    mip: object
    index: dict  # name -> variable index or list of indices
    rows: dict  # name -> row index


def build_kkt_bigm(inst: RobustLtInstance) -> KktProgram:
    """Single-level MILP: investment on top, the robust clearing replaced by
    its reduced KKT system.

    Variables: P, L, and per interconnection an investment I and an export E,
    then W, the surplus-row dual mu and the complementarity binary u.
    """
    bld = ProgramBuilder("max")
    I = []
    for ic in inst.interconnections:
        I.append(bld.var(f"I_{ic.id}", ic.bounds[0], ic.bounds[1], -ic.cost))
    P, L, E = _clearing_program(inst, None, bld, invest=I)
    W = bld.var("W", -np.inf, np.inf, 1.0)
    mu = bld.var("mu", 0.0, np.inf)
    u = bld.var("u", 0, 1, binary=True)
    M = inst.big_m
    rows = {}
    rows["stationarity"] = bld.row({mu: 1.0}, EQ, 1.0, "stationarity")  # -1 + mu = 0
    rows["mu_bigm"] = bld.row({mu: 1.0, u: -M}, LE, 0.0, "mu_bigm")
    # slack s = sum w_min L - sum c_max P - W >= 0 and s <= M (1 - u)
    worst = {W: 1.0}
    worst.update({j: g.price[1] for j, g in zip(P, inst.generators)})
    worst.update({j: -l.price[0] for j, l in zip(L, inst.loads)})
    rows["surplus"] = bld.row(worst, LE, 0.0, "surplus")
    rows["slack_bigm"] = bld.row({**{j: -v for j, v in worst.items()}, u: M}, LE, M, "slack_bigm")
    best = {W: 1.0}
    best.update({j: -g.price[0] for j, g in zip(P, inst.generators)})
    best.update({j: l.price[1] for j, l in zip(L, inst.loads)})
    rows["companion_ge"] = bld.row(best, GE, 0.0, "companion_ge")
    if inst.literal_companion:
        rows["companion_le"] = bld.row(best, LE, 0.0, "companion_le")
    else:
        # the best-case surplus bounds W from above
        rev = {W: 1.0}
        rev.update({j: g.price[0] for j, g in zip(P, inst.generators)})
        rev.update({j: -l.price[1] for j, l in zip(L, inst.loads)})
        rows["companion_le"] = bld.row(rev, LE, 0.0, "companion_le")
    idx = {"P": P, "L": L, "I": I, "E": E, "W": W, "mu": mu, "u": u}
    return KktProgram(bld.build_mip(), idx, rows)


@dataclass
class KktCertificate:
    stationarity: float
    primal: float  # worst bound or row violation
    dual: float  # negative part of mu
    complementarity: float  # mu * slack

    @property
    def ok(self) -> bool:
        return max(self.stationarity, self.primal, self.dual, self.complementarity) <= KKT_TOL


@dataclass
class RobustLtSolution:
    investment: np.ndarray
    W: float
    objective: float
    P: np.ndarray
    L: np.ndarray
    E: np.ndarray
    mu: float
    u: int
    certificate: KktCertificate
    result: SolveResult = field(repr=False, default=None)


def kkt_certificate(prog: KktProgram, x: np.ndarray) -> KktCertificate:
    lp = prog.mip.lp
    ix = prog.index
    mu = float(x[ix["mu"]])
    A = lp.sparse_matrix() if lp.csr is not None else lp.matrix()
    act = np.asarray(A @ x).ravel()
    surplus_row = prog.rows["surplus"]
    slack = float(lp.rhs[surplus_row] - act[surplus_row])
    resid = lp.residuals(x)
    bounds = max(float(np.max(np.maximum(lp.lower - x, 0), initial=0)),
                 float(np.max(np.maximum(x - lp.upper, 0), initial=0)))
    return KktCertificate(abs(mu - 1.0), max(float(np.max(resid, initial=0.0)), bounds),
                          max(0.0, -mu), abs(mu * slack))


def solve_robust_lt(inst: RobustLtInstance, backend: str = "auto") -> RobustLtSolution:
    prog = build_kkt_bigm(inst)
    res = solve_milp(prog.mip, backend=backend).require("robust investment program")
    x = res.x
    ix = prog.index
    cert = kkt_certificate(prog, x)
    return RobustLtSolution(x[ix["I"]], float(x[ix["W"]]), float(res.objective), x[ix["P"]],
                            x[ix["L"]], x[ix["E"]], float(x[ix["mu"]]), int(round(x[ix["u"]])),
                            cert, res)


# -- mid-term robust epigraph --------------------------------------------------

def robust_mt_epigraph(cost_rows, severity=None, R: float = math.inf, feasibility=None,
                       lower=None, upper=None, integer: bool = False,
                       backend: str = "auto") -> SolveResult:
    """min t s.t. C_k u + c_k <= t for every cost row k, S u + s <= R, H u + h <= 0.

    ``cost_rows`` is a list of (coefficient vector, constant); ``severity``
    and ``feasibility`` are (matrix, offset vector) pairs.  The returned
    result's x is [u..., t].  Raises ``Infeasible`` if the bounds cannot be met.
    """
    if not cost_rows:
        raise ValueError("need at least one cost row")
    n = len(np.atleast_1d(cost_rows[0][0]))
    lower = np.zeros(n) if lower is None else np.broadcast_to(np.asarray(lower, float), (n,))
    upper = np.full(n, np.inf) if upper is None else np.broadcast_to(np.asarray(upper, float), (n,))
    bld = ProgramBuilder("min")
    u = [bld.var(f"u{j}", lower[j], upper[j], binary=integer) for j in range(n)]
    t = bld.var("t", -np.inf, np.inf, 1.0)
    for k, (a, c0) in enumerate(cost_rows):
        a = np.atleast_1d(np.asarray(a, float))
        bld.row({**{u[j]: a[j] for j in range(n) if a[j]}, t: -1.0}, LE, -float(c0), f"cost{k}")
    for name, block, rhs in (("sev", severity, R), ("h", feasibility, 0.0)):
        if block is None:
            continue
        S, s0 = np.atleast_2d(np.asarray(block[0], float)), np.atleast_1d(np.asarray(block[1], float))
        for k in range(S.shape[0]):
            bld.row({u[j]: S[k, j] for j in range(n) if S[k, j]}, LE, rhs - s0[k], f"{name}{k}")
    if integer:
        res = solve_milp(bld.build_mip(), backend=backend)
    else:
        res = solve_lp(bld.build(), backend=backend)
    if res.status is Status.INFEASIBLE:
        raise Infeasible("severity bound or feasibility rules cannot be met")
    return res.require("robust mid-term program")


# -- nested long-term evaluation -------------------------------------------------

class InfeasiblePlan(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass
class Project:
    """An action a = new lines, with construction cost and duration (months)."""

    id: str
    cost: float
    duration: int
    lines: tuple = ()
    opex_per_year: float = 0.0  # constant rate unless ``opex`` is given
    opex: object = None  # callable: months since completion -> currency/year
    requires: tuple = ()  # project ids that must be complete before this starts

    def opex_rate(self, months_since: float) -> float:
        return float(self.opex(months_since)) if self.opex is not None else self.opex_per_year


@dataclass
class ProjectPlan:
    projects: list  # of Project
    starts: dict  # project id -> start month (1-based)
    build_window: int = 12  # T_D: latest allowed start month
    horizon: int = 12  # T_E: evaluation horizon, months
    budget: float | None = None

    def violations(self) -> list[str]:
        out = []
        ids = {p.id for p in self.projects}
        for p in self.projects:
            t = self.starts.get(p.id)
            if t is None:
                out.append(f"project {p.id} has no start time")
                continue
            if not 1 <= t <= self.build_window:
                out.append(f"project {p.id} starts at {t}, outside [1, {self.build_window}]")
            for dep in p.requires:
                if dep not in ids:
                    out.append(f"project {p.id} requires unknown project {dep}")
                    continue
                dp = next(q for q in self.projects if q.id == dep)
                if dep in self.starts and self.starts[dep] + dp.duration > t:
                    out.append(f"project {p.id} starts before {dep} completes")
        if self.budget is not None:
            total = sum(p.cost for p in self.projects)
            if total > self.budget + 1e-9:
                out.append(f"construction cost {total:g} exceeds budget {self.budget:g}")
        return out

    def completion(self, p: Project) -> int:
        return self.starts[p.id] + p.duration


def trapezoid_opex(project: Project, done: int, horizon: int) -> float:
    """Opex integrated monthly by the trapezoid rule from completion to the horizon."""
    if done >= horizon:
        return 0.0
    months = np.arange(done, horizon + 1)
    rates = np.array([project.opex_rate(m - done) for m in months]) / 12.0  # per month
    return float(trapezoid(rates, months))


@dataclass
class PlanEvaluation:
    total_cost: float
    construction: float
    opex: float
    operation: float
    std_error: float
    chance_ok: bool
    achievability_ok: bool


def evaluate_project_plan(case: GridCase, plan: ProjectPlan, engine) -> PlanEvaluation:
    """Construction + trapezoid opex + expected operating cost with the
    plan's lines switched on at completion.

    ``engine(case, activation)`` runs the mid-term simulation and returns a
    ``ScheduleEvaluation``; activation maps new line indices to months
    (0-based: a project completing at month t is active from month t - 1).
    """
    problems = plan.violations()
    if problems:
        raise InfeasiblePlan(problems)
    new_lines: list[Line] = []
    activation = {}
    for p in plan.projects:
        for ln in p.lines:
            activation[case.n_lines + len(new_lines)] = plan.completion(p) - 1
            new_lines.append(ln)
    grid = case.with_lines(new_lines) if new_lines else case
    construction = float(sum(p.cost for p in plan.projects))
    opex = float(sum(trapezoid_opex(p, plan.completion(p), plan.horizon) for p in plan.projects))
    ev = engine(grid, activation or None)
    return PlanEvaluation(construction + opex + ev.expected_operation, construction, opex,
                          ev.expected_operation, ev.std_error, ev.chance_ok, ev.achievability_ok)


def load_projects(path) -> tuple[list[Project], dict]:
    """Projects file: ``[{"id", "cost", "duration", "start", "opex_per_year",
    "requires", "lines": [line objects]}]``; returns projects and starts."""
    data = json.loads(Path(path).read_text())
    projects, starts = [], {}
    for d in data:
        lines = tuple(Line(str(l["id"]), str(l["from_bus"]), str(l["to_bus"]), float(l["susceptance"]),
                           math.inf if l.get("rating") is None else float(l["rating"]))
                      for l in d.get("lines", []))
        projects.append(Project(str(d["id"]), float(d["cost"]), int(d["duration"]), lines,
                                float(d.get("opex_per_year", 0.0)), None, tuple(d.get("requires", ()))))
        starts[str(d["id"])] = int(d.get("start", 1))
    return projects, starts


__all__ = ["Dispatch", "InfeasiblePlan", "Interconnection", "KktCertificate", "KktProgram",
           "Participant", "PlanEvaluation", "Project", "ProjectPlan", "RobustLtInstance",
           "RobustLtSolution", "build_kkt_bigm", "evaluate_project_plan", "kkt_certificate",
           "load_projects", "market_clearing", "robust_market_clearing", "robust_mt_epigraph",
           "solve_robust_lt", "trapezoid_opex"]
