"""Preventive and preventive-corrective real-time RMAC problems.

Every retained event gets its own copy of the network.  An *enforced*
event must satisfy line limits (and the shed limit, if any) and pays
pi_c * VOLL * shed; a *relaxed* event is excused from its constraints and
is charged pi_c * c_R^max instead.  The chance constraint caps the relaxed
probability mass at epsilon times the retained (non-base) mass.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from ..grid import GridCase, Topology, add_network
from ..solver import LE, Infeasible, ProgramBuilder, solve_lp
from .contingency import BASE_EVENT, ContingencyModel

ENUMERATION_LIMIT = 12


class SubsetMode(str, enum.Enum):
    PESSIMISTIC = "pessimistic"
    ITERATIVE = "iterative"
    HYBRID = "hybrid"


@dataclass
class RtParams:
    delta_e: float = 0.0
    epsilon: float = 0.0
    cr_max: float = 1e6
    subset_mode: SubsetMode = SubsetMode.PESSIMISTIC
    hybrid_exact_count: int = 0
    shed_limit_mw: float = np.inf  # per enforced event; 0 gives the N-1 criterion
    interval_hours: float = 1.0
    ramp_fraction: float = 0.5
    corrective_cost_rate: float = 1.0
    pre_corrective_rating: float | None = None  # h_PC off unless set

    def __post_init__(self):
        self.subset_mode = SubsetMode(self.subset_mode)
        if self.delta_e < 0 or not 0 <= self.epsilon <= 1 or self.cr_max <= 0:
            raise ValueError("need delta_e >= 0, epsilon in [0, 1] and cr_max > 0")
        if self.hybrid_exact_count < 0:
            raise ValueError("hybrid_exact_count must be >= 0")


@dataclass
class RtDecision:
    preventive: np.ndarray  # generator set-points after preventive action
    corrective: dict = field(default_factory=dict)  # event id -> per-generator MW
    corrective_cost_rate: float = 0.0


@dataclass
class RtReport:
    objective: float
    subset: list
    residual_risk: float = 0.0
    per_event_criticality: dict = field(default_factory=dict)
    iterations: int = 1
    relaxed: list = field(default_factory=list)
    preventive_cost: float = 0.0


@dataclass
class Behavior:
    probability: float
    effectiveness: float


@dataclass
class CorrectiveBehaviorModel:
    behaviors: dict  # event id -> list[Behavior]

    def __post_init__(self):
        for ev, items in self.behaviors.items():
            if abs(sum(b.probability for b in items) - 1.0) > 1e-9:
                raise ValueError(f"behavior probabilities for {ev!r} must sum to 1")
            for b in items:
                if not 0 <= b.effectiveness <= 1:
                    raise ValueError("effectiveness must lie in [0, 1]")

    @classmethod
    def uniform(cls, events, behaviors) -> "CorrectiveBehaviorModel":
        return cls({e: list(behaviors) for e in events})


@dataclass
class RtInputs:
    """Operating point the RT problem is solved at."""

    load: np.ndarray
    wind: np.ndarray
    base: Topology
    committed: list | None = None

    @classmethod
    def peak(cls, case: GridCase) -> "RtInputs":
        return cls(case.load_vector(), case.wind_vector(), Topology.all_up(case.n_lines))


def _gen_bounds(case: GridCase, committed):
    lo, hi = [], []
    for g, gen in enumerate(case.generators):
        on = True if committed is None else bool(committed[g])
        lo.append(gen.pmin if on else 0.0)
        hi.append(gen.pmax if on else 0.0)
    return np.array(lo), np.array(hi)


@dataclass
class _Built:
    builder: ProgramBuilder
    p0: list
    shed: dict  # unit -> list of shed vars
    corr: dict  # event -> (up vars, down vars)
    gates: dict = field(default_factory=dict)  # unit -> relax binary


def _build(case, model, subset, params, inputs, relaxed, behaviors, gated=False):
    b = ProgramBuilder()
    lo, hi = _gen_bounds(case, inputs.committed)
    p0 = [b.var(f"P0_{g.id}", lo[i], hi[i], g.cost_linear * params.interval_hours)
          for i, g in enumerate(case.generators)]
    voll_h = case.voll * params.interval_hours
    shed_cap = params.shed_limit_mw if np.isfinite(params.shed_limit_mw) else None
    pi0 = model.prob(BASE_EVENT)
    base = add_network(b, case, inputs.base, inputs.load, inputs.wind, [{v: 1.0} for v in p0],
                       "c0_", shed_cost=pi0 * voll_h,
                       curtail_cost=pi0 * case.wind_curtail_cost * params.interval_hours,
                       shed_cap=shed_cap)
    built = _Built(b, p0, {(BASE_EVENT, 0): list(base.shed.values())}, {})

    for c in subset:
        if c == BASE_EVENT:
            continue
        pc = model.prob(c)
        topo = model.topology(c, inputs.base)
        branches = [(0, 1.0, None)]
        if behaviors is not None:
            ramp = np.array([params.ramp_fraction * g.pmax for g in case.generators])
            up = [b.var(f"{c}_up_{g.id}", 0, ramp[i], pc * params.corrective_cost_rate)
                  for i, g in enumerate(case.generators)]
            dn = [b.var(f"{c}_dn_{g.id}", 0, ramp[i], pc * params.corrective_cost_rate)
                  for i, g in enumerate(case.generators)]
            built.corr[c] = (up, dn)
            branches = [(k, beh.probability, beh.effectiveness) for k, beh in enumerate(behaviors.behaviors[c])]
            for i in range(len(case.generators)):
                # corrected set-point stays inside the generator window
                b.row({p0[i]: 1, up[i]: 1, dn[i]: -1}, LE, hi[i], f"{c}_hi_{i}")
                b.row({p0[i]: -1, up[i]: -1, dn[i]: 1}, LE, 0.0, f"{c}_lo_{i}")
            if params.pre_corrective_rating is not None:
                add_network(b, case, topo, inputs.load, inputs.wind, _tripped(b, case, p0, None, f"{c}_pc_"),
                            f"{c}_pc_", shed_cost=0.0, curtail_cost=0.0, shed_cap=0.0,
                            rating_scale=params.pre_corrective_rating)
        for k, pb, eff in branches:
            unit = (c, k)
            weight = pc * pb
            if unit in relaxed:
                continue
            corr = None if eff is None else (built.corr[c], eff)
            tag = f"{c}_b{k}_"
            gate = None
            if gated:
                gate = b.var(f"{tag}relax", 0.0, 1.0, weight * params.cr_max, binary=True)
                built.gates[unit] = gate
            expr = _tripped(b, case, p0, corr, tag)
            nv = add_network(b, case, topo, inputs.load, inputs.wind, expr, tag,
                             shed_cost=weight * voll_h,
                             curtail_cost=weight * case.wind_curtail_cost * params.interval_hours,
                             shed_cap=shed_cap, relax_var=gate)
            built.shed[unit] = list(nv.shed.values())
    return built


def _tripped(b, case, p0, corr, tag):
    """Post-event output of each unit: set-point (plus effective correction)
    minus a free down-trip, never below zero."""
    exprs = []
    for i, g in enumerate(case.generators):
        trip = b.var(f"{tag}trip_{g.id}", 0.0, np.inf)
        e = {p0[i]: 1.0, trip: -1.0}
        row = {trip: 1.0, p0[i]: -1.0}
        if corr is not None:
            (up, dn), eff = corr
            if eff > 0:
                e[up[i]] = eff
                e[dn[i]] = -eff
                row[up[i]] = -eff
                row[dn[i]] = eff
        b.row(row, LE, 0.0, f"{tag}tripcap_{g.id}")
        exprs.append(e)
    return exprs


def _units(model, subset, behaviors):
    units = []
    for c in subset:
        if c == BASE_EVENT:
            continue
        if behaviors is None:
            units.append(((c, 0), model.prob(c)))
        else:
            for k, beh in enumerate(behaviors.behaviors[c]):
                units.append(((c, k), model.prob(c) * beh.probability))
    return units


def _solve_fixed(case, model, subset, params, inputs, relaxed, behaviors, backend):
    built = _build(case, model, subset, params, inputs, relaxed, behaviors)
    lp = built.builder.build()
    res = solve_lp(lp, backend=backend)
    if not res.optimal:
        return None
    relaxed_cost = sum(w * params.cr_max for u, w in _units(model, subset, behaviors) if u in relaxed)
    return res.objective + relaxed_cost, res, built


def _relaxations(units, budget):
    """Every unit set whose probability mass fits within ``budget``.

    Relaxing is not free (each relaxed unit is charged c_R^max), so
    non-maximal sets, including the empty one, are genuine candidates.
    """
    keys = [u for u, _ in units]
    w = dict(units)
    out = []

    def extend(start, chosen, mass):
        out.append(frozenset(chosen))
        for i in range(start, len(keys)):
            if mass + w[keys[i]] <= budget + 1e-15:
                extend(i + 1, chosen + [keys[i]], mass + w[keys[i]])

    extend(0, [], 0.0)
    return out


def _solve_rmac(case, model, subset, params, inputs, behaviors, backend):
    subset = list(dict.fromkeys(subset))
    model.check_subset(subset)
    if BASE_EVENT not in subset:
        raise ValueError("subset must include the no-contingency event")
    if inputs is None:
        inputs = RtInputs.peak(case)
    units = _units(model, subset, behaviors)
    budget = params.epsilon * sum(model.prob(c) for c in subset if c != BASE_EVENT)
    best = None
    if budget <= 0 or not units:
        candidates = [frozenset()]
    elif len(units) <= ENUMERATION_LIMIT:
        candidates = _relaxations(units, budget)
    else:
        candidates = None
    if candidates is not None:
        for relaxed in candidates:
            out = _solve_fixed(case, model, subset, params, inputs, relaxed, behaviors, backend)
            if out is not None and (best is None or out[0] < best[0][0] - 1e-9):
                best = (out, relaxed)
    else:
        best = _greedy_relax(case, model, subset, params, inputs, behaviors, backend, units, budget)
    if best is None:
        raise Infeasible("real-time problem is infeasible even with the chance-constraint relaxation")
    (obj, res, built), relaxed = best
    return _package(case, model, subset, params, behaviors, obj, res, built, relaxed)


def _greedy_relax(case, model, subset, params, inputs, behaviors, backend, units, budget):
    w = dict(units)
    relaxed: frozenset = frozenset()
    current = _solve_fixed(case, model, subset, params, inputs, relaxed, behaviors, backend)
    mass = 0.0
    while True:
        best_gain, best_unit, best_out = 0.0, None, None
        for u, wu in units:
            if u in relaxed or mass + wu > budget + 1e-15:
                continue
            out = _solve_fixed(case, model, subset, params, inputs, relaxed | {u}, behaviors, backend)
            if out is None:
                continue
            gain = np.inf if current is None else current[0] - out[0]
            if gain > best_gain + 1e-12:
                best_gain, best_unit, best_out = gain, u, out
        if best_unit is None:
            break
        relaxed = relaxed | {best_unit}
        mass += w[best_unit]
        current = best_out
    return None if current is None else (current, relaxed)


def _package(case, model, subset, params, behaviors, obj, res, built, relaxed):
    x = res.x
    p0 = x[built.p0]
    voll_h = case.voll * params.interval_hours
    crit = {}
    for c in subset:
        if c == BASE_EVENT:
            crit[c] = min(voll_h * float(sum(x[j] for j in built.shed[(c, 0)])), params.cr_max)
            continue
        n_b = 1 if behaviors is None else len(behaviors.behaviors[c])
        probs = [1.0] if behaviors is None else [bh.probability for bh in behaviors.behaviors[c]]
        value = 0.0
        for k in range(n_b):
            if (c, k) in relaxed:
                v = params.cr_max
            else:
                v = min(voll_h * float(sum(x[j] for j in built.shed[(c, k)])), params.cr_max)
            value += probs[k] * v
        crit[c] = value
    corrective = {}
    for c, (up, dn) in built.corr.items():
        corrective[c] = x[up] - x[dn]
    decision = RtDecision(p0, corrective, params.corrective_cost_rate if behaviors is not None else 0.0)
    cost0 = float(sum(g.cost_linear * p for g, p in zip(case.generators, p0)) * params.interval_hours)
    report = RtReport(float(obj), list(subset), 0.0, crit, 1,
                      sorted(relaxed), cost0)
    return decision, report


def rt_rmac_preventive(case: GridCase, model: ContingencyModel, subset, params: RtParams,
                       inputs: RtInputs | None = None, backend: str = "auto"):
    """Jointly choose the preventive dispatch for c0 and every retained event."""
    return _solve_rmac(case, model, subset, params, inputs, None, backend)


def rt_rmac_corrective(case: GridCase, model: ContingencyModel, subset, params: RtParams,
                       behaviors: CorrectiveBehaviorModel, inputs: RtInputs | None = None,
                       backend: str = "auto"):
    """Preventive dispatch plus a corrective redispatch per retained event.

    Behaviour b scales the corrective move by its effectiveness; each
    (event, behaviour) pair is its own unit under the chance constraint.
    """
    missing = [c for c in subset if c != BASE_EVENT and c not in behaviors.behaviors]
    if missing:
        raise ValueError(f"no corrective behaviours for events {missing}")
    return _solve_rmac(case, model, subset, params, inputs, behaviors, backend)
