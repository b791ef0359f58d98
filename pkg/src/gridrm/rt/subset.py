"""Criticality, residual risk and the three contingency-subset selectors."""

from __future__ import annotations

from functools import partial

import numpy as np

from ..grid import GridCase, Topology, add_network, extract_solution
from ..solver import LE, ProgramBuilder, solve_lp
from .contingency import BASE_EVENT, ContingencyModel
from .rmac import RtDecision, RtInputs, RtParams, RtReport, SubsetMode, rt_rmac_preventive


def criticality(case: GridCase, topology: Topology, decision: RtDecision, event: str | None = None,
                cr_max: float = np.inf, inputs: RtInputs | None = None, interval_hours: float = 1.0,
                effectiveness: float = 1.0, backend: str = "auto") -> float:
    """Shed energy times VOLL after the event, at the decision's set-points.

    Units may only trip down from their set-point (plus any corrective move
    for ``event``); the minimum-shed dispatch decides the value.  Returns
    ``cr_max`` when the post-event problem has no solution.
    """
    if inputs is None:
        inputs = RtInputs.peak(case)
    setpoint = np.asarray(decision.preventive, dtype=float).copy()
    if event is not None and event in decision.corrective:
        setpoint = setpoint + effectiveness * np.asarray(decision.corrective[event])
    if np.any(setpoint < -1e-9):
        return cr_max
    b = ProgramBuilder()
    gens = []
    for i, g in enumerate(case.generators):
        gens.append(b.var(f"P_{g.id}", 0.0, max(setpoint[i], 0.0)))
    nv = add_network(b, case, topology, inputs.load, inputs.wind, [{v: 1.0} for v in gens], "",
                     shed_cost=case.voll, curtail_cost=case.wind_curtail_cost * 1e-6)
    res = solve_lp(b.build(), backend=backend)
    if not res.optimal:
        return cr_max
    sol = extract_solution(case, topology, nv, res.x, res.x[gens], inputs.load, inputs.wind, res.objective)
    return float(min(sol.total_shed * interval_hours * case.voll, cr_max))


def residual_risk(model: ContingencyModel, subset, criticality_of) -> float:
    """Sum of pi_c * criticality over the events outside ``subset``."""
    model.check_subset(subset)
    keep = set(subset)
    return float(sum(e.probability * criticality_of[e.id] for e in model.events if e.id not in keep))


def pessimistic_bound(model: ContingencyModel, subset, cr_max: float) -> float:
    keep = set(subset)
    return float(cr_max * sum(e.probability for e in model.events if e.id not in keep))


def select_subset_pessimistic(model: ContingencyModel, params: RtParams) -> list[str]:
    """Fewest events whose total probability reaches 1 - dE / c_R^max.

    Greedy by descending probability (ties: lower id) is optimal for a
    cardinality-minimal cover of a mass threshold.
    """
    threshold = 1.0 - params.delta_e / params.cr_max
    chosen = [BASE_EVENT]
    mass = model.prob(BASE_EVENT)
    rest = sorted((e for e in model.events if e.id != BASE_EVENT), key=lambda e: (-e.probability, e.id))
    for e in rest:
        if mass >= threshold - 1e-12:
            break
        chosen.append(e.id)
        mass += e.probability
    return chosen


def initial_subset(model: ContingencyModel) -> list[str]:
    others = [e for e in model.events if e.id != BASE_EVENT]
    if not others:
        return [BASE_EVENT]
    med = float(np.median([e.probability for e in others]))
    return [BASE_EVENT] + [e.id for e in others if e.probability >= 10 * med and e.probability > 0]


def _grow(case, model, params, solve_fn, inputs, exact_count, start, backend):
    subset = list(start) if start is not None else initial_subset(model)
    if inputs is None:
        inputs = RtInputs.peak(case)
    iterations = 0
    while True:
        iterations += 1
        decision, report = solve_fn(subset)
        excluded = [e for e in model.events if e.id not in subset]
        excluded.sort(key=lambda e: (-e.probability, e.id))
        crit = dict(report.per_event_criticality)
        for k, e in enumerate(excluded):
            if exact_count is None or k < exact_count:
                topo = model.topology(e.id, inputs.base)
                crit[e.id] = criticality(case, topo, decision, e.id, params.cr_max, inputs,
                                         params.interval_hours, backend=backend)
            else:
                crit[e.id] = params.cr_max
        risk = residual_risk(model, subset, crit)
        report.per_event_criticality = crit
        report.residual_risk = risk
        report.iterations = iterations
        if risk <= params.delta_e + 1e-9 or not excluded:
            return subset, decision, report
        # largest pi*criticality first, then lower id
        top = max(e.probability * crit[e.id] for e in excluded)
        if top <= 0:
            return subset, decision, report
        # solver noise must not override the id tie-break
        pick = min((e for e in excluded if e.probability * crit[e.id] >= top * (1 - 1e-9)),
                   key=lambda e: e.id)
        subset = subset + [pick.id]


def select_subset_iterative(case, model, params, solve_fn=None, inputs=None, start=None, backend="auto"):
    """Grow N_c until the exactly-evaluated residual risk is within dE."""
    if solve_fn is None:
        solve_fn = partial(_default_solve, case, model, params, inputs, backend)
    subset, decision, report = _grow(case, model, params, solve_fn, inputs, None, start, backend)
    return subset, report


def select_subset_hybrid(case, model, params, solve_fn=None, inputs=None, start=None, backend="auto"):
    """As the iterative rule, but only the ``hybrid_exact_count`` most likely
    excluded events are evaluated exactly; the rest count at c_R^max."""
    if solve_fn is None:
        solve_fn = partial(_default_solve, case, model, params, inputs, backend)
    subset, decision, report = _grow(case, model, params, solve_fn, inputs,
                                     params.hybrid_exact_count, start, backend)
    return subset, report


def _default_solve(case, model, params, inputs, backend, subset):
    return rt_rmac_preventive(case, model, subset, params, inputs, backend)


def assess(case: GridCase, model: ContingencyModel, params: RtParams, inputs: RtInputs | None = None,
           behaviors=None, backend: str = "auto"):
    """Select N_c per ``params.subset_mode``, solve the RMAC and evaluate every event."""
    from .rmac import rt_rmac_corrective

    if inputs is None:
        inputs = RtInputs.peak(case)

    def solve_fn(subset):
        if behaviors is not None:
            return rt_rmac_corrective(case, model, subset, params, behaviors, inputs, backend)
        return rt_rmac_preventive(case, model, subset, params, inputs, backend)

    if params.subset_mode is SubsetMode.PESSIMISTIC:
        subset = select_subset_pessimistic(model, params)
        decision, report = solve_fn(subset)
        crit = dict(report.per_event_criticality)
        for e in model.events:
            if e.id not in crit:
                crit[e.id] = criticality(case, model.topology(e.id, inputs.base), decision, e.id,
                                         params.cr_max, inputs, params.interval_hours, backend=backend)
        report.per_event_criticality = crit
        report.residual_risk = pessimistic_bound(model, subset, params.cr_max)
        return decision, report
    exact = None if params.subset_mode is SubsetMode.ITERATIVE else params.hybrid_exact_count
    subset, decision, report = _grow(case, model, params, solve_fn, inputs, exact, None, backend)
    return decision, report
