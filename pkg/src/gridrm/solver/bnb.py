"""Best-first branch-and-bound over binary variables."""

from __future__ import annotations

import heapq
import itertools

import numpy as np

from .model import MixedIntegerProgram, NumericalBreakdown, SolveResult, Status

INT_TOL = 1e-6
ENUMERATION_FALLBACK = 16


def _with_fixings(mip: MixedIntegerProgram, fixed: dict[int, int]):
    lp = mip.lp.copy()
    for j, v in fixed.items():
        lp.lower[j] = lp.upper[j] = float(v)
    return lp


def solve_by_enumeration(mip: MixedIntegerProgram, lp_solver) -> SolveResult:
    """Solve every binary assignment and keep the best; exponential by design."""
    lp0 = mip.lp
    sign = 1.0 if lp0.sense == "min" else -1.0
    best = None
    count = 0
    for bits in itertools.product((0, 1), repeat=len(mip.binaries)):
        fixed = dict(zip(mip.binaries, bits))
        res = lp_solver(_with_fixings(mip, fixed))
        count += 1
        if res.status is Status.UNBOUNDED:
            return SolveResult(Status.UNBOUNDED, nodes=count)
        if res.optimal and (best is None or sign * res.objective < sign * best.objective - 1e-12):
            best = res
    if best is None:
        return SolveResult(Status.INFEASIBLE, nodes=count)
    best.nodes = count
    return best


def _dominated(bound: float, best: float) -> bool:
    return np.isfinite(best) and bound >= best - 1e-9 * max(1.0, abs(best))


def branch_and_bound(mip: MixedIntegerProgram, lp_solver, node_limit: int = 200_000) -> SolveResult:
    lp0 = mip.lp
    sign = 1.0 if lp0.sense == "min" else -1.0
    counter = itertools.count()
    incumbent: SolveResult | None = None
    best_val = np.inf
    nodes = 0

    root = lp_solver(lp0)
    nodes += 1
    if root.status is Status.UNBOUNDED:
        return SolveResult(Status.UNBOUNDED, nodes=nodes)
    if not root.optimal:
        return SolveResult(Status.INFEASIBLE, nodes=nodes)
    heap = [(sign * root.objective, next(counter), {}, root)]
    while heap:
        bound, _, fixed, res = heapq.heappop(heap)
        if _dominated(bound, best_val):
            continue
        xb = res.x[mip.binaries]
        frac = np.abs(xb - np.round(xb))
        if frac.max(initial=0.0) <= INT_TOL:
            full = dict(zip(mip.binaries, np.round(xb).astype(int)))
            clean = lp_solver(_with_fixings(mip, full))
            nodes += 1
            if clean.optimal and sign * clean.objective < best_val:
                best_val = sign * clean.objective
                incumbent = clean
            continue
        k = int(np.argmax(-np.abs(frac - 0.5) - 1e-12 * np.arange(frac.size)))
        j = mip.binaries[k]
        for v in (1, 0) if xb[k] >= 0.5 else (0, 1):
            child_fix = dict(fixed)
            child_fix[j] = v
            child = lp_solver(_with_fixings(mip, child_fix))
            nodes += 1
            if nodes > node_limit:
                raise NumericalBreakdown(f"node limit {node_limit} exceeded")
            if child.optimal:
                val = sign * child.objective
                if not _dominated(val, best_val):
                    heapq.heappush(heap, (val, next(counter), child_fix, child))
    if incumbent is None:
        return SolveResult(Status.INFEASIBLE, nodes=nodes)
    incumbent.nodes = nodes
    return incumbent
