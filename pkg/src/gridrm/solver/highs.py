"""HiGHS backend (through scipy) for programs beyond desk scale."""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .model import EQ, GE, LE, LinearProgram, MixedIntegerProgram, SolveResult, Status


def _split(lp: LinearProgram):
    A = lp.sparse_matrix()
    b = np.asarray(lp.rhs, dtype=float)
    rel = np.asarray(lp.relations)
    ub_rows = np.flatnonzero(rel != EQ)
    eq_rows = np.flatnonzero(rel == EQ)
    flip = np.where(rel[ub_rows] == GE, -1.0, 1.0)
    A_ub = sparse.diags(flip) @ A[ub_rows] if ub_rows.size else None
    b_ub = b[ub_rows] * flip if ub_rows.size else None
    A_eq = A[eq_rows] if eq_rows.size else None
    b_eq = b[eq_rows] if eq_rows.size else None
    return A_ub, b_ub, A_eq, b_eq, ub_rows, eq_rows, flip


def _status(code: int) -> Status:
    if code == 0:
        return Status.OPTIMAL
    if code == 3:
        return Status.UNBOUNDED
    return Status.INFEASIBLE


def solve_lp_highs(lp: LinearProgram) -> SolveResult:
    sign = 1.0 if lp.sense == "min" else -1.0
    A_ub, b_ub, A_eq, b_eq, ub_rows, eq_rows, flip = _split(lp)
    bounds = [(None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi)
              for lo, hi in zip(lp.lower, lp.upper)]
    res = linprog(sign * lp.cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    status = _status(res.status)
    if status is not Status.OPTIMAL:
        return SolveResult(status, iterations=int(getattr(res, "nit", 0)), backend="highs")
    duals = np.zeros(lp.n_rows)
    if ub_rows.size:
        duals[ub_rows] = sign * res.ineqlin.marginals * flip
    if eq_rows.size:
        duals[eq_rows] = sign * res.eqlin.marginals
    x = np.clip(res.x, lp.lower, lp.upper)
    return SolveResult(Status.OPTIMAL, x=x, objective=float(lp.cost @ x), duals=duals,
                       iterations=int(res.nit), backend="highs")


def solve_milp_highs(mip: MixedIntegerProgram, time_limit: float | None = None,
                     mip_gap: float = 1e-9) -> SolveResult:
    lp = mip.lp
    sign = 1.0 if lp.sense == "min" else -1.0
    A = lp.sparse_matrix()
    b = np.asarray(lp.rhs, dtype=float)
    lo = np.full(lp.n_rows, -np.inf)
    hi = np.full(lp.n_rows, np.inf)
    for i, rel in enumerate(lp.relations):
        if rel in (LE, EQ):
            hi[i] = b[i]
        if rel in (GE, EQ):
            lo[i] = b[i]
    integrality = np.zeros(lp.n_vars)
    integrality[mip.binaries] = 1
    constraints = [LinearConstraint(A, lo, hi)] if lp.n_rows else []
    options = {"mip_rel_gap": mip_gap}
    if time_limit is not None:
        options["time_limit"] = time_limit
    res = milp(sign * lp.cost, constraints=constraints, integrality=integrality,
               bounds=Bounds(lp.lower, lp.upper), options=options)
    if res.x is None or res.status not in (0,):
        status = Status.UNBOUNDED if res.status == 3 else Status.INFEASIBLE
        return SolveResult(status, backend="highs")
    x = np.clip(res.x, lp.lower, lp.upper)
    x[mip.binaries] = np.round(x[mip.binaries])
    return SolveResult(Status.OPTIMAL, x=x, objective=float(lp.cost @ x), backend="highs")
