"""Dense bounded-variable primal simplex.

Two phases with one artificial per row. Rows are scaled by their max-abs
coefficient before solving; duals are reported in the caller's units.
Dantzig pricing switches to Bland's rule for the rest of a phase once 50
consecutive degenerate pivots have been taken.
"""

from __future__ import annotations

import numpy as np

from .model import EQ, GE, LE, LinearProgram, NumericalBreakdown, SolveResult, Status

PRIMAL_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-11
DEGENERATE_LIMIT = 50
REFACTOR_EVERY = 40

_AT_LOWER, _AT_UPPER, _FREE, _BASIC = 0, 1, 2, 3


class _Tableau:
    def __init__(self, A, b, cost, lower, upper, max_pivots):
        self.A = A
        self.b = b
        self.cost = cost
        self.lower = lower
        self.upper = upper
        self.m, self.N = A.shape
        self.max_pivots = max_pivots
        self.pivots = 0

    def start(self, basis, x, state):
        self.basis = np.array(basis, dtype=int)
        self.x = x
        self.state = state
        self._refactor()

    def _refactor(self):
        B = self.A[:, self.basis]
        try:
            self.B_inv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown("singular basis") from exc
        nonbasic = self.state != _BASIC
        rhs = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.B_inv @ rhs
        self.since_refactor = 0

    def run(self, cost):
        m = self.m
        degenerate = 0
        bland = False
        while True:
            if self.pivots > self.max_pivots:
                raise NumericalBreakdown(f"pivot limit {self.max_pivots} exceeded")
            y = cost[self.basis] @ self.B_inv
            d = cost - y @ self.A
            st = self.state
            room = self.upper - self.lower
            cand_up = (st == _AT_LOWER) & (d < -DUAL_TOL) & (room > PRIMAL_TOL)
            cand_dn = (st == _AT_UPPER) & (d > DUAL_TOL)
            cand_free = (st == _FREE) & (np.abs(d) > DUAL_TOL)
            cand = cand_up | cand_dn | cand_free
            if not cand.any():
                return y, d
            idx = np.flatnonzero(cand)
            if bland:
                j = int(idx[0])
            else:
                j = int(idx[np.argmax(np.abs(d[idx]))])
            direction = 1.0 if d[j] < 0 else -1.0

            alpha = self.B_inv @ self.A[:, j]
            step = direction * alpha
            xb = self.x[self.basis]
            lb = self.lower[self.basis]
            ub = self.upper[self.basis]
            ratios = np.full(m, np.inf)
            dec = step > PIVOT_TOL
            inc = step < -PIVOT_TOL
            with np.errstate(invalid="ignore", divide="ignore"):
                r_dec = (xb - lb) / step
                r_inc = (ub - xb) / (-step)
            ratios[dec] = np.where(np.isfinite(lb[dec]), r_dec[dec], np.inf)
            ratios[inc] = np.where(np.isfinite(ub[inc]), r_inc[inc], np.inf)
            ratios = np.maximum(ratios, 0.0)
            theta_basic = ratios.min() if m else np.inf
            theta_flip = room[j] if np.isfinite(room[j]) else np.inf
            theta = min(theta_basic, theta_flip)
            if not np.isfinite(theta):
                self.ray = (j, direction, alpha)
                return None, d

            if theta <= 1e-12:
                degenerate += 1
                if degenerate >= DEGENERATE_LIMIT:
                    bland = True
            else:
                degenerate = 0

            self.x[self.basis] = xb - theta * step
            self.pivots += 1
            if theta_flip <= theta_basic:
                self.x[j] = self.upper[j] if direction > 0 else self.lower[j]
                self.state[j] = _AT_UPPER if direction > 0 else _AT_LOWER
                continue

            ties = np.flatnonzero(ratios <= theta_basic + 1e-12)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            leaving = self.basis[r]
            self.x[j] = self.x[j] + direction * theta
            if step[r] > 0:
                self.x[leaving] = self.lower[leaving]
                self.state[leaving] = _AT_LOWER
            else:
                self.x[leaving] = self.upper[leaving]
                self.state[leaving] = _AT_UPPER
            self.state[j] = _BASIC
            self.basis[r] = j

            piv = alpha[r]
            if abs(piv) < PIVOT_TOL:
                raise NumericalBreakdown("vanishing pivot")
            row = self.B_inv[r] / piv
            self.B_inv -= np.outer(alpha, row)
            self.B_inv[r] = row
            self.since_refactor += 1
            if self.since_refactor >= REFACTOR_EVERY:
                self._refactor()


def solve_lp_simplex(lp: LinearProgram, max_pivots: int | None = None) -> SolveResult:
    """Solve ``lp`` with the native simplex; never raises for infeasible/unbounded."""
    n = lp.n_vars
    A0 = lp.matrix()
    m = A0.shape[0]
    b0 = np.asarray(lp.rhs, dtype=float)
    sign = 1.0 if lp.sense == "min" else -1.0
    c0 = sign * lp.cost

    scale = np.ones(m)
    for i in range(m):
        mx = np.abs(A0[i]).max() if n else 0.0
        if mx > 0:
            scale[i] = 1.0 / mx
    A = A0 * scale[:, None]
    b = b0 * scale

    slack_cols = []
    for i, rel in enumerate(lp.relations):
        if rel == LE:
            slack_cols.append((i, 1.0))
        elif rel == GE:
            slack_cols.append((i, -1.0))
    ns = len(slack_cols)
    S = np.zeros((m, ns))
    for k, (i, s) in enumerate(slack_cols):
        S[i, k] = s

    lower = np.concatenate([lp.lower, np.zeros(ns)])
    upper = np.concatenate([lp.upper, np.full(ns, np.inf)])
    x = np.zeros(n + ns)
    state = np.empty(n + ns, dtype=int)
    for j in range(n + ns):
        if np.isfinite(lower[j]):
            x[j], state[j] = lower[j], _AT_LOWER
        elif np.isfinite(upper[j]):
            x[j], state[j] = upper[j], _AT_UPPER
        else:
            x[j], state[j] = 0.0, _FREE

    AS = np.hstack([A, S])
    resid = b - AS @ x
    art_sign = np.where(resid >= 0, 1.0, -1.0)
    Afull = np.hstack([AS, np.diag(art_sign)])
    N = n + ns + m
    lower_f = np.concatenate([lower, np.zeros(m)])
    upper_f = np.concatenate([upper, np.full(m, np.inf)])
    x_f = np.concatenate([x, np.abs(resid)])
    state_f = np.concatenate([state, np.full(m, _BASIC)])
    basis = np.arange(n + ns, N)

    if max_pivots is None:
        max_pivots = 100 * (m + n)
    tab = _Tableau(Afull, b, None, lower_f, upper_f, max(max_pivots, 50))
    tab.start(basis, x_f, state_f)

    phase1 = np.zeros(N)
    phase1[n + ns:] = 1.0
    y1, _ = tab.run(phase1)
    infeas = float(tab.x[n + ns:].sum())
    tol = 1e-7 * max(1.0, np.abs(b).max() if m else 1.0)
    if y1 is not None and infeas > tol:
        return SolveResult(Status.INFEASIBLE, iterations=tab.pivots,
                           certificate=y1 * scale)

    tab.lower[n + ns:] = 0.0
    tab.upper[n + ns:] = 0.0
    for k in range(n + ns, N):
        if tab.state[k] != _BASIC:
            tab.state[k] = _AT_LOWER
            tab.x[k] = 0.0
    phase2 = np.concatenate([c0, np.zeros(ns + m)])
    y, d = tab.run(phase2)
    if y is None:
        j, direction, alpha = tab.ray
        ray = np.zeros(N)
        ray[j] = direction
        ray[tab.basis] -= direction * alpha
        return SolveResult(Status.UNBOUNDED, iterations=tab.pivots, certificate=ray[:n])

    xs = tab.x[:n].copy()
    xs = np.clip(xs, lp.lower, lp.upper)
    duals = sign * y * scale
    rc = sign * d[:n]
    return SolveResult(Status.OPTIMAL, x=xs, objective=float(lp.cost @ xs),
                       duals=duals, reduced_costs=rc, iterations=tab.pivots)
