"""Cross-entropy search over maintenance schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .schedule import MaintenanceSchedule, evaluate_schedule


class SamplingExhausted(RuntimeError):
    pass


@dataclass
class CeParams:
    population: int = 50
    rho: float = 0.15
    smoothing: float = 0.7  # weight on the new elite frequencies
    max_iter: int = 15
    init_prob: float | None = None  # None: month_cap expected actions per month, 0.5 if uncapped
    degenerate_tol: float = 1e-3
    max_attempts: int = 10_000  # rejection draws per population member
    n_scenarios: int = 10  # common-random-number scenarios per evaluation

    def __post_init__(self):
        if self.population < 10:
            raise ValueError("population must be >= 10")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if not 0 < self.smoothing <= 1:
            raise ValueError("smoothing must lie in (0, 1]")


@dataclass
class CeState:
    probabilities: np.ndarray
    rho: float
    smoothing: float
    iteration: int = 0

    def degenerate(self, tol: float) -> bool:
        p = self.probabilities
        return bool(np.all((p <= tol) | (p >= 1 - tol)))


@dataclass
class CeResult:
    best: MaintenanceSchedule
    best_cost: float
    trace: list = field(default_factory=list)  # (elite mean, elite std, best so far)
    state: CeState | None = None
    evaluations: int = 0


def _draw(template: MaintenanceSchedule, p: np.ndarray, rng, attempts: int) -> MaintenanceSchedule:
    for _ in range(attempts):
        cand = template.with_matrix(rng.random(p.shape) < p)
        if cand.feasible():
            return cand
    raise SamplingExhausted(f"no feasible schedule in {attempts} draws")


def cross_entropy_optimize(template: MaintenanceSchedule, objective, params: CeParams | None = None,
                           seed: int = 0) -> CeResult:
    """Minimize ``objective(schedule)`` over schedules shaped like ``template``.

    Schedules are drawn entry-wise from Bernoulli probabilities and rejected
    until they respect the template's caps.  The cheapest ``rho`` fraction
    pulls the probabilities toward its entry frequencies.  The objective is
    memoised per matrix, so with a deterministic objective (fixed evaluation
    seeds) repeated schedules cost nothing.
    """
    params = params or CeParams()
    rng = np.random.default_rng(seed)
    shape = template.matrix.shape
    if params.init_prob is not None:
        p0 = params.init_prob
    elif template.month_cap is None:
        p0 = 0.5
    else:
        p0 = min(0.5, template.month_cap / (shape[0] + 1))
    state = CeState(np.full(shape, float(p0)), params.rho, params.smoothing)
    n_elite = max(1, math.ceil(params.rho * params.population))
    memo: dict = {}

    def cost(s: MaintenanceSchedule) -> float:
        key = s.matrix.tobytes()
        if key not in memo:
            memo[key] = float(objective(s))
        return memo[key]

    best, best_cost = template.with_matrix(np.zeros(shape, bool)), math.inf
    trace = []
    for it in range(params.max_iter):
        state.iteration = it + 1
        pop = [_draw(template, state.probabilities, rng, params.max_attempts)
               for _ in range(params.population)]
        costs = np.array([cost(s) for s in pop])
        order = np.argsort(costs, kind="stable")
        elite = [pop[i] for i in order[:n_elite]]
        ec = costs[order[:n_elite]]
        if ec[0] < best_cost:
            best, best_cost = elite[0], float(ec[0])
        trace.append((float(ec.mean()), float(ec.std()), best_cost))
        freq = np.mean([s.matrix for s in elite], axis=0)
        state.probabilities = params.smoothing * freq + (1 - params.smoothing) * state.probabilities
        if state.degenerate(params.degenerate_tol):
            break
    return CeResult(best, best_cost, trace, state, len(memo))


def schedule_objective(case, policy, spec, seed: int, n_scenarios: int, cache=None,
                       activation=None, jobs: int = 1):
    """Evaluation cost under fixed scenario seeds (common random numbers)."""
    def f(s: MaintenanceSchedule) -> float:
        return evaluate_schedule(case, s, policy, spec, seed, n_scenarios,
                                 activation=activation, cache=cache, jobs=jobs).total_cost
    return f


__all__ = ["CeParams", "CeResult", "CeState", "SamplingExhausted", "cross_entropy_optimize",
           "schedule_objective"]
