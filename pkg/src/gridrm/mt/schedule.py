"""Maintenance schedules, their evaluation and the heuristic baselines."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..grid import GridCase
from .estimators import (
    SeverityAggregator, estimate_achievability, estimate_chance_constraint,
    estimate_expected_cost,
)
from .policy import InnerPolicy
from .sampling import EvalCache, sample_scenario
from .state import HOURS_PER_MONTH, SamplerSpec


class InfeasibleSchedule(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass
class MaintenanceSchedule:
    """Binary matrix u[line, month] with per-action costs and count caps.

    ``month_cap``/``line_cap`` of None mean unlimited.
    """

    matrix: np.ndarray
    action_cost: np.ndarray
    line_ids: tuple = ()
    month_cap: int | None = 1
    line_cap: int | None = 1

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=bool)
        self.action_cost = np.broadcast_to(np.asarray(self.action_cost, dtype=float),
                                           (self.matrix.shape[0],)).copy()
        if not self.line_ids:
            self.line_ids = tuple(f"L{k}" for k in range(self.matrix.shape[0]))

    @classmethod
    def empty(cls, case: GridCase, months: int, **kw) -> "MaintenanceSchedule":
        return cls(np.zeros((case.n_lines, months), dtype=bool),
                   [ln.maintenance_cost for ln in case.lines],
                   tuple(ln.id for ln in case.lines), **kw)

    @classmethod
    def from_actions(cls, case: GridCase, months: int, actions, **kw) -> "MaintenanceSchedule":
        """``actions`` is an iterable of (month, line index or id)."""
        s = cls.empty(case, months, **kw)
        for m, line in actions:
            k = case.line_index(line) if isinstance(line, str) else int(line)
            s.matrix[k, m] = True
        return s

    def with_matrix(self, matrix) -> "MaintenanceSchedule":
        return replace(self, matrix=np.asarray(matrix, dtype=bool))

    @property
    def n_months(self) -> int:
        return self.matrix.shape[1]

    @property
    def direct_cost(self) -> float:
        return float(self.action_cost @ self.matrix.sum(axis=1))

    def actions(self) -> list[tuple[int, str]]:
        return [(int(m), self.line_ids[k]) for m in range(self.n_months)
                for k in np.flatnonzero(self.matrix[:, m])]

    def violations(self) -> list[str]:
        out = []
        if self.month_cap is not None:
            for m, n in enumerate(self.matrix.sum(axis=0)):
                if n > self.month_cap:
                    out.append(f"month {m}: {n} actions exceed the per-month cap {self.month_cap}")
        if self.line_cap is not None:
            for k, n in enumerate(self.matrix.sum(axis=1)):
                if n > self.line_cap:
                    out.append(f"line {self.line_ids[k]}: {n} actions exceed the per-line cap {self.line_cap}")
        return out

    def feasible(self) -> bool:
        return not self.violations()

    def check(self) -> None:
        problems = self.violations()
        if problems:
            raise InfeasibleSchedule(problems)

    def to_rows(self) -> list[tuple[int, str, int]]:
        return [(m, self.line_ids[k], int(self.matrix[k, m]))
                for m in range(self.n_months) for k in range(self.matrix.shape[0])]


@dataclass
class ScheduleEvaluation:
    total_cost: float
    chance_ok: bool
    achievability_ok: bool
    direct_cost: float = 0.0
    expected_operation: float = 0.0
    std_error: float = 0.0
    scenario_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    scenarios: list = field(default_factory=list, repr=False)

    def __iter__(self):
        return iter((self.total_cost, self.chance_ok, self.achievability_ok))


@dataclass
class ChanceSpec:
    R: float
    alpha: float
    aggregator: SeverityAggregator = field(default_factory=SeverityAggregator)
    conservative: bool = False  # decide on the Wilson lower bound


def _sample(args):
    case, schedule, policy, spec, z, activation = args
    return sample_scenario(case, schedule, policy, spec, z, activation)


def sample_many(case, schedule, policy, spec, n_scenarios, activation=None, cache=None,
                jobs: int = 1) -> list:
    if jobs > 1 and n_scenarios > 1:
        args = [(case, schedule, policy, spec, z, activation) for z in range(n_scenarios)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sample, args))
    cache = cache if cache is not None else EvalCache()
    return [sample_scenario(case, schedule, policy, spec, z, activation, cache)
            for z in range(n_scenarios)]


def evaluate_schedule(case: GridCase, schedule: MaintenanceSchedule, policy: InnerPolicy,
                      spec: SamplerSpec, seed: int | None = None, n_scenarios: int = 20,
                      chance: ChanceSpec | None = None, epsilon: float = 1.0,
                      activation=None, cache: EvalCache | None = None, jobs: int = 1,
                      keep_scenarios: bool = False) -> ScheduleEvaluation:
    """Direct action cost plus the expected operating cost over sampled scenarios.

    Scenario z is sampled from stream key (seed, z, ...), so two schedules
    evaluated with the same seed are compared under common random numbers.
    """
    schedule.check()
    if seed is not None:
        spec = replace(spec, seed=seed)
    if schedule.n_months < spec.horizon_months:
        pad = np.zeros((schedule.matrix.shape[0], spec.horizon_months - schedule.n_months), bool)
        schedule = schedule.with_matrix(np.hstack([schedule.matrix, pad]))
    scen = sample_many(case, schedule, policy, spec, n_scenarios, activation, cache, jobs)
    mean, se = estimate_expected_cost(scen)
    chance_ok = True
    if chance is not None:
        chance_ok = estimate_chance_constraint(scen, chance.aggregator, chance.R, chance.alpha,
                                               conservative=chance.conservative).satisfied
    ach_ok, _ = estimate_achievability(scen, epsilon)
    costs = np.array([np.exp(s.log_weight) * s.total_cost for s in scen])
    direct = schedule.direct_cost
    return ScheduleEvaluation(direct + mean, chance_ok, ach_ok, direct, mean, se, costs,
                              scen if keep_scenarios else [])


# -- baselines ----------------------------------------------------------------

def _initial_ages(case: GridCase) -> np.ndarray:
    return np.array([ln.life.initial_age if ln.life else 0.0 for ln in case.lines])


def oldest_first(case: GridCase, months: int, **kw) -> MaintenanceSchedule:
    """One action per month, oldest line first, each line at most once."""
    s = MaintenanceSchedule.empty(case, months, **kw)
    order = np.argsort(-_initial_ages(case), kind="stable")
    for m, k in zip(range(months), order):
        s.matrix[k, m] = True
    return s


def age_threshold(case: GridCase, months: int, hours: float, **kw) -> MaintenanceSchedule:
    """Each month maintain the oldest not-yet-maintained line whose age has
    reached ``hours``."""
    s = MaintenanceSchedule.empty(case, months, **kw)
    ages0 = _initial_ages(case)
    done = np.zeros(case.n_lines, dtype=bool)
    for m in range(months):
        ages = ages0 + m * HOURS_PER_MONTH
        cand = [k for k in np.argsort(-ages, kind="stable") if not done[k] and ages[k] >= hours]
        if cand:
            s.matrix[cand[0], m] = True
            done[cand[0]] = True
    return s


def cyclic(case: GridCase, months: int, **kw) -> MaintenanceSchedule:
    """Lines in index order, one per month."""
    s = MaintenanceSchedule.empty(case, months, **kw)
    for m in range(min(months, case.n_lines)):
        s.matrix[m, m] = True
    return s


def baseline(case: GridCase, months: int, name: str, **kw) -> MaintenanceSchedule:
    """``oldest-first``, ``age-threshold:<hours>`` or ``cyclic``."""
    if name == "oldest-first":
        return oldest_first(case, months, **kw)
    if name == "cyclic":
        return cyclic(case, months, **kw)
    if name.startswith("age-threshold:"):
        return age_threshold(case, months, float(name.split(":", 1)[1]), **kw)
    raise ValueError(f"unknown baseline {name!r}")


__all__ = ["ChanceSpec", "InfeasibleSchedule", "MaintenanceSchedule", "ScheduleEvaluation",
           "age_threshold", "baseline", "cyclic", "evaluate_schedule", "oldest_first",
           "sample_many"]
