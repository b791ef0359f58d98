"""Four-layer world state, random streams and the stochastic transition."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr, ndtri

from ..grid import GridCase, Topology
from ..life import WeibullLife, failure_probability, interval_probability

HOURS_PER_DAY = 24
DAYS_PER_MONTH = 30
HOURS_PER_MONTH = HOURS_PER_DAY * DAYS_PER_MONTH

# stream purposes, the last element of every counter key
_LONG, _FORECAST, _REALTIME, _START, _FAIL = 1, 2, 3, 4, 5


def stream(seed: int, *counters: int) -> np.random.Generator:
    """Counter-based stream: Philox keyed by (seed, *counters).

    Streams for different counters are independent and can be created in
    any order, which keeps runs reproducible under parallel evaluation.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *[int(c) for c in counters]])
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class TickStreams:
    """Random sources of one real-time trajectory.

    Each line has its own failure stream, so adding or activating a line
    never shifts the numbers seen by the others.
    """

    weather: np.random.Generator
    lines: list

    @classmethod
    def keyed(cls, seed: int, counters: tuple, n_lines: int) -> "TickStreams":
        return cls(stream(seed, *counters, _REALTIME),
                   [stream(seed, *counters, _FAIL, k) for k in range(n_lines)])

    def line_uniforms(self) -> np.ndarray:
        return np.array([g.random() for g in self.lines])


class Scheme(str, enum.Enum):
    COMPLETE = "complete"
    QUASI_STATIC = "quasistatic"
    QUASI_STATIC_SAMPLING = "quasistatic-sampling"
    WINDOW = "window"


@dataclass
class SamplerSpec:
    scheme: Scheme = Scheme.WINDOW
    window_days: int = 3  # W_s
    window_hours: int = 24  # W_RT
    n_short: int = 1  # N_s
    n_rt: int = 1  # N_RT
    seed: int = 0
    horizon_months: int = 8  # T_E
    growth_per_month: float = 0.02 / 12
    growth_sigma: float = 0.005
    fail_tilt: float = 1.0  # importance-sampling multiplier k on failure probabilities
    repair_hours: int = 240
    maintenance_days: int = 7

    def __post_init__(self):
        self.scheme = Scheme(self.scheme)
        if self.window_days < 1 or self.window_hours < 1 or self.n_short < 1 or self.n_rt < 1:
            raise ValueError("windows and replication counts must be >= 1")
        if self.window_days > DAYS_PER_MONTH or self.window_hours > HOURS_PER_DAY:
            raise ValueError("windows cannot exceed a month / a day")
        if self.horizon_months < 1 or self.fail_tilt <= 0:
            raise ValueError("need horizon >= 1 month and a positive tilt")


@dataclass
class WorldState:
    """Snapshot of s_t = (S_l, S_m, S_s, S_RT)."""

    growth: float  # S_l: load growth factor
    month: int  # S_m
    ages: np.ndarray  # S_m: effective age per line, hours
    load_forecast: np.ndarray | None = None  # S_s: bus x 24
    wind_forecast: np.ndarray | None = None  # S_s: unit x 24
    load: np.ndarray | None = None  # S_RT realized, per bus
    wind: np.ndarray | None = None
    topology: Topology | None = None
    outage_left: np.ndarray | None = None  # hours of repair remaining per line

    def view(self, layer: str) -> dict:
        """Informational projection y_l / y_m / y_s / y_RT."""
        out = {"growth": self.growth}
        if layer in ("m", "s", "rt"):
            out.update(month=self.month, ages=self.ages)
        if layer in ("s", "rt"):
            out.update(load_forecast=self.load_forecast, wind_forecast=self.wind_forecast)
        if layer == "rt":
            out.update(load=self.load, wind=self.wind, topology=self.topology)
        return out


def truncated_normal(u: np.ndarray, mean: np.ndarray, sigma: np.ndarray, upper=None) -> np.ndarray:
    """Inverse-CDF draw from N(mean, sigma^2) truncated to [0, upper]."""
    mean = np.asarray(mean, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    upper = np.full_like(mean, np.inf) if upper is None else np.asarray(upper, dtype=float)
    out = mean.copy()
    live = sigma > 0
    if np.any(live):
        m, s, hi = mean[live], sigma[live], upper[live]
        fa = ndtr((0.0 - m) / s)
        fb = ndtr((hi - m) / s)
        q = fa + np.asarray(u)[live] * (fb - fa)
        q = np.clip(q, 1e-300, 1 - 1e-16)
        out[live] = np.clip(m + s * ndtri(q), 0.0, hi)
    return out


def maintenance_window(schedule, line: int, month: int, days: int) -> tuple[int, int] | None:
    """Absolute [start, end) hours of a line's maintenance in ``month``."""
    if schedule is None or month >= schedule.n_months or not schedule.matrix[line, month]:
        return None
    start = month * HOURS_PER_MONTH
    return start, start + days * HOURS_PER_DAY


def ages_at(case: GridCase, schedule, hour: int, days: int = 7, activation=None) -> np.ndarray:
    """Effective ages at an absolute hour.

    Ages grow one per hour and drop to zero when a maintenance outage ends;
    repairs after failures restore service without resetting age.
    Lines that only enter service later count age from activation.
    """
    ages = np.empty(case.n_lines)
    for k, ln in enumerate(case.lines):
        base = ln.life.initial_age if ln.life else 0.0
        age = base + hour
        if activation is not None and k in activation:
            age = max(0.0, hour - activation[k] * HOURS_PER_MONTH)
        if schedule is not None:
            for m in range(min(schedule.n_months, hour // HOURS_PER_MONTH + 1)):
                win = maintenance_window(schedule, k, m, days)
                if win is not None and win[1] <= hour:
                    age = hour - win[1]
        ages[k] = age
    return ages


def in_maintenance(case: GridCase, schedule, hour: int, days: int = 7) -> np.ndarray:
    out = np.zeros(case.n_lines, dtype=bool)
    if schedule is None:
        return out
    m = hour // HOURS_PER_MONTH
    for k in range(case.n_lines):
        win = maintenance_window(schedule, k, m, days)
        if win is not None and win[0] <= hour < win[1]:
            out[k] = True
    return out


def failure_draw(case: GridCase, ages, available, u: np.ndarray, tilt: float = 1.0,
                 dt_hours: float = 1.0):
    """Sample line failures over ``dt_hours`` from uniforms ``u`` (one per line).

    Returns (failed mask, log nominal prob, log sampling prob).  Lines not in
    service, or without a life model, never fail and contribute nothing.
    """
    failed = np.zeros(case.n_lines, dtype=bool)
    log_p = log_g = 0.0
    for k, ln in enumerate(case.lines):
        if not available[k] or ln.life is None:
            continue
        p = interval_probability(ln.life, ages[k], dt_hours)
        g = min(1.0, p * tilt)
        if u[k] < g:
            failed[k] = True
            log_p += math.log(p) if p > 0 else -np.inf
            log_g += math.log(g)
        else:
            log_p += math.log1p(-p) if p < 1 else -np.inf
            log_g += math.log1p(-g) if g < 1 else -np.inf
    return failed, log_p, log_g


@dataclass
class Transition:
    state: WorldState
    log_p: float
    log_g: float
    failed: np.ndarray


def transition(case: GridCase, state: WorldState, schedule, rng,
               hour: int, dt_hours: int = 1, spec: SamplerSpec | None = None,
               activation=None) -> Transition:
    """Advance one real-time tick from absolute ``hour``.

    Ages advance (or reset at completed maintenance), failures are drawn for
    every in-service line with H adjusted to ``dt_hours``, repairs tick down,
    maintained lines are forced out, and load/wind are redrawn around the
    day-ahead forecast as truncated normals.  ``rng`` is a Generator or a
    ``TickStreams``.
    """
    spec = spec or SamplerSpec()
    nxt_hour = hour + dt_hours
    ages = ages_at(case, schedule, nxt_hour, spec.maintenance_days, activation)
    outage = (state.outage_left.copy() if state.outage_left is not None
              else np.zeros(case.n_lines, dtype=int))
    outage = np.maximum(outage - dt_hours, 0)
    maint = in_maintenance(case, schedule, nxt_hour, spec.maintenance_days)
    inactive = _inactive(case, nxt_hour, activation)
    available = (~maint) & (outage == 0) & (~inactive)
    if isinstance(rng, TickStreams):
        u_fail, weather = rng.line_uniforms(), rng.weather
    else:
        u_fail, weather = rng.random(case.n_lines), rng
    failed, log_p, log_g = failure_draw(case, ages, available, u_fail, spec.fail_tilt, dt_hours)
    outage[failed] = spec.repair_hours
    up = tuple(bool(v) for v in (available & ~failed))
    slot = nxt_hour % HOURS_PER_DAY
    load, wind = realize(case, state, slot, weather)
    new = replace(state, ages=ages, load=load, wind=wind, topology=Topology(up), outage_left=outage)
    return Transition(new, log_p, log_g, failed)


def _inactive(case: GridCase, hour: int, activation) -> np.ndarray:
    out = np.zeros(case.n_lines, dtype=bool)
    if activation:
        for k, month in activation.items():
            out[k] = hour < month * HOURS_PER_MONTH
    return out


def realize(case: GridCase, state: WorldState, slot: int, rng: np.random.Generator):
    """Hourly load and wind around the forecast (fixed draw count per call)."""
    u = rng.random(case.n_buses + len(case.wind_units))
    lf = state.load_forecast[:, slot]
    load = truncated_normal(u[:case.n_buses], lf, case.load_sigma_fraction * lf)
    if case.wind_units:
        wf = state.wind_forecast[:, slot]
        sig = np.array([w.sigma_fraction for w in case.wind_units]) * wf
        cap = np.array([w.capacity for w in case.wind_units])
        wind = truncated_normal(u[case.n_buses:], wf, sig, cap)
    else:
        wind = np.zeros(0)
    return load, wind


def draw_forecast(case: GridCase, growth: float, rng: np.random.Generator):
    """Day-ahead forecasts: profile means scaled by a truncated-normal day factor."""
    u = rng.random(case.n_buses + len(case.wind_units))
    base_load = np.stack([case.load_vector(h, growth) for h in range(HOURS_PER_DAY)], axis=1)
    lf = truncated_normal(u[:case.n_buses], np.ones(case.n_buses),
                          np.full(case.n_buses, case.load_sigma_fraction))
    load = base_load * lf[:, None]
    if case.wind_units:
        base_wind = np.stack([case.wind_vector(h) for h in range(HOURS_PER_DAY)], axis=1)
        cap = np.array([w.capacity for w in case.wind_units])
        sig = np.array([w.sigma_fraction for w in case.wind_units])
        wfac = truncated_normal(u[case.n_buses:], np.ones(len(cap)), sig)
        wind = np.minimum(base_wind * wfac[:, None], cap[:, None])
    else:
        wind = np.zeros((0, HOURS_PER_DAY))
    return load, wind


def initial_state(case: GridCase) -> WorldState:
    ages = np.array([ln.life.initial_age if ln.life else 0.0 for ln in case.lines])
    return WorldState(1.0, 0, ages, topology=Topology.all_up(case.n_lines),
                      outage_left=np.zeros(case.n_lines, dtype=int))


def next_growth(growth: float, spec: SamplerSpec, seed: int, scenario: int, month: int,
                stochastic: bool) -> float:
    if not stochastic or spec.growth_sigma == 0:
        return growth * math.exp(spec.growth_per_month)
    z = stream(seed, scenario, month, _LONG).standard_normal()
    return growth * math.exp(spec.growth_per_month + spec.growth_sigma * z)


@dataclass
class Scenario:
    """Monthly snapshots with per-state cost, severity and achievability."""

    states: list
    log_weight: float = 0.0
    log_prob: float = 0.0  # log pi_z along the carried chain
    costs: list = field(default_factory=list)
    severities: list = field(default_factory=list)  # MW, worst simulated hour
    achievable: list = field(default_factory=list)  # delta_theta per state
    log_p_steps: list = field(default_factory=list)  # per-state log nominal probability
    log_g_steps: list = field(default_factory=list)
    schedule: object = None

    @property
    def total_cost(self) -> float:
        return float(sum(self.costs))

    @property
    def weight(self) -> float:
        return math.exp(self.log_weight)


__all__ = [
    "DAYS_PER_MONTH", "HOURS_PER_DAY", "HOURS_PER_MONTH", "SamplerSpec", "Scenario", "Scheme",
    "TickStreams", "Transition", "WeibullLife", "WorldState", "ages_at", "draw_forecast", "failure_draw",
    "failure_probability", "in_maintenance", "initial_state", "realize", "stream", "transition",
    "truncated_normal",
]
