"""Scenario sampling under a maintenance schedule and the inner policy.

Every random draw comes from a counter-keyed stream
``(seed, scenario, month, short index, day, [rt index], purpose)`` so that
schedules evaluated with the same seed see common random numbers, and the
degenerate window configuration replays the complete chain exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..grid import TOL_MW, GridCase, Topology
from .policy import HOURS, InnerPolicy, escalate, real_time_step
from .state import (
    _FORECAST, _START, DAYS_PER_MONTH, HOURS_PER_DAY, HOURS_PER_MONTH, SamplerSpec,
    Scenario, Scheme, TickStreams, WorldState, ages_at, draw_forecast, in_maintenance, initial_state,
    failure_draw, next_growth, stream, transition,
)


class EvalCache:
    """Memo for day plans and hourly redispatch, keyed on exact inputs."""

    def __init__(self, max_entries: int = 200_000):
        self.max_entries = max_entries
        self._data: dict = {}
        self.hits = self.misses = 0

    def get(self, key, compute):
        try:
            val = self._data[key]
            self.hits += 1
            return val
        except KeyError:
            self.misses += 1
        val = compute()
        if len(self._data) >= self.max_entries:
            self._data.clear()
        self._data[key] = val
        return val


def _akey(arr) -> bytes:
    return np.ascontiguousarray(arr, dtype=float).tobytes()


@dataclass
class DayResult:
    cost: float
    worst_shed: float
    achievable: bool
    log_p: float
    log_g: float
    end_state: WorldState
    end_on: np.ndarray
    level: int
    fixed: float = 0.0  # startup costs and fines, not per hour


def _day_topology(case: GridCase, state: WorldState, schedule, hour: int, spec: SamplerSpec,
                  activation) -> Topology:
    maint = in_maintenance(case, schedule, hour, spec.maintenance_days)
    out = state.outage_left if state.outage_left is not None else np.zeros(case.n_lines)
    status = ~maint & (out == 0)
    if activation:
        for k, month in activation.items():
            if hour < month * HOURS_PER_MONTH:
                status[k] = False
    return Topology(tuple(bool(v) for v in status))


def simulate_day(case: GridCase, state: WorldState, schedule, policy: InnerPolicy,
                 spec: SamplerSpec, day_hour: int, rt_streams, rt_hours, initial_on=None,
                 activation=None, cache: EvalCache | None = None) -> list[DayResult]:
    """One day: commit against the forecast, then run each RT sub-trajectory.

    ``rt_streams[r]`` drives sub-trajectory r, which covers profile slots
    ``rt_hours[r]`` (a contiguous range).  Costs of each sub-trajectory are
    the startups of the day plan plus the hourly costs of its hours.
    """
    cache = cache or EvalCache()
    topo = _day_topology(case, state, schedule, day_hour, spec, activation)
    init = (np.zeros(len(case.generators), dtype=bool) if initial_on is None
            else np.asarray(initial_on, dtype=bool))
    ages = ages_at(case, schedule, day_hour, spec.maintenance_days, activation)
    key = ("uc", _akey(state.load_forecast), _akey(state.wind_forecast), topo.line_status,
           init.tobytes(), policy.key(), _akey(ages) if policy.mode.value != "nminus1" else b"")
    esc = cache.get(key, lambda: escalate(case, state.load_forecast, state.wind_forecast, topo,
                                          policy, init, ages=ages))
    out = []
    for rng, slots in zip(rt_streams, rt_hours):
        out.append(_run_rt(case, state, schedule, policy, spec, day_hour, rng, slots, esc,
                           init, activation, cache))
    return out


def _run_rt(case, state, schedule, policy, spec, day_hour, rng, slots, esc, init, activation,
            cache) -> DayResult:
    fine = policy.fine_for(case)
    if esc.level == 3:
        # no plan at all: the fine covers the day; the state still evolves
        st = state
        lp = lg = 0.0
        for s in slots:
            tr = transition(case, st, schedule, rng, day_hour + s - 1, 1, spec, activation)
            st, lp, lg = tr.state, lp + tr.log_p, lg + tr.log_g
        return DayResult(fine, float(case.total_peak_load()), False, lp, lg, st,
                         np.ones(len(case.generators), dtype=bool), 3, fine)
    plan = esc.plan
    cost = fixed = plan.startup_cost
    worst = 0.0
    achievable = esc.level < 2
    recommitted = False
    st = state
    lp = lg = 0.0
    on = init
    for s in slots:
        tr = transition(case, st, schedule, rng, day_hour + s - 1, 1, spec, activation)
        st, lp, lg = tr.state, lp + tr.log_p, lg + tr.log_g
        on, planned = plan.at(s)
        step = _rt(case, st, on, planned, policy, cache)
        if step.deviation and not recommitted and s < HOURS_PER_DAY - 1:
            recommitted = True
            rest = list(range(s, HOURS_PER_DAY))
            prev_on = plan.on[:, max(plan.hours.index(s) - 1, 0)]
            key = ("re", _akey(st.load_forecast), _akey(st.wind_forecast),
                   st.topology.line_status, prev_on.tobytes(), s, policy.key())
            esc2 = cache.get(key, lambda: escalate(case, st.load_forecast, st.wind_forecast,
                                                   st.topology, policy, prev_on, rest))
            if esc2.plan is not None:
                plan = _merge(plan, esc2.plan)
                cost += esc2.plan.startup_cost
                fixed += esc2.plan.startup_cost
                on, planned = plan.at(s)
                step = _rt(case, st, on, planned, policy, cache)
        if step.failed:
            achievable = False
        cost += step.cost
        if step.solution is not None:
            worst = max(worst, step.solution.total_shed)
        else:
            worst = max(worst, float(np.sum(st.load)))
    return DayResult(cost, worst, achievable, lp, lg, st, np.asarray(on, dtype=bool), esc.level,
                     fixed)


def _rt(case, st, on, planned, policy, cache):
    key = ("rt", _akey(st.load), _akey(st.wind), st.topology.line_status, on.tobytes(),
           _akey(planned), policy.backend)
    return cache.get(key, lambda: real_time_step(case, st.load, st.wind, st.topology, on,
                                                 planned, policy))


def _merge(plan, new):
    """Replace the remaining hours of ``plan`` with ``new``."""
    on, disp = plan.on.copy(), plan.dispatch.copy()
    for j, h in enumerate(new.hours):
        i = plan.hours.index(h)
        on[:, i], disp[:, i] = new.on[:, j], new.dispatch[:, j]
    return replace(plan, on=on, dispatch=disp)


# -- schemes ------------------------------------------------------------------

def _month_state(case, prev: WorldState, growth: float, month: int, schedule, spec,
                 activation) -> WorldState:
    hour = month * HOURS_PER_MONTH
    ages = ages_at(case, schedule, hour, spec.maintenance_days, activation)
    return WorldState(growth, month, ages, topology=prev.topology,
                      outage_left=None if prev.outage_left is None else prev.outage_left.copy())


def repair_state(case: GridCase, schedule, hour: int, spec: SamplerSpec, rng, activation=None):
    """Draw which lines are under repair at ``hour`` given their ages.

    A line is in repair if it failed during the preceding repair period,
    which has probability H adjusted to ``repair_hours``; the remaining
    repair time is uniform.  Returns (hours left per line, log p, log g).
    """
    ages = ages_at(case, schedule, hour, spec.maintenance_days, activation)
    avail = ~in_maintenance(case, schedule, hour, spec.maintenance_days)
    if activation:
        for k, month in activation.items():
            avail[k] &= hour >= month * HOURS_PER_MONTH
    u = np.empty(case.n_lines)
    left = np.empty(case.n_lines, dtype=int)
    for k in range(case.n_lines):  # interleaved per line so appended lines shift nothing
        u[k] = rng.random()
        left[k] = rng.integers(1, spec.repair_hours + 1)
    back = np.maximum(ages - spec.repair_hours, 0.0)  # age when the period began
    failed, lp, lg = failure_draw(case, back, avail, u, spec.fail_tilt, spec.repair_hours)
    return np.where(failed, left, 0), lp, lg


def _strata(spec: SamplerSpec) -> list[tuple[int, int, float]]:
    """Day strata (lo, hi, share) for quasi-static sampling.

    With two or more draws per month the maintenance window and the rest of
    the month are sampled separately (draw s goes to stratum s mod 2) and
    recombined by length, which removes the variance of hitting or missing
    the outage week.  A single draw is uniform over the month.
    """
    k = spec.maintenance_days
    if spec.n_short < 2 or not 0 < k < DAYS_PER_MONTH:
        return [(0, DAYS_PER_MONTH, 1.0)]
    return [(0, k, k / DAYS_PER_MONTH), (k, DAYS_PER_MONTH, 1 - k / DAYS_PER_MONTH)]


def _rt_slots(spec: SamplerSpec, seed, z, m, s, d, r) -> range:
    if spec.window_hours >= HOURS_PER_DAY:
        return range(HOURS_PER_DAY)
    start = int(stream(seed, z, m, s, d, r, _START).integers(0, HOURS_PER_DAY - spec.window_hours + 1))
    return range(start, start + spec.window_hours)


def _chain(case, state, schedule, policy, spec, z, m, s, days, on, activation, cache):
    """Run consecutive days of one short trajectory; returns per-day results of
    every RT replicate and the state/commitment carried by replicate 0."""
    seed = spec.seed
    total = 0.0
    worst = 0.0
    ok = True
    lp = lg = 0.0
    scale = HOURS_PER_DAY / spec.window_hours
    for d in days:
        day_hour = m * HOURS_PER_MONTH + d * HOURS_PER_DAY
        lf, wf = draw_forecast(case, state.growth, stream(seed, z, m, s, d, _FORECAST))
        state = replace(state, load_forecast=lf, wind_forecast=wf)
        n_rt = spec.n_rt
        rngs = [TickStreams.keyed(seed, (z, m, s, d, r), case.n_lines) for r in range(n_rt)]
        slots = [_rt_slots(spec, seed, z, m, s, d, r) for r in range(n_rt)]
        res = simulate_day(case, state, schedule, policy, spec, day_hour, rngs, slots, on,
                           activation, cache)
        for rr in res:
            worst = max(worst, rr.worst_shed)
            ok = ok and rr.achievable
        # startups are whole-day costs; only the hourly part is scaled up
        total += float(np.mean([rr.fixed + (rr.cost - rr.fixed) * scale for rr in res]))
        first = res[0]
        lp += first.log_p
        lg += first.log_g
        if spec.window_hours >= HOURS_PER_DAY:
            state, on = first.end_state, first.end_on
        else:
            # partial-day replicates cannot carry the chain; advance the
            # deterministic part only
            state = replace(state, outage_left=first.end_state.outage_left,
                            topology=first.end_state.topology)
    return total, worst, ok, lp, lg, state, on


def sample_scenario(case: GridCase, schedule, policy: InnerPolicy, spec: SamplerSpec,
                    scenario: int = 0, activation=None, cache: EvalCache | None = None) -> Scenario:
    """Sample one scenario Z over ``spec.horizon_months`` under ``schedule``.

    Complete and QuasiStatic chain every day of every month (QuasiStatic
    freezes load growth on its trend).  QuasiStaticSampling draws
    ``n_short`` independent days per month.  Window runs ``n_short``
    trajectories of ``window_days`` days from a sampled start day, each day
    with ``n_rt`` real-time replicates; the chain continues from trajectory 0.
    Monthly costs are scaled to a full month.
    """
    cache = cache or EvalCache()
    seed = spec.seed
    state = initial_state(case)
    state.ages = ages_at(case, schedule, 0, spec.maintenance_days, activation)
    states = [state]
    sc = Scenario(states, schedule=schedule)
    on = None
    log_p = log_g = 0.0
    stochastic_growth = spec.scheme in (Scheme.COMPLETE, Scheme.WINDOW)
    growth = 1.0
    for m in range(spec.horizon_months):
        if m > 0:
            growth = next_growth(growth, spec, seed, scenario, m, stochastic_growth)
        mstate = _month_state(case, state, growth, m, schedule, spec, activation)
        if spec.scheme in (Scheme.COMPLETE, Scheme.QUASI_STATIC):
            cost, worst, ok, lp, lg, state, on = _chain(
                case, mstate, schedule, policy, _full_day(spec), scenario, m, 0,
                range(DAYS_PER_MONTH), on, activation, cache)
        elif spec.scheme is Scheme.QUASI_STATIC_SAMPLING:
            costs, worst, ok, lp, lg = [], 0.0, True, 0.0, 0.0
            strata = _strata(spec)
            for s in range(spec.n_short):
                rng = stream(seed, scenario, m, s, _START)
                lo, hi, _ = strata[s % len(strata)]
                d = int(rng.integers(lo, hi))
                hour = m * HOURS_PER_MONTH + d * HOURS_PER_DAY
                outage, rp, rg = repair_state(case, schedule, hour, spec, rng, activation)
                fresh = replace(mstate, outage_left=outage)
                c, w, k, p_, g_, _, _ = _chain(case, fresh, schedule, policy, spec, scenario, m,
                                               s, [d], None, activation, cache)
                costs.append(c)
                worst, ok = max(worst, w), ok and k
                if s == 0:
                    lp, lg = p_ + rp, g_ + rg
            cost = sum(share * float(np.mean(costs[j::len(strata)]))
                       for j, (_, _, share) in enumerate(strata)) * DAYS_PER_MONTH
            state = replace(mstate, outage_left=np.zeros(case.n_lines, dtype=int))
        else:
            costs, worst, ok = [], 0.0, True
            for s in range(spec.n_short):
                if spec.window_days >= DAYS_PER_MONTH:
                    d0 = 0
                else:
                    d0 = int(stream(seed, scenario, m, s, _START).integers(
                        0, DAYS_PER_MONTH - spec.window_days + 1))
                c, w, k, p_, g_, end, end_on = _chain(
                    case, mstate, schedule, policy, spec, scenario, m, s,
                    range(d0, d0 + spec.window_days), on, activation, cache)
                costs.append(c * (DAYS_PER_MONTH / spec.window_days))
                worst, ok = max(worst, w), ok and k
                if s == 0:
                    lp, lg, carry, carry_on = p_, g_, end, end_on
            cost = float(np.mean(costs))
            state, on = carry, carry_on
        log_p += lp
        log_g += lg
        sc.costs.append(cost)
        sc.severities.append(worst)
        sc.achievable.append(1 if ok else 0)
        sc.log_p_steps.append(lp)
        sc.log_g_steps.append(lg)
        snap = replace(state, month=m + 1, growth=growth,
                       ages=ages_at(case, schedule, (m + 1) * HOURS_PER_MONTH,
                                    spec.maintenance_days, activation))
        states.append(snap)
        state = snap
    sc.log_prob = log_p
    sc.log_weight = log_p - log_g
    return sc


def _full_day(spec: SamplerSpec) -> SamplerSpec:
    return replace(spec, window_hours=HOURS_PER_DAY, n_rt=1)


__all__ = ["DayResult", "EvalCache", "sample_scenario", "simulate_day"]
