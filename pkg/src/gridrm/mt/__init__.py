"""Mid-term maintenance planning: world model, inner policy, estimators and CE search."""

from .ce import CeParams, CeResult, CeState, SamplingExhausted, cross_entropy_optimize, schedule_objective
from .estimators import (
    ChanceEstimate, EmptySample, SeverityAggregator, SeverityKind, estimate_achievability,
    estimate_chance_constraint, estimate_expected_cost, wilson_interval,
)
from .policy import (
    Commitment, Escalation, InnerPolicy, PolicyMode, RtStep, escalate, real_time_step,
    unit_commitment,
)
from .sampling import EvalCache, sample_scenario, simulate_day
from .schedule import (
    ChanceSpec, InfeasibleSchedule, MaintenanceSchedule, ScheduleEvaluation, age_threshold,
    baseline, cyclic, evaluate_schedule, oldest_first, sample_many,
)
from .state import (
    SamplerSpec, Scenario, Scheme, WorldState, ages_at, failure_draw, failure_probability,
    initial_state, stream, transition, truncated_normal,
)
