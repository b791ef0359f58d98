"""Inner short-term / real-time proxy policy used inside mid-term evaluation.

The policy commits units for a day (block-encoded MILP with optional
preventive N-1 blocks), escalates when the day-ahead problem is infeasible,
and redispatches hour by hour against the realized load, wind and topology.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ..grid import TOL_MW, FlowSolution, GridCase, Topology, add_network, dc_opf, extract_solution
from ..rt.contingency import BASE_EVENT, ContingencyModel
from ..rt.rmac import RtParams
from ..rt.subset import select_subset_pessimistic
from ..solver import EQ, GE, LE, Infeasible, ProgramBuilder, solve_milp

HOURS = 24


class PolicyMode(str, enum.Enum):
    NMINUS1 = "nminus1"
    PROBABILISTIC = "probabilistic"


@dataclass
class InnerPolicy:
    mode: PolicyMode = PolicyMode.NMINUS1
    delta_e: float = 0.0  # probabilistic mode only
    epsilon: float = 0.0
    cr_max: float = 1e6
    escalation: bool = True
    fine: float | None = None  # None: twice a full day of lost peak load at VOLL
    block_hours: int = 4
    backend: str = "auto"

    def __post_init__(self):
        self.mode = PolicyMode(self.mode)
        if self.fine is not None and self.fine < 0:
            raise ValueError("fine must be >= 0")
        if self.block_hours < 1 or HOURS % self.block_hours:
            raise ValueError("block_hours must divide 24")

    def fine_for(self, case: GridCase) -> float:
        if self.fine is not None:
            return self.fine
        return 2.0 * case.total_peak_load() * HOURS * case.voll

    @classmethod
    def parse(cls, text: str) -> "InnerPolicy":
        """``nminus1`` or ``prob:<dE>,<eps>``."""
        text = text.strip()
        if text == "nminus1":
            return cls()
        if text.startswith("prob:"):
            de, eps = (float(v) for v in text[5:].split(","))
            return cls(PolicyMode.PROBABILISTIC, delta_e=de, epsilon=eps)
        raise ValueError(f"unknown policy {text!r}")

    def key(self) -> tuple:
        return (self.mode.value, self.delta_e, self.epsilon, self.cr_max, self.escalation,
                self.fine, self.block_hours)


@dataclass
class Commitment:
    """Day plan: on/off and dispatch per generator and planned hour."""

    hours: list  # profile slots covered
    on: np.ndarray  # bool, gen x hour
    dispatch: np.ndarray  # MW, gen x hour
    cost: float
    startup_cost: float
    shed: np.ndarray  # MW per hour, base network
    solutions: list = field(default_factory=list)

    def at(self, slot: int):
        h = self.hours.index(slot)
        return self.on[:, h], self.dispatch[:, h]


def _outages(case: GridCase, topology: Topology, policy: InnerPolicy, ages) -> list[tuple]:
    """Line outages the day plan must survive without shedding."""
    live = [k for k in range(case.n_lines) if topology.line_status[k]]
    if policy.mode is PolicyMode.NMINUS1:
        return [(k,) for k in live]
    if ages is None:
        model = ContingencyModel.nminus1(case)
    else:
        model = ContingencyModel.from_ages(case, ages)
    params = RtParams(policy.delta_e, policy.epsilon, policy.cr_max)
    chosen = select_subset_pessimistic(model, params)
    return [model[c].outage for c in chosen
            if c != BASE_EVENT and all(topology.line_status[k] for k in model[c].outage)]


def unit_commitment(case: GridCase, load_fc, wind_fc, topology: Topology, policy: InnerPolicy,
                    security: bool = True, allow_shed: bool = False, initial_on=None,
                    hours=None, ages=None) -> Commitment:
    """Day-ahead commitment MILP.

    ``load_fc`` is bus x 24 and ``wind_fc`` unit x 24 (profile slots).
    Commitment is constant within blocks of ``policy.block_hours``, startup
    costs are charged per switch-on, and minimum up/down times are rounded up
    to whole blocks.  With ``security`` the dispatch must also be feasible,
    without shedding, after each outage chosen by the policy.
    Raises ``Infeasible`` when no plan exists.
    """
    hours = list(range(HOURS)) if hours is None else list(hours)
    n_g = len(case.generators)
    bh = policy.block_hours
    blocks = sorted({h // bh for h in hours})
    bpos = {b: i for i, b in enumerate(blocks)}
    init = np.zeros(n_g, dtype=bool) if initial_on is None else np.asarray(initial_on, dtype=bool)
    outages = _outages(case, topology, policy, ages) if security else []

    bld = ProgramBuilder()
    a = [[bld.var(f"a_{g.id}_{b}", 0, 1, binary=True) for b in blocks] for g in case.generators]
    su = [[bld.var(f"su_{g.id}_{b}", 0, 1, g.startup_cost) for b in blocks] for g in case.generators]
    sd = [[bld.var(f"sd_{g.id}_{b}", 0, 1) for b in blocks] for g in case.generators]
    for gi, g in enumerate(case.generators):
        up_b = max(1, math.ceil(g.min_up / bh))
        dn_b = max(1, math.ceil(g.min_down / bh))
        for i in range(len(blocks)):
            prev = {a[gi][i - 1]: -1.0} if i else {}
            const = 0.0 if i else float(init[gi])
            # su >= a_b - a_{b-1};  sd >= a_{b-1} - a_b
            bld.row({su[gi][i]: 1.0, a[gi][i]: -1.0, **{k: -v for k, v in prev.items()}}, GE,
                    -const, f"su_{g.id}_{i}")
            bld.row({sd[gi][i]: 1.0, a[gi][i]: 1.0, **prev}, GE, const, f"sd_{g.id}_{i}")
            win_up = {su[gi][k]: 1.0 for k in range(max(0, i - up_b + 1), i + 1)}
            bld.row({**win_up, a[gi][i]: -1.0}, LE, 0.0, f"minup_{g.id}_{i}")
            win_dn = {sd[gi][k]: 1.0 for k in range(max(0, i - dn_b + 1), i + 1)}
            bld.row({**win_dn, a[gi][i]: 1.0}, LE, 1.0, f"mindn_{g.id}_{i}")

    pv = []
    nets = []
    for h in hours:
        col = []
        for gi, g in enumerate(case.generators):
            p = bld.var(f"P_{g.id}_{h}", 0.0, g.pmax, g.cost_linear)
            ab = a[gi][bpos[h // bh]]
            bld.row({p: 1.0, ab: -g.pmax}, LE, 0.0, f"pmax_{g.id}_{h}")
            if g.pmin > 0:
                bld.row({p: 1.0, ab: -g.pmin}, GE, 0.0, f"pmin_{g.id}_{h}")
            col.append(p)
        pv.append(col)
        gen_expr = [{v: 1.0} for v in col]
        load, wind = load_fc[:, h], wind_fc[:, h]
        nets.append(add_network(bld, case, topology, load, wind, gen_expr, f"h{h}_",
                                allow_shed=allow_shed))
        for k, out in enumerate(outages):
            add_network(bld, case, topology.without(out), load, wind, gen_expr, f"h{h}c{k}_",
                        allow_shed=False, curtail_cost=0.0)

    res = solve_milp(bld.build_mip(), backend=policy.backend).require("unit commitment")
    x = res.x
    on = np.zeros((n_g, len(hours)), dtype=bool)
    disp = np.zeros((n_g, len(hours)))
    sols = []
    for hi, h in enumerate(hours):
        for gi in range(n_g):
            on[gi, hi] = x[a[gi][bpos[h // bh]]] > 0.5
            disp[gi, hi] = x[pv[hi][gi]]
        sols.append(extract_solution(case, topology, nets[hi], x, disp[:, hi], load_fc[:, h],
                                     wind_fc[:, h], float("nan")))
    startup = float(sum(case.generators[gi].startup_cost * x[su[gi][i]]
                        for gi in range(n_g) for i in range(len(blocks))))
    shed = np.array([s.total_shed for s in sols])
    return Commitment(hours, on, disp, float(res.objective), startup, shed, sols)


@dataclass
class Escalation:
    level: int  # 0..3
    plan: Commitment | None
    cost: float  # plan objective, or the fine at level 3


def escalate(case: GridCase, load_fc, wind_fc, topology: Topology, policy: InnerPolicy,
             initial_on=None, hours=None, ages=None) -> Escalation:
    """Try the day plan under progressively weaker requirements.

    0: security blocks, no shedding; 1: no security blocks, no shedding;
    2: shedding allowed; 3: nothing works, pay the fine.  A level is only
    attempted after the previous one proved infeasible.
    """
    ladder = [(True, False), (False, False), (False, True)]
    if not policy.escalation:
        ladder = ladder[:1]
    for level, (sec, shed) in enumerate(ladder):
        try:
            plan = unit_commitment(case, load_fc, wind_fc, topology, policy, sec, shed,
                                   initial_on, hours, ages)
            return Escalation(level, plan, plan.cost)
        except Infeasible:
            continue
    return Escalation(3, None, policy.fine_for(case))


@dataclass
class RtStep:
    solution: FlowSolution | None
    cost: float  # energy + redispatch + shed + curtailment (or the fine)
    energy: float
    redispatch: float
    deviation: bool  # shed under the plan: leave the day-ahead schedule
    failed: bool = False  # no dispatch at all; the fine was charged


def energy_cost(case: GridCase, dispatch) -> float:
    return float(sum(g.cost_linear * p for g, p in zip(case.generators, dispatch)))


def real_time_step(case: GridCase, load, wind, topology: Topology, on, planned,
                   policy: InnerPolicy) -> RtStep:
    """Single-hour redispatch with commitment fixed.

    The redispatch penalty is ``|f_P(P*) - f_P(P_plan)|`` with f_P the
    linear energy cost.  If committed minimum outputs cannot be absorbed the
    units are allowed down to zero; if even that fails the fine is charged.
    """
    try:
        sol = dc_opf(case, topology, load, wind, on, allow_shed=True, backend=policy.backend)
    except Infeasible:
        try:
            sol = dc_opf(case, topology, load, wind, on, allow_shed=True,
                         gen_lower=np.zeros(len(case.generators)), backend=policy.backend)
        except Infeasible:
            fine = policy.fine_for(case) / HOURS
            return RtStep(None, fine, 0.0, 0.0, True, failed=True)
    e = energy_cost(case, sol.generation)
    redispatch = abs(e - energy_cost(case, planned))
    return RtStep(sol, sol.objective + redispatch, e, redispatch, sol.total_shed > TOL_MW)


__all__ = ["Commitment", "Escalation", "InnerPolicy", "PolicyMode", "RtStep", "energy_cost",
           "escalate", "real_time_step", "unit_commitment"]
