"""Short-term operational planning over scenario trees.

Each tree node is an hour-ahead realization (load scale, wind scale,
failure-rate multiplier).  A node is scored by the big-M RT problem; a
planning decision is scored by walking all root-to-leaf paths, discarding
the least likely scenarios while their cost mass fits the ΔE_OP budget.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import GridCase, Topology
from .io import initial_ages
from .life import interval_probability
from .rt import (BASE_EVENT, ContingencyModel, RtDecision, RtInputs, RtParams, criticality,
                 select_subset_pessimistic)
from .rt.rmac import _build
from .solver import LE, solve_milp


class NoCandidates(ValueError):
    pass


@dataclass(frozen=True)
class Xi:
    load: float = 1.0
    wind: float = 1.0
    fail: float = 1.0


@dataclass
class TreeNode:
    id: int
    stage: int
    parent: int | None
    prob: float  # conditional on the parent
    xi: Xi = Xi()


@dataclass
class ScenarioTree:
    nodes: list

    def __post_init__(self):
        self._children: dict = {}
        for n in self.nodes:
            if n.parent is not None:
                self._children.setdefault(n.parent, []).append(n.id)
        self._by_id = {n.id: n for n in self.nodes}
        self.validate()

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    @property
    def horizon(self) -> int:
        return max(n.stage for n in self.nodes)

    def node(self, node_id: int) -> TreeNode:
        return self._by_id[node_id]

    def children(self, node_id: int) -> list[int]:
        return self._children.get(node_id, [])

    def leaves(self) -> list[int]:
        return [n.id for n in self.nodes if not self.children(n.id)]

    def path(self, leaf: int) -> list[int]:
        out = []
        cur = leaf
        while cur is not None:
            out.append(cur)
            cur = self._by_id[cur].parent
        return out[::-1]

    def path_probability(self, leaf: int) -> float:
        return float(np.prod([self._by_id[i].prob for i in self.path(leaf)]))

    def validate(self) -> None:
        if not self.nodes or self.nodes[0].parent is not None or self.nodes[0].stage != 0:
            raise ValueError("first node must be the stage-0 root")
        T = self.horizon
        for n in self.nodes:
            kids = self.children(n.id)
            if kids:
                total = sum(self._by_id[k].prob for k in kids)
                if abs(total - 1.0) > 1e-9:
                    raise ValueError(f"children of node {n.id} have probabilities summing to {total}")
                if any(self._by_id[k].stage != n.stage + 1 for k in kids):
                    raise ValueError(f"children of node {n.id} must sit one stage later")
            elif n.stage != T:
                raise ValueError(f"leaf {n.id} ends at stage {n.stage}, horizon is {T}")

    def to_json(self) -> str:
        return json.dumps({"nodes": [
            {"id": n.id, "stage": n.stage, "parent": n.parent, "prob": n.prob,
             "xi": {"load": n.xi.load, "wind": n.xi.wind, "fail": n.xi.fail}} for n in self.nodes]},
            indent=1)

    @classmethod
    def from_json(cls, text_or_path) -> "ScenarioTree":
        p = Path(text_or_path) if not str(text_or_path).lstrip().startswith("{") else None
        data = json.loads(p.read_text() if p else text_or_path)
        nodes = []
        for k, d in enumerate(data["nodes"]):
            xi = d.get("xi", {})
            nodes.append(TreeNode(int(d.get("id", k)), int(d["stage"]),
                                  None if d.get("parent") is None else int(d["parent"]),
                                  float(d.get("prob", 1.0)),
                                  Xi(float(xi.get("load", 1.0)), float(xi.get("wind", 1.0)),
                                     float(xi.get("fail", 1.0)))))
        return cls(nodes)


@dataclass
class XiDistribution:
    load_sigma: float = 0.05
    wind_sigma: float = 0.25
    fail_log_sigma: float = 0.5


def build_tree(branching, seed: int = 0, dist: XiDistribution | None = None,
               weights=None) -> ScenarioTree:
    """Tree with ``branching[t]`` children per stage-t node.

    ``weights[t]`` optionally fixes the sibling probabilities at stage t+1;
    siblings are equiprobable otherwise.
    """
    branching = [int(b) for b in branching]
    if not branching or any(b < 1 for b in branching):
        raise ValueError("need at least one stage and branching factors >= 1")
    dist = dist or XiDistribution()
    rng = np.random.default_rng(seed)
    nodes = [TreeNode(0, 0, None, 1.0, Xi())]
    frontier = [0]
    for t, b in enumerate(branching):
        if weights is not None and weights[t] is not None:
            w = np.asarray(weights[t], dtype=float)
            if w.size != b or abs(w.sum() - 1) > 1e-9 or np.any(w < 0):
                raise ValueError(f"stage {t + 1} weights must be {b} non-negative values summing to 1")
        else:
            w = np.full(b, 1.0 / b)
        nxt = []
        for parent in frontier:
            for k in range(b):
                xi = Xi(max(0.0, 1.0 + dist.load_sigma * rng.standard_normal()),
                        max(0.0, 1.0 + dist.wind_sigma * rng.standard_normal()),
                        float(np.exp(dist.fail_log_sigma * rng.standard_normal())))
                nodes.append(TreeNode(len(nodes), t + 1, parent, float(w[k]), xi))
                nxt.append(nodes[-1].id)
        frontier = nxt
    return ScenarioTree(nodes)


@dataclass
class StParams:
    delta_e_rt: float = 0.0
    epsilon_rt: float = 0.0
    delta_e_op: float = 0.0
    big_m: float = 1e7
    cr_max: float = 1e5
    shed_limit_mw: float = 0.0
    line_probability: float = 0.01
    n2_count: int = 0
    voll_scale: float = 1.0

    def __post_init__(self):
        for name in ("delta_e_rt", "epsilon_rt", "delta_e_op", "big_m", "cr_max"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def rt_params(self) -> RtParams:
        return RtParams(delta_e=self.delta_e_rt, epsilon=self.epsilon_rt, cr_max=self.cr_max,
                        shed_limit_mw=self.shed_limit_mw)


@dataclass
class PlanningDecision:
    commitment: np.ndarray  # n_gen x 24 booleans
    reserve_margin: float = 0.0
    direct_cost: float | None = None
    label: str = ""

    def key(self) -> tuple:
        return tuple(np.asarray(self.commitment, dtype=int).ravel()) + (self.reserve_margin,)


def planning_cost(case: GridCase, commitment) -> float:
    """Start-up costs of a 24-slot commitment pattern (units start off)."""
    u = np.asarray(commitment, dtype=int)
    prev = np.concatenate([np.zeros((u.shape[0], 1), dtype=int), u[:, :-1]], axis=1)
    starts = ((u == 1) & (prev == 0)).sum(axis=1)
    return float(sum(g.startup_cost * s for g, s in zip(case.generators, starts)))


def respects_min_times(case: GridCase, commitment) -> bool:
    u = np.asarray(commitment, dtype=int)
    for g, row in zip(case.generators, u):
        runs = [(k, len(list(grp))) for k, grp in itertools.groupby(row)]
        for n, (val, length) in enumerate(runs):
            if n == 0 or n == len(runs) - 1:
                continue  # runs cut by the day boundary are not judged
            if val == 1 and length < g.min_up:
                return False
            if val == 0 and length < g.min_down:
                return False
    return True


def delta_rt_star(residual_risk: float, params: StParams) -> float:
    if residual_risk < 0:
        raise ValueError("residual risk must be non-negative")
    return max(0.0, residual_risk - params.delta_e_rt)


def node_model(case: GridCase, xi: Xi, params: StParams, ages=None) -> ContingencyModel:
    ages = initial_ages(case) if ages is None else ages
    p = np.array([interval_probability(ln.life, ages[k], 1.0) if ln.life else params.line_probability
                  for k, ln in enumerate(case.lines)])
    p = np.minimum(p * xi.fail, 1.0)
    if p.sum() > 0.5:
        p = p * (0.5 / p.sum())  # extreme multipliers: keep c0 the dominant event
    return ContingencyModel.from_line_probabilities(case, p, params.n2_count)


@dataclass
class NodeResult:
    delta_prob: float  # chance-constraint slack (probability mass)
    delta_star: float  # currency, inf when the node has no solution
    w_rt: float
    residual: float
    subset: list
    relaxed: list
    decision: RtDecision | None = None
    feasible: bool = True


def rt_feasibility_bigm(case: GridCase, inputs: RtInputs, model: ContingencyModel, params: StParams,
                        subset=None, backend: str = "auto"):
    """Big-M relaxation of the RT chance constraint at one node.

    Binary z_u lifts the constraints of event copy u at cost pi_u * c_R^max;
    delta >= sum(pi_u z_u) - eps * pi(N_c minus c0) is charged M per unit.
    Returns (delta, decision, W_RT) with delta=0 certifying feasibility.
    """
    rtp = params.rt_params()
    if subset is None:
        subset = select_subset_pessimistic(model, rtp)
    built = _build(case, model, subset, rtp, inputs, frozenset(), None, gated=True)
    b = built.builder
    mass = sum(model.prob(c) for c in subset if c != BASE_EVENT)
    delta = b.var("delta", 0.0, np.inf, params.big_m)
    row = {z: model.prob(u[0]) for u, z in built.gates.items()}
    row[delta] = -1.0
    b.row(row, LE, params.epsilon_rt * mass, "chance")
    res = solve_milp(b.build_mip(), backend=backend)
    if not res.optimal:
        return np.inf, None, np.inf, subset, []
    x = res.x
    relaxed = sorted(u[0] for u, z in built.gates.items() if x[z] > 0.5)
    d = max(0.0, float(x[delta]))
    if d < 1e-12:
        d = 0.0
    w_rt = float(res.objective - params.big_m * x[delta])
    decision = RtDecision(x[built.p0])
    return d, decision, w_rt, subset, relaxed


def chance_holds(model: ContingencyModel, subset, relaxed, epsilon: float) -> bool:
    """Coverage of enforced retained events reaches (1 - eps) of the retained mass."""
    retained = [c for c in subset if c != BASE_EVENT]
    mass = sum(model.prob(c) for c in retained)
    enforced = sum(model.prob(c) for c in retained if c not in relaxed)
    return enforced >= (1 - epsilon) * mass - 1e-12


def node_inputs(case: GridCase, node: TreeNode, commitment) -> RtInputs:
    slot = (node.stage - 1) % 24
    wind = np.minimum(case.wind_vector(slot, node.xi.wind), case.wind_vector())
    committed = None if commitment is None else [bool(v) for v in np.asarray(commitment)[:, slot]]
    return RtInputs(case.load_vector(slot, node.xi.load), wind, Topology.all_up(case.n_lines), committed)


def evaluate_node(case: GridCase, node: TreeNode, decision: PlanningDecision, params: StParams,
                  backend: str = "auto") -> NodeResult:
    inputs = node_inputs(case, node, decision.commitment)
    if params.voll_scale != 1.0:
        case = GridCase(case.buses, case.lines, case.generators, case.loads, case.wind_units,
                        case.voll * params.voll_scale, case.wind_curtail_cost, case.reference_bus,
                        case.load_sigma_fraction)
    model = node_model(case, node.xi, params)
    d, rt_dec, w_rt, subset, relaxed = rt_feasibility_bigm(case, inputs, model, params, backend=backend)
    if rt_dec is None:
        return NodeResult(np.inf, np.inf, params.big_m, np.inf, subset, [], None, False)
    # residual: exactly evaluated excluded events plus the over-budget relaxed mass at c_R^max
    residual = 0.0
    for e in model.events:
        if e.id not in subset and e.probability > 0:
            residual += e.probability * criticality(case, model.topology(e.id, inputs.base), rt_dec,
                                                    e.id, params.cr_max, inputs, backend=backend)
    residual += d * params.cr_max
    return NodeResult(d, delta_rt_star(residual, params), w_rt, residual, subset, relaxed, rt_dec)


@dataclass
class OpEvaluation:
    expected_cost: float
    direct_cost: float
    node_delta: dict
    node_cost: dict
    scenario_cost: dict
    scenario_prob: dict
    discarded: list
    retained: list
    residual_op: float
    node_results: dict = field(default_factory=dict)

    def retained_nodes(self, tree: ScenarioTree) -> set:
        out = set()
        for leaf in self.retained:
            out.update(i for i in tree.path(leaf) if tree.node(i).stage > 0)
        return out

    def feasible(self, tree: ScenarioTree) -> bool:
        return all(self.node_delta[i] == 0 for i in self.retained_nodes(tree))

    def total_delta(self, tree: ScenarioTree) -> float:
        return float(sum(self.node_delta[i] for i in self.retained_nodes(tree)))


def op_rmac_evaluate(case: GridCase, tree: ScenarioTree, decision: PlanningDecision, params: StParams,
                     backend: str = "auto") -> OpEvaluation:
    direct = planning_cost(case, decision.commitment) if decision.direct_cost is None else decision.direct_cost
    # each node is solved once, so leaves sharing a prefix share its decisions
    results = {n.id: evaluate_node(case, n, decision, params, backend) for n in tree.nodes if n.stage > 0}
    node_cost = {i: (r.w_rt + r.delta_star if r.feasible else params.big_m) for i, r in results.items()}
    node_delta = {i: r.delta_star for i, r in results.items()}
    scen_cost, scen_prob = {}, {}
    for leaf in tree.leaves():
        path = [i for i in tree.path(leaf) if tree.node(i).stage > 0]
        scen_cost[leaf] = float(sum(node_cost[i] for i in path))
        scen_prob[leaf] = tree.path_probability(leaf)
    order = sorted(tree.leaves(), key=lambda s: (scen_prob[s], s))
    discarded, used = [], 0.0
    for s in order:
        contrib = scen_prob[s] * scen_cost[s]
        if used + contrib <= params.delta_e_op + 1e-12:
            discarded.append(s)
            used += contrib
        else:
            break
    retained = [s for s in tree.leaves() if s not in discarded]
    expected = direct + sum(scen_prob[s] * scen_cost[s] for s in retained)
    return OpEvaluation(float(expected), float(direct), node_delta, node_cost, scen_cost, scen_prob,
                        sorted(discarded), retained, float(used), results)


@dataclass
class OpReport:
    best: PlanningDecision
    evaluation: OpEvaluation
    constraint_violated: bool
    ranking: list  # (cost, feasible, index) for every candidate


def op_rmac_optimize(case: GridCase, tree: ScenarioTree, candidates, params: StParams,
                     backend: str = "auto") -> OpReport:
    candidates = list(candidates)
    if not candidates:
        raise NoCandidates("no planning candidates supplied")
    evals = [op_rmac_evaluate(case, tree, c, params, backend) for c in candidates]
    feas = [e.feasible(tree) for e in evals]
    ranking = [(e.expected_cost, f, k) for k, (e, f) in enumerate(zip(evals, feas))]
    if any(feas):
        pool = [k for k in range(len(candidates)) if feas[k]]
        k = min(pool, key=lambda k: (evals[k].expected_cost, candidates[k].key()))
        violated = False
    else:
        k = min(range(len(candidates)),
                key=lambda k: (evals[k].total_delta(tree), evals[k].expected_cost, candidates[k].key()))
        violated = True
    return OpReport(candidates[k], evals[k], violated, ranking)


def auto_candidates(case: GridCase, subset=None, cap: int = 256) -> list[PlanningDecision]:
    """Each unit in ``subset`` is either on all day or off all day; others on."""
    n = len(case.generators)
    subset = list(range(min(n, 8))) if subset is None else list(subset)
    out = []
    for bits in itertools.product((1, 0), repeat=len(subset)):
        u = np.ones((n, 24), dtype=int)
        for g, v in zip(subset, bits):
            u[g, :] = v
        label = "".join(str(int(u[g, 0])) for g in range(n))
        out.append(PlanningDecision(u, 0.0, None, label))
        if len(out) >= cap:
            break
    return out
