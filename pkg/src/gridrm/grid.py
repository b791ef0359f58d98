"""Network case model, topology handling and DC power-flow / OPF."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .life import WeibullLife
from .solver import EQ, LE, Infeasible, ProgramBuilder, solve_lp

BASE_MVA = 100.0
TOL_MW = 1e-6


class GridError(Exception):
    pass


class DisconnectedNetwork(GridError):
    pass


class SingularSystem(GridError):
    pass


class ValidationError(GridError):
    """Carries every violated invariant, not just the first."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    susceptance: float
    rating: float
    life: WeibullLife | None = None
    maintenance_cost: float = 0.0


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    pmin: float
    pmax: float
    cost_linear: float
    startup_cost: float = 0.0
    min_up: int = 1
    min_down: int = 1


@dataclass(frozen=True)
class Load:
    id: str
    bus: str
    peak: float
    profile: tuple = (1.0,) * 24


@dataclass(frozen=True)
class WindUnit:
    id: str
    bus: str
    capacity: float
    profile: tuple = (1.0,) * 24
    sigma_fraction: float = 0.15


@dataclass(frozen=True)
class Topology:
    line_status: tuple

    @classmethod
    def all_up(cls, n_lines: int) -> "Topology":
        return cls((True,) * n_lines)

    def without(self, indices) -> "Topology":
        status = list(self.line_status)
        for i in indices:
            status[i] = False
        return Topology(tuple(status))

    @property
    def outaged(self) -> list[int]:
        return [i for i, up in enumerate(self.line_status) if not up]


@dataclass(frozen=True)
class GridCase:
    buses: tuple
    lines: tuple
    generators: tuple
    loads: tuple
    wind_units: tuple = ()
    voll: float = 1000.0
    wind_curtail_cost: float = 0.0
    reference_bus: str | None = None
    load_sigma_fraction: float = 0.02

    def __post_init__(self):
        for name in ("buses", "lines", "generators", "loads", "wind_units"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.reference_bus is None and self.buses:
            object.__setattr__(self, "reference_bus", self.buses[0])
        problems = self.violations()
        if problems:
            raise ValidationError(problems)

    def violations(self) -> list[str]:
        out = []
        bus_set = set(self.buses)
        if len(bus_set) != len(self.buses):
            out.append("duplicate bus ids")
        if self.reference_bus not in bus_set:
            out.append(f"reference bus {self.reference_bus!r} not in buses")
        for kind, items in (("line", self.lines), ("generator", self.generators),
                            ("load", self.loads), ("wind unit", self.wind_units)):
            ids = [x.id for x in items]
            for dup in sorted({i for i in ids if ids.count(i) > 1}):
                out.append(f"duplicate {kind} id {dup!r}")
        for ln in self.lines:
            for end in (ln.from_bus, ln.to_bus):
                if end not in bus_set:
                    out.append(f"line {ln.id!r} references missing bus {end!r}")
            if ln.from_bus == ln.to_bus:
                out.append(f"line {ln.id!r} connects bus {ln.from_bus!r} to itself")
            if not ln.susceptance > 0:
                out.append(f"line {ln.id!r} susceptance must be > 0")
            if not ln.rating >= 0:
                out.append(f"line {ln.id!r} rating must be >= 0")
        for g in self.generators:
            if g.bus not in bus_set:
                out.append(f"generator {g.id!r} references missing bus {g.bus!r}")
            if not 0 <= g.pmin <= g.pmax:
                out.append(f"generator {g.id!r} needs 0 <= pmin <= pmax")
            if g.min_up < 1 or g.min_down < 1:
                out.append(f"generator {g.id!r} min up/down must be >= 1 hour")
        for ld in self.loads:
            if ld.bus not in bus_set:
                out.append(f"load {ld.id!r} references missing bus {ld.bus!r}")
            if not ld.peak >= 0:
                out.append(f"load {ld.id!r} peak must be >= 0")
            if len(ld.profile) != 24 or any(not v >= 0 for v in ld.profile):
                out.append(f"load {ld.id!r} profile needs 24 non-negative entries")
        for w in self.wind_units:
            if w.bus not in bus_set:
                out.append(f"wind unit {w.id!r} references missing bus {w.bus!r}")
            if not w.capacity >= 0:
                out.append(f"wind unit {w.id!r} capacity must be >= 0")
            if len(w.profile) != 24 or any(not 0 <= v <= 1 for v in w.profile):
                out.append(f"wind unit {w.id!r} profile needs 24 entries in [0, 1]")
            if not w.sigma_fraction >= 0:
                out.append(f"wind unit {w.id!r} sigma fraction must be >= 0")
        if not self.voll >= 0 or not self.wind_curtail_cost >= 0:
            out.append("voll and wind_curtail_cost must be >= 0")
        return out

    # -- indexing helpers -------------------------------------------------
    @cached_property
    def bus_index(self) -> dict:
        return {b: i for i, b in enumerate(self.buses)}

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    def line_index(self, line_id: str) -> int:
        for i, ln in enumerate(self.lines):
            if ln.id == line_id:
                return i
        raise KeyError(line_id)

    @cached_property
    def incidence(self) -> np.ndarray:
        """Line-by-bus incidence, +1 at the from end and -1 at the to end."""
        A = np.zeros((self.n_lines, self.n_buses))
        for k, ln in enumerate(self.lines):
            A[k, self.bus_index[ln.from_bus]] = 1.0
            A[k, self.bus_index[ln.to_bus]] = -1.0
        return A

    @cached_property
    def gen_bus(self) -> np.ndarray:
        return np.array([self.bus_index[g.bus] for g in self.generators], dtype=int)

    @cached_property
    def wind_bus(self) -> np.ndarray:
        return np.array([self.bus_index[w.bus] for w in self.wind_units], dtype=int)

    def load_vector(self, hour: int | None = None, scale: float = 1.0) -> np.ndarray:
        """Per-bus load in MW at a profile hour (peak when ``hour`` is None)."""
        d = np.zeros(self.n_buses)
        for ld in self.loads:
            frac = 1.0 if hour is None else ld.profile[hour % 24]
            d[self.bus_index[ld.bus]] += ld.peak * frac * scale
        return d

    def wind_vector(self, hour: int | None = None, scale: float = 1.0) -> np.ndarray:
        """Per-unit wind availability in MW (capacity when ``hour`` is None)."""
        return np.array([w.capacity * (1.0 if hour is None else w.profile[hour % 24]) * scale
                         for w in self.wind_units])

    def total_peak_load(self) -> float:
        return float(sum(ld.peak for ld in self.loads))

    def with_lines(self, extra) -> "GridCase":
        return GridCase(self.buses, self.lines + tuple(extra), self.generators, self.loads,
                        self.wind_units, self.voll, self.wind_curtail_cost, self.reference_bus,
                        self.load_sigma_fraction)


@dataclass
class FlowSolution:
    angles: np.ndarray
    flows: np.ndarray
    generation: np.ndarray
    shed: np.ndarray  # per bus
    curtailed: np.ndarray  # per wind unit
    objective: float = 0.0
    load: np.ndarray | None = None
    wind: np.ndarray | None = None

    @property
    def total_shed(self) -> float:
        return float(self.shed.sum())

    def balance_residual(self, case: GridCase) -> np.ndarray:
        inj = np.zeros(case.n_buses)
        np.add.at(inj, case.gen_bus, self.generation)
        if case.wind_units:
            np.add.at(inj, case.wind_bus, (self.wind if self.wind is not None else 0) - self.curtailed)
        inj += self.shed
        if self.load is not None:
            inj -= self.load
        return inj - case.incidence.T @ self.flows


def _memo(case: GridCase, kind: str, topology: Topology, compute):
    # per-case memo of topology-only quantities; the case is immutable
    store = case.__dict__.setdefault("_topology_memo", {})
    key = (kind, topology.line_status)
    if key not in store:
        if len(store) > 4096:
            store.clear()
        store[key] = compute()
    return store[key]


def islands(case: GridCase, topology: Topology) -> list[list[int]]:
    """Connected bus groups (by index) under the in-service lines."""
    return [list(g) for g in _memo(case, "islands", topology, lambda: _islands(case, topology))]


def _islands(case: GridCase, topology: Topology) -> tuple:
    up = [k for k, s in enumerate(topology.line_status) if s]
    rows = [case.bus_index[case.lines[k].from_bus] for k in up]
    cols = [case.bus_index[case.lines[k].to_bus] for k in up]
    n = case.n_buses
    graph = coo_matrix((np.ones(len(up)), (rows, cols)), shape=(n, n))
    count, labels = connected_components(graph, directed=False)
    groups = [[] for _ in range(count)]
    for i, lab in enumerate(labels):
        groups[lab].append(i)
    return tuple(tuple(g) for g in sorted(groups, key=lambda g: g[0]))


def _check_topology(case: GridCase, topology: Topology):
    if len(topology.line_status) != case.n_lines:
        raise ValueError(f"topology has {len(topology.line_status)} lines, case has {case.n_lines}")


def susceptance_matrix(case: GridCase, topology: Topology) -> np.ndarray:
    return _memo(case, "B", topology, lambda: _susceptance(case, topology)).copy()


def _susceptance(case: GridCase, topology: Topology) -> np.ndarray:
    b = np.array([ln.susceptance if up else 0.0 for ln, up in zip(case.lines, topology.line_status)])
    A = case.incidence
    return A.T @ (b[:, None] * A)


def dc_power_flow(case: GridCase, topology: Topology, injections) -> FlowSolution:
    """Solve B theta = P with the reference angle pinned at zero."""
    _check_topology(case, topology)
    P = np.asarray(injections, dtype=float)
    if P.shape != (case.n_buses,):
        raise ValueError("injections must have one entry per bus")
    if abs(P.sum()) > TOL_MW:
        raise ValueError(f"injections sum to {P.sum():.3g} MW, expected 0")
    if len(islands(case, topology)) > 1:
        raise DisconnectedNetwork("some buses are unreachable from the reference bus")
    ref = case.bus_index[case.reference_bus]
    keep = [i for i in range(case.n_buses) if i != ref]
    B = susceptance_matrix(case, topology)
    theta = np.zeros(case.n_buses)
    if keep:
        Bred = B[np.ix_(keep, keep)]
        if np.linalg.cond(Bred) > 1e12:
            raise SingularSystem("reduced susceptance matrix is singular")
        theta[keep] = np.linalg.solve(Bred, P[keep] / BASE_MVA)
    flows = _flows(case, topology, theta)
    return FlowSolution(theta, flows, np.zeros(len(case.generators)), np.zeros(case.n_buses),
                        np.zeros(len(case.wind_units)), 0.0)


def _flows(case: GridCase, topology: Topology, theta: np.ndarray) -> np.ndarray:
    b = np.array([ln.susceptance if up else 0.0 for ln, up in zip(case.lines, topology.line_status)])
    return BASE_MVA * b * (case.incidence @ theta)


@dataclass
class NetworkVars:
    """Variable indices of one network copy inside a ProgramBuilder."""

    theta: list[int]
    shed: dict = field(default_factory=dict)  # bus index -> var
    curtail: dict = field(default_factory=dict)  # wind index -> var
    balance_rows: list[int] = field(default_factory=list)


def add_network(builder: ProgramBuilder, case: GridCase, topology: Topology, load, wind,
                gen_expr, tag: str, allow_shed: bool = True, shed_cost: float | None = None,
                curtail_cost: float | None = None, rating_scale: float = 1.0,
                shed_cap: float | None = None, relax_var: int | None = None) -> NetworkVars:
    """Add angles, line limits and nodal balance for one network state.

    ``gen_expr[g]`` is a ``{var: coeff}`` map giving generator g's MW output.
    Shed and curtailment variables carry ``shed_cost``/``curtail_cost`` per MW
    (defaults: case VOLL and curtail price).  ``shed_cap`` bounds total shed.
    When ``relax_var`` (a binary) is 1, line limits and the shed cap are
    lifted by a big-M large enough never to bind.
    """
    _check_topology(case, topology)
    load = np.asarray(load, dtype=float)
    wind = np.asarray(wind, dtype=float) if len(case.wind_units) else np.zeros(0)
    shed_cost = case.voll if shed_cost is None else shed_cost
    curtail_cost = case.wind_curtail_cost if curtail_cost is None else curtail_cost
    ref = case.bus_index[case.reference_bus]
    pinned = set()
    for group in islands(case, topology):
        pinned.add(ref if ref in group else group[0])
    theta = [builder.var(f"{tag}theta_{case.buses[i]}",
                         0.0 if i in pinned else -np.inf, 0.0 if i in pinned else np.inf)
             for i in range(case.n_buses)]
    nv = NetworkVars(theta)
    if allow_shed:
        for i in range(case.n_buses):
            if load[i] > 0:
                nv.shed[i] = builder.var(f"{tag}shed_{case.buses[i]}", 0.0, load[i], shed_cost)
        if shed_cap is not None and nv.shed:
            row = {j: 1.0 for j in nv.shed.values()}
            if relax_var is not None:
                row[relax_var] = -float(load.sum())
            builder.row(row, LE, shed_cap, f"{tag}shedcap")
    for w in range(len(case.wind_units)):
        if wind[w] > 0:
            nv.curtail[w] = builder.var(f"{tag}curt_{case.wind_units[w].id}", 0.0, wind[w], curtail_cost)

    big_flow = float(load.sum() + wind.sum() + sum(g.pmax for g in case.generators))
    for k, (ln, up) in enumerate(zip(case.lines, topology.line_status)):
        if not up:
            continue
        i, j = case.bus_index[ln.from_bus], case.bus_index[ln.to_bus]
        coef = BASE_MVA * ln.susceptance
        if np.isfinite(ln.rating):
            lim = ln.rating * rating_scale
            hi_row = {theta[i]: coef, theta[j]: -coef}
            lo_row = {theta[i]: -coef, theta[j]: coef}
            if relax_var is not None:
                hi_row[relax_var] = lo_row[relax_var] = -big_flow
            builder.row(hi_row, LE, lim, f"{tag}fmax_{ln.id}")
            builder.row(lo_row, LE, lim, f"{tag}fmin_{ln.id}")

    B = susceptance_matrix(case, topology) * BASE_MVA
    for i in range(case.n_buses):
        row: dict = {}
        for jb in np.flatnonzero(B[i]):
            row[theta[jb]] = row.get(theta[jb], 0.0) - B[i, jb]
        for g in np.flatnonzero(case.gen_bus == i):
            for var, c in gen_expr[g].items():
                row[var] = row.get(var, 0.0) + c
        rhs = load[i]
        for w in np.flatnonzero(case.wind_bus == i) if len(case.wind_units) else []:
            rhs -= wind[w]
            if w in nv.curtail:
                row[nv.curtail[w]] = -1.0
        if i in nv.shed:
            row[nv.shed[i]] = 1.0
        nv.balance_rows.append(builder.row(row, EQ, rhs, f"{tag}bal_{case.buses[i]}"))
    return nv


def extract_solution(case: GridCase, topology: Topology, nv: NetworkVars, x: np.ndarray,
                     generation: np.ndarray, load, wind, objective: float) -> FlowSolution:
    theta = np.array([x[j] for j in nv.theta])
    shed = np.zeros(case.n_buses)
    for i, j in nv.shed.items():
        shed[i] = x[j]
    curt = np.zeros(len(case.wind_units))
    for w, j in nv.curtail.items():
        curt[w] = x[j]
    return FlowSolution(theta, _flows(case, topology, theta), np.asarray(generation, dtype=float),
                        shed, curt, objective, np.asarray(load, dtype=float),
                        np.asarray(wind, dtype=float) if len(case.wind_units) else np.zeros(0))


def dc_opf(case: GridCase, topology: Topology, load=None, wind=None, committed=None,
           allow_shed: bool = True, gen_lower=None, gen_upper=None, voll_scale: float = 1.0,
           backend: str = "auto") -> FlowSolution:
    """Single-period economic dispatch with commitment fixed.

    Committed units run in [pmin, pmax]; others are held at zero.
    ``gen_lower``/``gen_upper`` tighten the bounds further (ramp windows).
    Raises ``solver.Infeasible`` when no dispatch exists.
    """
    n_g = len(case.generators)
    load = case.load_vector() if load is None else np.asarray(load, dtype=float)
    wind = case.wind_vector() if wind is None else np.asarray(wind, dtype=float)
    committed = [True] * n_g if committed is None else list(committed)
    if len(committed) != n_g:
        raise ValueError("committed vector length must match generators")
    b = ProgramBuilder()
    gvars = []
    for g, gen in enumerate(case.generators):
        lo, hi = (gen.pmin, gen.pmax) if committed[g] else (0.0, 0.0)
        if gen_lower is not None:
            lo = max(lo, gen_lower[g])
        if gen_upper is not None:
            hi = min(hi, gen_upper[g])
        if lo > hi + TOL_MW:
            raise Infeasible(f"generator {gen.id} bounds are empty")
        gvars.append(b.var(f"P_{gen.id}", lo, max(lo, hi), gen.cost_linear))
    nv = add_network(b, case, topology, load, wind, [{v: 1.0} for v in gvars], "",
                     allow_shed=allow_shed, shed_cost=case.voll * voll_scale)
    lp = b.build()
    res = solve_lp(lp, backend=backend).require("dispatch")
    return extract_solution(case, topology, nv, res.x, res.x[gvars], load, wind, res.objective)
