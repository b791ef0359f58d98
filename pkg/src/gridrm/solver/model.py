"""Containers for linear and mixed-integer programs."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


class SolverError(Exception):
    """Base class for solver failures."""


class NumericalBreakdown(SolverError):
    """Raised when the simplex exceeds its pivot budget or loses the basis."""


class Infeasible(SolverError):
    """Raised by callers that require an optimal solve."""

    def __init__(self, message: str = "program is infeasible", status: Status = Status.INFEASIBLE):
        super().__init__(message)
        self.status = status


LE, EQ, GE = "<=", "==", ">="
_RELATIONS = (LE, EQ, GE)


@dataclass
class LinearProgram:
    """``min|max c.x`` subject to ``A x (rel) b`` and ``lower <= x <= upper``.

    Rows are appended one at a time with :meth:`add_row`; the dense matrix is
    assembled lazily.  Infinite bounds are written as ``-inf``/``inf``.
    """

    cost: np.ndarray
    sense: str = "min"
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    rows: list[np.ndarray] = field(default_factory=list)
    relations: list[str] = field(default_factory=list)
    rhs: list[float] = field(default_factory=list)
    row_names: list[str] = field(default_factory=list)
    var_names: list[str] | None = None
    # large programs from ProgramBuilder keep their rows here instead of ``rows``
    csr: sparse.csr_matrix | None = None

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=float).copy()
        n = self.cost.size
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).copy()
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).copy()
        if self.sense not in ("min", "max"):
            raise ValueError(f"unknown sense {self.sense!r}")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bound vectors must match the cost vector")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n_vars(self) -> int:
        return self.cost.size

    @property
    def n_rows(self) -> int:
        return len(self.relations)

    def add_row(self, coeffs, relation: str, rhs: float, name: str | None = None) -> int:
        """Append a constraint row; ``coeffs`` is dense or a ``{index: value}`` map."""
        if relation not in _RELATIONS:
            raise ValueError(f"unknown relation {relation!r}")
        if isinstance(coeffs, dict):
            row = np.zeros(self.n_vars)
            for j, v in coeffs.items():
                row[j] += v
        else:
            row = np.asarray(coeffs, dtype=float)
            if row.shape != (self.n_vars,):
                raise ValueError(f"row width {row.shape} != {self.n_vars}")
        if self.csr is not None:
            self.csr = sparse.vstack([self.csr, sparse.csr_matrix(row)], format="csr")
        else:
            self.rows.append(row)
        self.relations.append(relation)
        self.rhs.append(float(rhs))
        self.row_names.append(name or f"r{self.n_rows - 1}")
        return self.n_rows - 1

    def matrix(self) -> np.ndarray:
        if self.csr is not None:
            return self.csr.toarray()
        if not self.rows:
            return np.zeros((0, self.n_vars))
        return np.vstack(self.rows)

    def sparse_matrix(self) -> sparse.csr_matrix:
        if self.csr is not None:
            return self.csr
        if not self.rows:
            return sparse.csr_matrix((0, self.n_vars))
        return sparse.csr_matrix(np.vstack(self.rows))

    def iter_rows(self):
        """Yield (index array, value array) per row."""
        A = self.sparse_matrix()
        for i in range(A.shape[0]):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            yield A.indices[lo:hi], A.data[lo:hi]

    def copy(self) -> "LinearProgram":
        lp = LinearProgram(self.cost, self.sense, self.lower, self.upper,
                           list(self.rows), list(self.relations), list(self.rhs),
                           list(self.row_names),
                           None if self.var_names is None else list(self.var_names), self.csr)
        return lp

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Signed constraint violation per row (positive means violated)."""
        if self.n_rows == 0:
            return np.zeros(0)
        ax = self.sparse_matrix() @ x
        b = np.asarray(self.rhs)
        out = np.empty_like(ax)
        for i, rel in enumerate(self.relations):
            if rel == LE:
                out[i] = ax[i] - b[i]
            elif rel == GE:
                out[i] = b[i] - ax[i]
            else:
                out[i] = abs(ax[i] - b[i])
        return out

    def objective(self, x: np.ndarray) -> float:
        return float(self.cost @ x)


@dataclass
class MixedIntegerProgram:
    lp: LinearProgram
    binaries: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.binaries = sorted(set(int(j) for j in self.binaries))
        for j in self.binaries:
            if not (0 <= j < self.lp.n_vars):
                raise ValueError(f"binary index {j} out of range")
            if self.lp.lower[j] < 0 or self.lp.upper[j] > 1:
                self.lp.lower[j] = max(self.lp.lower[j], 0.0)
                self.lp.upper[j] = min(self.lp.upper[j], 1.0)


@dataclass
class SolveResult:
    status: Status
    x: np.ndarray | None = None
    objective: float = float("nan")
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0
    nodes: int = 0
    certificate: np.ndarray | None = None
    backend: str = "simplex"

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def require(self, what: str = "program") -> "SolveResult":
        if not self.optimal:
            raise Infeasible(f"{what} is {self.status.value.lower()}", self.status)
        return self


DENSE_CELL_LIMIT = 200_000


class ProgramBuilder:
    """Accumulates named variables and sparse rows, then emits a LinearProgram."""

    def __init__(self, sense: str = "min"):
        self.sense = sense
        self.cost: list[float] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.names: list[str] = []
        self.binaries: list[int] = []
        self._rows: list[tuple[dict, str, float, str]] = []

    @property
    def n_vars(self) -> int:
        return len(self.cost)

    def var(self, name: str, lb: float = 0.0, ub: float = np.inf, cost: float = 0.0,
            binary: bool = False) -> int:
        self.cost.append(float(cost))
        self.lower.append(float(lb))
        self.upper.append(float(ub))
        self.names.append(name)
        j = len(self.cost) - 1
        if binary:
            self.binaries.append(j)
        return j

    def add_cost(self, j: int, c: float) -> None:
        self.cost[j] += float(c)

    def row(self, coeffs: dict, relation: str, rhs: float, name: str | None = None) -> int:
        if relation not in _RELATIONS:
            raise ValueError(f"unknown relation {relation!r}")
        self._rows.append((dict(coeffs), relation, float(rhs), name or f"r{len(self._rows)}"))
        return len(self._rows) - 1

    def build(self) -> LinearProgram:
        lp = LinearProgram(np.array(self.cost), self.sense, np.array(self.lower),
                           np.array(self.upper), var_names=list(self.names))
        n = lp.n_vars
        m = len(self._rows)
        if n * m <= DENSE_CELL_LIMIT:
            for coeffs, rel, rhs, name in self._rows:
                row = np.zeros(n)
                for j, v in coeffs.items():
                    row[j] += v
                lp.rows.append(row)
        else:
            ri, ci, vals = [], [], []
            for i, (coeffs, _, _, _) in enumerate(self._rows):
                ri.extend([i] * len(coeffs))
                ci.extend(coeffs.keys())
                vals.extend(coeffs.values())
            lp.csr = sparse.csr_matrix((vals, (ri, ci)), shape=(m, n))
        for _, rel, rhs, name in self._rows:
            lp.relations.append(rel)
            lp.rhs.append(rhs)
            lp.row_names.append(name)
        return lp

    def build_mip(self) -> MixedIntegerProgram:
        return MixedIntegerProgram(self.build(), list(self.binaries))
