"""LP and small-MILP engines used by every optimization in the toolkit.

``solve_lp`` and ``solve_milp`` use the native simplex and branch-and-bound
for desk-scale programs.  ``backend="highs"`` (or ``"auto"`` on programs past
the size threshold) routes through scipy's HiGHS bindings instead.
"""

from __future__ import annotations

import itertools
import os

from .bnb import ENUMERATION_FALLBACK, branch_and_bound, solve_by_enumeration
from .dump import dump_program, format_program
from .highs import solve_lp_highs, solve_milp_highs
from .model import (EQ, GE, LE, Infeasible, LinearProgram, MixedIntegerProgram, ProgramBuilder,
                    NumericalBreakdown, SolveResult, SolverError, Status)
from .simplex import solve_lp_simplex

__all__ = [
    "EQ", "GE", "LE", "Infeasible", "LinearProgram", "MixedIntegerProgram",
    "NumericalBreakdown", "ProgramBuilder", "SolveResult", "SolverError", "Status", "solve_lp", "solve_milp",
    "solve_by_enumeration", "format_program", "dump_program", "set_dump_dir",
]

# programs with more cells than this go to HiGHS under backend="auto"
AUTO_CELL_LIMIT = 40_000
MAX_NATIVE_BINARIES = 64

_dump_dir: str | None = os.environ.get("GRIDRM_DUMP_LP")
_dump_counter = itertools.count()


def set_dump_dir(path: str | None) -> None:
    global _dump_dir
    _dump_dir = path


def _maybe_dump(prog) -> None:
    if _dump_dir:
        dump_program(prog, _dump_dir, f"program_{next(_dump_counter):05d}")


def _native_ok(lp: LinearProgram) -> bool:
    return lp.n_rows * lp.n_vars <= AUTO_CELL_LIMIT


def solve_lp(lp: LinearProgram, backend: str = "auto", max_pivots: int | None = None) -> SolveResult:
    _maybe_dump(lp)
    if backend == "highs" or (backend == "auto" and not _native_ok(lp)):
        return solve_lp_highs(lp)
    if backend not in ("auto", "simplex"):
        raise ValueError(f"unknown backend {backend!r}")
    return solve_lp_simplex(lp, max_pivots=max_pivots)


def solve_milp(mip: MixedIntegerProgram, backend: str = "auto", mip_gap: float = 1e-9) -> SolveResult:
    """Global optimum over the binaries.

    Native path: best-first branch-and-bound on simplex relaxations, falling
    back to exhaustive enumeration if the search breaks down on a program
    with at most 16 binaries.
    """
    _maybe_dump(mip)
    nb = len(mip.binaries)
    if backend == "highs" or (backend == "auto" and (nb > MAX_NATIVE_BINARIES or not _native_ok(mip.lp))):
        return solve_milp_highs(mip, mip_gap=mip_gap)
    if backend not in ("auto", "simplex"):
        raise ValueError(f"unknown backend {backend!r}")
    if nb > MAX_NATIVE_BINARIES:
        raise ValueError(f"native branch-and-bound supports at most {MAX_NATIVE_BINARIES} binaries")

    def lp_solver(lp):
        return solve_lp_simplex(lp)

    try:
        return branch_and_bound(mip, lp_solver)
    except NumericalBreakdown:
        if nb <= ENUMERATION_FALLBACK:
            return solve_by_enumeration(mip, lp_solver)
        raise
