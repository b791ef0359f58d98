"""Plain-text listing of a program, for eyeballing what was built."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .model import LinearProgram, MixedIntegerProgram


def _name(lp: LinearProgram, j: int) -> str:
    return lp.var_names[j] if lp.var_names else f"x{j}"


def _expr(lp: LinearProgram, idx, vals) -> str:
    terms = [f"{v:+.10g} {_name(lp, j)}" for j, v in zip(idx, vals) if v != 0]
    return " ".join(terms) if terms else "0"


def format_program(prog: LinearProgram | MixedIntegerProgram) -> str:
    binaries: list[int] = []
    if isinstance(prog, MixedIntegerProgram):
        binaries = prog.binaries
        prog = prog.lp
    lines = ["Maximize" if prog.sense == "max" else "Minimize", f"  obj: {_expr(prog, range(prog.n_vars), prog.cost)}",
             "Subject To"]
    for name, (idx, vals), rel, rhs in zip(prog.row_names, prog.iter_rows(), prog.relations, prog.rhs):
        lines.append(f"  {name}: {_expr(prog, idx, vals)} {rel} {rhs:.10g}")
    lines.append("Bounds")
    for j in range(prog.n_vars):
        lo, hi = prog.lower[j], prog.upper[j]
        lo_s = "-inf" if not np.isfinite(lo) else f"{lo:.10g}"
        hi_s = "+inf" if not np.isfinite(hi) else f"{hi:.10g}"
        lines.append(f"  {lo_s} <= {_name(prog, j)} <= {hi_s}")
    if binaries:
        lines.append("Binary")
        lines.append("  " + " ".join(_name(prog, j) for j in binaries))
    lines.append("End")
    return "\n".join(lines) + "\n"


def dump_program(prog, directory: str | Path, stem: str) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{stem}.lp"
    path.write_text(format_program(prog))
    return path
