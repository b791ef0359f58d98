"""JSON case ingestion with located parse errors and full validation reports."""

from __future__ import annotations

import hashlib
import json
import logging
from importlib import resources
from pathlib import Path

from .grid import Generator, GridCase, Line, Load, ValidationError, WindUnit
from .life import WeibullLife

log = logging.getLogger(__name__)

CASE_KEYS = {"buses", "lines", "generators", "loads", "wind", "voll", "wind_curtail_cost",
             "reference_bus", "load_sigma_fraction", "name", "description"}
_LINE_KEYS = {"id", "from_bus", "to_bus", "susceptance", "rating", "life", "maintenance_cost"}
_GEN_KEYS = {"id", "bus", "pmin", "pmax", "cost_linear", "startup_cost", "min_up", "min_down"}
_LOAD_KEYS = {"id", "bus", "peak", "profile"}
_WIND_KEYS = {"id", "bus", "capacity", "profile", "sigma_fraction"}
_LIFE_KEYS = {"nu", "alpha", "gamma", "s", "period_hours", "age_hours"}


class ParseError(ValueError):
    def __init__(self, path, msg: str, line: int, column: int):
        self.path, self.line, self.column = str(path), line, column
        super().__init__(f"{path}:{line}:{column}: {msg}")


def read_json(path):
    path = Path(path)
    text = path.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.msg, exc.lineno, exc.colno) from None


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("gridrm") / "fixtures" / name))


def _unknown(where: str, obj: dict, allowed: set, strict: bool, problems: list):
    extra = sorted(set(obj) - allowed)
    if extra:
        msg = f"{where}: unknown keys {extra}"
        if strict:
            problems.append(msg)
        else:
            log.warning(msg)


def _profile(v, default):
    return tuple(float(x) for x in v) if v is not None else default


def case_from_dict(data: dict, strict: bool = False) -> GridCase:
    """Build a GridCase, collecting every problem before raising."""
    problems: list[str] = []
    if not isinstance(data, dict):
        raise ValidationError(["case file must hold a JSON object"])
    _unknown("case", data, CASE_KEYS, strict, problems)
    for key in ("buses", "lines", "generators", "loads"):
        if key not in data:
            problems.append(f"missing required key {key!r}")
    if problems:
        raise ValidationError(problems)

    def build(kind, items, allowed, fn):
        out = []
        for n, item in enumerate(items):
            label = f"{kind} {item.get('id', n)!r}" if isinstance(item, dict) else f"{kind} #{n}"
            if not isinstance(item, dict):
                problems.append(f"{label}: expected an object")
                continue
            _unknown(label, item, allowed, strict, problems)
            try:
                out.append(fn(item))
            except (KeyError, TypeError, ValueError) as exc:
                problems.append(f"{label}: {type(exc).__name__} {exc}")
        return out

    def line(d):
        life = None
        if d.get("life") is not None:
            ld = d["life"]
            _unknown(f"line {d['id']!r} life", ld, _LIFE_KEYS, strict, problems)
            life = WeibullLife(float(ld["nu"]), float(ld["alpha"]), float(ld["gamma"]), float(ld["s"]),
                               float(ld.get("period_hours", 720.0)), float(ld.get("age_hours", 0.0)))
        rating = d.get("rating")
        return Line(str(d["id"]), str(d["from_bus"]), str(d["to_bus"]), float(d["susceptance"]),
                    float("inf") if rating is None else float(rating), life,
                    float(d.get("maintenance_cost", 0.0)))

    def gen(d):
        return Generator(str(d["id"]), str(d["bus"]), float(d.get("pmin", 0.0)), float(d["pmax"]),
                         float(d["cost_linear"]), float(d.get("startup_cost", 0.0)),
                         int(d.get("min_up", 1)), int(d.get("min_down", 1)))

    def load(d):
        return Load(str(d["id"]), str(d["bus"]), float(d["peak"]), _profile(d.get("profile"), (1.0,) * 24))

    def wind(d):
        return WindUnit(str(d["id"]), str(d["bus"]), float(d["capacity"]),
                        _profile(d.get("profile"), (1.0,) * 24), float(d.get("sigma_fraction", 0.15)))

    lines = build("line", data["lines"], _LINE_KEYS, line)
    gens = build("generator", data["generators"], _GEN_KEYS, gen)
    loads = build("load", data["loads"], _LOAD_KEYS, load)
    winds = build("wind unit", data.get("wind", []), _WIND_KEYS, wind)
    if problems:
        raise ValidationError(problems)
    return GridCase([str(b) for b in data["buses"]], lines, gens, loads, winds,
                    float(data.get("voll", 1000.0)), float(data.get("wind_curtail_cost", 0.0)),
                    None if data.get("reference_bus") is None else str(data["reference_bus"]),
                    float(data.get("load_sigma_fraction", 0.02)))


def load_case(path, strict: bool = False) -> GridCase:
    return case_from_dict(read_json(path), strict=strict)


def initial_ages(case: GridCase):
    return [ln.life.initial_age if ln.life else 0.0 for ln in case.lines]
