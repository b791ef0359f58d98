"""Contingency sets: the event universe N with probabilities and outage masks."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..grid import GridCase, Topology
from ..life import interval_probability

BASE_EVENT = "c0"
DEFAULT_LINE_PROBABILITY = 0.01


class UnknownEvent(KeyError):
    pass


@dataclass(frozen=True)
class Contingency:
    id: str
    outage: tuple  # line indices taken out of service
    probability: float


@dataclass
class ContingencyModel:
    events: list
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.events = list(self.events)
        ids = [e.id for e in self.events]
        if len(set(ids)) != len(ids):
            raise ValueError("event ids must be unique")
        if BASE_EVENT not in ids:
            raise ValueError(f"model must contain the no-contingency event {BASE_EVENT!r}")
        probs = np.array([e.probability for e in self.events])
        if np.any(probs < 0) or np.any(probs > 1):
            raise ValueError("event probabilities must lie in [0, 1]")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"event probabilities sum to {probs.sum():.12g}, expected 1")
        self._index = {e.id: e for e in self.events}

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.events]

    def __getitem__(self, event_id: str) -> Contingency:
        try:
            return self._index[event_id]
        except KeyError:
            raise UnknownEvent(event_id) from None

    def __contains__(self, event_id) -> bool:
        return event_id in self._index

    def __len__(self) -> int:
        return len(self.events)

    def prob(self, event_id: str) -> float:
        return self[event_id].probability

    def check_subset(self, subset) -> None:
        for c in subset:
            if c not in self._index:
                raise UnknownEvent(c)

    def topology(self, event_id: str, base: Topology) -> Topology:
        return base.without(self[event_id].outage)

    # -- constructors -----------------------------------------------------
    @classmethod
    def from_line_probabilities(cls, case: GridCase, p_line, n2_count: int = 0) -> "ContingencyModel":
        """N-1 outages with probability p_l each, plus the ``n2_count`` most
        likely double outages with probability p_l*p_m; c0 takes the rest."""
        p_line = np.asarray(p_line, dtype=float)
        events = []
        for k, ln in enumerate(case.lines):
            if p_line[k] > 0:
                events.append(Contingency(f"n1_{ln.id}", (k,), float(p_line[k])))
        if n2_count > 0:
            pairs = [((k, m), p_line[k] * p_line[m])
                     for k, m in itertools.combinations(range(case.n_lines), 2)
                     if p_line[k] * p_line[m] > 0]
            pairs.sort(key=lambda t: (-t[1], t[0]))
            for (k, m), p in pairs[:n2_count]:
                events.append(Contingency(f"n2_{case.lines[k].id}_{case.lines[m].id}", (k, m), float(p)))
        rest = 1.0 - sum(e.probability for e in events)
        if rest < -1e-12:
            raise ValueError("outage probabilities exceed 1 in total")
        return cls([Contingency(BASE_EVENT, (), max(rest, 0.0))] + events)

    @classmethod
    def nminus1(cls, case: GridCase, probability: float = DEFAULT_LINE_PROBABILITY) -> "ContingencyModel":
        return cls.from_line_probabilities(case, np.full(case.n_lines, probability))

    @classmethod
    def from_ages(cls, case: GridCase, ages, dt_hours: float = 1.0, n2_count: int = 0,
                  default: float = DEFAULT_LINE_PROBABILITY) -> "ContingencyModel":
        """Per-line failure probability over ``dt_hours`` from each line's life model."""
        p = np.array([interval_probability(ln.life, ages[k], dt_hours) if ln.life else default
                      for k, ln in enumerate(case.lines)])
        return cls.from_line_probabilities(case, p, n2_count)

    @classmethod
    def from_json(cls, case: GridCase, path) -> "ContingencyModel":
        """File format: ``[{"id": ..., "outage": [line ids], "pi": ...}, ...]``;
        c0 is added with the residual probability when absent."""
        data = json.loads(Path(path).read_text())
        events = []
        for item in data:
            outage = tuple(case.line_index(lid) for lid in item.get("outage", []))
            events.append(Contingency(str(item["id"]), outage, float(item["pi"])))
        if not any(e.id == BASE_EVENT for e in events):
            rest = 1.0 - sum(e.probability for e in events)
            events.insert(0, Contingency(BASE_EVENT, (), rest))
        return cls(events)
