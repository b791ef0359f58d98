"""Monte-Carlo and importance-sampling estimators over sampled scenarios."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm


class EmptySample(ValueError):
    pass


class SeverityKind(str, enum.Enum):
    MEAN = "mean"
    MAX = "max"
    QUANTILE = "quantile"


@dataclass(frozen=True)
class SeverityAggregator:
    """phi: reduces a scenario's per-state severities to one number."""

    kind: SeverityKind = SeverityKind.MAX
    q: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SeverityKind(self.kind))
        if self.kind is SeverityKind.QUANTILE and not 0 < self.q <= 1:
            raise ValueError("quantile level must lie in (0, 1]")

    def __call__(self, severities) -> float:
        r = np.asarray(severities, dtype=float)
        if r.size == 0:
            return 0.0
        if self.kind is SeverityKind.MEAN:
            return float(r.mean())
        if self.kind is SeverityKind.MAX:
            return float(r.max())
        return float(np.quantile(r, self.q, method="inverted_cdf"))


def _weights(scenarios) -> np.ndarray:
    if not scenarios:
        raise EmptySample("need at least one scenario")
    return np.exp(np.array([s.log_weight for s in scenarios], dtype=float))


def estimate_expected_cost(scenarios) -> tuple[float, float]:
    """Importance-weighted mean of C(Z) and its standard error."""
    w = _weights(scenarios)
    vals = w * np.array([s.total_cost for s in scenarios])
    n = len(vals)
    se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(vals.mean()), se


def wilson_interval(p: float, n: float, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a proportion observed over ``n`` (possibly
    effective, non-integer) trials."""
    if n <= 0:
        return 0.0, 1.0
    p = min(max(p, 0.0), 1.0)
    z = float(norm.ppf(0.5 + confidence / 2))
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass
class ChanceEstimate:
    satisfied: bool
    probability: float
    ci: tuple
    n_effective: float

    def __iter__(self):
        return iter((self.satisfied, self.probability, self.ci))


def estimate_chance_constraint(scenarios, aggregator: SeverityAggregator, R: float, alpha: float,
                               confidence: float = 0.95, conservative: bool = False) -> ChanceEstimate:
    """Weighted estimate of P(phi(r(Z)) <= R).

    The decision compares the point estimate with 1 - alpha.  The interval is
    a Wilson interval on the Kish effective sample size of the weights; with
    ``conservative`` the decision uses its lower end instead.
    """
    w = _weights(scenarios)
    ok = np.array([aggregator(s.severities) <= R for s in scenarios], dtype=float)
    p = float(np.mean(w * ok))
    n_eff = float(w.sum() ** 2 / np.sum(w * w)) if np.any(w > 0) else 0.0
    lo, hi = wilson_interval(p, n_eff, confidence)
    target = 1 - alpha - 1e-12
    return ChanceEstimate((lo if conservative else p) >= target, p, (lo, hi), n_eff)


def estimate_achievability(scenarios, epsilon: float) -> tuple[bool, float]:
    """Fraction of scenarios with any non-achievable state; satisfied iff <= epsilon."""
    if not scenarios:
        raise EmptySample("need at least one scenario")
    bad = [1.0 - float(np.prod(s.achievable)) for s in scenarios]
    frac = float(np.mean(bad))
    return frac <= epsilon, frac


__all__ = ["ChanceEstimate", "EmptySample", "SeverityAggregator", "SeverityKind",
           "estimate_achievability", "estimate_chance_constraint", "estimate_expected_cost",
           "wilson_interval"]
