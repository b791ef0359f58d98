"""Exponential-law Weibull breakdown model for line ageing."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class WeibullLife:
    """H(tau) = 1 - exp(-nu * (alpha * exp(gamma * tau)) ** s).

    ``period_hours`` is the exposure interval H refers to; failure draws over a
    different interval rescale it as 1 - (1 - H) ** (dt / period_hours).
    """

    nu: float
    alpha: float
    gamma: float
    s: float
    period_hours: float = 24.0 * 30
    initial_age: float = 0.0

    def __post_init__(self):
        if self.nu < 0 or self.alpha <= 0 or self.s <= 0 or self.period_hours <= 0 or self.initial_age < 0:
            raise ValueError(f"invalid life parameters {self}")

    def hazard(self, tau: float) -> float:
        return failure_probability(self, tau)


def failure_probability(life: WeibullLife, tau: float) -> float:
    if tau < 0:
        raise ValueError("effective age must be non-negative")
    if life.nu == 0:
        return 0.0
    # check in logs so large ages saturate instead of overflowing
    log_inner = life.s * (math.log(life.alpha) + life.gamma * tau)
    if log_inner > 700:
        return 1.0
    return -math.expm1(-life.nu * (life.alpha * math.exp(life.gamma * tau)) ** life.s)


def interval_probability(life: WeibullLife, tau: float, dt_hours: float, multiplier: float = 1.0) -> float:
    """Failure probability over ``dt_hours`` at age ``tau``, with a rate multiplier."""
    h = failure_probability(life, tau)
    if h >= 1.0:
        return 1.0
    p = -math.expm1((dt_hours / life.period_hours) * math.log1p(-h))
    return min(1.0, p * multiplier)
