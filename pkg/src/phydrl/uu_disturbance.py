"""Bounded disturbances from a four-parameter Beta law with per-step random shapes."""
from __future__ import annotations

from dataclasses import dataclass
from math import lgamma, log, exp

import numpy as np

from .errors import OutOfSupport


@dataclass(frozen=True)
class BetaUUConfig:
    a: float = -1.0
    c: float = 1.0
    alpha_range: tuple = (0.5, 5.0)
    beta_range: tuple = (0.5, 5.0)
    seed: int = 0

    def __post_init__(self):
        if not self.a < self.c:
            raise ValueError("need a < c")
        for name in ("alpha_range", "beta_range"):
            lo, hi = getattr(self, name)
            if lo <= 0 or hi < lo:
                raise ValueError(f"{name} must be positive with lo <= hi")


def sample(cfg: BetaUUConfig, rng, size=None):
    """Draw shapes uniformly from their ranges, then ``a + (c - a) Beta(alpha, beta)``.

    Shapes are redrawn for every sample, so a batch of ``size`` draws is a
    batch of independent time steps.
    """
    alpha = rng.uniform(*cfg.alpha_range, size=size)
    beta = rng.uniform(*cfg.beta_range, size=size)
    return cfg.a + (cfg.c - cfg.a) * rng.beta(alpha, beta, size=size)


def sample_fixed(alpha: float, beta: float, a: float, c: float, rng, size=None):
    return a + (c - a) * rng.beta(alpha, beta, size=size)


def pdf(d: float, alpha: float, beta: float, a: float, c: float) -> float:
    """Four-parameter Beta density, normalised through log-gamma."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("shapes must be positive")
    if not a < d < c:
        raise OutOfSupport(f"{d} is outside ({a}, {c})")
    log_norm = lgamma(alpha + beta) - lgamma(alpha) - lgamma(beta) - (alpha + beta - 1.0) * log(c - a)
    return exp(log_norm + (alpha - 1.0) * log(d - a) + (beta - 1.0) * log(c - d))


def pdf_array(d, alpha: float, beta: float, a: float, c: float) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if np.any((d <= a) | (d >= c)):
        raise OutOfSupport("some points lie outside the open support")
    log_norm = lgamma(alpha + beta) - lgamma(alpha) - lgamma(beta) - (alpha + beta - 1.0) * log(c - a)
    return np.exp(log_norm + (alpha - 1.0) * np.log(d - a) + (beta - 1.0) * np.log(c - d))
