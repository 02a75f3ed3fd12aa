"""Residual control: model-based command plus data-driven correction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch


@dataclass(frozen=True)
class ActionLimits:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape:
            raise DimensionMismatch("lo and hi differ in shape")
        if np.any(lo >= hi):
            raise ValueError("ActionLimits need lo < hi elementwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def symmetric(cls, bound, m: int = 1):
        b = np.broadcast_to(np.asarray(bound, dtype=float), (m,))
        return cls(-b, b.copy())

    @property
    def m(self) -> int:
        return self.lo.shape[0]


@dataclass
class CombinedAction:
    a: np.ndarray
    raw: np.ndarray
    saturated: bool


def model_based_action(F, s) -> np.ndarray:
    """``a_phy = F s``. Accepts a single state or a batch of row states."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != F.shape[1]:
        raise DimensionMismatch(f"state has length {s.shape[-1]}, F expects {F.shape[1]}")
    return s @ F.T


def combine(a_drl, a_phy, limits: ActionLimits) -> CombinedAction:
    """Clamp the sum ``a_drl + a_phy`` to the actuator range."""
    a_drl = np.atleast_1d(np.asarray(a_drl, dtype=float))
    a_phy = np.atleast_1d(np.asarray(a_phy, dtype=float))
    if a_drl.shape != a_phy.shape or a_drl.shape[-1] != limits.m:
        raise DimensionMismatch(f"actions {a_drl.shape} and {a_phy.shape}, limits {limits.m}")
    raw = a_drl + a_phy
    a = np.clip(raw, limits.lo, limits.hi)
    return CombinedAction(a=a, raw=raw, saturated=bool(np.any(a != raw)))
