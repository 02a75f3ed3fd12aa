"""Safety-embedded reward, the CLF-style baseline reward, and the runtime monitor.

With ``V(s) = s' P s`` the safety sub-reward is
``r = s' A_bar' P A_bar s - V(s_next)``, which vanishes on the
mismatch-free closed loop. The monitor certifies a transition as

* ``SAFETY_AND_STABILITY`` when ``r > (alpha - 1) V(s)``,
* ``SAFETY_INVARIANT`` when ``r >= alpha - 1``,
* ``NO_CERTIFICATE`` otherwise.
"""
from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch


class Certificate(enum.IntEnum):
    NO_CERTIFICATE = 0
    SAFETY_INVARIANT = 1
    SAFETY_AND_STABILITY = 2


@dataclass(frozen=True)
class RewardContext:
    P: np.ndarray
    A_bar: np.ndarray
    alpha: float

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        A_bar = np.atleast_2d(np.asarray(self.A_bar, dtype=float))
        if P.shape != A_bar.shape or P.shape[0] != P.shape[1]:
            raise DimensionMismatch(f"P is {P.shape}, A_bar is {A_bar.shape}")
        if np.linalg.eigvalsh(0.5 * (P + P.T)).min() <= 0:
            raise ValueError("P must be positive definite")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "A_bar", A_bar)
        # cached quadratic form of the nominal one-step prediction
        object.__setattr__(self, "_G", A_bar.T @ P @ A_bar)

    @property
    def n(self) -> int:
        return self.P.shape[0]


def _quad(M, s):
    # batched s' M s over the last axis
    return np.einsum("...i,ij,...j->...", s, M, s)


def _check(s, n, name="s"):
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != n:
        raise DimensionMismatch(f"{name} has length {s.shape[-1]}, expected {n}")
    return s


def safety_subreward(s, s_next, ctx: RewardContext):
    s = _check(s, ctx.n)
    s_next = _check(s_next, ctx.n, "s_next")
    return _quad(ctx._G, s) - _quad(ctx.P, s_next)


def performance_subreward(a_drl):
    a = np.asarray(a_drl, dtype=float)
    if a.ndim == 0:
        return -float(a * a)
    return -np.sum(a * a, axis=-1)


def total_reward(s, s_next, a_drl, ctx: RewardContext):
    return safety_subreward(s, s_next, ctx) + performance_subreward(a_drl)


def clf_reward(s, s_next, a_drl, P):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    s = _check(s, P.shape[0])
    s_next = _check(s_next, P.shape[0], "s_next")
    return _quad(P, s) - _quad(P, s_next) + performance_subreward(a_drl)


def theorem1_monitor(s, s_next, a_drl, ctx: RewardContext):
    """Certificate class of one transition (or an array of them for batches).

    ``a_drl`` does not enter the conditions; it is accepted so the monitor
    has the same signature as the reward functions.
    """
    s = _check(s, ctx.n)
    r = safety_subreward(s, s_next, ctx)
    V = _quad(ctx.P, s)
    a = ctx.alpha
    out = np.where(r > (a - 1.0) * V, Certificate.SAFETY_AND_STABILITY,
                   np.where(r >= a - 1.0, Certificate.SAFETY_INVARIANT,
                            Certificate.NO_CERTIFICATE))
    if np.ndim(out) == 0:
        return Certificate(int(out))
    return out.astype(int)


def certificate_fractions(verdicts) -> dict[str, float]:
    """Per-class fractions of a verdict stream, plus the 'invariant or stronger' share."""
    verdicts = [int(v) for v in np.ravel(verdicts)]
    total = len(verdicts)
    counts = Counter(verdicts)
    out = {c.name.lower(): (counts[int(c)] / total if total else 0.0) for c in Certificate}
    out["invariant_or_stronger"] = (
        (counts[Certificate.SAFETY_INVARIANT] + counts[Certificate.SAFETY_AND_STABILITY]) / total
        if total else 0.0)
    out["steps"] = total
    return out
