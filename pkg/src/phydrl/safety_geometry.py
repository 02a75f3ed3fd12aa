"""Polytopic safety sets, their normalized form, and ellipsoidal envelopes.

A safety set is the intersection of slabs ``v_lo <= D s - v <= v_hi``.
Normalization rewrites it as ``D_hi s <= 1`` and ``D_lo s >= d`` with
``d`` in {+1, -1}, which is the form the containment test needs.
The envelope is the ellipsoid ``{s : s' P s <= 1}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyRow, SingularP

COND_LIMIT = 1e12
CONTAINMENT_TOL = 1e-9


def _vec(x, name, size=None):
    x = np.asarray(x, dtype=float).reshape(-1)
    if size is not None and x.shape[0] != size:
        raise DimensionMismatch(f"{name} has length {x.shape[0]}, expected {size}")
    return x


@dataclass(frozen=True)
class SafetySet:
    D: np.ndarray
    v: np.ndarray
    v_hi: np.ndarray
    v_lo: np.ndarray

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        h = D.shape[0]
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "v", _vec(self.v, "v", h))
        object.__setattr__(self, "v_hi", _vec(self.v_hi, "v_hi", h))
        object.__setattr__(self, "v_lo", _vec(self.v_lo, "v_lo", h))
        if np.any(np.all(D == 0.0, axis=1)):
            raise EmptyRow("D has an all-zero row")
        if np.any(self.v_lo >= self.v_hi):
            raise EmptyRow("every row needs v_lo < v_hi")

    @property
    def n(self) -> int:
        return self.D.shape[1]

    @property
    def h(self) -> int:
        return self.D.shape[0]

    @classmethod
    def box(cls, D, bound):
        """Symmetric slab set ``-bound <= D s <= bound``."""
        bound = np.atleast_1d(np.asarray(bound, dtype=float))
        D = np.atleast_2d(D)
        bound = np.broadcast_to(bound, (D.shape[0],))
        return cls(D, np.zeros_like(bound), bound, -bound)


@dataclass(frozen=True)
class NormalizedSafetySet:
    D_hi: np.ndarray
    D_lo: np.ndarray
    d: np.ndarray
    lam_hi: np.ndarray = field(default=None)
    lam_lo: np.ndarray = field(default=None)
    branch: np.ndarray = field(default=None)

    def contains(self, s) -> bool:
        s = np.asarray(s, dtype=float)
        if s.shape[-1] != self.D_hi.shape[1]:
            raise DimensionMismatch("state dimension does not match the set")
        return bool(np.all(self.D_hi @ s <= 1.0) and np.all(self.D_lo @ s >= self.d))

    def contains_many(self, S) -> np.ndarray:
        S = np.atleast_2d(S)
        return np.all(S @ self.D_hi.T <= 1.0, axis=1) & np.all(S @ self.D_lo.T >= self.d, axis=1)


@dataclass(frozen=True)
class SafetyEnvelope:
    P: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        if P.shape[0] != P.shape[1]:
            raise DimensionMismatch("P must be square")
        scale = max(np.abs(P).max(), 1e-300)
        if np.abs(P - P.T).max() > 1e-10 * scale:
            raise ValueError("P is not symmetric")
        P = 0.5 * (P + P.T)
        if np.linalg.eigvalsh(P).min() <= 0.0:
            raise ValueError("P is not positive definite")
        object.__setattr__(self, "P", P)

    @property
    def n(self) -> int:
        return self.P.shape[0]

    def inverse_quadratic(self, X) -> np.ndarray:
        """Row-wise ``x P^{-1} x'`` for the rows of ``X`` via a Cholesky solve."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n:
            raise DimensionMismatch("direction dimension does not match P")
        if np.linalg.cond(self.P) > COND_LIMIT:
            raise SingularP(f"cond(P) exceeds {COND_LIMIT:g}")
        L = np.linalg.cholesky(self.P)
        Y = np.linalg.solve(L, X.T)
        return np.sum(Y * Y, axis=0)


def normalize_safety_set(sset: SafetySet) -> NormalizedSafetySet:
    """Rewrite ``v_lo <= D s - v <= v_hi`` as ``D_hi s <= 1, D_lo s >= d``.

    Each row falls in exactly one of three cases on ``lo = v_lo + v`` and
    ``hi = v_hi + v``:

    * ``lo > 0``: both bounds positive, divide by ``hi`` / ``lo``, d = +1;
    * ``hi < 0``: both bounds negative, divide by ``lo`` / ``hi``, d = +1;
    * otherwise the slab straddles the origin, divide by ``hi`` / ``-lo``, d = -1.

    Rows with ``hi == 0`` or ``lo == 0`` land in the third case and are
    rejected with :class:`EmptyRow` since one scaling factor vanishes.
    """
    lo = sset.v_lo + sset.v
    hi = sset.v_hi + sset.v
    h = sset.h
    lam_hi = np.empty(h)
    lam_lo = np.empty(h)
    d = np.empty(h)
    branch = np.empty(h, dtype=int)
    for i in range(h):
        if lo[i] > 0:
            lam_hi[i], lam_lo[i], d[i], branch[i] = hi[i], lo[i], 1.0, 1
        elif hi[i] < 0:
            lam_hi[i], lam_lo[i], d[i], branch[i] = lo[i], hi[i], 1.0, 2
        else:
            lam_hi[i], lam_lo[i], d[i], branch[i] = hi[i], -lo[i], -1.0, 3
        if lam_hi[i] == 0.0 or lam_lo[i] == 0.0:
            raise EmptyRow(f"row {i} has a zero scaling factor")
    D_hi = sset.D / lam_hi[:, None]
    D_lo = sset.D / lam_lo[:, None]
    return NormalizedSafetySet(D_hi, D_lo, d, lam_hi, lam_lo, branch)


def ellipsoid_support(direction, envelope: SafetyEnvelope) -> float:
    """Maximum of ``direction . s`` over the envelope, ``sqrt(d' P^-1 d)``."""
    direction = _vec(direction, "direction", envelope.n)
    if not np.any(direction):
        raise ValueError("direction must be nonzero")
    return float(np.sqrt(envelope.inverse_quadratic(direction)[0]))


@dataclass
class ContainmentReport:
    value_hi: np.ndarray
    value_lo: np.ndarray
    d: np.ndarray
    pass_hi: np.ndarray
    pass_lo: np.ndarray

    @property
    def row_pass(self) -> np.ndarray:
        return self.pass_hi & self.pass_lo

    @property
    def contained(self) -> bool:
        return bool(np.all(self.row_pass))

    def lines(self) -> list[str]:
        out = []
        for i in range(len(self.d)):
            rel = ">= 1" if self.d[i] > 0 else "<= 1"
            out.append(
                f"row {i}: hi={self.value_hi[i]:.6f} (<= 1 {'ok' if self.pass_hi[i] else 'FAIL'}) "
                f"lo={self.value_lo[i]:.6f} ({rel} {'ok' if self.pass_lo[i] else 'FAIL'})"
            )
        out.append(f"contained: {self.contained}")
        return out


def check_envelope_containment(nset: NormalizedSafetySet, envelope: SafetyEnvelope,
                               tol: float = CONTAINMENT_TOL) -> ContainmentReport:
    if nset.D_hi.shape[1] != envelope.n:
        raise DimensionMismatch("safety set and envelope dimensions differ")
    value_hi = envelope.inverse_quadratic(nset.D_hi)
    value_lo = envelope.inverse_quadratic(nset.D_lo)
    pass_hi = value_hi <= 1.0 + tol
    pass_lo = np.where(nset.d > 0, value_lo >= 1.0 - tol, value_lo <= 1.0 + tol)
    return ContainmentReport(value_hi, value_lo, nset.d.copy(), pass_hi, pass_lo)


def envelope_membership(s, envelope: SafetyEnvelope) -> tuple[float, bool]:
    s = _vec(s, "s", envelope.n)
    value = float(s @ envelope.P @ s)
    return value, value <= 1.0


def set_membership(s, sset: SafetySet) -> bool:
    s = _vec(s, "s", sset.n)
    g = sset.D @ s - sset.v
    return bool(np.all(sset.v_lo <= g) and np.all(g <= sset.v_hi))


def set_membership_many(S, sset: SafetySet) -> np.ndarray:
    S = np.atleast_2d(S)
    G = S @ sset.D.T - sset.v
    return np.all((sset.v_lo <= G) & (G <= sset.v_hi), axis=1)
