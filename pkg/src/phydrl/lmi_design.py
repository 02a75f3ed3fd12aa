"""Model-based design by analytic centering.

The design maximizes ``log det Q`` over symmetric ``Q`` and ``R`` subject to

* the invariance LMI ``[[a Q, (A Q + B R)'], [A Q + B R, Q]] > 0``,
* envelope-in-set conditions ``D_i Q D_i' <= 1`` (linear in ``Q``),
* optionally, an actuator bound ``|c_j F s| <= z_j`` on the envelope,
  written as ``[[z_j^2, c_j R], [R' c_j', Q]] >= 0``,

and returns ``P = Q^-1``, ``F = R Q^-1`` and ``A_bar = A + B F``.
The solver is a plain log-barrier method with Newton centering steps; the
problems here have at most a few dozen scalar unknowns.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, Infeasible, NotConverged, Unsupported
from .safety_geometry import NormalizedSafetySet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlantModel:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
            raise DimensionMismatch(f"A is {A.shape}, B is {B.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ValueError("plant matrices must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass
class DesignConfig:
    alpha: float = 0.98
    feasibility_tol: float = 1e-7
    max_iterations: int = 500
    t0: float = 1.0
    mu: float = 10.0
    gap_tol: float = 1e-8
    # Bound on |C F s| over the envelope; None disables the constraint.
    action_bound: float | None = None
    action_matrix: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.feasibility_tol <= 0:
            raise ValueError("feasibility_tol must be positive")
        if self.mu <= 1.0 or self.t0 <= 0.0:
            raise ValueError("barrier schedule needs t0 > 0 and mu > 1")


@dataclass
class DesignSolution:
    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    F: np.ndarray
    A_bar: np.ndarray
    logdet_history: list = field(default_factory=list)
    newton_steps: int = 0
    gap: float = float("nan")

    @property
    def logdet_Q(self) -> float:
        return float(np.linalg.slogdet(self.Q)[1])


@dataclass
class VerificationReport:
    block_min_eig: float
    reduced_min_eig: float
    Q_min_eig: float
    tol: float

    @property
    def block_ok(self) -> bool:
        return self.block_min_eig > self.tol

    @property
    def reduced_ok(self) -> bool:
        return self.reduced_min_eig > self.tol

    @property
    def passed(self) -> bool:
        return self.block_ok and self.reduced_ok and self.Q_min_eig > self.tol

    @property
    def schur_agree(self) -> bool:
        """Block and reduced forms agree on definiteness (given Q > 0)."""
        return (self.block_min_eig > 0) == (self.reduced_min_eig > 0)

    def lines(self) -> list[str]:
        return [
            f"block LMI min eig:        {self.block_min_eig:.6e}",
            f"alpha P - A_bar' P A_bar: {self.reduced_min_eig:.6e}",
            f"Q min eig:                {self.Q_min_eig:.6e}",
            f"schur forms agree:        {self.schur_agree}",
            f"passed (tol {self.tol:g}):    {self.passed}",
        ]


def compute_closed_loop(plant: PlantModel, F) -> np.ndarray:
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.shape != (plant.m, plant.n):
        raise DimensionMismatch(f"F is {F.shape}, expected {(plant.m, plant.n)}")
    return plant.A + plant.B @ F


def spectral_radius(M) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.atleast_2d(M)))))


def lmi_block(Q, R, plant: PlantModel, alpha: float) -> np.ndarray:
    AQBR = plant.A @ Q + plant.B @ R
    return np.block([[alpha * Q, AQBR.T], [AQBR, Q]])


def verify_lmi(sol: DesignSolution, plant: PlantModel, alpha: float,
               tol: float = 0.0) -> VerificationReport:
    Q = 0.5 * (sol.Q + sol.Q.T)
    P = 0.5 * (sol.P + sol.P.T)
    M = lmi_block(Q, sol.R, plant, alpha)
    M = 0.5 * (M + M.T)
    A_bar = plant.A + plant.B @ sol.F
    red = alpha * P - A_bar.T @ P @ A_bar
    red = 0.5 * (red + red.T)
    return VerificationReport(
        block_min_eig=float(np.linalg.eigvalsh(M).min()),
        reduced_min_eig=float(np.linalg.eigvalsh(red).min()),
        Q_min_eig=float(np.linalg.eigvalsh(Q).min()),
        tol=tol,
    )


# --------------------------------------------------------------------------
# barrier machinery


class _AffineBlock:
    """``G(x) = G0 + sum_i x_i G_i`` restricted to be positive definite."""

    def __init__(self, G0, Gi, name):
        self.G0 = np.asarray(G0, dtype=float)
        self.Gi = np.asarray(Gi, dtype=float)
        self.name = name

    @property
    def size(self) -> int:
        return self.G0.shape[0]

    def value(self, x, shift=0.0):
        G = self.G0 + np.tensordot(x, self.Gi, axes=1)
        if shift:
            G = G + shift * np.eye(self.size)
        return 0.5 * (G + G.T)

    def min_eig(self, x) -> float:
        return float(np.linalg.eigvalsh(self.value(x)).min())


def _chol_logdet(G):
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        return None
    return 2.0 * np.sum(np.log(np.diag(L)))


class _Problem:
    def __init__(self, plant: PlantModel, nset: NormalizedSafetySet, cfg: DesignConfig,
                 alpha_margin: float = 0.0):
        n, m = plant.n, plant.m
        self.n, self.m = n, m
        iu = np.triu_indices(n)
        self.q_idx = list(zip(*iu))
        nq = len(self.q_idx)
        self.nq = nq
        self.nvar = nq + m * n

        Qb = np.zeros((self.nvar, n, n))
        Rb = np.zeros((self.nvar, m, n))
        for k, (i, j) in enumerate(self.q_idx):
            Qb[k, i, j] = 1.0
            Qb[k, j, i] = 1.0
        for k in range(m * n):
            Rb[nq + k, k // n, k % n] = 1.0
        self.Qb, self.Rb = Qb, Rb

        tol = cfg.feasibility_tol
        blocks = []
        # Invariance LMI at alpha - alpha_margin, so that the reduced form at
        # alpha keeps alpha_margin * P >= alpha_margin / lambda_max(Q) of slack.
        alpha = cfg.alpha - alpha_margin
        Gi = np.stack([lmi_block(Qb[k], Rb[k], plant, alpha) for k in range(self.nvar)])
        blocks.append(_AffineBlock(-tol * np.eye(2 * n), Gi, "lmi"))

        rows = []
        for i in range(nset.D_hi.shape[0]):
            rows.append(nset.D_hi[i])
            if nset.d[i] > 0:
                raise Unsupported(
                    f"row {i} needs D_lo Q D_lo' >= 1, which is not a convex constraint")
            if not np.allclose(nset.D_lo[i], nset.D_hi[i]):
                rows.append(nset.D_lo[i])
        for k, row in enumerate(rows):
            gi = np.array([-(row @ Qb[j] @ row) for j in range(self.nvar)])
            blocks.append(_AffineBlock(np.ones((1, 1)), gi[:, None, None], f"contain{k}"))

        if cfg.action_bound is not None:
            C = np.eye(m) if cfg.action_matrix is None else np.atleast_2d(cfg.action_matrix)
            z2 = float(cfg.action_bound) ** 2
            for j in range(C.shape[0]):
                c = C[j]
                G0 = np.zeros((n + 1, n + 1))
                G0[0, 0] = z2
                Gi = np.zeros((self.nvar, n + 1, n + 1))
                for k in range(self.nvar):
                    cr = c @ Rb[k]
                    Gi[k, 0, 1:] = cr
                    Gi[k, 1:, 0] = cr
                    Gi[k, 1:, 1:] = Qb[k]
                blocks.append(_AffineBlock(G0, Gi, f"action{j}"))
        self.blocks = blocks
        self.degree = sum(b.size for b in blocks)

    def unpack(self, x):
        Q = np.tensordot(x, self.Qb, axes=1)
        R = np.tensordot(x, self.Rb, axes=1)
        return Q, R

    def pack(self, Q, R):
        x = np.zeros(self.nvar)
        for k, (i, j) in enumerate(self.q_idx):
            x[k] = Q[i, j]
        x[self.nq:] = np.asarray(R).reshape(-1)
        return x


def _barrier_terms(block, G):
    """Gradient and Hessian of ``-log det G(x)`` for one affine block."""
    Ginv = np.linalg.inv(G)
    W = np.einsum("ab,ibc->iac", Ginv, block.Gi)
    g = -np.einsum("iaa->i", W)
    H = np.einsum("iab,jba->ij", W, W)
    return g, H


def _newton_center(f_eval, x, max_steps, stop_when=None):
    """Damped Newton minimization of a self-concordant barrier objective."""
    steps = 0
    while steps < max_steps:
        val, g, H = f_eval(x, derivs=True)
        try:
            dx = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            dx = -np.linalg.lstsq(H, g, rcond=None)[0]
        lam2 = float(-g @ dx)
        steps += 1
        # the Armijo test cannot resolve decreases below round-off in val
        if lam2 / 2.0 <= 1e-10 + 1e-14 * abs(val):
            break
        step = 1.0
        while True:
            trial = f_eval(x + step * dx)
            if trial is not None and trial <= val - 0.25 * step * lam2:
                break
            step *= 0.5
            if step < 1e-14:
                return x, steps
        x = x + step * dx
        if stop_when is not None and stop_when(x):
            break
    return x, steps


def _phase_one(prob: _Problem, x0, max_steps):
    """Find ``x`` with every block strictly positive definite.

    Minimizes ``s`` subject to ``G_k(x) + s I > 0`` (and ``s > -1``), stopping
    as soon as ``s < 0``.
    """
    s0 = max(0.0, -min(b.min_eig(x0) for b in prob.blocks)) + 1.0
    z = np.append(x0, s0)
    nvar = prob.nvar
    used = 0
    t = 1.0

    def f_eval(z, derivs=False):
        x, s = z[:nvar], z[nvar]
        if s <= -1.0:
            return None
        total = t * s - np.log(s + 1.0)
        grads = np.zeros(nvar + 1)
        hess = np.zeros((nvar + 1, nvar + 1))
        for b in prob.blocks:
            G = b.value(x, shift=s)
            ld = _chol_logdet(G)
            if ld is None:
                return None
            total -= ld
            if derivs:
                Gi_aug = np.concatenate([b.Gi, np.eye(b.size)[None]], axis=0)
                Ginv = np.linalg.inv(G)
                W = np.einsum("ab,ibc->iac", Ginv, Gi_aug)
                grads += -np.einsum("iaa->i", W)
                hess += np.einsum("iab,jba->ij", W, W)
        if not derivs:
            return total
        grads[nvar] += t - 1.0 / (s + 1.0)
        hess[nvar, nvar] += 1.0 / (s + 1.0) ** 2
        return total, grads, hess

    def feasible(z):
        return z[nvar] < 0.0

    while used < max_steps:
        z, k = _newton_center(f_eval, z, max_steps - used, stop_when=feasible)
        used += k
        if feasible(z):
            return z[:nvar], used
        gap = (prob.degree + 1) / t
        if gap < 1e-10:
            break
        t *= 10.0
    if z[nvar] >= 0.0:
        raise Infeasible(f"no strictly feasible design (phase-one residual {z[nvar]:.3e})")
    return z[:nvar], used


def solve_design(plant: PlantModel, nset: NormalizedSafetySet, cfg: DesignConfig | None = None) -> DesignSolution:
    """Maximum-volume invariant envelope and its feedback gain.

    Raises :class:`Infeasible` when phase one cannot find a strictly feasible
    point and :class:`NotConverged` when the Newton-step budget runs out
    before the duality-gap proxy drops below ``cfg.gap_tol``.
    """
    cfg = cfg or DesignConfig()
    if nset.D_hi.shape[1] != plant.n:
        raise DimensionMismatch("safety set and plant dimensions differ")
    # At the optimum the LMI is active, so the reduced form alpha P - A_bar' P A_bar
    # sits near zero. Re-solve with a slightly smaller alpha until it clears the margin.
    margin = 0.0
    for _ in range(6):
        sol = _solve_once(plant, nset, cfg, margin)
        if verify_lmi(sol, plant, cfg.alpha, cfg.feasibility_tol).passed:
            return sol
        lam_max = float(np.linalg.eigvalsh(sol.Q).max())
        margin = max(10.0 * margin, 4.0 * cfg.feasibility_tol * lam_max)
    return sol


def _solve_once(plant, nset, cfg, alpha_margin):
    prob = _Problem(plant, nset, cfg, alpha_margin)

    # Q0 = eps I, halving eps until every containment row is strict
    eps = 1.0
    rows = np.vstack([nset.D_hi, nset.D_lo])
    while np.max(eps * np.sum(rows * rows, axis=1)) >= 0.5:
        eps *= 0.5
    x, used = _phase_one(prob, prob.pack(eps * np.eye(plant.n), np.zeros((plant.m, plant.n))),
                         cfg.max_iterations)

    t = cfg.t0
    history = []

    def f_eval(x, derivs=False):
        Q, _ = prob.unpack(x)
        ldq = _chol_logdet(Q)
        if ldq is None:
            return None
        total = -t * ldq
        if derivs:
            Qinv = np.linalg.inv(Q)
            Wq = np.einsum("ab,ibc->iac", Qinv, prob.Qb)
            grads = -t * np.einsum("iaa->i", Wq)
            hess = t * np.einsum("iab,jba->ij", Wq, Wq)
        for b in prob.blocks:
            G = b.value(x)
            ld = _chol_logdet(G)
            if ld is None:
                return None
            total -= ld
            if derivs:
                g, H = _barrier_terms(b, G)
                grads += g
                hess += H
        if not derivs:
            return total
        return total, grads, hess

    while True:
        x, k = _newton_center(f_eval, x, cfg.max_iterations - used)
        used += k
        Q, _ = prob.unpack(x)
        history.append(float(np.linalg.slogdet(Q)[1]))
        gap = prob.degree / t
        log.debug("t=%g logdetQ=%.8f gap=%.2e steps=%d", t, history[-1], gap, used)
        if gap < cfg.gap_tol:
            break
        if used >= cfg.max_iterations:
            raise NotConverged(f"iteration cap {cfg.max_iterations} reached with gap {gap:.2e}")
        t *= cfg.mu

    Q, R = prob.unpack(x)
    Q = 0.5 * (Q + Q.T)
    P = np.linalg.inv(Q)
    P = 0.5 * (P + P.T)
    F = R @ P
    A_bar = plant.A + plant.B @ F
    return DesignSolution(Q=Q, R=R, P=P, F=F, A_bar=A_bar, logdet_history=history,
                          newton_steps=used, gap=gap)
