"""Cart-pole with viscous friction and a continuous force input.

State ``s = [x, v, theta, omega]``; ``theta = 0`` is upright and a positive
force pushes the cart toward positive ``x`` (which tips the pole toward
negative ``theta``). The equations are the classic rod-on-cart model with
pole half-length ``l``:

    temp   = (F + m l w^2 sin th - mu_c v) / M
    th_acc = (g sin th - cos th temp - mu_p w / (m l)) / (l (4/3 - m cos^2 th / M))
    x_acc  = temp - m l th_acc cos th / M

with ``M = m_cart + m_pole`` and ``F = force_scale * (a + d)``.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import NonFinite, RegionEmpty
from .lmi_design import PlantModel

DT = 1.0 / 30.0
X_LIMIT = 0.9
THETA_LIMIT = 0.8
TRAJECTORY_COLUMNS = ("k", "x", "v", "theta", "omega", "a_phy", "a_drl", "a",
                      "reward", "cert", "in_envelope", "in_safety_set")


@dataclass(frozen=True)
class CartPoleParams:
    # Fitted so the friction-free forward-Euler linearization reproduces the
    # published discrete model; see fit_linearization.
    cart_mass: float = 0.94020
    pole_mass: float = 0.23010
    pole_half_length: float = 0.32002
    gravity: float = 9.8
    # Viscous friction, strong enough that the linear design alone loses the
    # pole from part of the envelope.
    cart_friction: float = 3.5
    pivot_friction: float = 0.005
    dt: float = DT
    force_limit: float = 16.0
    force_scale: float = 1.0
    disturbance_target: str = "force"  # or "torque"

    def __post_init__(self):
        for name in ("cart_mass", "pole_mass", "pole_half_length", "gravity", "dt",
                     "force_limit", "force_scale"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.cart_friction < 0 or self.pivot_friction < 0:
            raise ValueError("friction coefficients must be non-negative")
        if self.disturbance_target not in ("force", "torque"):
            raise ValueError("disturbance_target must be 'force' or 'torque'")

    @property
    def total_mass(self) -> float:
        return self.cart_mass + self.pole_mass

    @property
    def pole_length(self) -> float:
        return 2.0 * self.pole_half_length

    def frictionless(self) -> "CartPoleParams":
        return replace(self, cart_friction=0.0, pivot_friction=0.0)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CartPoleState:
    x: float
    v: float
    theta: float
    omega: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.v, self.theta, self.omega])

    @classmethod
    def from_array(cls, s) -> "CartPoleState":
        return cls(*(float(v) for v in s))


def accelerations(S, force, p: CartPoleParams, torque=0.0):
    """Cart and pole accelerations for a batch of states ``S`` (N x 4)."""
    v, th, w = S[..., 1], S[..., 2], S[..., 3]
    m, l, M = p.pole_mass, p.pole_half_length, p.total_mass
    sin, cos = np.sin(th), np.cos(th)
    temp = (force + m * l * w * w * sin - p.cart_friction * v) / M
    th_acc = (p.gravity * sin - cos * temp - (p.pivot_friction * w - torque) / (m * l)) / (
        l * (4.0 / 3.0 - m * cos * cos / M))
    x_acc = temp - m * l * th_acc * cos / M
    return x_acc, th_acc


def step(S, action, p: CartPoleParams, disturbance=0.0):
    """One semi-implicit Euler step. ``S`` may be a single state or a batch."""
    S = np.asarray(S, dtype=float)
    a = np.clip(np.asarray(action, dtype=float).reshape(np.shape(S)[:-1]), -p.force_limit, p.force_limit)
    d = np.asarray(disturbance, dtype=float).reshape(np.shape(S)[:-1]) if np.ndim(disturbance) else disturbance
    if p.disturbance_target == "force":
        force, torque = p.force_scale * (a + d), 0.0
    else:
        force, torque = p.force_scale * a, d
    x_acc, th_acc = accelerations(S, force, p, torque)
    out = np.empty_like(S)
    out[..., 1] = S[..., 1] + p.dt * x_acc
    out[..., 0] = S[..., 0] + p.dt * out[..., 1]
    out[..., 3] = S[..., 3] + p.dt * th_acc
    out[..., 2] = S[..., 2] + p.dt * out[..., 3]
    if not np.all(np.isfinite(out)):
        raise NonFinite("cart-pole state diverged")
    return out


def observe(S) -> np.ndarray:
    """``[x, v, sin theta, cos theta, omega]``."""
    S = np.asarray(S, dtype=float)
    return np.stack([S[..., 0], S[..., 1], np.sin(S[..., 2]), np.cos(S[..., 2]), S[..., 3]], axis=-1)


def terminated(S, x_limit: float = X_LIMIT, theta_limit: float = THETA_LIMIT):
    S = np.asarray(S, dtype=float)
    out = (np.abs(S[..., 0]) >= x_limit) | (np.abs(S[..., 2]) >= theta_limit)
    return bool(out) if np.ndim(out) == 0 else out


def energy(S, p: CartPoleParams):
    """Total mechanical energy (kinetic + potential, pivot height as zero)."""
    S = np.asarray(S, dtype=float)
    v, th, w = S[..., 1], S[..., 2], S[..., 3]
    m, l = p.pole_mass, p.pole_half_length
    kin = 0.5 * p.total_mass * v * v + m * l * v * w * np.cos(th) + (2.0 / 3.0) * m * l * l * w * w
    return kin + m * p.gravity * l * np.cos(th)


@dataclass(frozen=True)
class InitRegion:
    """Uniform box over the state; ``envelope`` restricts it to ``s' P s <= 1``."""

    low: tuple = (-0.9, -1.0, -0.8, -1.0)
    high: tuple = (0.9, 1.0, 0.8, 1.0)
    mode: str = "box"
    P: np.ndarray | None = None
    max_attempts: int = 10_000

    def __post_init__(self):
        if self.mode not in ("box", "envelope"):
            raise ValueError("mode must be 'box' or 'envelope'")
        if self.mode == "envelope" and self.P is None:
            raise ValueError("envelope mode needs P")
        if np.any(np.asarray(self.low) > np.asarray(self.high)):
            raise ValueError("low must not exceed high")


def reset(rng, region: InitRegion) -> np.ndarray:
    low, high = np.asarray(region.low, float), np.asarray(region.high, float)
    for _ in range(region.max_attempts):
        s = rng.uniform(low, high) if np.any(high > low) else low.copy()
        if region.mode == "box" or s @ region.P @ s <= 1.0:
            return s
    raise RegionEmpty(f"no accepted initial state after {region.max_attempts} attempts")


def reset_many(rng, region: InitRegion, count: int) -> np.ndarray:
    return np.array([reset(rng, region) for _ in range(count)])


def envelope_bounding_box(P) -> tuple[tuple, tuple]:
    """Axis-aligned box around ``s' P s <= 1``: half-widths ``sqrt(diag(P^-1))``."""
    half = np.sqrt(np.diag(np.linalg.inv(P)))
    return tuple(-half), tuple(half)


def continuous_linearization(p: CartPoleParams):
    """``(Ac, Bc)`` of the friction-free model at the upright equilibrium."""
    m, l, M, g = p.pole_mass, p.pole_half_length, p.total_mass, p.gravity
    Leff = l * (4.0 / 3.0 - m / M)
    a_wth = g / Leff
    b_w = -p.force_scale / (M * Leff)
    a_vth = -m * l * a_wth / M
    b_v = p.force_scale / M - m * l * b_w / M
    Ac = np.array([[0, 1, 0, 0], [0, 0, a_vth, 0], [0, 0, 0, 1], [0, 0, a_wth, 0]], dtype=float)
    Bc = np.array([[0], [b_v], [0], [b_w]], dtype=float)
    return Ac, Bc


def linearized_model(p: CartPoleParams) -> PlantModel:
    """Forward-Euler discretization ``(I + dt Ac, dt Bc)`` of the friction-free model."""
    Ac, Bc = continuous_linearization(p)
    return PlantModel(np.eye(4) + p.dt * Ac, p.dt * Bc)


def fit_linearization(A, B, dt: float = DT, gravity: float = 9.8,
                      force_scale: float = 1.0) -> CartPoleParams:
    """Physical parameters whose linearization reproduces a forward-Euler ``(A, B)``.

    With ``Leff = l (4/3 - m/M)`` and ``c = m l / M`` the continuous entries are
    ``g/Leff``, ``-c g/Leff``, ``k/M + c k/(M Leff)`` and ``-k/(M Leff)``.
    Gravity and the force scale ``k`` are fixed; the first, second and fourth
    entries then determine ``Leff``, ``c`` and ``M``, and ``Leff`` splits into
    ``m`` and ``l``. The remaining entry is a consistency check.
    """
    A = np.asarray(A, float)
    B = np.asarray(B, float).reshape(-1)
    a_wth = A[3, 2] / dt
    a_vth = A[1, 2] / dt
    b_w = B[3] / dt
    Leff = gravity / a_wth
    c = -a_vth / a_wth
    M = -force_scale / (b_w * Leff)
    ml = c * M
    # Leff = l (4/3) - c  ->  l = 3 (Leff + c) / 4
    l = 0.75 * (Leff + c)
    m = ml / l
    return CartPoleParams(cart_mass=M - m, pole_mass=m, pole_half_length=l, gravity=gravity,
                          dt=dt, force_scale=force_scale)


def write_trajectory_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRAJECTORY_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k, "") for k in TRAJECTORY_COLUMNS})
