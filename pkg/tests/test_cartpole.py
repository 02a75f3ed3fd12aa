from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from phydrl import cartpole as cp
from phydrl import reference as ref
from phydrl.errors import NonFinite, RegionEmpty

P0 = cp.CartPoleParams()


def test_committed_parameters_reproduce_reference_model():
    plant = cp.linearized_model(P0)
    for fit, pub in ((plant.A, ref.A), (plant.B, ref.B)):
        nz = pub != 0
        assert np.all(np.abs(fit[nz] - pub[nz]) / np.abs(pub[nz]) < 0.02)
        np.testing.assert_array_equal(fit[~nz], 0.0)


def test_fit_round_trip():
    p = replace(P0, cart_mass=1.3, pole_mass=0.4, pole_half_length=0.7)
    plant = cp.linearized_model(p)
    back = cp.fit_linearization(plant.A, plant.B)
    for name in ("cart_mass", "pole_mass", "pole_half_length"):
        assert getattr(back, name) == pytest.approx(getattr(p, name), rel=1e-10)


def test_continuous_linearization_matches_numerical_jacobian():
    # independent oracle: central differences of the nonlinear accelerations
    p = P0.frictionless()
    Ac, Bc = cp.continuous_linearization(p)
    h = 1e-6
    J = np.zeros((4, 4))
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        up = np.array(cp.accelerations(e[None], 0.0, p)).ravel()
        dn = np.array(cp.accelerations(-e[None], 0.0, p)).ravel()
        J[[1, 3], k] = (up - dn) / (2 * h)
    J[0, 1] = J[2, 3] = 1.0
    np.testing.assert_allclose(Ac, J, atol=1e-6)
    up = np.array(cp.accelerations(np.zeros((1, 4)), h, p)).ravel()
    dn = np.array(cp.accelerations(np.zeros((1, 4)), -h, p)).ravel()
    np.testing.assert_allclose(Bc[[1, 3], 0], (up - dn) / (2 * h), atol=1e-6)


def test_linearization_structure():
    plant = cp.linearized_model(P0)
    doubled = cp.linearized_model(replace(P0, force_scale=2.0))
    np.testing.assert_allclose(doubled.B, 2 * plant.B)
    np.testing.assert_array_equal(doubled.A, plant.A)
    tiny = cp.linearized_model(replace(P0, dt=1e-9))
    np.testing.assert_allclose(tiny.A, np.eye(4), atol=1e-7)


def test_linear_regime_agreement():
    # nonlinear step vs the linearization of the same semi-implicit step:
    # the residual is second order, so residual / |s| halves with |s|
    p = P0.frictionless()
    Ac, Bc = cp.continuous_linearization(p)
    E = np.eye(4) + p.dt * Ac
    G = p.dt * Bc[:, 0]
    # positions use the updated velocities
    E[0] += p.dt * E[1] - np.eye(4)[1] * p.dt
    E[2] += p.dt * E[3] - np.eye(4)[3] * p.dt
    G = G + p.dt * np.array([G[1], 0.0, G[3], 0.0])
    direction = np.array([0.3, -0.5, 0.8, 0.4])
    ratios = []
    for scale in (0.01, 0.005, 0.0025):
        s = scale * direction
        a = 0.5 * scale
        err = np.linalg.norm(cp.step(s, a, p) - (E @ s + G * a))
        ratios.append(err / scale)
    assert ratios[1] < 0.6 * ratios[0] and ratios[2] < 0.6 * ratios[1]
    # and the published forward-Euler model differs from it only at O(dt^2)
    plant = cp.linearized_model(p)
    assert np.abs(E - plant.A).max() < 2 * p.dt ** 2 * np.abs(Ac).max()


def test_energy_drift_small_oscillation():
    p = P0.frictionless()
    s = np.array([0.0, 0.0, np.pi + 0.3, 0.0])
    E0 = cp.energy(s, p)
    E = []
    for _ in range(300):
        s = cp.step(s, 0.0, p)
        E.append(cp.energy(s, p))
    assert np.max(np.abs(np.array(E) - E0)) / abs(E0) < 0.01


def test_friction_dissipates():
    s = np.array([0.0, 1.0, np.pi + 0.3, 0.5])
    E = [cp.energy(s, P0)]
    for _ in range(600):
        s = cp.step(s, 0.0, P0)
        E.append(cp.energy(s, P0))
    assert E[-1] < E[0]


def test_batched_step_matches_single(rng):
    S = rng.uniform(-0.5, 0.5, size=(6, 4))
    A = rng.uniform(-20, 20, size=6)
    batch = cp.step(S, A, P0)
    for k in range(6):
        np.testing.assert_array_equal(batch[k], cp.step(S[k], A[k], P0))


def test_action_clamped():
    s = np.zeros(4)
    np.testing.assert_array_equal(cp.step(s, 100.0, P0), cp.step(s, 16.0, P0))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_raises():
    with pytest.raises(NonFinite):
        cp.step(np.array([0, np.inf, 0, 0]), 0.0, P0)


def test_terminated_predicate():
    assert cp.terminated([0.91, 0, 0, 0])
    assert not cp.terminated([0.89, 0, 0.79, 0])
    assert cp.terminated([0, 0, -0.8, 0])
    assert cp.terminated([0.9, 0, 0, 0])


def test_observation_layout():
    o = cp.observe([0.1, 0.2, 0.3, 0.4])
    np.testing.assert_allclose(o, [0.1, 0.2, np.sin(0.3), np.cos(0.3), 0.4])


def test_reset_modes(rng):
    zero = cp.InitRegion((0, 0, 0, 0), (0, 0, 0, 0))
    np.testing.assert_array_equal(cp.reset(rng, zero), 0.0)
    lo, hi = cp.envelope_bounding_box(ref.P)
    env = cp.InitRegion(lo, hi, "envelope", ref.P)
    S = cp.reset_many(rng, env, 200)
    assert np.all(np.einsum("ki,ij,kj->k", S, ref.P, S) <= 1.0)
    box = cp.InitRegion()
    S = cp.reset_many(rng, box, 10_000)
    for k in range(4):
        u = (S[:, k] - box.low[k]) / (box.high[k] - box.low[k])
        assert stats.kstest(u, "uniform").pvalue > 0.001
    with pytest.raises(RegionEmpty):
        cp.reset(rng, cp.InitRegion((2, 2, 2, 2), (3, 3, 3, 3), "envelope", np.eye(4), 50))


def test_determinism():
    def run(seed):
        rng = np.random.default_rng(seed)
        s = cp.reset(rng, cp.InitRegion())
        out = []
        for _ in range(50):
            s = cp.step(s, rng.uniform(-5, 5), P0)
            out.append(s)
        return np.array(out)
    np.testing.assert_array_equal(run(3), run(3))


@given(S=arrays(np.float64, 4, elements=st.floats(-1, 1)))
def test_torque_target_with_zero_disturbance_matches_force_target(S):
    torque = replace(P0, disturbance_target="torque")
    np.testing.assert_array_equal(cp.step(S, 3.0, P0, 0.0), cp.step(S, 3.0, torque, 0.0))


def test_params_validation():
    with pytest.raises(ValueError):
        replace(P0, pole_mass=0.0)
    with pytest.raises(ValueError):
        replace(P0, cart_friction=-1.0)
    with pytest.raises(ValueError):
        replace(P0, disturbance_target="wind")


def test_trajectory_csv(tmp_path):
    cp.write_trajectory_csv(tmp_path / "t.csv", [{"k": 0, "x": 0.1}])
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].split(",") == list(cp.TRAJECTORY_COLUMNS)
    assert lines[1].startswith("0,0.1,")
