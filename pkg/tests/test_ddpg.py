import numpy as np
import pytest
from hypothesis import given, strategies as st

from phydrl.ddpg import (Batch, ReplayBuffer, TrainerConfig, Transition, act, critic_target,
                         critic_update, load_actor, make_agent, policy, save_checkpoint, soft_update)
from phydrl.errors import NonFinite
from phydrl.nn import MLP, Adam, SGDMomentum, make_optimizer


def _t(k):
    return Transition(np.full(2, k, float), np.array([k / 10]), float(k), np.full(2, k + 1.0), k % 2 == 0)


@given(cap=st.integers(1, 20), n=st.integers(0, 60))
def test_replay_buffer_is_fifo(cap, n):
    buf = ReplayBuffer(cap, 2, 1)
    for k in range(n):
        buf.add(_t(k))
    assert len(buf) == min(n, cap)
    kept = sorted(buf.r[:len(buf)])
    assert kept == [float(k) for k in range(max(0, n - cap), n)]


def test_buffer_sampling_consistent(rng):
    buf = ReplayBuffer(50, 2, 1)
    for k in range(30):
        buf.add(_t(k))
    b = buf.sample(64, rng)
    assert len(b) == 64
    np.testing.assert_array_equal(b.s[:, 0], b.r)
    np.testing.assert_array_equal(b.s_next[:, 0], b.r + 1)
    np.testing.assert_array_equal(b.terminal, b.r % 2 == 0)


def test_transition_rejects_nan():
    with pytest.raises(NonFinite):
        Transition(np.zeros(2), np.array([np.nan]), 0.0, np.zeros(2), False)


def test_critic_target_zeroes_bootstrap_on_terminal(rng):
    agent = make_agent(2, 1, TrainerConfig(hidden=(4,)), rng)
    b = Batch(np.zeros((2, 2)), np.zeros((2, 1)), np.array([1.0, 2.0]), rng.normal(size=(2, 2)),
              np.array([True, False]))
    y = critic_target(b, agent.critic.target, agent.actor.target, 0.9)
    q, _ = agent.critic.target.forward(np.hstack([b.s_next, policy(agent.actor.target, b.s_next, 1.0)]))
    assert y[0] == 1.0
    assert y[1] == pytest.approx(2.0 + 0.9 * q[1, 0])


def test_soft_update_interpolates(rng):
    agent = make_agent(2, 1, TrainerConfig(hidden=(4,)), rng)
    for p in agent.actor.online.params:
        p += 1.0
    before = [p.copy() for p in agent.actor.target.params]
    soft_update(agent.actor, 0.25)
    for t, b, o in zip(agent.actor.target.params, before, agent.actor.online.params):
        np.testing.assert_allclose(t, 0.75 * b + 0.25 * o)
    soft_update(agent.actor, 1.0)
    for t, o in zip(agent.actor.target.params, agent.actor.online.params):
        np.testing.assert_array_equal(t, o)


def test_act_respects_scale(rng):
    agent = make_agent(3, 1, TrainerConfig(hidden=(4,)), rng)
    a = act(agent.actor.online, np.zeros(3), 100.0, rng, 2.0)
    assert a.shape == (1,) and abs(a[0]) <= 2.0


@pytest.mark.parametrize("kind", ["sgd", "adam"])
def test_critic_regression_converges(kind):
    rng = np.random.default_rng(0)
    cfg = TrainerConfig(hidden=(16,), optimizer=kind, critic_lr=1e-2, gamma=0.0)
    agent = make_agent(2, 1, cfg, rng)
    S = rng.uniform(-1, 1, size=(64, 2))
    A = rng.uniform(-1, 1, size=(64, 1))
    b = Batch(S, A, S[:, 0] - A[:, 0], S, np.ones(64, bool))
    first = critic_update(b, agent, cfg)
    for _ in range(500):
        last = critic_update(b, agent, cfg)
    assert last < 0.1 * first


def test_optimizers_minimise_quadratic():
    for opt in (SGDMomentum(0.05), Adam(0.1)):
        x = np.array([3.0, -2.0])
        for _ in range(300):
            opt.step([x], [2 * x])
        assert np.linalg.norm(x) < 1e-2
    with pytest.raises(ValueError):
        make_optimizer("rmsprop", 0.1)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainerConfig(gamma=1.5)
    with pytest.raises(ValueError):
        TrainerConfig(target_tau=0.0)


def test_checkpoint_round_trip(tmp_path, rng):
    agent = make_agent(5, 1, TrainerConfig(hidden=(8, 4)), rng)
    save_checkpoint(tmp_path, agent, {"note": "x"})
    actor, man = load_actor(tmp_path)
    obs = rng.normal(size=(3, 5))
    np.testing.assert_array_equal(actor(obs), agent.actor.online(obs))
    assert man["note"] == "x" and man["trainer"]["hidden"] == [8, 4]
    assert isinstance(actor, MLP)
