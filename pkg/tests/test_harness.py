from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from phydrl import cartpole as cp
from phydrl.ddpg import TrainerConfig
from phydrl.harness import (GridSpec, TrainingConfig, Verdict, cartpole_design, classify_batch,
                            classify_sample, config_hash, evaluate_policy, final_decile_reward,
                            in_envelope, in_safety_set, load_run, performance_metric, rollout, run_training,
                            sweep_safe_area, train_cached, zero_policy)

P0 = cp.CartPoleParams()


@pytest.fixture(scope="module")
def design():
    return cartpole_design()


def tiny_config(steps=300, **kw):
    tc = TrainerConfig(steps=steps, hidden=(8, 8), warmup=50, batch_size=16, seed=4)
    return TrainingConfig(trainer=tc, episode_steps=100, **kw)


def test_performance_metric_geometry():
    L = P0.pole_length
    assert performance_metric(np.zeros(4), P0) == pytest.approx(1.0)
    assert performance_metric(np.array([0, 0, np.pi, 0]), P0) == pytest.approx(np.exp(-2 * L))


@given(x=st.floats(-1, 1), th=st.floats(-np.pi, np.pi))
def test_performance_metric_recomputed(x, th):
    L = P0.pole_length
    tip = np.array([x + L * np.sin(th), L * np.cos(th)])
    expect = np.exp(-np.linalg.norm(tip - np.array([0.0, L])))
    assert performance_metric(np.array([x, 0.3, th, -0.2]), P0) == pytest.approx(expect, rel=1e-12)


def test_classification_examples(design):
    assert classify_sample(np.zeros(4), zero_policy, design, P0, 300).verdict is Verdict.IE
    s = np.array([0.89, 0.0, 0.79, 0.0])
    assert classify_sample(s, zero_policy, design, P0, 300).verdict is Verdict.UNSAFE
    # outside the envelope but recovered by the model-based loop
    s = np.array([-0.8, 0.0, 0.0, 0.0])
    assert not in_envelope(s, design.P)
    assert classify_sample(s, zero_policy, design, P0, 600).verdict is Verdict.EE
    with pytest.raises(ValueError):
        classify_batch(np.zeros((1, 4)), zero_policy, design, P0, 0)


def test_verdicts_follow_trace(design, rng):
    S0 = rng.uniform([-0.9, -0.5, -0.8, -0.5], [0.9, 0.5, 0.8, 0.5], size=(20, 4))
    cells = classify_batch(S0, zero_policy, design, P0, 200)
    tr = rollout(zero_policy, S0, design, P0, 200, stop_on_exit=False)
    for k, c in enumerate(cells):
        states = tr.states[:, k]
        if c.verdict is Verdict.IE:
            assert np.all(in_envelope(states, design.P))
        elif c.verdict is Verdict.EE:
            assert not in_envelope(S0[k], design.P)
            assert np.all(in_safety_set(states))


def test_sweep_split_invariance(design):
    g = GridSpec(nx=7, ntheta=5)
    a = sweep_safe_area(zero_policy, design, P0, g, 200, chunks=1)
    b = sweep_safe_area(zero_policy, design, P0, g, 200, chunks=4)
    assert [c.verdict for c in a.cells] == [c.verdict for c in b.cells]
    assert sum(a.counts().values()) == 35
    assert a.safe_count == a.counts()["IE"] + a.counts()["EE"]


def test_evaluate_policy_summary(design):
    ev = evaluate_policy(zero_policy, design, P0, episodes=5, horizon=100)
    assert ev.episodes == 5 and 0 < ev.steps <= 500
    assert 0 <= ev.cert["invariant_or_stronger"] <= 1
    empty = evaluate_policy(zero_policy, design, P0, episodes=0)
    assert empty.steps == 0
    with pytest.raises(ValueError):
        evaluate_policy(zero_policy, design, P0, disturbance_mode="wind")
    dist = evaluate_policy(zero_policy, design, P0, episodes=3, horizon=50, disturbance_mode="uu")
    assert dist.steps > 0


def test_zero_step_training(design, tmp_path):
    res = run_training(tiny_config(steps=0), design, tmp_path)
    assert res.log_rows == []
    assert (tmp_path / "checkpoint" / "weights.npz").exists()
    assert (tmp_path / "training_log.csv").read_text().count("\n") == 1


def test_training_is_deterministic(design, tmp_path):
    run_training(tiny_config(), design, tmp_path / "a")
    run_training(tiny_config(), design, tmp_path / "b")
    a = (tmp_path / "a" / "training_log.csv").read_bytes()
    b = (tmp_path / "b" / "training_log.csv").read_bytes()
    assert a == b and a.count(b"\n") > 2
    wa = np.load(tmp_path / "a" / "checkpoint" / "weights.npz")
    wb = np.load(tmp_path / "b" / "checkpoint" / "weights.npz")
    for k in wa.files:
        np.testing.assert_array_equal(wa[k], wb[k])


@pytest.mark.parametrize("kw", [{"residual": False}, {"reward_mode": "clf"}, {"critic": "kn-2"},
                                {"disturbance": True}, {"init_mode": "box"}])
def test_training_variants_run(design, kw):
    res = run_training(tiny_config(steps=120, **kw), design)
    assert res.log_rows and np.isfinite(res.final_decile_reward())


def test_train_cached_reuses(design, tmp_path):
    cfg = tiny_config(steps=80)
    first = train_cached(cfg, design, tmp_path)
    mtime = (tmp_path / "checkpoint" / "weights.npz").stat().st_mtime_ns
    again = train_cached(cfg, design, tmp_path)
    assert (tmp_path / "checkpoint" / "weights.npz").stat().st_mtime_ns == mtime
    assert again.final_decile_reward() == first.final_decile_reward()
    run = load_run(tmp_path)
    obs = cp.observe(np.zeros((2, 4)))
    np.testing.assert_array_equal(run.policy()(obs), again.policy()(obs))


def test_final_decile_reward():
    rows = [{"step": s, "episode_reward": r} for s, r in [(10, 1.0), (50, 2.0), (95, 4.0), (100, 6.0)]]
    # smoothing window 2: episodes ending at >= 90 have means 3 and 5
    assert final_decile_reward(rows, 100, window=2) == pytest.approx(4.0)
    assert np.isnan(final_decile_reward([], 100))


def test_config_hash_stable():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": np.arange(3)}) != config_hash({"a": np.arange(4)})


def test_training_config_validation():
    with pytest.raises(ValueError):
        TrainingConfig(reward_mode="lqr")
    with pytest.raises(ValueError):
        run_training(replace(tiny_config(steps=5), critic="gru"))
