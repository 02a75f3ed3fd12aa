"""Deterministic policy gradient trainer pieces.

The critic ``Q(o, u)`` is fit to ``y = R + gamma * Q'(o', pi'(o'))`` and the
actor ascends ``Q(o, pi(o))`` through the chain rule. Actor outputs are
``scale * tanh(.)``; the scale is applied outside the network so the last
layer stays a plain tanh.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import NonFinite
from .nn import MLP, make_optimizer


@dataclass
class Transition:
    s: np.ndarray
    a_drl: np.ndarray
    reward: float
    s_next: np.ndarray
    terminal: bool

    def __post_init__(self):
        for v in (self.s, self.a_drl, self.s_next, self.reward):
            if not np.all(np.isfinite(v)):
                raise NonFinite("transition has non-finite entries")


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    terminal: np.ndarray

    def __len__(self) -> int:
        return self.r.shape[0]


class ReplayBuffer:
    """Ring buffer with FIFO eviction and uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = int(capacity)
        self.s = np.zeros((self.capacity, obs_dim))
        self.a = np.zeros((self.capacity, act_dim))
        self.r = np.zeros(self.capacity)
        self.s_next = np.zeros((self.capacity, obs_dim))
        self.terminal = np.zeros(self.capacity, dtype=bool)
        self.size = 0
        self.head = 0

    def __len__(self) -> int:
        return self.size

    def add(self, t: Transition) -> None:
        i = self.head
        self.s[i], self.a[i], self.r[i] = t.s, t.a_drl, t.reward
        self.s_next[i], self.terminal[i] = t.s_next, t.terminal
        self.head = (self.head + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def indices(self, batch_size: int, rng) -> np.ndarray:
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size: int, rng) -> Batch:
        idx = self.indices(batch_size, rng)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.terminal[idx])


@dataclass
class TrainerConfig:
    gamma: float = 0.99
    critic_lr: float = 1e-3
    actor_lr: float = 1e-4
    batch_size: int = 64
    buffer_capacity: int = 100_000
    target_tau: float = 0.005
    action_scale: float = 10.0
    exploration_noise_std: float = 1.0  # 0.1 of the action scale
    steps: int = 200_000
    seed: int = 0
    optimizer: str = "sgd"
    hidden: tuple = (256, 128, 64)
    warmup: int = 1000

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 < self.target_tau <= 1.0:
            raise ValueError("target_tau must lie in (0, 1]")
        if self.critic_lr <= 0 or self.actor_lr <= 0 or self.batch_size < 1:
            raise ValueError("learning rates and batch size must be positive")
        self.hidden = tuple(int(h) for h in self.hidden)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class NetworkPair:
    online: object
    target: object

    @classmethod
    def of(cls, net) -> "NetworkPair":
        return cls(net, net.copy())


@dataclass
class Agent:
    actor: NetworkPair
    critic: NetworkPair
    cfg: TrainerConfig
    actor_opt: object = field(default=None)
    critic_opt: object = field(default=None)

    def __post_init__(self):
        if self.actor_opt is None:
            self.actor_opt = make_optimizer(self.cfg.optimizer, self.cfg.actor_lr)
        if self.critic_opt is None:
            self.critic_opt = make_optimizer(self.cfg.optimizer, self.cfg.critic_lr)


def make_agent(obs_dim: int, act_dim: int, cfg: TrainerConfig, rng, critic=None) -> Agent:
    """Actor ``o -> tanh`` and critic ``[o; u] -> Q`` with ReLU hidden layers."""
    h = list(cfg.hidden)
    actor = MLP.create([obs_dim] + h + [act_dim], ["relu"] * len(h) + ["tanh"], rng)
    if critic is None:
        critic = MLP.create([obs_dim + act_dim] + h + [1], ["relu"] * len(h) + ["linear"], rng)
    return Agent(NetworkPair.of(actor), NetworkPair.of(critic), cfg)


def policy(actor, obs, scale: float) -> np.ndarray:
    out, _ = actor.forward(obs)
    return scale * out


def critic_target(batch: Batch, critic_target_net, actor_target_net, gamma: float,
                  scale: float = 1.0) -> np.ndarray:
    a_next = policy(actor_target_net, batch.s_next, scale)
    q_next, _ = critic_target_net.forward(np.hstack([batch.s_next, a_next]))
    boot = np.where(batch.terminal, 0.0, q_next[:, 0])
    return batch.r + gamma * boot


def critic_loss_and_grads(critic, batch: Batch, y: np.ndarray):
    q, caches = critic.forward(np.hstack([batch.s, batch.a]))
    err = q[:, 0] - y
    loss = float(np.mean(err * err))
    g = (2.0 / len(y)) * err[:, None]
    grads, _ = critic.backward(caches, g)
    return loss, grads


def critic_update(batch: Batch, agent: Agent, cfg: TrainerConfig | None = None) -> float:
    cfg = cfg or agent.cfg
    y = critic_target(batch, agent.critic.target, agent.actor.target, cfg.gamma, cfg.action_scale)
    loss, grads = critic_loss_and_grads(agent.critic.online, batch, y)
    agent.critic_opt.step(agent.critic.online.params, grads)
    return loss


def actor_objective_and_grads(actor, critic, obs, scale: float):
    """``J = mean Q(o, scale * pi(o))`` and its gradient w.r.t. actor parameters."""
    u, a_caches = actor.forward(obs)
    x = np.hstack([obs, scale * u])
    q, c_caches = critic.forward(x)
    J = float(np.mean(q))
    gq = np.full_like(q, 1.0 / q.shape[0])
    _, gx = critic.backward(c_caches, gq)
    gu = scale * gx[:, obs.shape[1]:]
    # ascend J: hand the optimizer the gradient of -J
    grads, _ = actor.backward(a_caches, -gu)
    return J, grads


def actor_update(batch: Batch, agent: Agent, cfg: TrainerConfig | None = None) -> float:
    cfg = cfg or agent.cfg
    J, grads = actor_objective_and_grads(agent.actor.online, agent.critic.online, batch.s,
                                         cfg.action_scale)
    agent.actor_opt.step(agent.actor.online.params, grads)
    return J


def soft_update(pair: NetworkPair, tau: float) -> None:
    for t, o in zip(pair.target.params, pair.online.params):
        t *= 1.0 - tau
        t += tau * o


def act(actor, observation, noise_std: float, rng, scale: float) -> np.ndarray:
    a = policy(actor, observation, scale)
    if np.ndim(observation) == 1:
        a = a[0]
    if noise_std > 0:
        a = a + rng.normal(0.0, noise_std, size=a.shape)
    return np.clip(a, -scale, scale)


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(directory, agent: Agent, extra: dict | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    arrays = {}
    shapes = {}
    for name, net in (("actor", agent.actor.online), ("critic", agent.critic.online)):
        for k, p in enumerate(net.params):
            arrays[f"{name}_{k}"] = p
            shapes[f"{name}_{k}"] = list(p.shape)
    np.savez(d / "weights.npz", **arrays)
    manifest = {
        "trainer": agent.cfg.to_dict(),
        "shapes": shapes,
        "actor_activations": agent.actor.online.activations,
        "critic_kind": type(agent.critic.online).__name__,
    }
    if isinstance(agent.critic.online, MLP):
        manifest["critic_activations"] = agent.critic.online.activations
    manifest.update(extra or {})
    (d / "checkpoint.json").write_text(json.dumps(manifest, indent=2, default=str))
    return d


def load_actor(directory) -> tuple[MLP, dict]:
    d = Path(directory)
    manifest = json.loads((d / "checkpoint.json").read_text())
    data = np.load(d / "weights.npz")
    keys = sorted((k for k in data.files if k.startswith("actor_")), key=lambda k: int(k.split("_")[1]))
    params = [data[k] for k in keys]
    actor = MLP(params[0::2], params[1::2], manifest["actor_activations"])
    return actor, manifest
