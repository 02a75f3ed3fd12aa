"""Design, training, evaluation and safe-area sweeps for the cart-pole."""
from __future__ import annotations

import csv
import enum
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import cartpole as cp
from . import reference as ref
from .ddpg import (Batch, load_actor, ReplayBuffer, TrainerConfig, Transition, act, actor_update,
                   critic_update, make_agent, save_checkpoint, soft_update)
from .errors import NonFinite
from .lmi_design import DesignConfig, PlantModel, compute_closed_loop, solve_design
from .phyn import knowledge_critic
from .residual_control import ActionLimits, combine
from .reward_monitor import (Certificate, RewardContext, certificate_fractions, clf_reward,
                             safety_subreward, theorem1_monitor)
from .safety_geometry import normalize_safety_set
from .uu_disturbance import BetaUUConfig, sample as uu_sample

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "episode", "episode_steps", "episode_reward", "p_mean",
               "cert_stability", "cert_invariant", "cert_none", "critic_loss", "actor_objective")


# --------------------------------------------------------------------------
# design


@dataclass
class Design:
    plant: PlantModel
    P: np.ndarray
    F: np.ndarray
    A_bar: np.ndarray
    alpha: float
    source: str

    @property
    def context(self) -> RewardContext:
        return RewardContext(self.P, self.A_bar, self.alpha)


def cartpole_design(source: str = "solve", alpha: float = ref.ALPHA,
                    action_bound: float | None = ref.ACTION_BOUND) -> Design:
    """Model-based design for the cart-pole on the published linear model.

    ``source='solve'`` runs the analytic-centering solve (with the actuator
    bound on the envelope by default); ``source='paper'`` uses the printed
    P and F.
    """
    plant = PlantModel(ref.A, ref.B)
    if source == "paper":
        return Design(plant, ref.P.copy(), ref.F.copy(), compute_closed_loop(plant, ref.F), alpha, source)
    if source != "solve":
        raise ValueError("design source must be 'solve' or 'paper'")
    nset = normalize_safety_set(ref.cartpole_safety_set())
    sol = solve_design(plant, nset, DesignConfig(alpha=alpha, action_bound=action_bound))
    return Design(plant, sol.P, sol.F, sol.A_bar, alpha, source)


# --------------------------------------------------------------------------
# metrics


def performance_metric(S, params: cp.CartPoleParams):
    """``exp(-d)`` with ``d`` the pole-tip distance from its upright position."""
    S = np.asarray(S, dtype=float)
    L = params.pole_length
    tip_x = S[..., 0] + L * np.sin(S[..., 2])
    tip_y = L * np.cos(S[..., 2])
    d = np.hypot(tip_x, tip_y - L)
    return np.exp(-d)


def in_envelope(S, P):
    S = np.asarray(S, dtype=float)
    return np.einsum("...i,ij,...j->...", S, P, S) <= 1.0


def in_safety_set(S):
    S = np.asarray(S, dtype=float)
    return (np.abs(S[..., 0]) <= cp.X_LIMIT) & (np.abs(S[..., 2]) <= cp.THETA_LIMIT)


# --------------------------------------------------------------------------
# training


@dataclass
class TrainingConfig:
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    cartpole: cp.CartPoleParams = field(default_factory=cp.CartPoleParams)
    reward_mode: str = "phy"  # "phy" (safety-embedded) or "clf"
    residual: bool = True  # False drops a_phy (data-driven ablation)
    design_source: str = "solve"
    episode_steps: int = 500
    init_mode: str = "envelope"
    # w = -penalty_scale * a_drl^2; 0.01 equals penalising (a_drl / action_scale)^2
    penalty_scale: float = 0.01
    disturbance: bool = False
    uu: BetaUUConfig = field(default_factory=BetaUUConfig)
    critic: str = "mlp"  # or "kn-<width>"
    log_every_episode: bool = True

    def __post_init__(self):
        if self.reward_mode not in ("phy", "clf"):
            raise ValueError("reward_mode must be 'phy' or 'clf'")
        if self.episode_steps < 1:
            raise ValueError("episode_steps must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        return d


@dataclass
class TrainingResult:
    agent: object
    design: Design
    log_rows: list
    episode_rewards: list
    cert_counts: dict
    wall_time: float
    config: TrainingConfig

    def smoothed_rewards(self, window: int = 20) -> np.ndarray:
        r = np.asarray(self.episode_rewards, dtype=float)
        if r.size == 0:
            return r
        w = min(window, r.size)
        return np.convolve(r, np.ones(w) / w, mode="valid")

    def final_decile_reward(self, window: int = 20) -> float:
        return final_decile_reward(self.log_rows, self.config.trainer.steps, window)


def final_decile_reward(rows, steps: int, window: int = 20) -> float:
    """Mean smoothed episode reward over episodes ending in the last 10% of steps."""
    if not rows:
        return float("nan")
    r = np.array([float(row["episode_reward"]) for row in rows])
    ends = np.array([int(row["step"]) for row in rows])
    w = min(window, r.size)
    smooth = np.array([r[max(0, i - w + 1):i + 1].mean() for i in range(r.size)])
    mask = ends >= 0.9 * steps
    if not np.any(mask):
        mask[-1] = True
    return float(smooth[mask].mean())


def _critic_for(kind: str, obs_dim: int, act_dim: int, rng):
    if kind == "mlp":
        return None
    if kind.startswith("kn-"):
        net, _ = knowledge_critic(int(kind[3:]), obs_dim + act_dim, rng)
        return net
    raise ValueError(f"unknown critic kind {kind!r}")


def _init_region(mode: str, P) -> cp.InitRegion:
    if mode == "envelope":
        lo, hi = cp.envelope_bounding_box(P)
        return cp.InitRegion(lo, hi, "envelope", P)
    if mode == "box":
        return cp.InitRegion()
    raise ValueError("init_mode must be 'envelope' or 'box'")


def step_reward(s, s_next, a_drl, design: Design, mode: str, penalty_scale: float = 0.01):
    a = np.asarray(a_drl, dtype=float)
    w = -penalty_scale * np.sum(a * a, axis=-1)
    if mode == "phy":
        return safety_subreward(s, s_next, design.context) + w
    return clf_reward(s, s_next, np.zeros_like(a), design.P) + w


def run_training(cfg: TrainingConfig, design: Design | None = None, out_dir=None) -> TrainingResult:
    """Off-policy training with residual actions and the configured reward."""
    t_start = time.time()
    tc = cfg.trainer
    rng = np.random.default_rng(tc.seed)
    design = design or cartpole_design(cfg.design_source)
    params = cfg.cartpole
    obs_dim, act_dim = 5, 1
    agent = make_agent(obs_dim, act_dim, tc, rng, _critic_for(cfg.critic, obs_dim, act_dim, rng))
    buf = ReplayBuffer(tc.buffer_capacity, obs_dim, act_dim)
    region = _init_region(cfg.init_mode, design.P)
    limits = ActionLimits.symmetric(params.force_limit)
    F = design.F if cfg.residual else np.zeros_like(design.F)
    noise = tc.exploration_noise_std / tc.action_scale  # in normalised action units

    rows, ep_rewards = [], []
    counts = {c.name: 0 for c in Certificate}
    s = cp.reset(rng, region)
    ep, ep_steps, ep_reward, ep_p = 0, 0, 0.0, 0.0
    ep_cert = {c: 0 for c in Certificate}
    c_loss = a_obj = float("nan")
    for k in range(1, tc.steps + 1):
        obs = cp.observe(s)
        if k <= tc.warmup:
            u = rng.uniform(-1.0, 1.0, size=act_dim)
        else:
            u = act(agent.actor.online, obs, noise, rng, 1.0)
        a_drl = tc.action_scale * u
        a_phy = F @ s
        a = combine(a_drl, a_phy, limits).a
        d = uu_sample(cfg.uu, rng) if cfg.disturbance else 0.0
        s_next = cp.step(s, a[0], params, d)
        reward = float(step_reward(s, s_next, a_drl, design, cfg.reward_mode, cfg.penalty_scale))
        if not np.isfinite(reward):
            raise NonFinite(f"non-finite reward at step {k}: s={s}, s_next={s_next}")
        cert = theorem1_monitor(s, s_next, a_drl, design.context)
        ep_cert[cert] += 1
        counts[cert.name] += 1
        fail = cp.terminated(s_next)
        buf.add(Transition(obs, u, reward, cp.observe(s_next), fail))
        ep_reward += reward
        ep_p += float(performance_metric(s_next, params))
        ep_steps += 1
        s = s_next

        if k > tc.warmup and len(buf) >= tc.batch_size:
            batch = buf.sample(tc.batch_size, rng)
            c_loss = critic_update(batch, agent, replace(tc, action_scale=1.0))
            a_obj = actor_update(batch, agent, replace(tc, action_scale=1.0))
            soft_update(agent.critic, tc.target_tau)
            soft_update(agent.actor, tc.target_tau)

        if fail or ep_steps >= cfg.episode_steps or k == tc.steps:
            ep += 1
            ep_rewards.append(ep_reward)
            total = max(ep_steps, 1)
            rows.append({
                "step": k, "episode": ep, "episode_steps": ep_steps,
                "episode_reward": ep_reward, "p_mean": ep_p / total,
                "cert_stability": ep_cert[Certificate.SAFETY_AND_STABILITY] / total,
                "cert_invariant": ep_cert[Certificate.SAFETY_INVARIANT] / total,
                "cert_none": ep_cert[Certificate.NO_CERTIFICATE] / total,
                "critic_loss": c_loss, "actor_objective": a_obj,
            })
            if ep % 50 == 0:
                log.info("step %d episode %d reward %.3f steps %d", k, ep, ep_reward, ep_steps)
            s = cp.reset(rng, region)
            ep_steps, ep_reward, ep_p = 0, 0.0, 0.0
            ep_cert = {c: 0 for c in Certificate}

    result = TrainingResult(agent, design, rows, ep_rewards, counts, time.time() - t_start, cfg)
    if out_dir is not None:
        write_training_outputs(result, out_dir)
    return result


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return str(obj)


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    input_hash: str
    started: str
    finished: str
    files: list

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, default=_jsonable))


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=_jsonable).encode()
    return hashlib.sha256(blob).hexdigest()


def write_csv(path, rows, columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns))
        w.writeheader()
        for row in rows:
            w.writerow({c: row.get(c, "") for c in columns})


def write_training_outputs(result: TrainingResult, out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "training_log.csv"
    write_csv(log_path, result.log_rows, LOG_COLUMNS)
    ck = save_checkpoint(out / "checkpoint", result.agent, {
        "design_P": result.design.P.tolist(), "design_F": result.design.F.tolist(),
        "design_A_bar": result.design.A_bar.tolist(), "alpha": result.design.alpha,
        "cartpole": result.config.cartpole.to_dict(),
        "residual": result.config.residual, "reward_mode": result.config.reward_mode,
    })
    return [str(log_path), str(ck / "weights.npz"), str(ck / "checkpoint.json")]


@dataclass
class StoredRun:
    """A finished training run as read back from disk."""

    actor: object
    rows: list
    steps: int
    residual: bool
    action_scale: float

    def final_decile_reward(self, window: int = 20) -> float:
        return final_decile_reward(self.rows, self.steps, window)

    def policy(self):
        return actor_policy(self.actor, self.action_scale)


def load_run(out_dir) -> StoredRun:
    out = Path(out_dir)
    actor, man = load_actor(out / "checkpoint")
    with open(out / "training_log.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return StoredRun(actor, rows, int(man["trainer"]["steps"]), bool(man["residual"]),
                     float(man["trainer"]["action_scale"]))


def train_cached(cfg: TrainingConfig, design: Design, out_dir) -> StoredRun:
    """Train into ``out_dir`` unless it already holds a run with the same configuration."""
    out = Path(out_dir)
    key = config_hash({"training": cfg.to_dict(), "P": design.P, "F": design.F})
    stamp = out / "config_hash.txt"
    if stamp.exists() and stamp.read_text().strip() == key:
        return load_run(out)
    log.info("training %s (%d steps)", out, cfg.trainer.steps)
    run_training(cfg, design, out)
    stamp.write_text(key + "\n")
    return load_run(out)


# --------------------------------------------------------------------------
# rollouts and classification


class Verdict(enum.Enum):
    IE = "IE"
    EE = "EE"
    UNSAFE = "Unsafe"


@dataclass
class SampleClassification:
    initial_state: np.ndarray
    verdict: Verdict
    horizon: int
    converged: bool = True


def zero_policy(obs):
    return np.zeros((np.atleast_2d(obs).shape[0], 1))


def actor_policy(actor, scale: float):
    def pol(obs):
        out, _ = actor.forward(obs)
        return scale * out
    return pol


@dataclass
class RolloutTrace:
    states: np.ndarray  # (T + 1, N, 4)
    a_drl: np.ndarray  # (T, N)
    a_phy: np.ndarray
    a: np.ndarray
    alive: np.ndarray  # (T + 1, N); False after the first safety-set exit


def rollout(policy, S0, design: Design, params: cp.CartPoleParams, horizon: int,
            residual: bool = True, disturbance: BetaUUConfig | None = None, rng=None,
            stop_on_exit: bool = True) -> RolloutTrace:
    """Batched closed-loop rollouts. Exited trajectories are frozen in place."""
    S = np.atleast_2d(np.asarray(S0, dtype=float)).copy()
    N = S.shape[0]
    F = design.F if residual else np.zeros_like(design.F)
    states = np.empty((horizon + 1, N, 4))
    states[0] = S
    alive = np.empty((horizon + 1, N), dtype=bool)
    alive[0] = in_safety_set(S) if stop_on_exit else True
    rec = {k: np.zeros((horizon, N)) for k in ("a_drl", "a_phy", "a")}
    for t in range(horizon):
        a_drl = np.asarray(policy(cp.observe(S)))[:, 0]
        a_phy = (S @ F.T)[:, 0]
        a = np.clip(a_drl + a_phy, -params.force_limit, params.force_limit)
        d = uu_sample(disturbance, rng, size=N) if disturbance is not None else 0.0
        live = alive[t]
        S_next = S.copy()
        if np.any(live):
            d_live = d[live] if np.ndim(d) else d
            S_next[live] = cp.step(S[live], a[live], params, d_live)
        S = S_next
        states[t + 1] = S
        alive[t + 1] = live & (in_safety_set(S) if stop_on_exit else True)
        rec["a_drl"][t], rec["a_phy"][t], rec["a"][t] = a_drl, a_phy, a
    return RolloutTrace(states, rec["a_drl"], rec["a_phy"], rec["a"], alive)


def _converged(states, tail: float = 0.1, slack: float = 1e-6) -> np.ndarray:
    T = states.shape[0] - 1
    k0 = int(np.floor((1.0 - tail) * T))
    n0 = np.linalg.norm(states[k0], axis=-1)
    n1 = np.linalg.norm(states[-1], axis=-1)
    return n1 <= n0 * (1.0 + slack) + slack


def classify_batch(S0, policy, design: Design, params: cp.CartPoleParams,
                   horizon: int = 1500, residual: bool = True) -> list:
    """IE / EE / Unsafe verdicts for a batch of initial states.

    IE needs ``s0`` and every visited state inside the envelope, EE needs
    ``s0`` outside the envelope and every visited state inside the safety
    set. Either verdict also needs the norm at the end of the horizon to be
    no larger than at the start of its last 10%, which stands in for "for
    all future steps".
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    S0 = np.atleast_2d(np.asarray(S0, dtype=float))
    tr = rollout(policy, S0, design, params, horizon, residual, stop_on_exit=False)
    states = tr.states
    env_all = np.all(in_envelope(states, design.P), axis=0)
    set_all = np.all(in_safety_set(states), axis=0)
    conv = _converged(states)
    start_in = in_envelope(S0, design.P)
    out = []
    for i in range(S0.shape[0]):
        if start_in[i] and env_all[i] and conv[i]:
            v = Verdict.IE
        elif not start_in[i] and set_all[i] and conv[i]:
            v = Verdict.EE
        else:
            v = Verdict.UNSAFE
        out.append(SampleClassification(S0[i].copy(), v, horizon, bool(conv[i])))
    return out


def classify_sample(s0, policy, design: Design, params: cp.CartPoleParams,
                    horizon: int = 1500, residual: bool = True) -> SampleClassification:
    return classify_batch(np.atleast_2d(s0), policy, design, params, horizon, residual)[0]


@dataclass
class GridSpec:
    x_range: tuple = (-1.0, 1.0)
    theta_range: tuple = (-1.0, 1.0)
    nx: int = 41
    ntheta: int = 41

    def states(self) -> np.ndarray:
        xs = np.linspace(*self.x_range, self.nx)
        ths = np.linspace(*self.theta_range, self.ntheta)
        X, TH = np.meshgrid(xs, ths, indexing="ij")
        S = np.zeros((X.size, 4))
        S[:, 0], S[:, 2] = X.ravel(), TH.ravel()
        return S


@dataclass
class SweepResult:
    grid: GridSpec
    cells: list

    def counts(self) -> dict:
        out = {v.value: 0 for v in Verdict}
        for c in self.cells:
            out[c.verdict.value] += 1
        return out

    @property
    def safe_count(self) -> int:
        c = self.counts()
        return c["IE"] + c["EE"]

    def envelope_cells_all_ie(self, P) -> bool:
        return all(c.verdict is Verdict.IE for c in self.cells if in_envelope(c.initial_state, P))

    def rows(self) -> list:
        return [{"x": c.initial_state[0], "theta": c.initial_state[2], "verdict": c.verdict.value,
                 "converged": c.converged} for c in self.cells]


def sweep_safe_area(policy, design: Design, params: cp.CartPoleParams, grid: GridSpec | None = None,
                    horizon: int = 1500, residual: bool = True, chunks: int = 1) -> SweepResult:
    """Classify every (x, theta) grid cell with v = omega = 0.

    Cells are independent, so the batch is split into ``chunks`` vectorised
    pieces; results are concatenated in cell order and do not depend on the
    split.
    """
    grid = grid or GridSpec()
    S0 = grid.states()
    cells = []
    for part in np.array_split(np.arange(S0.shape[0]), max(1, chunks)):
        if part.size:
            cells.extend(classify_batch(S0[part], policy, design, params, horizon, residual))
    return SweepResult(grid, cells)


@dataclass
class EvaluationSummary:
    episodes: int
    steps: int
    mean_episode_reward: float
    mean_p: float
    violations: int
    cert: dict

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_policy(policy, design: Design, params: cp.CartPoleParams, episodes: int = 50,
                    horizon: int = 1500, disturbance_mode: str = "off",
                    uu: BetaUUConfig | None = None, seed: int = 0, residual: bool = True,
                    reward_mode: str = "phy", penalty_scale: float = 0.01) -> EvaluationSummary:
    """Roll out ``episodes`` starts drawn uniformly from the envelope.

    An episode counts as a violation once it leaves the safety set; the
    rollout is frozen from then on, so rewards, ``p(k)`` and certificates
    cover the steps before the exit.
    """
    if disturbance_mode not in ("off", "uu"):
        raise ValueError("disturbance_mode must be 'off' or 'uu'")
    if episodes == 0 or horizon == 0:
        return EvaluationSummary(episodes, 0, 0.0, 0.0, 0, certificate_fractions([]))
    rng = np.random.default_rng(seed)
    region = _init_region("envelope", design.P)
    S0 = cp.reset_many(rng, region, episodes)
    dist = (uu or BetaUUConfig()) if disturbance_mode == "uu" else None
    tr = rollout(policy, S0, design, params, horizon, residual, dist, rng)
    s, s_next = tr.states[:-1], tr.states[1:]
    valid = tr.alive[:-1]
    rewards = step_reward(s, s_next, tr.a_drl[..., None], design, reward_mode, penalty_scale)
    verdicts = theorem1_monitor(s, s_next, None, design.context)
    p = performance_metric(s_next, params)
    ep_reward = np.where(valid, rewards, 0.0).sum(axis=0)
    violations = int(np.sum(~tr.alive[-1]))
    return EvaluationSummary(
        episodes=episodes,
        steps=int(valid.sum()),
        mean_episode_reward=float(ep_reward.mean()),
        mean_p=float(p[valid].mean()) if valid.any() else 0.0,
        violations=violations,
        cert=certificate_fractions(verdicts[valid]),
    )
