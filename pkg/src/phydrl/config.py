"""Sectioned ``key = value`` configuration files.

Every section is optional; missing keys keep their dataclass defaults.

    [design]      alpha, tol, max_iter, action_bound, source
    [cartpole]    any CartPoleParams field
    [trainer]     any TrainerConfig field (hidden as "256 128 64")
    [training]    reward_mode, residual, episode_steps, init_mode, penalty_scale,
                  disturbance, critic
    [disturbance] a, c, alpha_lo, alpha_hi, beta_lo, beta_hi
    [sweep]       nx, ntheta, x_lo, x_hi, theta_lo, theta_hi, horizon, chunks
    [eval]        episodes, horizon, disturbance_mode
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace

from .cartpole import CartPoleParams
from .ddpg import TrainerConfig
from .harness import GridSpec, TrainingConfig
from .uu_disturbance import BetaUUConfig


@dataclass
class DesignSection:
    alpha: float = 0.98
    tol: float = 1e-7
    max_iter: int = 500
    action_bound: float | None = 16.0
    source: str = "solve"


@dataclass
class SweepSection:
    grid: GridSpec = field(default_factory=GridSpec)
    horizon: int = 1500
    chunks: int = 4


@dataclass
class EvalSection:
    episodes: int = 50
    horizon: int = 1500
    disturbance_mode: str = "off"


@dataclass
class AppConfig:
    design: DesignSection = field(default_factory=DesignSection)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    sweep: SweepSection = field(default_factory=SweepSection)
    evaluation: EvalSection = field(default_factory=EvalSection)


def _coerce(raw: str, like):
    if isinstance(like, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(float(raw))
    if isinstance(like, float):
        return float(raw)
    if isinstance(like, tuple):
        return tuple(int(tok) for tok in raw.replace(",", " ").split())
    return raw.strip()


def _update(obj, section):
    names = {f.name for f in fields(obj)}
    changes = {}
    for key, raw in section.items():
        if key not in names:
            raise KeyError(f"unknown key {key!r} in [{section.name}]")
        changes[key] = _coerce(raw, getattr(obj, key))
    return replace(obj, **changes)


def parse_config(text: str) -> AppConfig:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    cfg = AppConfig()
    if cp.has_section("design"):
        sec = dict(cp["design"])
        bound = sec.pop("action_bound", None)
        d = cfg.design
        for key, raw in sec.items():
            if not hasattr(d, key):
                raise KeyError(f"unknown key {key!r} in [design]")
            setattr(d, key, _coerce(raw, getattr(d, key)))
        if bound is not None:
            d.action_bound = None if bound.strip().lower() in ("none", "off", "") else float(bound)
    tr = cfg.training
    if cp.has_section("cartpole"):
        tr = replace(tr, cartpole=_update(tr.cartpole, cp["cartpole"]))
    if cp.has_section("trainer"):
        tr = replace(tr, trainer=_update(tr.trainer, cp["trainer"]))
    if cp.has_section("training"):
        tr = _update(tr, cp["training"])
    if cp.has_section("disturbance"):
        sec = cp["disturbance"]
        uu = tr.uu
        tr = replace(tr, uu=BetaUUConfig(
            a=sec.getfloat("a", uu.a), c=sec.getfloat("c", uu.c),
            alpha_range=(sec.getfloat("alpha_lo", uu.alpha_range[0]), sec.getfloat("alpha_hi", uu.alpha_range[1])),
            beta_range=(sec.getfloat("beta_lo", uu.beta_range[0]), sec.getfloat("beta_hi", uu.beta_range[1])),
            seed=uu.seed))
    cfg.training = tr
    if cp.has_section("sweep"):
        sec = cp["sweep"]
        g = cfg.sweep.grid
        cfg.sweep.grid = GridSpec(
            (sec.getfloat("x_lo", g.x_range[0]), sec.getfloat("x_hi", g.x_range[1])),
            (sec.getfloat("theta_lo", g.theta_range[0]), sec.getfloat("theta_hi", g.theta_range[1])),
            sec.getint("nx", g.nx), sec.getint("ntheta", g.ntheta))
        cfg.sweep.horizon = sec.getint("horizon", cfg.sweep.horizon)
        cfg.sweep.chunks = sec.getint("chunks", cfg.sweep.chunks)
    if cp.has_section("eval"):
        cfg.evaluation = _update(cfg.evaluation, cp["eval"])
    return cfg


def load_config(path=None) -> AppConfig:
    if path is None:
        return AppConfig()
    with open(path) as fh:
        return parse_config(fh.read())


def with_seed(cfg: AppConfig, seed: int | None) -> AppConfig:
    if seed is not None:
        cfg.training = replace(cfg.training, trainer=replace(cfg.training.trainer, seed=seed))
    return cfg


__all__ = ["AppConfig", "DesignSection", "SweepSection", "EvalSection", "parse_config",
           "load_config", "with_seed", "CartPoleParams", "TrainerConfig"]
