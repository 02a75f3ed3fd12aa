"""Command-line entry point: design, verify, train, eval, sweep, sample-uu."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import reference as ref
from .cartpole import CartPoleParams
from .config import load_config, with_seed
from .ddpg import load_actor
from .harness import (Design, RunManifest, actor_policy, cartpole_design, config_hash,
                      evaluate_policy, run_training, sweep_safe_area, write_csv, zero_policy)
from .lmi_design import DesignConfig, DesignSolution, PlantModel, compute_closed_loop, solve_design, verify_lmi
from .matrix_io import load_matrix, save_matrix
from .safety_geometry import SafetyEnvelope, SafetySet, check_envelope_containment, normalize_safety_set
from .uu_disturbance import BetaUUConfig, sample as uu_sample


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _plant(args) -> PlantModel:
    A = load_matrix(args.A) if args.A else ref.A
    B = load_matrix(args.B) if args.B else ref.B
    return PlantModel(A, B)


def _safety_set(args) -> SafetySet:
    if not args.D:
        return ref.cartpole_safety_set()
    D = load_matrix(args.D)
    v = load_matrix(args.v).ravel() if args.v else np.zeros(D.shape[0])
    v_hi = load_matrix(args.v_hi).ravel()
    v_lo = load_matrix(args.v_lo).ravel() if args.v_lo else -v_hi
    return SafetySet(D, v, v_hi, v_lo)


def cmd_design(args) -> int:
    cfg = load_config(args.config)
    started = _now()
    plant = _plant(args)
    nset = normalize_safety_set(_safety_set(args))
    d = cfg.design
    dcfg = DesignConfig(alpha=d.alpha, feasibility_tol=d.tol, max_iterations=d.max_iter,
                        action_bound=d.action_bound)
    sol = solve_design(plant, nset, dcfg)
    out = _out_dir(args)
    files = []
    for name in ("Q", "R", "P", "F", "A_bar"):
        path = out / f"{name}.txt"
        save_matrix(path, getattr(sol, name))
        files.append(str(path))
    rep = verify_lmi(sol, plant, d.alpha, d.tol)
    con = check_envelope_containment(nset, SafetyEnvelope(sol.P))
    lines = [f"log det Q: {sol.logdet_Q:.6f}", f"newton steps: {sol.newton_steps}"]
    lines += rep.lines() + con.lines()
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    files.append(str(out / "report.txt"))
    print("\n".join(lines))
    RunManifest("design", asdict(d), args.seed or 0, config_hash(asdict(d)), started, _now(),
                files).write(out / "manifest.json")
    return 0 if rep.passed and con.contained else 1


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    plant = _plant(args)
    if args.paper:
        Q, R, P, F = ref.Q, ref.R, ref.P, ref.F
    else:
        src = Path(args.solution)
        Q, R, P, F = (load_matrix(src / f"{n}.txt") for n in ("Q", "R", "P", "F"))
    sol = DesignSolution(Q, R, P, F, compute_closed_loop(plant, F))
    rep = verify_lmi(sol, plant, cfg.design.alpha, args.tol)
    nset = normalize_safety_set(_safety_set(args))
    con = check_envelope_containment(nset, SafetyEnvelope(np.linalg.inv(Q)))
    print("\n".join(rep.lines()))
    print("containment (envelope from Q):")
    print("\n".join(con.lines()))
    return 0 if rep.reduced_min_eig > 0 else 1


def cmd_train(args) -> int:
    cfg = with_seed(load_config(args.config), args.seed)
    tr = cfg.training
    if args.steps is not None:
        tr = replace(tr, trainer=replace(tr.trainer, steps=args.steps))
    if args.no_residual:
        tr = replace(tr, residual=False)
    if args.reward:
        tr = replace(tr, reward_mode=args.reward)
    started = _now()
    design = cartpole_design(cfg.design.source, cfg.design.alpha, cfg.design.action_bound)
    out = _out_dir(args)
    res = run_training(tr, design, out)
    files = [str(out / "training_log.csv"), str(out / "checkpoint" / "weights.npz"),
             str(out / "checkpoint" / "checkpoint.json")]
    conf = {"design": asdict(cfg.design), "training": tr.to_dict()}
    RunManifest("train", conf, tr.trainer.seed, config_hash(conf), started, _now(),
                files).write(out / "manifest.json")
    print(f"episodes: {len(res.episode_rewards)}  final-decile reward: {res.final_decile_reward():.4f}")
    return 0


def _load_policy(args, cfg):
    """Policy, design, plant parameters and residual flag for eval/sweep."""
    if args.checkpoint:
        actor, man = load_actor(args.checkpoint)
        plant = PlantModel(ref.A, ref.B)
        design = Design(plant, np.asarray(man["design_P"]), np.asarray(man["design_F"]),
                        np.asarray(man["design_A_bar"]), float(man["alpha"]), "checkpoint")
        params = CartPoleParams(**man["cartpole"])
        return (actor_policy(actor, man["trainer"]["action_scale"]), design, params,
                bool(man.get("residual", True)))
    design = cartpole_design(cfg.design.source, cfg.design.alpha, cfg.design.action_bound)
    return zero_policy, design, cfg.training.cartpole, True


def cmd_eval(args) -> int:
    cfg = with_seed(load_config(args.config), args.seed)
    started = _now()
    policy, design, params, residual = _load_policy(args, cfg)
    ev = cfg.evaluation
    summary = evaluate_policy(policy, design, params, args.episodes or ev.episodes, ev.horizon,
                              args.disturbance or ev.disturbance_mode, cfg.training.uu,
                              seed=cfg.training.trainer.seed, residual=residual)
    out = _out_dir(args)
    path = out / "evaluation.json"
    path.write_text(json.dumps(summary.to_dict(), indent=2))
    print(json.dumps(summary.to_dict(), indent=2))
    conf = {"evaluation": asdict(ev), "checkpoint": str(args.checkpoint)}
    RunManifest("eval", conf, cfg.training.trainer.seed, config_hash(conf), started, _now(),
                [str(path)]).write(out / "manifest.json")
    return 0


def cmd_sweep(args) -> int:
    cfg = with_seed(load_config(args.config), args.seed)
    started = _now()
    policy, design, params, residual = _load_policy(args, cfg)
    sw = cfg.sweep
    res = sweep_safe_area(policy, design, params, sw.grid, sw.horizon, residual, sw.chunks)
    out = _out_dir(args)
    path = out / "sweep.csv"
    write_csv(path, res.rows(), ("x", "theta", "verdict", "converged"))
    counts = res.counts()
    counts["envelope_cells_all_IE"] = res.envelope_cells_all_ie(design.P)
    (out / "sweep_summary.json").write_text(json.dumps(counts, indent=2))
    print(json.dumps(counts, indent=2))
    conf = {"grid": asdict(sw.grid), "horizon": sw.horizon, "checkpoint": str(args.checkpoint)}
    RunManifest("sweep", conf, cfg.training.trainer.seed, config_hash(conf), started, _now(),
                [str(path), str(out / "sweep_summary.json")]).write(out / "manifest.json")
    return 0


def cmd_sample_uu(args) -> int:
    cfg = BetaUUConfig(args.a, args.c, (args.alpha_lo, args.alpha_hi), (args.beta_lo, args.beta_hi),
                       args.seed or 0)
    rng = np.random.default_rng(cfg.seed)
    d = uu_sample(cfg, rng, size=args.n)
    if args.out:
        out = _out_dir(args)
        fh = open(out / "uu_samples.csv", "w", newline="")
    else:
        fh = sys.stdout
    w = csv.writer(fh)
    w.writerow(["k", "d"])
    for k, v in enumerate(d):
        w.writerow([k, repr(float(v))])
    if fh is not sys.stdout:
        fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="sectioned key = value config file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default="out", help="output directory")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--A", help="plant A matrix file (default: published cart-pole model)")
    model.add_argument("--B", help="plant B matrix file")
    model.add_argument("--D", help="safety-set D matrix file (default: cart-pole set)")
    model.add_argument("--v", help="safety-set offset vector file")
    model.add_argument("--v-hi", dest="v_hi", help="upper slack vector file")
    model.add_argument("--v-lo", dest="v_lo", help="lower slack vector file (default: -v_hi)")

    p = argparse.ArgumentParser(prog="phydrl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("design", parents=[common, model], help="solve the envelope design")
    s.set_defaults(func=cmd_design)

    s = sub.add_parser("verify", parents=[common, model], help="verify a design solution")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--solution", help="directory with Q.txt R.txt P.txt F.txt")
    g.add_argument("--paper", action="store_true", help="verify the published matrices")
    s.add_argument("--tol", type=float, default=0.0)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("train", parents=[common], help="train an agent")
    s.add_argument("--steps", type=int)
    s.add_argument("--no-residual", action="store_true", help="drop the model-based command")
    s.add_argument("--reward", choices=["phy", "clf"])
    s.set_defaults(func=cmd_train)

    for name, fn, helptext in (("eval", cmd_eval, "evaluate a checkpoint"),
                               ("sweep", cmd_sweep, "classify an (x, theta) grid")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--checkpoint", help="checkpoint directory (default: model-based control only)")
        if name == "eval":
            s.add_argument("--episodes", type=int)
            s.add_argument("--disturbance", choices=["off", "uu"])
        s.set_defaults(func=fn)

    s = sub.add_parser("sample-uu", parents=[common], help="draw bounded disturbances as CSV")
    s.set_defaults(out=None)
    s.add_argument("-n", type=int, default=1000)
    s.add_argument("--a", type=float, default=-1.0)
    s.add_argument("--c", type=float, default=1.0)
    s.add_argument("--alpha-lo", type=float, default=0.5)
    s.add_argument("--alpha-hi", type=float, default=5.0)
    s.add_argument("--beta-lo", type=float, default=0.5)
    s.add_argument("--beta-hi", type=float, default=5.0)
    s.set_defaults(func=cmd_sample_uu)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
