import csv
import json

import numpy as np
import pytest

from phydrl import reference as ref
from phydrl.cli import main
from phydrl.config import parse_config
from phydrl.matrix_io import load_matrix, save_matrix


def test_design_then_verify(tmp_path, capsys):
    out = tmp_path / "design"
    assert main(["design", "--out", str(out)]) == 0
    for name in ("Q", "R", "P", "F", "A_bar"):
        assert load_matrix(out / f"{name}.txt").ndim == 2
    man = json.loads((out / "manifest.json").read_text())
    assert len(man["files"]) == 6 and man["command"] == "design"
    assert main(["verify", "--solution", str(out), "--tol", "1e-7"]) == 0
    text = capsys.readouterr().out
    assert "contained: True" in text


def test_verify_published(capsys):
    assert main(["verify", "--paper"]) == 0
    text = capsys.readouterr().out
    assert "FAIL" in text  # row-2 containment value 1.0318


def test_design_custom_plant(tmp_path):
    save_matrix(tmp_path / "A.txt", [[1, 0.1], [0, 1]])
    save_matrix(tmp_path / "B.txt", [[0], [0.1]])
    save_matrix(tmp_path / "D.txt", np.eye(2))
    save_matrix(tmp_path / "vhi.txt", [1.0, 2.0])
    cfg = tmp_path / "c.ini"
    cfg.write_text("[design]\nalpha = 0.95\naction_bound = none\n")
    args = ["design", "--config", str(cfg), "--out", str(tmp_path / "o"), "--A", str(tmp_path / "A.txt"),
            "--B", str(tmp_path / "B.txt"), "--D", str(tmp_path / "D.txt"), "--v-hi", str(tmp_path / "vhi.txt")]
    assert main(args) == 0
    assert load_matrix(tmp_path / "o" / "P.txt").shape == (2, 2)


def test_train_eval_sweep(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[trainer]\nhidden = 8 8\nwarmup = 20\nbatch_size = 8\n"
                   "[sweep]\nnx = 3\nntheta = 3\nhorizon = 50\n[eval]\nepisodes = 3\nhorizon = 40\n")
    run = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--steps", "60", "--seed", "2", "--out", str(run)]) == 0
    man = json.loads((run / "manifest.json").read_text())
    assert man["seed"] == 2 and man["config"]["training"]["trainer"]["hidden"] == [8, 8]
    ck = str(run / "checkpoint")
    assert main(["eval", "--config", str(cfg), "--checkpoint", ck, "--out", str(tmp_path / "ev")]) == 0
    ev = json.loads((tmp_path / "ev" / "evaluation.json").read_text())
    assert ev["episodes"] == 3
    assert main(["sweep", "--config", str(cfg), "--checkpoint", ck, "--out", str(tmp_path / "sw")]) == 0
    with open(tmp_path / "sw" / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 9 and {r["verdict"] for r in rows} <= {"IE", "EE", "Unsafe"}


def test_sample_uu(tmp_path, capsys):
    assert main(["sample-uu", "-n", "5", "--seed", "3"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "k,d" and len(lines) == 6
    assert main(["sample-uu", "-n", "100", "--a", "2", "--c", "3", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "uu_samples.csv") as fh:
        d = np.array([float(r["d"]) for r in csv.DictReader(fh)])
    assert d.size == 100 and d.min() >= 2 and d.max() <= 3


def test_config_parsing():
    cfg = parse_config("[design]\nalpha = 0.9\nsource = paper\n[cartpole]\ncart_friction = 1.5\n"
                       "[training]\nresidual = false\npenalty_scale = 0.5\n"
                       "[disturbance]\nalpha_lo = 1\nalpha_hi = 2\n")
    assert cfg.design.alpha == 0.9 and cfg.design.source == "paper"
    assert cfg.training.cartpole.cart_friction == 1.5
    assert cfg.training.residual is False and cfg.training.penalty_scale == 0.5
    assert cfg.training.uu.alpha_range == (1.0, 2.0)
    with pytest.raises(KeyError):
        parse_config("[training]\nbogus = 1\n")


def test_reference_defaults_used_when_no_config():
    cfg = parse_config("")
    assert cfg.design.alpha == ref.ALPHA and cfg.design.action_bound == ref.ACTION_BOUND


def test_shipped_config_matches_defaults():
    from pathlib import Path
    from phydrl.config import AppConfig, load_config
    cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "default.ini")
    assert cfg.training == AppConfig().training and cfg.design == AppConfig().design
