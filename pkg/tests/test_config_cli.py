import csv
import json
import hashlib
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from manetnum.cli import main
from manetnum.config import SECTION_DEFAULTS, ConfigError, parse_config
from manetnum.region import convex_hull_2d, hull_area, staircase_area

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

GAME = """
scenario: game
topology:
  nodes: 4
  gains: [[0, 0, 0, 0], [0, 0, 0, 0], [1.2, 0.4, 0, 0], [0.3, 1.0, 0, 0]]
  noise: 0.1
  p_min: 0.1
  p_max: 3.0
links: [[0, 2], [1, 3]]
weights: [1.0, 2.0]
rates: [0.5, 1.0, 1.5]
"""


def write(tmp_path, text, name="cfg.yaml"):
    f = tmp_path / name
    f.write_text(text)
    return f


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_minimal_config_gets_defaults():
    cfg = parse_config("scenario: props\n")
    assert cfg.section("props") == SECTION_DEFAULTS["props"]
    assert cfg.topology is None
    assert np.allclose(cfg.rates.as_array(), [0.4, 0.8, 1.2, 1.6, 2.0])
    assert len(cfg.digest) == 64


def test_game_config_parses():
    cfg = parse_config(GAME)
    assert cfg.topology.node_count == 4
    assert [(l.origin, l.end) for l in cfg.links] == [(0, 2), (1, 3)]
    assert cfg.section("game")["tol"] == 1e-7
    assert cfg.section("game")["max_iters"] == 200


def test_named_errors_are_all_collected():
    bad = GAME.replace("p_min: 0.1", "p_min: 0").replace("nodes: 4", "nodes: 3") + "bogus: 1\ngame: {tl: 3}\n"
    with pytest.raises(ConfigError) as err:
        parse_config(bad)
    msgs = err.value.errors
    assert any("P_min must be > 0" in m for m in msgs)
    assert any("dimension mismatch" in m for m in msgs)
    assert any("'bogus'" in m for m in msgs)
    assert any("'tl'" in m for m in msgs)
    assert len(msgs) >= 4


def test_malformed_inputs():
    for text in ("[1, 2]", ": : :", "scenario: nope\n", "scenario: num\ntopology: {nodes: 3}\n"):
        with pytest.raises(ConfigError):
            parse_config(text)


def test_cli_success_writes_csv_and_manifest(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["game", "--config", str(write(tmp_path, GAME)), "--seed", "4", "--out", str(out)]) == 0
    csvs = sorted(out.glob("*.csv"))
    assert csvs
    for f in csvs:
        man = json.loads(f.with_suffix(".manifest.json").read_text())
        assert man["seed"] == 4 and man["scenario"] == "game" and man["file"] == f.name
        assert man["sha256"] == hashlib.sha256(f.read_bytes()).hexdigest()
    summary = read_csv(out / "game_summary.csv")
    row = dict(zip(summary[0], summary[1]))
    assert float(row["gap"]) >= 0.0
    assert float(row["kkt_residual"]) <= 1e-6


def test_cli_validation_errors_exit_1(tmp_path, capsys):
    bad = write(tmp_path, GAME.replace("p_min: 0.1", "p_min: 0"))
    assert main(["game", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "P_min must be > 0" in capsys.readouterr().err
    good = write(tmp_path, GAME, "good.yaml")
    assert main(["num", "--config", str(good), "--out", str(tmp_path / "o")]) == 1
    assert main(["game", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path / "o")]) == 1
    assert main(["game", "--config", str(good), "--seed", "-1", "--out", str(tmp_path / "o")]) == 1


def test_cli_nonconvergence_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, GAME + "game: {max_iters: 1}\n")
    assert main(["game", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "did not converge" in capsys.readouterr().err
    assert (tmp_path / "o" / "game_trace.csv").exists()


def test_cli_is_byte_deterministic(tmp_path):
    cfg = write(tmp_path, GAME)
    for d in ("a", "b"):
        assert main(["game", "--config", str(cfg), "--seed", "11", "--out", str(tmp_path / d)]) == 0
    a = sorted((tmp_path / "a").iterdir())
    assert [f.name for f in a] == sorted(f.name for f in (tmp_path / "b").iterdir())
    for f in a:
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_region_cli_hull_strictly_larger(tmp_path):
    out = tmp_path / "r"
    assert main(["region", "--config", str(CONFIGS / "region.yaml"), "--out", str(out)]) == 0
    raws = sorted(out.glob("*_raw.csv"))
    assert raws
    rows = read_csv(raws[0])
    cols = [i for i, h in enumerate(rows[0]) if h.startswith("g")]
    pts = np.array([[float(r[i]) for i in cols] for r in rows[1:] if float(r[0]) == 1.0])
    assert len(pts) > 1
    assert hull_area(convex_hull_2d(pts)) > staircase_area(pts)


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "manetnum", "props", "--config", str(CONFIGS / "props.yaml"),
                          "--seed", "1", "--out", str(tmp_path / "p")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert list((tmp_path / "p").glob("*.csv"))
