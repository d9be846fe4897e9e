import json
import math

import numpy as np
import pytest

from uqfield.cli import main
from uqfield.io import load_checkpoint, load_raw_field, load_streamline_bundles

TINY = ["--set", "network.hidden_width=16", "--set", "network.num_res_blocks=1",
        "--set", "train.batch_size=32", "--set", "train.learning_rate=0.001",
        "--set", "uq.m=5", "--set", "uq.members=2", "--epochs", "5"]


def run(tmp_path, *args):
    return main([*args, "--out-dir", str(tmp_path), *TINY])


@pytest.fixture
def trained(tmp_path):
    assert run(tmp_path, "gen", "--kind", "center", "--dims", "8,8") == 0
    assert run(tmp_path, "train") == 0
    return tmp_path


def test_gen_train_metrics(trained, capsys):
    capsys.readouterr()
    assert run(trained, "metrics") == 0
    out = capsys.readouterr().out
    assert "psnr_db" in out
    doc = json.loads((trained / "metrics.json").read_text())
    assert doc["config"]["m"] == 5 and doc["values"]["model_bytes"] > 0
    timing = json.loads((trained / "timing_metrics.json").read_text())
    assert "total" in timing["seconds"]


def test_full_chain(trained):
    for cmd in ("reconstruct", "uncertainty", "error", "critpoints", "variability"):
        assert run(trained, cmd) == 0, cmd
    assert run(trained, "streamlines", "--random-seeds", "3") == 0
    mean = load_raw_field(trained / "mean.raw")
    unc = load_raw_field(trained / "uncertainty.raw")
    assert mean.data.shape == (64, 2) and np.all(unc.data >= 0)
    assert np.all(load_raw_field(trained / "error.raw").data >= 0)
    assert np.all(load_raw_field(trained / "variability.raw").data >= 0)
    bundles = load_streamline_bundles(trained / "streamlines.json")
    assert len(bundles) == 3 and all(len(b.realizations) == 5 for b in bundles)
    assert (trained / "streamlines.uncertainty.txt").exists()
    cps = json.loads((trained / "critpoints.json").read_text())
    assert len(cps["ground_truth"]) == 1 and cps["ground_truth"][0]["kind"] == "center"


def test_ensemble_chain(trained):
    assert run(trained, "train-ensemble") == 0
    members = sorted((trained / "ensemble").glob("member_*.ckpt"))
    assert len(members) == 2
    _, net, head = load_checkpoint(members[1])
    assert net.dropout_placement == "none" and head["member"] == 1
    assert run(trained, "metrics", "--method", "ensemble") == 0
    doc = json.loads((trained / "metrics.json").read_text())
    assert doc["config"]["members"] == 2 and doc["config"]["method"] == "ensemble"


def test_sweep_mc_samples(trained):
    assert run(trained, "sweep", "--axis", "mc-samples", "--values", "2,4,3") == 0
    rows = json.loads((trained / "sweep.json").read_text())["rows"]
    assert [r["value"] for r in rows] == [2, 4, 3]
    assert [r["config"]["m"] for r in rows] == [2, 4, 3]
    assert len((trained / "sweep.txt").read_text().splitlines()) == 4


def test_sweep_placement_aliases(trained):
    assert run(trained, "sweep", "--axis", "placement", "--values", "last,last-half,all") == 0
    rows = json.loads((trained / "sweep.json").read_text())["rows"]
    assert [r["value"] for r in rows] == ["last_block", "last_half", "all_blocks"]
    assert all(math.isfinite(r["values"]["psnr_db"]) for r in rows)


def test_reproducible(tmp_path):
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        assert run(d, "gen", "--kind", "saddle", "--dims", "6,6") == 0
        assert run(d, "train", "--seed", "11") == 0
        assert run(d, "metrics", "--seed", "11") == 0
        outs.append(d)
    a, b = outs
    assert (a / "model.ckpt").read_bytes() == (b / "model.ckpt").read_bytes()
    assert (a / "metrics.json").read_text() == (b / "metrics.json").read_text()


def test_unknown_subcommand_exits_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_errors_are_one_line(tmp_path, capsys):
    assert main(["train", "--out-dir", str(tmp_path)]) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: ") and "\n" not in err
    assert main(["metrics", "--out-dir", str(tmp_path), "--set", "uq.bogus=1"]) == 1
    assert "ConfigError" in capsys.readouterr().err


def test_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv("UQFIELD_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["gen", "--kind", "sink", "--dims", "4,4,4"]) == 0
    f = load_raw_field(tmp_path / "env" / "field.raw")
    assert f.components == 3
