import subprocess
import sys

import numpy as np
import pytest

from pangraph import config as cfgmod
from pangraph import container
from pangraph.cli import main

TINY_DATA = ["data.num_classes=3", "data.per_class=5", "data.frames=8", "data.joints=5", "data.grid_h=4",
             "data.grid_w=4", "data.channels=8", "data.patch_size=8", "data.seed=11"]
TINY_MODEL = ["model.c_r=8", "model.heads=2", "model.rgb_block_inputs=8,8", "model.skel_block_outputs=8,8",
              "model.skel_head_outputs=8,8"]


def sets(items):
    return [a for item in items for a in ("--set", item)]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["generate", "--out", str(out)] + sets(TINY_DATA)) == 0
    return out


def test_help_lists_every_config_key():
    text = subprocess.run([sys.executable, "-m", "pangraph", "--help"], capture_output=True, text=True,
                          check=True).stdout
    listed = text.split("config keys:\n", 1)[1].split("\n\n", 1)[0].split()
    assert listed == cfgmod.all_keys()


def test_params_no_pan_head(capsys):
    assert main(["params", "--set", "model.no_pan=true"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "total 46200"


def test_params_breakdown_sums(capsys):
    assert main(["params"]) == 0
    lines = capsys.readouterr().out.splitlines()
    total = int(lines[0].split()[1])
    assert total == sum(int(line.split()[1]) for line in lines[1:])


def test_config_file_and_flag_precedence(tmp_path, capsys):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nmodel.no_pan = true\nmodel.num_classes=10\n")
    assert main(["params", "--config", str(path)]) == 0
    assert capsys.readouterr().out.startswith(f"total {384 * 10 + 10}\n")
    assert main(["params", "--config", str(path), "--set", "model.num_classes=120"]) == 0
    assert capsys.readouterr().out.startswith("total 46200\n")


def test_config_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("model.bogus=1\n")
    assert main(["params", "--config", str(bad)]) == 2
    assert main(["params", "--set", "model.c_r=abc"]) == 2
    assert main(["params", "--set", "model.no_gc=true", "--set", "model.no_tc=true"]) == 2
    assert main(["params", "--set", "train.milestones=9,3"]) == 2


def test_missing_and_corrupt_files_exit_3(tmp_path):
    assert main(["params", "--config", str(tmp_path / "absent.cfg")]) == 3
    path = tmp_path / "g.pant"
    path.write_bytes(b"NOPE" + bytes(20))
    assert main(["sample", "--grid", str(path), "--strategy", "even", "--out", str(tmp_path / "o.pant")]) == 3


def test_sample_strategies(data_dir, tmp_path):
    grid = data_dir / "samples" / "s00000.grid.pant"
    skel = data_dir / "samples" / "s00000.skel2d.pant"
    out = tmp_path / "even.pant"
    assert main(["sample", "--grid", str(grid), "--strategy", "even", "--joints", "5", "--out", str(out),
                 "--patch-size", "8"]) == 0
    assert container.read(out).shape == (8, 1, 5, 8)
    assert main(["sample", "--grid", str(grid), "--strategy", "guided", "--out", str(out),
                 "--patch-size", "8"]) == 2
    assert main(["sample", "--grid", str(grid), "--skeleton", str(skel), "--strategy", "guided",
                 "--out", str(out), "--patch-size", "8"]) == 0
    assert container.read(out).shape == (8, 1, 5, 8)


def test_gradcheck_micro_passes(capsys):
    assert main(["gradcheck", "--max-entries", "2"]) == 0
    assert capsys.readouterr().out.startswith("config: ok")


def test_gradcheck_failure_exits_4_and_names_parameter(capsys):
    assert main(["gradcheck", "--max-entries", "2", "--tol", "1e-300"]) == 4
    out = capsys.readouterr().out
    assert "FAIL" in out and "max_rel_error" in out and "gcn.blocks." in out


def train_args(data_dir, out, extra=()):
    return ["train", "--data", str(data_dir), "--out", str(out)] + sets(
        TINY_MODEL + ["train.epochs=2", "train.batch_size=4"] + list(extra))


def test_train_is_byte_identical_and_timestamps_stay_in_log(data_dir, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(train_args(data_dir, a)) == 0
    assert main(train_args(data_dir, b)) == 0
    for name in ("metrics.csv", "config.txt", "config.sha256", "checkpoint/manifest.tsv", "confusion.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    for f in sorted((a / "checkpoint" / "tensors").iterdir()):
        assert f.read_bytes() == (b / "checkpoint" / "tensors" / f.name).read_bytes()
    assert (a / "metrics.csv").read_text().startswith("epoch,split,loss,top1,mca\n")
    assert (a / "run.log").read_text()[:2] == "20"       # timestamped
    text = (a / "config.txt").read_text()
    assert "model.in_channels=8" in text and "model.topology=chain5" in text
    assert (a / "config.sha256").read_text().split()[0] == cfgmod.resolve(
        cfgmod.parse_pairs(text)).digest()


def test_eval_and_attnmaps(data_dir, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(train_args(data_dir, out)) == 0
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(out / "checkpoint"), "--data", str(data_dir)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "epoch,split,loss,top1,mca" and lines[1].startswith("0,val,")
    confusion = np.array([[int(v) for v in line.split(",")] for line in lines[3:]])
    assert confusion.shape == (3, 3) and confusion.sum() == 3
    maps = tmp_path / "maps.pant"
    assert main(["attnmaps", "--checkpoint", str(out / "checkpoint"), "--data", str(data_dir),
                 "--sample-id", "s00004", "--out", str(maps)]) == 0
    a = container.read(maps)
    assert a.shape == (8, 2, 5, 16)
    np.testing.assert_allclose(a.sum(-1), 1.0, rtol=1e-5)
    assert main(["attnmaps", "--checkpoint", str(out / "checkpoint"), "--data", str(data_dir),
                 "--sample-id", "nope", "--out", str(maps)]) == 2


def test_eval_rejects_mismatched_data(data_dir, tmp_path):
    out = tmp_path / "run"
    assert main(train_args(data_dir, out)) == 0
    other = tmp_path / "other"
    assert main(["generate", "--out", str(other)] + sets([k for k in TINY_DATA if not k.startswith("data.channels")] + ["data.channels=12"])) == 0
    assert main(["eval", "--checkpoint", str(out / "checkpoint"), "--data", str(other)]) == 2


def test_tampered_checkpoint_is_io_error(data_dir, tmp_path):
    out = tmp_path / "run"
    assert main(train_args(data_dir, out)) == 0
    with open(out / "checkpoint" / "config.txt", "a") as fh:
        fh.write("# edited\n")
    assert main(["eval", "--checkpoint", str(out / "checkpoint"), "--data", str(data_dir)]) == 3


def test_nan_training_exits_4(data_dir, tmp_path):
    broken = tmp_path / "broken"
    assert main(["generate", "--out", str(broken)] + sets(TINY_DATA)) == 0
    path = broken / "samples" / "s00000.grid.pant"
    grid = container.read(path)
    grid[:] = np.nan
    container.write(path, grid)
    assert main(train_args(broken, tmp_path / "run")) == 4


def test_ablate_grid(data_dir, tmp_path, capsys):
    out = tmp_path / "ablate"
    args = ["ablate", "--data", str(data_dir), "--out", str(out), "--seeds", "1"]
    assert main(args + sets(TINY_MODEL + ["train.epochs=1", "train.batch_size=4"])) == 0
    rows = (out / "ablation.csv").read_text().splitlines()
    assert rows[0].startswith("variant,sampling,seed,val_top1")
    pairs = [tuple(r.split(",")[:2]) for r in rows[1:]]
    assert pairs == [(v, s) for v in ("full", "no-calibration", "no-gc", "no-tc", "no-pan")
                     for s in ("guided", "even")]
    no_pan = [r.split(",")[3:] for r in rows[1:] if r.startswith("no-pan")]
    assert no_pan[0] == no_pan[1]


def test_generate_echoes_config_and_is_idempotent(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["generate", "--out", str(d)] + sets(TINY_DATA)) == 0
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file() and p.name != "run.log")
    assert (a / "config.txt").exists() and (a / "config.sha256").exists()
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes()


def test_verbosity_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("PANGRAPH_VERBOSITY", "quiet")
    assert main(["generate", "--out", str(tmp_path / "q")] + sets(TINY_DATA)) == 0
    assert capsys.readouterr().err == ""
    monkeypatch.setenv("PANGRAPH_VERBOSITY", "info")
    assert main(["generate", "--out", str(tmp_path / "i")] + sets(TINY_DATA)) == 0
    assert "wrote 15 samples" in capsys.readouterr().err


def test_shipped_benchmark_config_matches_library_widths():
    from pathlib import Path

    from pangraph.experiments import BENCHMARK_WIDTHS
    run_cfg, _ = cfgmod.load(Path(__file__).parents[1] / "configs" / "benchmark.cfg")
    assert {k: getattr(run_cfg.model, k) for k in BENCHMARK_WIDTHS} == BENCHMARK_WIDTHS
