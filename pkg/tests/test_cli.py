import csv
import json
import os

import pytest

from mixtrack.cli import main
from mixtrack.core import TrajectoryDataset
from mixtrack.evaluation import REPORT_KEYS


def run(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


def synth(out, *extra):
    return run("synth", "--kind", "circle_swap", "--model", "rvo", "--agents", 8, "--seed", 7,
               "--frames", 30, "--out-dir", out, *extra)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    assert synth(out) == 0
    return out


def test_synth_writes_four_files(scene):
    assert sorted(p.name for p in scene.iterdir()) == ["ground_truth.csv", "observations.csv",
                                                       "provenance.json", "scenario.json"]


def test_synth_is_deterministic(scene, tmp_path):
    assert synth(tmp_path) == 0
    for name in ("ground_truth.csv", "observations.csv", "provenance.json", "scenario.json"):
        assert (scene / name).read_bytes() == (tmp_path / name).read_bytes()


def test_synth_usage_errors(tmp_path):
    assert run("synth", "--agents", 0, "--out-dir", tmp_path) == 2
    assert run("synth", "--model", "kalman", "--out-dir", tmp_path) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert synth(blocker / "sub") == 2


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_synth_read_only_dir(tmp_path):
    tmp_path.chmod(0o500)
    try:
        assert synth(tmp_path) == 2
    finally:
        tmp_path.chmod(0o700)


def test_calibrate_report(scene, tmp_path):
    assert run("calibrate", "--observations", scene / "ground_truth.csv", "--scenario", scene / "scenario.json",
               "--k", 9, "--out-dir", tmp_path) == 0
    doc = json.loads((tmp_path / "calibration.json").read_text())
    assert set(doc) == {"mode", "best_model", "per_model_error", "assignment", "params", "evaluations", "end_frame"}


def track(scene, out, *extra):
    return run("track", "--observations", scene / "observations.csv", "--scenario", scene / "scenario.json",
               "--out-dir", out, *extra)


def test_track_outputs_and_summary(scene, tmp_path, capsys):
    assert track(scene, tmp_path) == 0
    printed = capsys.readouterr().out
    assert "steps/sec" in printed and "particles" in printed
    est = TrajectoryDataset.read_csv(tmp_path / "estimates.csv")
    assert len(est.frames()) == 30
    rows = read_rows(tmp_path / "diagnostics.csv")
    assert list(rows[0]) == ["frame", "agent_id", "model", "particles", "pr", "mmr", "err"]


def test_track_forced_lin_and_mixture_pair(scene, tmp_path):
    assert track(scene, tmp_path / "lin", "--model", "lin") == 0
    assert track(scene, tmp_path / "mix") == 0
    lin = read_rows(tmp_path / "lin" / "diagnostics.csv")
    mix = read_rows(tmp_path / "mix" / "diagnostics.csv")
    assert [(r["frame"], r["agent_id"]) for r in lin] == [(r["frame"], r["agent_id"]) for r in mix]
    assert {r["model"] for r in lin} == {"lin"}


def test_track_adaptive_off(scene, tmp_path):
    assert track(scene, tmp_path, "--adaptive", "off") == 0
    assert {r["particles"] for r in read_rows(tmp_path / "diagnostics.csv")} == {"200"}


def test_track_is_deterministic(scene, tmp_path):
    assert track(scene, tmp_path / "a", "--seed", 2) == 0
    assert track(scene, tmp_path / "b", "--seed", 2, "--threads", 2) == 0
    for name in ("estimates.csv", "diagnostics.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_track_too_few_frames(tmp_path):
    assert run("synth", "--agents", 3, "--frames", 5, "--out-dir", tmp_path) == 0
    assert track(tmp_path, tmp_path / "t") == 3


def test_track_missing_input(tmp_path):
    assert track(tmp_path, tmp_path) == 3


def test_eval_identity(scene, tmp_path):
    gt = scene / "ground_truth.csv"
    assert run("eval", "--gt", gt, "--est", gt, "--out-dir", tmp_path) == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["mota"] == 1.0 and doc["motp"] == 0.0
    assert set(doc) == set(REPORT_KEYS)
    assert tuple(read_rows(tmp_path / "report.csv")[0]) == REPORT_KEYS


def test_eval_batch_of_twenty(tmp_path):
    gts = []
    for seed in range(20):
        d = tmp_path / f"s{seed}"
        assert run("synth", "--agents", 3, "--frames", 12, "--seed", seed, "--out-dir", d) == 0
        gts.append(d / "ground_truth.csv")
    assert run("eval", "--gt", *gts, "--est", *gts, "--out-dir", tmp_path / "r") == 0
    assert len(read_rows(tmp_path / "r" / "report.csv")) == 20
    assert len(json.loads((tmp_path / "r" / "report.json").read_text())) == 20


def test_eval_frame_mismatch(tmp_path):
    assert run("synth", "--agents", 3, "--frames", 12, "--out-dir", tmp_path / "a") == 0
    assert run("synth", "--agents", 3, "--frames", 15, "--out-dir", tmp_path / "b") == 0
    assert run("eval", "--gt", tmp_path / "a" / "ground_truth.csv", "--est", tmp_path / "b" / "ground_truth.csv",
               "--out-dir", tmp_path) == 3


def test_compare_table_shape(tmp_path, capsys):
    assert run("compare", "--seeds", 3, "--densities", "low", "medium", "--agents", 4, "--frames", 16,
               "--out-dir", tmp_path) == 0
    st = read_rows(tmp_path / "st.csv")
    assert len(st) == 6
    assert list(st[0]) == ["density", "seed", "mixture", "lin", "boids", "socialforces", "rvo"]
    assert len(read_rows(tmp_path / "is.csv")) == 6
    with open(tmp_path / "rms.csv") as fh:
        assert fh.readline().strip() == "density,method,rms"
    assert (tmp_path / "rms_vs_density.svg").read_text().lstrip().startswith("<?xml")
    assert "ST" in capsys.readouterr().out


def test_bench_optimizers_small(tmp_path):
    assert run("bench", "optimizers", "--seeds", 1, "--evaluations", 30, "--out-dir", tmp_path) == 0
    summary = read_rows(tmp_path / "optimizer_summary.csv")
    assert {r["method"] for r in summary} == {"genetic", "annealing", "greedy"}
    assert (tmp_path / "optimizer_ranges.svg").exists()


def test_bench_throughput_small(tmp_path):
    assert run("bench", "throughput", "--agents", 5, "--frames", 20, "--out-dir", tmp_path) == 0
    assert json.loads((tmp_path / "throughput.json").read_text())["steps"] == 10


def test_config_file_flags(scene, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"version": 1, "n_max": 60, "adaptive": False}))
    assert track(scene, tmp_path / "o", "--config", cfg) == 0
    assert {r["particles"] for r in read_rows(tmp_path / "o" / "diagnostics.csv")} == {"60"}
    cfg.write_text(json.dumps({"version": 1, "bogus": 1}))
    assert track(scene, tmp_path / "o", "--config", cfg) == 2
