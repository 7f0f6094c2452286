import json

import numpy as np
import pytest

from segprop import cli
from segprop.imageio import load_label, save_label
from segprop.motion import load_motion
from segprop.relax import save_logits
from segprop.study import StudyConfig
from segprop.types import Logits, LabelMap


def run(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def out_lines(text):
    return [json.loads(line) for line in text.splitlines() if line.strip()]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    """A small synthesized clip shared by the read-only CLI tests."""
    root = tmp_path_factory.mktemp("clip")
    code = cli.main(
        ["synth", "--out", str(root), "--height", "48", "--width", "48",
         "--frames", "5", "--min-shape", "10", "--max-shape", "14",
         "--max-speed", "1.0", "--seed", "1"]
    )
    assert code == 0
    return root


def test_no_command_exits_with_usage():
    with pytest.raises(SystemExit):
        cli.main([])


def test_synth_writes_a_complete_tree(dataset):
    for rel in ("frames/t000.png", "labels/t004.png", "motion/step003.mot",
                "manifest.jsonl", "eval_manifest.jsonl", "sequences.json"):
        assert (dataset / rel).exists(), rel
    seqs = json.loads((dataset / "sequences.json").read_text())
    (origin,) = seqs
    assert seqs[origin]["gt_position"] == 2
    assert len(seqs[origin]["frames"]) == 5


def test_flow_reports_epe_against_ground_truth(dataset, tmp_path, capsys):
    code, out, _ = run(
        capsys, "flow", str(dataset / "frames/t002.png"), str(dataset / "frames/t003.png"),
        "--gt", str(dataset / "motion/step002.mot"),
        "--pyramid-levels", "2", "--window-radius", "5",
        "--out", str(tmp_path),
    )
    assert code == 0
    report = json.loads(out)
    assert report["median_epe"] < 0.2
    field = load_motion(tmp_path / "flow.mot")
    assert field.data.shape == (48, 48, 2)


def test_propagate_writes_samples_and_manifest(dataset, tmp_path, capsys):
    frames = [str(dataset / f"frames/t{t:03d}.png") for t in range(5)]
    code, out, _ = run(
        capsys, "propagate", *frames,
        "--label", str(dataset / "labels/t002.png"),
        "--gt-index", "2", "--num-classes", "4", "--k", "2",
        "--accumulation", "accumulated",
        "--pyramid-levels", "2", "--window-radius", "5",
        "--out", str(tmp_path),
    )
    assert code == 0
    assert json.loads(out)["entries"] == 5  # gt + steps -2,-1,+1,+2
    assert (tmp_path / "seq_s+2_frame.png").exists()
    assert (tmp_path / "seq_s-2_label.png").exists()
    label = load_label(tmp_path / "seq_s+1_label.png", 4)
    truth = load_label(dataset / "labels/t003.png", 4)
    from segprop.types import VOID

    ok = label.data != VOID
    assert (label.data[ok] == truth.data[ok]).mean() > 0.9


def test_propagate_external_motion_files(dataset, tmp_path, capsys):
    frames = [str(dataset / f"frames/t{t:03d}.png") for t in range(5)]
    code, out, _ = run(
        capsys, "propagate", *frames,
        "--label", str(dataset / "labels/t002.png"),
        "--gt-index", "2", "--num-classes", "4", "--k", "1",
        "--direction", "forward", "--motion-mode", "external",
        "--motion-file", f"1:{dataset / 'motion/step002.mot'}",
        "--out", str(tmp_path),
    )
    assert code == 0
    assert json.loads(out)["entries"] == 2


def test_build_expands_the_gt_manifest(dataset, tmp_path, capsys):
    code, out, _ = run(
        capsys, "build",
        "--manifest", str(dataset / "manifest.jsonl"),
        "--sequences", str(dataset / "sequences.json"),
        "--num-classes", "4", "--k", "2", "--accumulation", "accumulated",
        "--pyramid-levels", "2", "--window-radius", "5",
        "--out", str(tmp_path),
    )
    assert code == 0
    assert json.loads(out)["entries"] == 5
    assert (tmp_path / "manifest.jsonl").exists()
    assert (tmp_path / "skip_report.jsonl").exists()


def test_loss_command_matches_library(dataset, tmp_path, capsys):
    rng = np.random.default_rng(0)
    z = rng.standard_normal((16, 16, 4)).astype(np.float32)
    save_logits(Logits(z), tmp_path / "z.lgt")
    label = LabelMap(rng.integers(0, 4, (16, 16)).astype(np.int32), 4)
    save_label(label, tmp_path / "l.png")

    code, out, _ = run(
        capsys, "loss", "--logits", str(tmp_path / "z.lgt"),
        "--label", str(tmp_path / "l.png"), "--num-classes", "4",
        "--loss", "onehot",
        "--per-pixel-png", str(tmp_path / "pp.png"),
    )
    assert code == 0
    report = json.loads(out)
    from segprop.relax import cross_entropy_loss

    want, _ = cross_entropy_loss(Logits(z), label)
    assert report["loss"] == pytest.approx(want, rel=1e-6)
    assert report["valid_pixels"] == 256
    assert (tmp_path / "pp.png").exists()

    code, out, _ = run(
        capsys, "loss", "--logits", str(tmp_path / "z.lgt"),
        "--label", str(tmp_path / "l.png"), "--num-classes", "4",
        "--loss", "relaxed", "--window", "3",
    )
    assert code == 0
    assert json.loads(out)["loss"] <= report["loss"]


def test_sample_plan_is_deterministic_and_mirrored_to_disk(dataset, tmp_path, capsys):
    argv = ("sample-plan", "--manifest", str(dataset / "eval_manifest.jsonl"),
            "--num-classes", "4", "--crop-size", "16", "--epoch-size", "6",
            "--seed", "3")
    code, out_a, _ = run(capsys, *argv)
    code_b, out_b, _ = run(capsys, *argv)
    assert code == code_b == 0
    assert out_a == out_b
    plan = out_lines(out_a)
    assert len(plan) == 6
    assert sum(1 for p in plan if p["kind"] == "centroid") == 3

    code, out_c, _ = run(capsys, *argv, "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "plan.jsonl").read_text() == out_c


def test_eval_perfect_match_is_miou_one(dataset, capsys):
    code, out, err = run(
        capsys, "eval", "--gt", str(dataset / "eval_manifest.jsonl"),
        "--pred", str(dataset / "eval_manifest.jsonl"), "--num-classes", "4",
    )
    assert code == 0
    rows = out_lines(out)
    assert rows[-1] == {"miou": 1.0}
    assert all(r["iou"] == 1.0 for r in rows[:-1] if r["iou"] is not None)
    assert "mIoU" in err


def test_entropy_of_uniform_logits(tmp_path, capsys):
    save_logits(Logits(np.zeros((8, 8, 4), dtype=np.float32)), tmp_path / "z.lgt")
    code, out, _ = run(
        capsys, "entropy", "--logits", str(tmp_path / "z.lgt"), "--out", str(tmp_path),
    )
    assert code == 0
    stats = json.loads(out)
    assert stats["mean"] == pytest.approx(np.log(4.0))
    assert (tmp_path / "entropy.png").exists()


def test_train_toy_writes_weights_and_history(dataset, tmp_path, capsys):
    code, out, _ = run(
        capsys, "train-toy", "--manifest", str(dataset / "manifest.jsonl"),
        "--num-classes", "4", "--epochs", "3", "--lr0", "5.0",
        "--out", str(tmp_path),
    )
    assert code == 0
    weights = np.load(tmp_path / "weights.npy")
    assert weights.shape == (4, 10)
    history = [json.loads(l) for l in (tmp_path / "history.jsonl").read_text().splitlines()]
    assert [h["epoch"] for h in history] == [0, 1, 2]
    assert json.loads(out)["miou"] == history[-1]["miou"]


def test_study_command_defaults_equal_library_defaults():
    args = cli._build_parser().parse_args(["study", "--out", "unused"])
    import contextlib, io

    with contextlib.redirect_stderr(io.StringIO()):
        merged = cli._resolve(args, cli._STUDY_DEFAULTS)
    assert cli._study_config(merged) == StudyConfig()


def test_study_command_runs_a_tiny_grid(tmp_path, capsys):
    argv = ("study", "--height", "32", "--width", "32", "--frames", "5",
            "--shapes", "2", "--classes", "3", "--min-shape", "8",
            "--max-shape", "12", "--max-speed", "1.0", "--max-accel", "0.0",
            "--seeds", "0,1", "--ks", "0,1", "--epochs", "2", "--lr0", "1.0",
            "--out", str(tmp_path / "a"))
    code, out, _ = run(capsys, *argv)
    assert code == 0
    assert "median" in out
    for name in ("rows.jsonl", "aggregates.json", "summary.txt", "config.json"):
        assert (tmp_path / "a" / name).exists()


def test_config_file_merges_under_flags(dataset, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"crop-size": 16, "epoch-size": 4, "seed": 9}))
    code, out_file_seed, _ = run(
        capsys, "sample-plan", "--config", str(cfg),
        "--manifest", str(dataset / "eval_manifest.jsonl"), "--num-classes", "4",
    )
    assert code == 0
    assert len(out_lines(out_file_seed)) == 4

    # an explicit flag wins over the config file
    code, out_flag_seed, _ = run(
        capsys, "sample-plan", "--config", str(cfg), "--seed", "10",
        "--manifest", str(dataset / "eval_manifest.jsonl"), "--num-classes", "4",
    )
    assert code == 0
    assert out_flag_seed != out_file_seed

    code, _, err = run(
        capsys, "sample-plan", "--config", str(cfg), "--seed", "9",
        "--manifest", str(dataset / "eval_manifest.jsonl"), "--num-classes", "4",
    )
    assert code == 0


def test_unknown_config_key_is_rejected(dataset, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"crop-size": 16, "epoch-size": 4, "bogus": 1}))
    code, _, err = run(
        capsys, "sample-plan", "--config", str(cfg),
        "--manifest", str(dataset / "eval_manifest.jsonl"), "--num-classes", "4",
    )
    assert code == 1
    assert "bogus" in err


def test_resolved_config_is_logged_to_stderr(dataset, capsys):
    code, _, err = run(
        capsys, "sample-plan", "--manifest", str(dataset / "eval_manifest.jsonl"),
        "--num-classes", "4", "--crop-size", "16", "--epoch-size", "2",
    )
    assert code == 0
    logged = json.loads(err.splitlines()[0])
    assert logged["command"] == "sample-plan"
    assert logged["crop-size"] == 16
    assert logged["seed"] == 0


def test_errors_exit_one_with_message(tmp_path, capsys):
    code, _, err = run(capsys, "eval", "--gt", "missing.jsonl",
                       "--pred", "missing.jsonl", "--num-classes", "4")
    assert code == 1
    assert err.strip().endswith("error: eval needs --gt") is False  # it's the file error
    assert "error:" in err

    code, _, err = run(capsys, "entropy", "--logits", str(tmp_path / "nope.lgt"),
                       "--out", str(tmp_path))
    assert code == 1
    assert "error:" in err


def test_bad_seed_exits_one(dataset, capsys):
    code, _, err = run(
        capsys, "sample-plan", "--manifest", str(dataset / "eval_manifest.jsonl"),
        "--num-classes", "4", "--crop-size", "16", "--epoch-size", "2",
        "--seed", "-1",
    )
    assert code == 1
    assert "seed" in err
