"""Acceptance gate: one test per shipped guarantee, named by number.

Each test prints the quantities it judged, so a failure log carries the
numbers needed to locate the regression.  The study fixture is shared by
criteria 11 and 12 (one run, both read it); criterion 13 reruns the study
through the CLI to cover serialization as well.
"""
import json
import time

import numpy as np
import pytest

from segprop import cli
from segprop.evaluate import ConfusionMatrix, entropy_map, miou
from segprop.imageio import load_frame, load_label, save_frame, save_label
from segprop.manifest import (
    SOURCE_GT,
    DatasetManifest,
    ManifestEntry,
    load_manifest,
    save_manifest,
)
from segprop.motion import estimate_motion, load_motion, save_motion
from segprop.propagate import (
    Accumulation,
    FrameSequence,
    PropagationConfig,
    build_augmented_dataset,
)
from segprop.relax import (
    NeighborSetMap,
    boundary_neighbor_sets,
    cross_entropy_loss,
    load_logits,
    onehot_neighbor_sets,
    relaxed_loss,
    relaxed_loss_grad,
    save_logits,
)
from segprop.study import STUDY_FLOW_PARAMS, StudyConfig, run_study
from segprop.toytrain import SceneParams, synth_scene
from segprop.types import (
    VOID,
    FormatError,
    Frame,
    LabelMap,
    Logits,
    MotionField,
    ProbMap,
)
from segprop.warp import LabelWarpMode, LabelWarpPolicy, warp_image, warp_label


def random_frame(rng, h=16, w=16, c=3):
    return Frame(rng.random((h, w, c)))


def random_label(rng, h=16, w=16, k=4, void_frac=0.1):
    data = rng.integers(0, k, size=(h, w)).astype(np.int32)
    data[rng.random((h, w)) < void_frac] = VOID
    return LabelMap(data, k)


# --- 1. zero-field warp is the identity --------------------------------------


def test_criterion_01_warp_identity():
    t0 = time.monotonic()
    rng = np.random.default_rng(0)
    frame = random_frame(rng, 33, 47)
    label = random_label(rng, 33, 47)
    zero = MotionField(np.zeros((33, 47, 2), dtype=np.float32))
    np.testing.assert_array_equal(warp_image(frame, zero).data, frame.data)
    for mode in LabelWarpMode:
        warped = warp_label(label, zero, LabelWarpPolicy(mode=mode))
        np.testing.assert_array_equal(warped.data, label.data)
    elapsed = time.monotonic() - t0
    print(f"identity warp exact for frame and both label modes ({elapsed:.3f}s)")
    assert elapsed < 1.0


# --- 2. constant integer fields equal an index shift --------------------------


def test_criterion_02_integer_translation_oracle():
    t0 = time.monotonic()
    rng = np.random.default_rng(1)
    h, w = 21, 27
    for dx, dy in [(1, 0), (0, 1), (-2, 3), (5, -4), (-3, -3)]:
        frame = random_frame(rng, h, w)
        label = random_label(rng, h, w)
        field = MotionField.from_uv(
            np.full((h, w), dx, dtype=np.float32), np.full((h, w), dy, dtype=np.float32)
        )
        ys = np.clip(np.arange(h)[:, None] + dy, 0, h - 1)
        xs = np.clip(np.arange(w)[None, :] + dx, 0, w - 1)
        np.testing.assert_array_equal(
            warp_image(frame, field).data, frame.data[ys, xs]
        )
        raw_y = np.arange(h)[:, None] + dy
        raw_x = np.arange(w)[None, :] + dx
        inside = (raw_y >= 0) & (raw_y < h) & (raw_x >= 0) & (raw_x < w)
        want = np.where(inside, label.data[ys, xs], np.int32(VOID))
        for mode in LabelWarpMode:
            got = warp_label(label, field, LabelWarpPolicy(mode=mode))
            np.testing.assert_array_equal(got.data, want)
    elapsed = time.monotonic() - t0
    print(f"5 integer offsets exact, frames clamp, labels void out ({elapsed:.3f}s)")
    assert elapsed < 1.0


# --- 3. relaxation degenerates to cross-entropy -------------------------------


def test_criterion_03_loss_degeneracy():
    t0 = time.monotonic()
    rng = np.random.default_rng(2)
    worst = 0.0
    for k in (2, 4, 19):
        for _ in range(100):
            z = Logits(rng.standard_normal((8, 8, k)) * 3.0)
            label = LabelMap(
                np.full((8, 8), int(rng.integers(k)), dtype=np.int32), k
            )
            rel, _ = relaxed_loss(z, boundary_neighbor_sets(label, 3))
            ce, _ = cross_entropy_loss(z, label)
            worst = max(worst, abs(rel - ce) / abs(ce))
    print(f"max relative gap over 300 constant-label pairs: {worst:.3e}")
    assert worst < 1e-12
    elapsed = time.monotonic() - t0
    print(f"({elapsed:.3f}s)")
    assert elapsed < 5.0


# --- 4. analytic gradient vs central differences ------------------------------


def test_criterion_04_gradient_check():
    t0 = time.monotonic()
    rng = np.random.default_rng(3)
    h_step = 1e-5
    worst = 0.0
    checked = 0
    while checked < 1000:
        hh, ww, k = 20, 20, 4
        z = rng.standard_normal((hh, ww, k))
        valid = rng.random((hh, ww)) > 0.1
        mask = rng.random((hh, ww, k)) < 0.4
        # every valid pixel needs a non-empty class set
        fallback = rng.integers(0, k, size=(hh, ww))
        empty = ~mask.any(axis=2)
        mask[np.nonzero(empty)[0], np.nonzero(empty)[1], fallback[empty]] = True
        mask &= valid[:, :, None]
        sets = NeighborSetMap(mask, valid)
        analytic = relaxed_loss_grad(Logits(z), sets)  # per-pixel gradient
        n_valid = int(valid.sum())  # the loss value itself is a mean
        vr, vc = np.nonzero(valid)
        take = min(1000 - checked, 100)
        pick = rng.choice(len(vr), size=take, replace=False)
        for idx in pick:
            i, j = int(vr[idx]), int(vc[idx])
            c = int(rng.integers(k))
            zp = z.copy()
            zp[i, j, c] += h_step
            lp, _ = relaxed_loss(Logits(zp), sets)
            zm = z.copy()
            zm[i, j, c] -= h_step
            lm, _ = relaxed_loss(Logits(zm), sets)
            numeric = (lp - lm) / (2 * h_step) * n_valid
            err = abs(analytic[i, j, c] - numeric) / max(abs(numeric), 1e-10)
            worst = max(worst, err)
        checked += take
    print(f"max relative gradient error over {checked} pixels: {worst:.3e}")
    assert worst < 1e-5
    elapsed = time.monotonic() - t0
    print(f"({elapsed:.3f}s)")
    assert elapsed < 10.0


# --- 5. neighbor sets vs brute-force window scan -------------------------------


def brute_force_sets(label, window):
    h, w = label.data.shape
    k = label.num_classes
    r = window // 2
    mask = np.zeros((h, w, k), dtype=bool)
    valid = label.data != VOID
    for i in range(h):
        for j in range(w):
            if not valid[i, j]:
                continue
            win = label.data[max(0, i - r) : i + r + 1, max(0, j - r) : j + r + 1]
            for cls in np.unique(win):
                if cls != VOID:
                    mask[i, j, cls] = True
    return mask, valid


def test_criterion_05_neighbor_set_oracle():
    t0 = time.monotonic()
    rng = np.random.default_rng(4)
    for trial in range(200):
        label = random_label(rng, 32, 32, k=int(rng.integers(2, 6)))
        got = boundary_neighbor_sets(label, 3)
        want_mask, want_valid = brute_force_sets(label, 3)
        np.testing.assert_array_equal(got.mask, want_mask)
        np.testing.assert_array_equal(got.valid, want_valid)
    elapsed = time.monotonic() - t0
    print(f"200 random 32x32 maps exact ({elapsed:.3f}s)")
    assert elapsed < 5.0


# --- 6. dataset scaling law ----------------------------------------------------


def _scene_tree(tmp_path, m=4):
    entries = []
    sequences = {}
    for s in range(m):
        sc = synth_scene(SceneParams(height=64, width=64, num_frames=13, seed=s))
        origin = f"scene{s}"
        frames = []
        for t, frame in enumerate(sc.frames):
            rel = f"{origin}_f{t:02d}.png"
            save_frame(frame, tmp_path / rel)
            frames.append(rel)
        g = sc.gt_index
        save_label(sc.labels[g], tmp_path / f"{origin}_gt.png")
        entries.append(
            ManifestEntry(frame=frames[g], label=f"{origin}_gt.png",
                          source=SOURCE_GT, step=0, origin=origin)
        )
        sequences[origin] = FrameSequence(tuple(frames), g)
    return DatasetManifest(tuple(entries), root=tmp_path), sequences


def test_criterion_06_dataset_scaling_law(tmp_path):
    t0 = time.monotonic()
    manifest, sequences = _scene_tree(tmp_path, m=4)
    acc = build_augmented_dataset(
        manifest, sequences,
        PropagationConfig(k=5, accumulation=Accumulation.ACCUMULATED,
                          flow_params=STUDY_FLOW_PARAMS),
        tmp_path / "acc", 4,
    )
    per_origin_acc = {o: sum(1 for e in acc if e.origin == o) for o in sequences}
    non = build_augmented_dataset(
        manifest, sequences,
        PropagationConfig(k=3, accumulation=Accumulation.NON_ACCUMULATED,
                          flow_params=STUDY_FLOW_PARAMS),
        tmp_path / "non", 4,
    )
    per_origin_non = {o: sum(1 for e in non if e.origin == o) for o in sequences}
    print(f"accumulated k=5: {len(acc)} entries {per_origin_acc}")
    print(f"non-accumulated k=3: {len(non)} entries {per_origin_non}")
    assert all(n == 11 for n in per_origin_acc.values()) and len(acc) == 44
    assert all(n == 3 for n in per_origin_non.values()) and len(non) == 12
    elapsed = time.monotonic() - t0
    print(f"({elapsed:.3f}s)")
    assert elapsed < 30.0


# --- 7. motion quality on in-range translating scenes --------------------------


def test_criterion_07_motion_quality():
    t0 = time.monotonic()
    medians = []
    for seed in range(3):
        sc = synth_scene(
            SceneParams(height=96, width=96, num_frames=3, seed=seed,
                        max_speed=2.0, max_accel=0.0)
        )
        for i in range(len(sc.motions)):
            field = estimate_motion(sc.frames[i], sc.frames[i + 1], STUDY_FLOW_PARAMS)
            epe = np.hypot(
                field.u.astype(np.float64) - sc.motions[i].u.astype(np.float64),
                field.v.astype(np.float64) - sc.motions[i].v.astype(np.float64),
            )
            medians.append(float(np.median(epe)))
    print(f"median EPE per pair: {[round(m, 4) for m in medians]}")
    assert all(m < 0.2 for m in medians)
    elapsed = time.monotonic() - t0
    print(f"({elapsed:.3f}s)")
    assert elapsed < 30.0


# --- 8. mIoU vs brute-force tallies --------------------------------------------


def brute_force_iou(gt, pred, k):
    inter = np.zeros(k)
    union = np.zeros(k)
    for c in range(k):
        g = gt.data == c
        p = (pred.data == c) & (gt.data != VOID)
        inter[c] = (g & p).sum()
        union[c] = (g | p).sum()
    with np.errstate(invalid="ignore"):
        return inter / union


def test_criterion_08_miou_oracle():
    t0 = time.monotonic()
    rng = np.random.default_rng(5)
    for trial in range(100):
        k = int(rng.integers(2, 6))
        gt = random_label(rng, 16, 16, k=k)
        pred = random_label(rng, 16, 16, k=k, void_frac=0.05)
        cm = ConfusionMatrix(k)
        cm.update(gt, pred)
        got_per_class, got_mean = miou(cm)
        want = brute_force_iou(gt, pred, k)
        defined = ~np.isnan(want)
        np.testing.assert_allclose(got_per_class[defined], want[defined], atol=0)
        assert np.isnan(got_per_class).tolist() == np.isnan(want).tolist()
        if defined.any():
            assert got_mean == pytest.approx(want[defined].mean(), abs=0)
    perfect = random_label(rng, 16, 16, void_frac=0.0)
    cm = ConfusionMatrix(4)
    cm.update(perfect, perfect)
    assert miou(cm)[1] == 1.0
    elapsed = time.monotonic() - t0
    print(f"100 random pairs exact; perfect prediction -> mIoU 1.0 ({elapsed:.3f}s)")
    assert elapsed < 5.0


# --- 9. entropy bounds ----------------------------------------------------------


def test_criterion_09_entropy_bounds():
    t0 = time.monotonic()
    for k in (2, 4, 19):
        uniform = ProbMap(np.full((9, 9, k), 1.0 / k))
        np.testing.assert_allclose(entropy_map(uniform), np.log(k), atol=1e-9)
    onehot = np.zeros((9, 9, 4))
    onehot[:, :, 2] = 1.0
    np.testing.assert_array_equal(entropy_map(ProbMap(onehot)), 0.0)
    elapsed = time.monotonic() - t0
    print(f"uniform -> ln K within 1e-9, one-hot -> exactly 0 ({elapsed:.3f}s)")
    assert elapsed < 1.0


# --- 10. file formats round-trip and reject malformed inputs --------------------


def test_criterion_10_file_format_round_trips(tmp_path):
    t0 = time.monotonic()
    rng = np.random.default_rng(6)

    field = MotionField(rng.standard_normal((11, 7, 2)).astype(np.float32))
    save_motion(field, tmp_path / "f.mot")
    np.testing.assert_array_equal(load_motion(tmp_path / "f.mot").data, field.data)
    save_motion(field, tmp_path / "f2.mot")
    assert (tmp_path / "f.mot").read_bytes() == (tmp_path / "f2.mot").read_bytes()

    label = random_label(rng, 13, 9)
    save_label(label, tmp_path / "l.png")
    np.testing.assert_array_equal(load_label(tmp_path / "l.png", 4).data, label.data)

    z = Logits(rng.standard_normal((5, 6, 3)).astype(np.float32))
    save_logits(z, tmp_path / "z.lgt")
    np.testing.assert_array_equal(load_logits(tmp_path / "z.lgt").data, z.data)

    manifest = DatasetManifest(
        (ManifestEntry(frame="a.png", label="b.png", source=SOURCE_GT,
                       step=0, origin="x"),),
        root=tmp_path,
    )
    save_manifest(manifest, tmp_path / "m.jsonl")
    assert tuple(load_manifest(tmp_path / "m.jsonl")) == tuple(manifest)
    save_manifest(manifest, tmp_path / "m2.jsonl")
    assert (tmp_path / "m.jsonl").read_bytes() == (tmp_path / "m2.jsonl").read_bytes()

    good_motion = (tmp_path / "f.mot").read_bytes()
    (tmp_path / "bad1.mot").write_bytes(b"XXXX" + good_motion[4:])
    (tmp_path / "bad2.mot").write_bytes(good_motion[:-4])
    for name in ("bad1.mot", "bad2.mot"):
        with pytest.raises(FormatError):
            load_motion(tmp_path / name)
    good_logits = (tmp_path / "z.lgt").read_bytes()
    (tmp_path / "bad.lgt").write_bytes(b"NOPE" + good_logits[4:])
    with pytest.raises(FormatError):
        load_logits(tmp_path / "bad.lgt")
    save_frame(random_frame(rng, 8, 8), tmp_path / "rgb.png")
    with pytest.raises(FormatError):
        load_label(tmp_path / "rgb.png", 4)
    (tmp_path / "bad.jsonl").write_text('{"frame": "a.png", "wat": 1}\n')
    with pytest.raises(FormatError):
        load_manifest(tmp_path / "bad.jsonl")

    elapsed = time.monotonic() - t0
    print(f"four formats bit-exact, six malformed fixtures rejected ({elapsed:.3f}s)")
    assert elapsed < 5.0


# --- 11 & 12. the directional study ---------------------------------------------


@pytest.fixture(scope="module")
def default_study():
    t0 = time.monotonic()
    report = run_study(StudyConfig())
    return report, time.monotonic() - t0


def test_criterion_11_directional_study(default_study):
    report, elapsed = default_study
    assert len(report.config.seeds) >= 5
    failures = sum(1 for r in report.rows if r["error"] is not None)
    assert failures == 0, f"{failures} study cells failed"

    # Propagation comparisons are made under the relaxed loss (the
    # configuration the method argues for); the loss comparison pools
    # over every propagated cell.  Noise radius 2 is the study default.
    assert report.config.noise_radius == 2
    jp_lp, rec_pred, rel_oh = [], [], []
    for k in (1, 2, 3):
        jp_lp.append(
            report.median_miou(k=k, pairing="joint", loss="relaxed")
            - report.median_miou(k=k, pairing="label_only", loss="relaxed")
        )
        rec_pred.append(
            report.median_miou(k=k, mode="reconstruction", loss="relaxed")
            - report.median_miou(k=k, mode="prediction", loss="relaxed")
        )
        rel_oh.append(
            report.median_miou(k=k, loss="relaxed")
            - report.median_miou(k=k, loss="onehot")
        )
    print(f"jp-lp margins by k: {[round(m, 4) for m in jp_lp]}")
    print(f"rec-pred margins by k: {[round(m, 4) for m in rec_pred]}")
    print(f"relaxed-onehot margins by k: {[round(m, 4) for m in rel_oh]}")
    print(f"study wall time: {elapsed:.1f}s over {len(report.rows)} cells")
    assert all(m >= 0 for m in jp_lp), "joint pairing lost to label-only"
    assert all(m >= 0 for m in rec_pred), "reconstruction lost to prediction"
    assert all(m >= 0 for m in rel_oh), "relaxation lost to one-hot"
    assert elapsed < 600.0


def test_criterion_12_relaxation_gap_grows_with_k(default_study):
    report, _ = default_study
    gaps = {
        k: report.median_miou(k=k, loss="relaxed") - report.median_miou(k=k, loss="onehot")
        for k in (1, 3)
    }
    print(f"relaxed-onehot gap at k=1: {gaps[1]:.4f}, at k=3: {gaps[3]:.4f}")
    assert gaps[3] >= gaps[1]


# --- 13. studies rerun byte-identically ------------------------------------------


def test_criterion_13_study_rerun_determinism(tmp_path):
    t0 = time.monotonic()
    for name in ("a", "b"):
        code = cli.main(["study", "--seeds", "0,1", "--out", str(tmp_path / name)])
        assert code == 0
    names = ["rows.jsonl", "aggregates.json", "summary.txt", "config.json"]
    for name in names:
        a = (tmp_path / "a" / name).read_bytes()
        b = (tmp_path / "b" / name).read_bytes()
        assert a == b, f"{name} differs between identical runs"
    elapsed = time.monotonic() - t0
    print(f"two runs, four report files each, byte-identical ({elapsed:.1f}s)")
    assert elapsed < 600.0
