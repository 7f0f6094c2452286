"""Command-line front end.

One executable, ten subcommands covering the pipeline: motion estimation
(`flow`), propagation (`propagate`, `build`), losses (`loss`), crop
scheduling (`sample-plan`), metrics (`eval`, `entropy`), synthetic scenes
(`synth`), toy training (`train-toy`), and the comparison study (`study`).

Every run resolves its configuration from three layers — hard defaults,
then an optional JSON config file (--config), then explicit flags — and
logs the fully resolved result as one JSON line on stderr.  Unknown config
keys are rejected.  All randomness is seeded (--seed, default 0), and all
outputs are byte-deterministic given identical inputs and seeds.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import evaluate, relax, sampling
from .imageio import load_frame, load_label, save_frame, save_label
from .manifest import (
    SOURCE_GT,
    SOURCE_SYNTH,
    DatasetManifest,
    ManifestEntry,
    load_manifest,
    save_manifest,
)
from .motion import FlowParams, estimate_motion, load_motion, save_motion
from .propagate import (
    Accumulation,
    Direction,
    FrameSequence,
    MotionMode,
    Pairing,
    PropagationConfig,
    build_augmented_dataset,
    propagate_sequence,
)
from .study import STUDY_FLOW_PARAMS, STUDY_SCENE, STUDY_TRAIN, StudyConfig, run_study
from .toytrain import (
    LossKind,
    SceneParams,
    TrainConfig,
    synth_scene,
    train_pixel_classifier,
)
from .types import Frame, FormatError, ValidationError

_GLOBAL_DEFAULTS = {"seed": 0, "threads": 1, "out": None, "config": None}


def _add_global_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON file of flag defaults")
    p.add_argument("--seed", type=int, help="global RNG seed (default 0)")
    p.add_argument("--threads", type=int, help="advisory thread count (runs are sequential)")
    p.add_argument("--out", metavar="DIR", help="output directory")


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge hard defaults <- config file <- explicit flags; reject unknown
    config keys; log the resolved configuration."""
    known = dict(_GLOBAL_DEFAULTS)
    known.update(defaults)
    known.pop("config", None)
    file_cfg: dict = {}
    if args.config is not None:
        with open(args.config, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        if not isinstance(file_cfg, dict):
            raise ValidationError(f"config file {args.config} must hold a JSON object")
        unknown = sorted(set(file_cfg) - set(known))
        if unknown:
            raise ValidationError(
                f"config file {args.config} has unknown keys for this command: {unknown}"
            )
    merged = {}
    for key, default in known.items():
        cli_value = getattr(args, key.replace("-", "_"), None)
        if cli_value is not None:
            merged[key] = cli_value
        elif key in file_cfg:
            merged[key] = file_cfg[key]
        else:
            merged[key] = default
    if not 0 <= int(merged["seed"]) < 2**64:
        raise ValidationError(f"--seed must fit in a uint64, got {merged['seed']}")
    log_line = dict(merged)
    log_line["command"] = args.command
    print(json.dumps(log_line, sort_keys=True, default=str), file=sys.stderr)
    return merged


def _require_out(merged: dict) -> Path:
    if not merged["out"]:
        raise ValidationError("this command needs --out <dir>")
    out = Path(merged["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _flow_params(merged: dict) -> FlowParams:
    return FlowParams(
        pyramid_levels=int(merged["pyramid-levels"]),
        window_radius=int(merged["window-radius"]),
        iterations_per_level=int(merged["iterations-per-level"]),
        min_eigen_threshold=float(merged["min-eigen-threshold"]),
    )


_FLOW_DEFAULTS = {
    "pyramid-levels": FlowParams().pyramid_levels,
    "window-radius": FlowParams().window_radius,
    "iterations-per-level": FlowParams().iterations_per_level,
    "min-eigen-threshold": FlowParams().min_eigen_threshold,
}


def _add_flow_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pyramid-levels", type=int)
    p.add_argument("--window-radius", type=int)
    p.add_argument("--iterations-per-level", type=int)
    p.add_argument("--min-eigen-threshold", type=float)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(",") if tok.strip() != "")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_flow(args) -> int:
    merged = _resolve(args, {**_FLOW_DEFAULTS, "gt": None})
    out = _require_out(merged)
    field = estimate_motion(
        load_frame(args.frame_a), load_frame(args.frame_b), _flow_params(merged)
    )
    save_motion(field, out / "flow.mot")
    report = {"out": str(out / "flow.mot"), "height": field.height, "width": field.width}
    if merged["gt"]:
        truth = load_motion(merged["gt"])
        if truth.data.shape != field.data.shape:
            raise ValidationError("ground-truth motion size differs from the frames")
        epe = np.hypot(
            field.u.astype(np.float64) - truth.u.astype(np.float64),
            field.v.astype(np.float64) - truth.v.astype(np.float64),
        )
        report.update(
            mean_epe=float(epe.mean()),
            median_epe=float(np.median(epe)),
            p95_epe=float(np.percentile(epe, 95)),
        )
    print(json.dumps(report, sort_keys=True))
    return 0


_PROP_CHOICES = {
    "direction": Direction,
    "pairing": Pairing,
    "motion-mode": MotionMode,
    "accumulation": Accumulation,
}


def _prop_config(merged: dict) -> PropagationConfig:
    return PropagationConfig(
        k=int(merged["k"]),
        direction=Direction(merged["direction"]),
        pairing=Pairing(merged["pairing"]),
        motion_mode=MotionMode(merged["motion-mode"]),
        accumulation=Accumulation(merged["accumulation"]),
        flow_params=_flow_params(merged),
    )


_PROP_DEFAULTS = {
    "k": 1,
    "direction": Direction.BOTH.value,
    "pairing": Pairing.JOINT.value,
    "motion-mode": MotionMode.RECONSTRUCTION.value,
    "accumulation": Accumulation.NON_ACCUMULATED.value,
    **_FLOW_DEFAULTS,
}


def _add_prop_flags(p: argparse.ArgumentParser) -> None:
    for flag, enum_cls in _PROP_CHOICES.items():
        p.add_argument(f"--{flag}", choices=[e.value for e in enum_cls])
    p.add_argument("--k", type=int)
    _add_flow_flags(p)


def _cmd_propagate(args) -> int:
    merged = _resolve(
        args, {**_PROP_DEFAULTS, "label": None, "gt-index": None, "num-classes": None,
               "origin": "seq"}
    )
    out = _require_out(merged)
    if merged["label"] is None or merged["gt-index"] is None or merged["num-classes"] is None:
        raise ValidationError("propagate needs --label, --gt-index and --num-classes")
    config = _prop_config(merged)
    frames = [load_frame(p) for p in args.frames]
    label = load_label(merged["label"], int(merged["num-classes"]))
    motion_fields = None
    if config.motion_mode is MotionMode.EXTERNAL:
        motion_fields = {}
        for item in args.motion_file or []:
            step_text, _, path = item.partition(":")
            if not path:
                raise ValidationError(f"--motion-file expects STEP:PATH, got {item!r}")
            motion_fields[int(step_text)] = load_motion(path)
    samples = propagate_sequence(
        frames, int(merged["gt-index"]), label, config, motion_fields
    )
    origin = merged["origin"]
    entries = [
        ManifestEntry(
            frame=args.frames[int(merged["gt-index"])],
            label=merged["label"],
            source=SOURCE_GT,
            step=0,
            origin=origin,
        )
    ]
    for sample in samples:
        tag = f"{origin}_s{sample.step:+d}"
        save_frame(sample.frame, out / f"{tag}_frame.png")
        save_label(sample.label, out / f"{tag}_label.png")
        entries.append(
            ManifestEntry(
                frame=f"{tag}_frame.png",
                label=f"{tag}_label.png",
                source=SOURCE_SYNTH,
                step=sample.step,
                origin=origin,
                pairing=config.pairing.value,
            )
        )
    save_manifest(DatasetManifest(tuple(entries), root=out), out / "manifest.jsonl")
    print(json.dumps({"entries": len(entries), "manifest": str(out / "manifest.jsonl")}))
    return 0


def _cmd_build(args) -> int:
    merged = _resolve(
        args, {**_PROP_DEFAULTS, "manifest": None, "sequences": None, "num-classes": None}
    )
    out = _require_out(merged)
    for need in ("manifest", "sequences", "num-classes"):
        if merged[need] is None:
            raise ValidationError(f"build needs --{need}")
    gt_manifest = load_manifest(merged["manifest"])
    with open(merged["sequences"], "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    sequences = {
        origin: FrameSequence(tuple(rec["frames"]), int(rec["gt_position"]))
        for origin, rec in raw.items()
    }
    result = build_augmented_dataset(
        gt_manifest, sequences, _prop_config(merged), out, int(merged["num-classes"])
    )
    print(json.dumps({"entries": len(result), "manifest": str(out / "manifest.jsonl")}))
    return 0


def _cmd_loss(args) -> int:
    merged = _resolve(
        args,
        {"logits": None, "label": None, "num-classes": None,
         "loss": LossKind.RELAXED.value, "window": 3, "per-pixel-png": None},
    )
    for need in ("logits", "label", "num-classes"):
        if merged[need] is None:
            raise ValidationError(f"loss needs --{need}")
    logits = relax.load_logits(merged["logits"])
    label = load_label(merged["label"], int(merged["num-classes"]))
    if LossKind(merged["loss"]) is LossKind.RELAXED:
        sets = relax.boundary_neighbor_sets(label, int(merged["window"]))
        value, per_pixel = relax.relaxed_loss(logits, sets)
    else:
        value, per_pixel = relax.cross_entropy_loss(logits, label)
    if merged["per-pixel-png"]:
        peak = float(per_pixel.max())
        scaled = per_pixel / peak if peak > 0 else per_pixel
        save_frame(Frame(scaled[:, :, np.newaxis]), merged["per-pixel-png"])
    print(
        json.dumps(
            {"loss": value, "valid_pixels": int((~label.void_mask()).sum())},
            sort_keys=True,
        )
    )
    return 0


def _cmd_sample_plan(args) -> int:
    merged = _resolve(
        args,
        {"manifest": None, "num-classes": None, "crop-size": None, "epoch-size": None,
         "uniform-fraction": 0.5, "epoch": 0, "class-filter": None},
    )
    for need in ("manifest", "num-classes", "crop-size", "epoch-size"):
        if merged[need] is None:
            raise ValidationError(f"sample-plan needs --{need}")
    manifest = load_manifest(merged["manifest"])
    class_filter = _ints(merged["class-filter"]) if merged["class-filter"] else None
    index = sampling.build_centroid_index(manifest, int(merged["num-classes"]), class_filter)
    crops = sampling.sample_crops(
        index,
        crop_size=int(merged["crop-size"]),
        epoch_size=int(merged["epoch-size"]),
        uniform_fraction=float(merged["uniform-fraction"]),
        seed=int(merged["seed"]),
        epoch=int(merged["epoch"]),
    )
    lines = [
        json.dumps(
            {"entry": c.entry_index, "top": c.top, "left": c.left, "size": c.size,
             "kind": c.kind, "class": c.class_id},
            sort_keys=True,
        )
        for c in crops
    ]
    for line in lines:
        print(line)
    if merged["out"]:
        out = _require_out(merged)
        (out / "plan.jsonl").write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return 0


def _cmd_eval(args) -> int:
    merged = _resolve(args, {"gt": None, "pred": None, "num-classes": None})
    for need in ("gt", "pred", "num-classes"):
        if merged[need] is None:
            raise ValidationError(f"eval needs --{need}")
    k = int(merged["num-classes"])
    gt_manifest = load_manifest(merged["gt"])
    pred_manifest = load_manifest(merged["pred"])
    if len(gt_manifest) != len(pred_manifest):
        raise ValidationError(
            f"manifest lengths differ: gt {len(gt_manifest)} vs pred {len(pred_manifest)}"
        )
    cm = evaluate.ConfusionMatrix(k)
    for gt_entry, pred_entry in zip(gt_manifest, pred_manifest):
        cm.update(
            load_label(gt_manifest.label_path(gt_entry), k),
            load_label(pred_manifest.label_path(pred_entry), k),
        )
    per_class, mean = evaluate.miou(cm)
    for c in range(k):
        iou = per_class[c]
        print(json.dumps({"class": c, "iou": None if math.isnan(iou) else float(iou)}))
    print(json.dumps({"miou": None if math.isnan(mean) else float(mean)}))
    print("class  iou", file=sys.stderr)
    for c in range(k):
        iou = per_class[c]
        print(f"{c:<6} {'absent' if math.isnan(iou) else f'{iou:.4f}'}", file=sys.stderr)
    print(f"mIoU   {'undefined' if math.isnan(mean) else f'{mean:.4f}'}", file=sys.stderr)
    return 0


def _cmd_entropy(args) -> int:
    merged = _resolve(args, {"logits": None})
    if merged["logits"] is None:
        raise ValidationError("entropy needs --logits")
    out = _require_out(merged)
    logits = relax.load_logits(merged["logits"])
    ent = evaluate.entropy_map(evaluate.softmax(logits))
    peak = math.log(logits.num_classes) if logits.num_classes > 1 else 1.0
    save_frame(Frame(np.clip(ent / peak, 0.0, 1.0)[:, :, np.newaxis]), out / "entropy.png")
    print(
        json.dumps(
            {"min": float(ent.min()), "max": float(ent.max()), "mean": float(ent.mean()),
             "png": str(out / "entropy.png")},
            sort_keys=True,
        )
    )
    return 0


_SCENE_DEFAULTS = {
    "height": SceneParams().height,
    "width": SceneParams().width,
    "frames": SceneParams().num_frames,
    "shapes": SceneParams().num_shapes,
    "classes": SceneParams().num_classes,
    "min-shape": SceneParams().min_shape,
    "max-shape": SceneParams().max_shape,
    "max-speed": SceneParams().max_speed,
    "max-accel": SceneParams().max_accel,
    "texture-sigma": SceneParams().texture_sigma,
}


def _add_scene_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--shapes", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--min-shape", type=int)
    p.add_argument("--max-shape", type=int)
    p.add_argument("--max-speed", type=float)
    p.add_argument("--max-accel", type=float)
    p.add_argument("--texture-sigma", type=float)


def _scene_params(merged: dict) -> SceneParams:
    return SceneParams(
        height=int(merged["height"]),
        width=int(merged["width"]),
        num_frames=int(merged["frames"]),
        num_shapes=int(merged["shapes"]),
        num_classes=int(merged["classes"]),
        min_shape=int(merged["min-shape"]),
        max_shape=int(merged["max-shape"]),
        max_speed=float(merged["max-speed"]),
        max_accel=float(merged["max-accel"]),
        texture_sigma=float(merged["texture-sigma"]),
        seed=int(merged["seed"]),
    )


def _cmd_synth(args) -> int:
    merged = _resolve(args, {**_SCENE_DEFAULTS, "origin": "scene"})
    out = _require_out(merged)
    scene = synth_scene(_scene_params(merged))
    (out / "frames").mkdir(exist_ok=True)
    (out / "labels").mkdir(exist_ok=True)
    (out / "motion").mkdir(exist_ok=True)
    frame_paths = []
    for t, (frame, label) in enumerate(zip(scene.frames, scene.labels)):
        frame_paths.append(f"frames/t{t:03d}.png")
        save_frame(frame, out / frame_paths[-1])
        save_label(label, out / f"labels/t{t:03d}.png")
    for t, field in enumerate(scene.motions):
        save_motion(field, out / f"motion/step{t:03d}.mot")
    origin = merged["origin"]
    center = scene.gt_index
    gt_manifest = DatasetManifest(
        (
            ManifestEntry(
                frame=frame_paths[center],
                label=f"labels/t{center:03d}.png",
                source=SOURCE_GT,
                step=0,
                origin=origin,
            ),
        ),
        root=out,
    )
    save_manifest(gt_manifest, out / "manifest.jsonl")
    eval_manifest = DatasetManifest(
        tuple(
            ManifestEntry(
                frame=frame_paths[t],
                label=f"labels/t{t:03d}.png",
                source=SOURCE_GT,
                step=0,
                origin=f"{origin}_t{t:03d}",
            )
            for t in range(len(scene.frames))
        ),
        root=out,
    )
    save_manifest(eval_manifest, out / "eval_manifest.jsonl")
    with open(out / "sequences.json", "w", encoding="utf-8") as fh:
        json.dump({origin: {"frames": frame_paths, "gt_position": center}}, fh, indent=2)
        fh.write("\n")
    print(json.dumps({"frames": len(scene.frames), "out": str(out)}))
    return 0


_TRAIN_DEFAULTS = {
    "epochs": TrainConfig().epochs,
    "batch-size": TrainConfig().batch_size,
    "lr0": TrainConfig().lr0,
    "power": TrainConfig().power,
    "loss": TrainConfig().loss.value,
    "relax-window": TrainConfig().relax_window,
}


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr0", type=float)
    p.add_argument("--power", type=float)
    p.add_argument("--loss", choices=[e.value for e in LossKind])
    p.add_argument("--relax-window", type=int)


def _train_config(merged: dict) -> TrainConfig:
    return TrainConfig(
        epochs=int(merged["epochs"]),
        batch_size=int(merged["batch-size"]),
        lr0=float(merged["lr0"]),
        power=float(merged["power"]),
        loss=LossKind(merged["loss"]),
        relax_window=int(merged["relax-window"]),
        seed=int(merged["seed"]),
    )


def _cmd_train_toy(args) -> int:
    merged = _resolve(args, {**_TRAIN_DEFAULTS, "manifest": None, "num-classes": None})
    out = _require_out(merged)
    for need in ("manifest", "num-classes"):
        if merged[need] is None:
            raise ValidationError(f"train-toy needs --{need}")
    manifest = load_manifest(merged["manifest"])
    result = train_pixel_classifier(manifest, int(merged["num-classes"]), _train_config(merged))
    np.save(out / "weights.npy", result.model.weights)
    with open(out / "history.jsonl", "w", encoding="utf-8") as fh:
        for row in result.history:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    last = result.history[-1]
    print(json.dumps({"loss": last["loss"], "miou": last["miou"],
                      "weights": str(out / "weights.npy")}, sort_keys=True))
    return 0


# These flag defaults rebuild StudyConfig() exactly, so a bare
# `segprop study --out DIR` runs the calibrated comparison.
_STUDY_DEFAULTS = {
    "height": STUDY_SCENE.height,
    "width": STUDY_SCENE.width,
    "frames": STUDY_SCENE.num_frames,
    "shapes": STUDY_SCENE.num_shapes,
    "classes": STUDY_SCENE.num_classes,
    "min-shape": STUDY_SCENE.min_shape,
    "max-shape": STUDY_SCENE.max_shape,
    "max-speed": STUDY_SCENE.max_speed,
    "max-accel": STUDY_SCENE.max_accel,
    "texture-sigma": STUDY_SCENE.texture_sigma,
    "epochs": STUDY_TRAIN.epochs,
    "batch-size": STUDY_TRAIN.batch_size,
    "lr0": STUDY_TRAIN.lr0,
    "power": STUDY_TRAIN.power,
    "loss": STUDY_TRAIN.loss.value,
    "relax-window": STUDY_TRAIN.relax_window,
    "seeds": ",".join(str(s) for s in StudyConfig().seeds),
    "ks": ",".join(str(k) for k in StudyConfig().ks),
    "noise-radius": StudyConfig().noise_radius,
    "accumulation": StudyConfig().accumulation.value,
    "pyramid-levels": STUDY_FLOW_PARAMS.pyramid_levels,
    "window-radius": STUDY_FLOW_PARAMS.window_radius,
    "iterations-per-level": STUDY_FLOW_PARAMS.iterations_per_level,
    "min-eigen-threshold": STUDY_FLOW_PARAMS.min_eigen_threshold,
}


def _cmd_study(args) -> int:
    merged = _resolve(args, _STUDY_DEFAULTS)
    out = _require_out(merged)
    report = run_study(_study_config(merged))
    report.save(out)
    print(report.summary_text(), end="")
    return 0


def _study_config(merged: dict) -> StudyConfig:
    seeds = _ints(merged["seeds"]) if isinstance(merged["seeds"], str) else tuple(merged["seeds"])
    ks = _ints(merged["ks"]) if isinstance(merged["ks"], str) else tuple(merged["ks"])
    return StudyConfig(
        scene=_scene_params(merged),
        ks=ks,
        seeds=seeds,
        noise_radius=int(merged["noise-radius"]),
        accumulation=Accumulation(merged["accumulation"]),
        train=_train_config(merged),
        flow=_flow_params(merged),
    )


# ---------------------------------------------------------------------------
# wiring


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segprop",
        description="Synthesize, train on, and evaluate propagated segmentation data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flow", help="estimate motion between two frames")
    p.add_argument("frame_a")
    p.add_argument("frame_b")
    p.add_argument("--gt", help="ground-truth motion file; adds an EPE report")
    _add_flow_flags(p)
    _add_global_flags(p)
    p.set_defaults(func=_cmd_flow)

    p = sub.add_parser("propagate", help="propagate one labeled frame along a clip")
    p.add_argument("frames", nargs="+", help="ordered clip frames")
    p.add_argument("--label")
    p.add_argument("--gt-index", type=int)
    p.add_argument("--num-classes", type=int)
    p.add_argument("--origin")
    p.add_argument("--motion-file", action="append", metavar="STEP:PATH",
                   help="external motion per signed step")
    _add_prop_flags(p)
    _add_global_flags(p)
    p.set_defaults(func=_cmd_propagate)

    p = sub.add_parser("build", help="expand a GT manifest into an augmented dataset")
    p.add_argument("--manifest")
    p.add_argument("--sequences", help="JSON: origin -> {frames: [...], gt_position: n}")
    p.add_argument("--num-classes", type=int)
    _add_prop_flags(p)
    _add_global_flags(p)
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("loss", help="score a logits file against a label map")
    p.add_argument("--logits")
    p.add_argument("--label")
    p.add_argument("--num-classes", type=int)
    p.add_argument("--loss", choices=[e.value for e in LossKind])
    p.add_argument("--window", type=int)
    p.add_argument("--per-pixel-png", help="write the normalized per-pixel loss map")
    _add_global_flags(p)
    p.set_defaults(func=_cmd_loss)

    p = sub.add_parser("sample-plan", help="emit a class-uniform crop schedule")
    p.add_argument("--manifest")
    p.add_argument("--num-classes", type=int)
    p.add_argument("--crop-size", type=int)
    p.add_argument("--epoch-size", type=int)
    p.add_argument("--uniform-fraction", type=float)
    p.add_argument("--epoch", type=int)
    p.add_argument("--class-filter", help="comma-separated class ids to index")
    _add_global_flags(p)
    p.set_defaults(func=_cmd_sample_plan)

    p = sub.add_parser("eval", help="per-class IoU of prediction vs ground-truth manifests")
    p.add_argument("--gt", help="ground-truth manifest")
    p.add_argument("--pred", help="prediction manifest (paired by line order)")
    p.add_argument("--num-classes", type=int)
    _add_global_flags(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("entropy", help="entropy map of a logits file")
    p.add_argument("--logits")
    _add_global_flags(p)
    p.set_defaults(func=_cmd_entropy)

    p = sub.add_parser("synth", help="render a synthetic scene dataset")
    p.add_argument("--origin")
    _add_scene_flags(p)
    _add_global_flags(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train-toy", help="train the per-pixel linear classifier")
    p.add_argument("--manifest")
    p.add_argument("--num-classes", type=int)
    _add_train_flags(p)
    _add_global_flags(p)
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("study", help="run the propagation/loss comparison grid")
    p.add_argument("--seeds", help="comma-separated seeds")
    p.add_argument("--ks", help="comma-separated propagation depths")
    p.add_argument("--noise-radius", type=int)
    p.add_argument("--accumulation", choices=[e.value for e in Accumulation])
    _add_scene_flags(p)
    _add_train_flags(p)
    _add_flow_flags(p)
    _add_global_flags(p)
    p.set_defaults(func=_cmd_study)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, FormatError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
