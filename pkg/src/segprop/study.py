"""Directional study: does augmentation help, and in the expected order?

For a grid of (seed, k, pairing, motion source, loss) cells this harness
synthesizes a clip, corrupts the center annotation's boundaries, builds the
propagated training set for the cell, trains the toy classifier, and scores
it against the clean generator labels of every real frame.  Scene synthesis,
corruption, and training are keyed by the seed alone, so cells differ only
in the axis under study; propagated sample sets are cached so paired cells
(e.g. the two losses) train on byte-identical data.

Reports are deliberately timestamp-free: the same config must serialize to
the same bytes run after run.
"""
from __future__ import annotations

import json
import logging
import os
import statistics
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .evaluate import ConfusionMatrix
from .motion import FlowParams
from .propagate import (
    Accumulation,
    MotionMode,
    Pairing,
    PropagationConfig,
    propagate_sequence,
)
from .toytrain import (
    LossKind,
    Scene,
    SceneParams,
    TrainConfig,
    boundary_noise,
    synth_scene,
    train_on_samples,
)
from .types import Frame, LabelMap, ValidationError

log = logging.getLogger(__name__)

STUDY_FLOW_PARAMS = FlowParams(pyramid_levels=2, window_radius=5, iterations_per_level=3)


# Scene and schedule chosen by a held-out sweep: shapes large enough that a
# linear model can hit them, motion fast enough that propagation distance
# matters, and the orderings under study stable across two disjoint seed sets.
STUDY_SCENE = SceneParams(
    height=64,
    width=64,
    num_frames=9,
    num_shapes=4,
    num_classes=4,
    min_shape=11,
    max_shape=17,
    max_speed=1.25,
    max_accel=0.45,
    texture_sigma=0.05,
)

# The toy model needs a far larger rate than a real network; features are
# O(1) and there is no normalization anywhere.
STUDY_TRAIN = TrainConfig(epochs=30, lr0=10.0, relax_window=3)


@dataclass(frozen=True)
class StudyConfig:
    scene: SceneParams = STUDY_SCENE
    ks: tuple[int, ...] = (0, 1, 2, 3)
    pairings: tuple[Pairing, ...] = (Pairing.JOINT, Pairing.LABEL_ONLY)
    modes: tuple[MotionMode, ...] = (MotionMode.RECONSTRUCTION, MotionMode.PREDICTION)
    losses: tuple[LossKind, ...] = (LossKind.ONEHOT, LossKind.RELAXED)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6)
    noise_radius: int = 2
    accumulation: Accumulation = Accumulation.ACCUMULATED
    train: TrainConfig = STUDY_TRAIN
    flow: FlowParams = STUDY_FLOW_PARAMS

    def __post_init__(self):
        if not self.seeds:
            raise ValidationError("study needs at least one seed")
        if not self.ks or any(k < 0 for k in self.ks):
            raise ValidationError("ks must be non-empty and non-negative")
        if max(self.ks) > self.scene.num_frames // 2 - 1:
            raise ValidationError(
                f"k={max(self.ks)} needs {2 * max(self.ks) + 3} frames, scene has "
                f"{self.scene.num_frames}"
            )
        if self.noise_radius < 0:
            raise ValidationError("noise_radius must be >= 0")

    def to_json(self) -> str:
        record = {
            "scene": {k: list(v) if isinstance(v, tuple) else v
                      for k, v in vars(self.scene).items()},
            "ks": list(self.ks),
            "pairings": [p.value for p in self.pairings],
            "modes": [m.value for m in self.modes],
            "losses": [l.value for l in self.losses],
            "seeds": list(self.seeds),
            "noise_radius": self.noise_radius,
            "accumulation": self.accumulation.value,
            "train": {
                "epochs": self.train.epochs,
                "batch_size": self.train.batch_size,
                "lr0": self.train.lr0,
                "power": self.train.power,
                "relax_window": self.train.relax_window,
            },
            "flow": vars(self.flow),
        }
        return json.dumps(record, sort_keys=True)


def _cell_key(seed: int, k: int, pairing: Pairing, mode: MotionMode, loss: LossKind):
    if k == 0:
        return (seed, 0, None, None, loss.value)
    return (seed, k, pairing.value, mode.value, loss.value)


def _eval_miou(model, scene: Scene) -> float:
    cm = ConfusionMatrix(scene.params.num_classes)
    for frame, label in zip(scene.frames, scene.labels):
        cm.update(label, model.predict(frame))
    return cm.miou()


def _training_samples(
    scene: Scene,
    noisy: LabelMap,
    k: int,
    pairing: Pairing,
    mode: MotionMode,
    flow: FlowParams,
    accumulation: Accumulation,
) -> list[tuple[Frame, LabelMap]]:
    center = scene.gt_index
    samples: list[tuple[Frame, LabelMap]] = [(scene.frames[center], noisy)]
    if k == 0:
        return samples
    config = PropagationConfig(
        k=k, pairing=pairing, motion_mode=mode, accumulation=accumulation, flow_params=flow
    )
    kept = set(config.kept_steps())
    for s in propagate_sequence(list(scene.frames), center, noisy, config):
        if s.step in kept:
            samples.append((s.frame, s.label))
    return samples


def run_study(config: StudyConfig = StudyConfig()) -> "StudyReport":
    """Run every cell of the grid; per-cell failures become error rows
    rather than aborting the sweep."""
    rows: list[dict] = []
    done: dict[tuple, dict] = {}
    for seed in config.seeds:
        scene = synth_scene(replace(config.scene, seed=seed))
        noisy = boundary_noise(
            scene.labels[scene.gt_index], config.noise_radius, seed
        )
        sample_cache: dict[tuple, list[tuple[Frame, LabelMap]]] = {}
        for k in config.ks:
            axis = [(None, None)] if k == 0 else [
                (p, m) for p in config.pairings for m in config.modes
            ]
            for pairing, mode in axis:
                for loss in config.losses:
                    key = _cell_key(seed, k, pairing, mode, loss)
                    if key in done:
                        continue
                    row = {
                        "seed": seed,
                        "k": k,
                        "pairing": key[2],
                        "mode": key[3],
                        "loss": loss.value,
                        "miou": None,
                        "error": None,
                    }
                    try:
                        skey = key[:4]
                        if skey not in sample_cache:
                            sample_cache[skey] = _training_samples(
                                scene, noisy, k, pairing, mode, config.flow,
                                config.accumulation,
                            )
                        train_cfg = replace(config.train, loss=loss, seed=seed)
                        result = train_on_samples(sample_cache[skey], train_cfg)
                        row["miou"] = _eval_miou(result.model, scene)
                    except Exception as exc:  # deliberate: one bad cell must not sink the sweep
                        row["error"] = f"{type(exc).__name__}: {exc}"
                        log.warning("study cell %s failed: %s", key, exc)
                    done[key] = row
                    rows.append(row)
    rows.sort(key=lambda r: (r["seed"], r["k"], r["pairing"] or "", r["mode"] or "", r["loss"]))
    return StudyReport(tuple(rows), config)


def _aggregate(rows: Sequence[dict]) -> list[dict]:
    groups: dict[tuple, list[float]] = {}
    errors: dict[tuple, int] = {}
    for row in rows:
        gkey = (row["k"], row["pairing"], row["mode"], row["loss"])
        groups.setdefault(gkey, [])
        errors.setdefault(gkey, 0)
        if row["error"] is None and row["miou"] is not None:
            groups[gkey].append(row["miou"])
        else:
            errors[gkey] += 1
    out = []
    for gkey in sorted(groups, key=lambda g: (g[0], g[1] or "", g[2] or "", g[3])):
        vals = groups[gkey]
        out.append(
            {
                "k": gkey[0],
                "pairing": gkey[1],
                "mode": gkey[2],
                "loss": gkey[3],
                "seeds": len(vals),
                "errors": errors[gkey],
                "mean_miou": statistics.fmean(vals) if vals else None,
                "std_miou": statistics.stdev(vals) if len(vals) >= 2 else None,
                "median_miou": statistics.median(vals) if vals else None,
            }
        )
    return out


@dataclass(frozen=True)
class StudyReport:
    rows: tuple[dict, ...]
    config: StudyConfig

    def aggregates(self) -> list[dict]:
        return _aggregate(self.rows)

    def select(
        self,
        k: int | None = None,
        pairing: Pairing | str | None = None,
        mode: MotionMode | str | None = None,
        loss: LossKind | str | None = None,
        seed: int | None = None,
    ) -> list[dict]:
        want_pairing = pairing.value if isinstance(pairing, Pairing) else pairing
        want_mode = mode.value if isinstance(mode, MotionMode) else mode
        want_loss = loss.value if isinstance(loss, LossKind) else loss
        picked = []
        for row in self.rows:
            if k is not None and row["k"] != k:
                continue
            if want_pairing is not None and row["pairing"] != want_pairing:
                continue
            if want_mode is not None and row["mode"] != want_mode:
                continue
            if want_loss is not None and row["loss"] != want_loss:
                continue
            if seed is not None and row["seed"] != seed:
                continue
            picked.append(row)
        return picked

    def median_miou(self, **criteria) -> float:
        """Median over seeds of the cells matching the criteria; raises if
        any matching cell failed or none match."""
        rows = self.select(**criteria)
        if not rows:
            raise ValidationError(f"no study rows match {criteria}")
        bad = [r for r in rows if r["error"] is not None or r["miou"] is None]
        if bad:
            raise ValidationError(f"{len(bad)} matching cells failed: {bad[0]['error']}")
        return statistics.median(r["miou"] for r in rows)

    def summary_text(self) -> str:
        lines = [
            "k  pairing     mode            loss     seeds errs  mean     std      median",
            "-" * 78,
        ]
        for a in self.aggregates():
            lines.append(
                "{k:<2} {pairing:<11} {mode:<15} {loss:<8} {seeds:<5} {errors:<4} "
                "{mean:<8} {std:<8} {median}".format(
                    k=a["k"],
                    pairing=a["pairing"] or "-",
                    mode=a["mode"] or "-",
                    loss=a["loss"],
                    seeds=a["seeds"],
                    errors=a["errors"],
                    mean="-" if a["mean_miou"] is None else f"{a['mean_miou']:.4f}",
                    std="-" if a["std_miou"] is None else f"{a['std_miou']:.4f}",
                    median="-" if a["median_miou"] is None else f"{a['median_miou']:.4f}",
                )
            )
        return "\n".join(lines) + "\n"

    def save(self, out_dir: str | os.PathLike) -> None:
        """Write rows.jsonl, aggregates.json, summary.txt, config.json.
        All four are byte-deterministic for a given config."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "rows.jsonl", "w", encoding="utf-8") as fh:
            for row in self.rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        with open(out / "aggregates.json", "w", encoding="utf-8") as fh:
            json.dump(self.aggregates(), fh, sort_keys=True, indent=2)
            fh.write("\n")
        with open(out / "summary.txt", "w", encoding="utf-8") as fh:
            fh.write(self.summary_text())
        with open(out / "config.json", "w", encoding="utf-8") as fh:
            fh.write(self.config.to_json() + "\n")
