"""Joint image/label propagation.

An annotated frame is pushed outward to its temporal neighbors one step at
a time.  Every step warps the running label; the paired frame is either
warped with the very same field (joint pairing, so frame and label stay
aligned by construction) or replaced by the real video frame at the target
time (label-only pairing, which keeps photorealism but inherits any motion
error as misalignment).

Motion for each step always comes from real frame pairs: the reconstruction
source looks at both endpoints of the step, the prediction source
extrapolates from the preceding real pair, and the external source reads
per-step fields from disk.
"""
from __future__ import annotations

import enum
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .imageio import load_frame, load_label, save_frame, save_label
from .manifest import SOURCE_GT, SOURCE_SYNTH, DatasetManifest, ManifestEntry, save_manifest
from .motion import FlowParams, estimate_motion, load_motion, predict_motion
from .types import Frame, LabelMap, MotionField, ValidationError, require_same_hw
from .warp import LabelWarpPolicy, warp_image, warp_label

log = logging.getLogger(__name__)


class Pairing(enum.Enum):
    JOINT = "joint"
    LABEL_ONLY = "label_only"


class MotionMode(enum.Enum):
    RECONSTRUCTION = "reconstruction"
    PREDICTION = "prediction"
    EXTERNAL = "external"


class Direction(enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"
    BOTH = "both"

    def signs(self) -> tuple[int, ...]:
        if self is Direction.FORWARD:
            return (1,)
        if self is Direction.BACKWARD:
            return (-1,)
        return (1, -1)


class Accumulation(enum.Enum):
    ACCUMULATED = "accumulated"
    NON_ACCUMULATED = "non_accumulated"


@dataclass(frozen=True)
class PropagationConfig:
    k: int = 1
    direction: Direction = Direction.BOTH
    pairing: Pairing = Pairing.JOINT
    motion_mode: MotionMode = MotionMode.RECONSTRUCTION
    accumulation: Accumulation = Accumulation.NON_ACCUMULATED
    flow_params: FlowParams = FlowParams()
    label_policy: LabelWarpPolicy = LabelWarpPolicy()

    def __post_init__(self):
        if self.k < 0:
            raise ValidationError(f"k must be >= 0, got {self.k}")

    def kept_steps(self) -> tuple[int, ...]:
        """Signed synthetic steps that land in the output dataset."""
        if self.k == 0:
            return ()
        if self.accumulation is Accumulation.ACCUMULATED:
            steps = tuple(j for j in range(-self.k, self.k + 1) if j != 0)
        else:
            steps = (-self.k, self.k)
        allowed = self.direction.signs()
        return tuple(j for j in steps if (1 if j > 0 else -1) in allowed)


@dataclass(frozen=True)
class PropagatedSample:
    frame: Frame
    label: LabelMap
    step: int


def propagate_step(
    frame: Frame,
    label: LabelMap,
    field: MotionField,
    pairing: Pairing = Pairing.JOINT,
    policy: LabelWarpPolicy = LabelWarpPolicy(),
) -> tuple[Frame, LabelMap]:
    """Advance one step.  The label is always warped by `field`; under
    JOINT the frame is warped too, under LABEL_ONLY the given frame (the
    real one at the target time) passes through untouched."""
    require_same_hw(frame, label, "frame and label")
    new_label = warp_label(label, field, policy)
    if pairing is Pairing.JOINT:
        return warp_image(frame, field), new_label
    return frame, new_label


def required_frame_span(config: PropagationConfig, direction: int) -> tuple[int, int]:
    """Inclusive range of real-frame indices, relative to the annotated
    frame, needed to propagate k steps in `direction` (+1 or -1)."""
    if direction not in (1, -1):
        raise ValidationError(f"direction must be +1 or -1, got {direction}")
    k = config.k
    if k == 0:
        return (0, 0)
    lo, hi = 0, 0
    if config.motion_mode is MotionMode.RECONSTRUCTION:
        lo, hi = (0, k) if direction == 1 else (-k, 0)
    elif config.motion_mode is MotionMode.PREDICTION:
        lo, hi = (-1, k - 1) if direction == 1 else (-k + 1, 1)
    if config.pairing is Pairing.LABEL_ONLY:
        lo, hi = min(lo, direction * k, 0), max(hi, direction * k, 0)
    return (min(lo, 0), max(hi, 0))


def _frame_at(frames: Sequence[Frame | None], idx: int, why: str) -> Frame:
    if idx < 0 or idx >= len(frames):
        raise ValidationError(f"frame index {idx} out of range (needed for {why})")
    frame = frames[idx]
    if frame is None:
        raise ValidationError(f"frame index {idx} was not provided (needed for {why})")
    return frame


def _step_field(
    frames: Sequence[Frame | None],
    gt_index: int,
    step: int,
    config: PropagationConfig,
    motion_fields: Mapping[int, MotionField] | None,
) -> MotionField:
    """Motion field carrying the label from |step|-1 to |step| in the sign
    direction of `step`."""
    direction = 1 if step > 0 else -1
    j = abs(step)
    if config.motion_mode is MotionMode.EXTERNAL:
        if motion_fields is None or step not in motion_fields:
            raise ValidationError(f"no external motion field supplied for step {step:+d}")
        return motion_fields[step]
    if config.motion_mode is MotionMode.RECONSTRUCTION:
        src = gt_index + direction * (j - 1)
        dst = gt_index + direction * j
    else:  # PREDICTION: extrapolate from the preceding real pair
        src = gt_index + direction * (j - 2)
        dst = gt_index + direction * (j - 1)
    why = f"step {step:+d} motion ({config.motion_mode.value})"
    field = estimate_motion(
        _frame_at(frames, src, why), _frame_at(frames, dst, why), config.flow_params
    )
    if config.motion_mode is MotionMode.PREDICTION:
        field = predict_motion(field)
    return field


def propagate_sequence(
    frames: Sequence[Frame | None],
    gt_index: int,
    label: LabelMap,
    config: PropagationConfig,
    motion_fields: Mapping[int, MotionField] | None = None,
    directions: Sequence[int] | None = None,
) -> list[PropagatedSample]:
    """Auto-regressively propagate out to +/-k, returning one sample per
    signed step (ordered by step).  `frames` are the real frames of the
    clip; positions that are never touched may be None.  For EXTERNAL
    motion, `motion_fields` maps each signed step to its field.
    `directions` restricts config.direction further (used by dataset
    building to drop a direction whose frames are missing)."""
    if directions is None:
        directions = config.direction.signs()
    if config.k == 0:
        return []
    start = _frame_at(frames, gt_index, "the annotated frame")
    require_same_hw(start, label, "annotated frame and label")
    samples: list[PropagatedSample] = []
    for direction in directions:
        if direction not in (1, -1):
            raise ValidationError(f"direction must be +1 or -1, got {direction}")
        cur_frame, cur_label = start, label
        for j in range(1, config.k + 1):
            step = direction * j
            field = _step_field(frames, gt_index, step, config, motion_fields)
            require_same_hw(field, cur_label, "motion field and label")
            if config.pairing is Pairing.LABEL_ONLY:
                cur_frame = _frame_at(frames, gt_index + step, f"step {step:+d} real frame")
            cur_frame, cur_label = propagate_step(
                cur_frame, cur_label, field, config.pairing, config.label_policy
            )
            samples.append(PropagatedSample(cur_frame, cur_label, step))
    samples.sort(key=lambda s: s.step)
    return samples


@dataclass(frozen=True)
class FrameSequence:
    """Ordered real frames of one clip and where its annotation sits."""

    frame_paths: tuple[str, ...]
    gt_position: int

    def __post_init__(self):
        object.__setattr__(self, "frame_paths", tuple(self.frame_paths))
        if not self.frame_paths:
            raise ValidationError("a frame sequence needs at least one frame")
        if not 0 <= self.gt_position < len(self.frame_paths):
            raise ValidationError(
                f"gt_position {self.gt_position} out of range for "
                f"{len(self.frame_paths)} frames"
            )


def build_augmented_dataset(
    gt_manifest: DatasetManifest,
    sequences: Mapping[str, FrameSequence],
    config: PropagationConfig,
    out_dir: str | os.PathLike,
    num_classes: int,
) -> DatasetManifest:
    """Expand every annotated entry into its propagated neighbors.

    The output tree is `out_dir/{frames,labels}/...` plus `manifest.jsonl`;
    directions that cannot be propagated (missing neighbor frames, motion
    failures) are skipped, logged, and recorded in `skip_report.jsonl`.
    Ground-truth entries are carried over with absolute paths, so with
    accumulated scaling the manifest grows by the factor 2k+1 per fully
    covered origin, and non-accumulated scaling keeps {-k, 0, +k}.
    """
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    entries: list[ManifestEntry] = []
    skips: list[dict] = []

    for entry in gt_manifest:
        if entry.source != SOURCE_GT:
            raise ValidationError(
                f"input manifest must contain only gt entries, got {entry.source!r} "
                f"for origin {entry.origin!r}"
            )
        entries.append(
            ManifestEntry(
                frame=str(gt_manifest.frame_path(entry)),
                label=str(gt_manifest.label_path(entry)),
                source=SOURCE_GT,
                step=0,
                origin=entry.origin,
            )
        )
        if config.k == 0:
            continue
        seq = sequences.get(entry.origin)
        if seq is None:
            skips.append({"origin": entry.origin, "direction": 0, "reason": "no frame sequence"})
            log.warning("origin %s: no frame sequence; keeping only ground truth", entry.origin)
            continue
        label = load_label(gt_manifest.label_path(entry), num_classes)
        g = seq.gt_position
        n = len(seq.frame_paths)
        usable: list[int] = []
        needed: set[int] = {g}
        for direction in config.direction.signs():
            lo, hi = required_frame_span(config, direction)
            if g + lo < 0 or g + hi >= n:
                reason = (
                    f"needs frames {g + lo}..{g + hi} but sequence has 0..{n - 1}"
                )
                skips.append(
                    {"origin": entry.origin, "direction": direction, "reason": reason}
                )
                log.warning(
                    "origin %s: skipping direction %+d: %s", entry.origin, direction, reason
                )
                continue
            usable.append(direction)
            needed.update(range(g + lo, g + hi + 1))
        if not usable:
            continue
        frames: list[Frame | None] = [None] * n
        for idx in sorted(needed):
            frames[idx] = load_frame(gt_manifest.resolve(seq.frame_paths[idx]))
        try:
            samples = propagate_sequence(frames, g, label, config, directions=usable)
        except ValidationError as exc:
            skips.append({"origin": entry.origin, "direction": 0, "reason": str(exc)})
            log.warning("origin %s: propagation failed: %s", entry.origin, exc)
            continue
        kept = set(config.kept_steps())
        for sample in samples:
            if sample.step not in kept:
                continue
            tag = f"{entry.origin}_s{sample.step:+d}"
            label_rel = f"labels/{tag}.png"
            save_label(sample.label, out / label_rel)
            if config.pairing is Pairing.LABEL_ONLY:
                frame_ref = str(gt_manifest.resolve(seq.frame_paths[g + sample.step]))
            else:
                frame_ref = f"frames/{tag}.png"
                save_frame(sample.frame, out / frame_ref)
            entries.append(
                ManifestEntry(
                    frame=frame_ref,
                    label=label_rel,
                    source=SOURCE_SYNTH,
                    step=sample.step,
                    origin=entry.origin,
                    pairing=config.pairing.value,
                )
            )

    manifest = DatasetManifest(tuple(entries), root=out)
    save_manifest(manifest, out / "manifest.jsonl")
    with open(out / "skip_report.jsonl", "w", encoding="utf-8") as fh:
        for record in skips:
            fh.write(json.dumps(record) + "\n")
    return manifest
