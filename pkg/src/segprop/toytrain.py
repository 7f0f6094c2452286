"""Desk-scale trainability harness.

Synthesizes tiny moving-shape video clips with exact labels and motion,
corrupts annotation boundaries on demand, and trains a per-pixel linear
softmax classifier on hand-built features.  Nothing here aspires to be a
real segmentation model; the point is a fast, deterministic instrument
that reacts measurably to label quality, so augmentation and loss choices
can be compared end to end in seconds.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .evaluate import ConfusionMatrix
from .imageio import load_frame, load_label
from .manifest import DatasetManifest
from .motion import box_mean
from .relax import (
    NeighborSetMap,
    boundary_neighbor_sets,
    onehot_neighbor_sets,
    relaxed_loss,
    relaxed_loss_grad,
)
from .sampling import connected_components
from .types import Frame, LabelMap, Logits, MotionField, ValidationError, VOID

# ---------------------------------------------------------------------------
# scene synthesis


@dataclass(frozen=True)
class SceneParams:
    height: int = 48
    width: int = 48
    num_frames: int = 9
    num_shapes: int = 4
    num_classes: int = 4
    min_shape: int = 6
    max_shape: int = 14
    max_speed: float = 2.0
    max_accel: float = 0.0
    texture_sigma: float = 0.08
    seed: int = 0

    def __post_init__(self):
        if self.height < 8 or self.width < 8:
            raise ValidationError("scene must be at least 8x8")
        if self.num_frames < 2:
            raise ValidationError("scene needs at least 2 frames")
        if self.num_shapes < 1:
            raise ValidationError("scene needs at least one shape")
        if self.num_classes < 2:
            raise ValidationError("scene needs a background class plus one shape class")
        if not 2 <= self.min_shape <= self.max_shape:
            raise ValidationError("shape size range is invalid")
        if self.max_shape >= min(self.height, self.width):
            raise ValidationError("shapes do not fit the canvas")
        if self.max_speed < 0 or self.max_accel < 0:
            raise ValidationError("speed/acceleration bounds must be non-negative")


@dataclass(frozen=True)
class Scene:
    """Frames, exact labels, and exact step motion of one synthetic clip.

    motions[i] is the backward field on frame i+1's grid: warping frame i
    by it reproduces frame i+1 up to disocclusion.
    """

    frames: tuple[Frame, ...]
    labels: tuple[LabelMap, ...]
    motions: tuple[MotionField, ...]
    params: SceneParams

    @property
    def gt_index(self) -> int:
        return len(self.frames) // 2


@dataclass(frozen=True)
class _Shape:
    kind: str  # "rect" | "disk"
    class_id: int
    size: tuple[int, int]  # bbox (h, w)
    p0: np.ndarray  # float (row, col) top-left of bbox at t=0
    v0: np.ndarray
    accel: np.ndarray
    texture: np.ndarray  # bbox-sized intensity offsets
    mask: np.ndarray  # bbox-sized occupancy

    def offset(self, t: int) -> np.ndarray:
        """Integer bbox origin at time t; positions are rounded so motion
        between frames is an exact integer displacement."""
        p = self.p0 + self.v0 * t + self.accel * (t * (t - 1) / 2.0)
        return np.round(p).astype(np.int64)


def _class_color(class_id: int, num_classes: int) -> np.ndarray:
    """Fixed, distinct RGB per class.  Amplitudes differ per channel so the
    grayscale means differ too (the motion estimator works on grayscale)."""
    a = 2.0 * np.pi * (class_id + 0.5) / num_classes
    return np.array(
        [
            0.5 + 0.45 * np.sin(a),
            0.5 + 0.30 * np.sin(a + 2.0 * np.pi / 3.0),
            0.5 + 0.15 * np.sin(a + 4.0 * np.pi / 3.0),
        ]
    )


def _sample_shape(rng: np.random.Generator, params: SceneParams) -> _Shape:
    kind = "disk" if rng.random() < 0.5 else "rect"
    class_id = int(rng.integers(1, params.num_classes))
    sh = int(rng.integers(params.min_shape, params.max_shape + 1))
    sw = int(rng.integers(params.min_shape, params.max_shape + 1))
    if kind == "disk":
        radius = max(1, min(sh, sw) // 2)
        sh = sw = 2 * radius + 1
        yy, xx = np.mgrid[0:sh, 0:sw]
        mask = (yy - radius) ** 2 + (xx - radius) ** 2 <= radius**2
    else:
        mask = np.ones((sh, sw), dtype=bool)
    texture = rng.uniform(-1.0, 1.0, size=(sh, sw)) * params.texture_sigma
    for _ in range(64):
        v0 = rng.uniform(-params.max_speed, params.max_speed, size=2)
        accel = (
            rng.uniform(-params.max_accel, params.max_accel, size=2)
            if params.max_accel > 0
            else np.zeros(2)
        )
        ts = np.arange(params.num_frames)
        drift = v0[None, :] * ts[:, None] + accel[None, :] * (ts * (ts - 1) / 2.0)[:, None]
        lo = -drift.min(axis=0) + 0.51
        hi = (
            np.array([params.height - sh, params.width - sw], dtype=np.float64)
            - drift.max(axis=0)
            - 0.51
        )
        if np.all(hi >= lo):
            p0 = rng.uniform(lo, hi)
            return _Shape(kind, class_id, (sh, sw), p0, v0, accel, texture, mask)
    raise ValidationError(
        "could not place a shape that stays on canvas; reduce speed, "
        "acceleration, shape size, or frame count"
    )


def synth_scene(params: SceneParams) -> Scene:
    """Render a clip of drifting textured shapes over a static background.

    Shapes follow p(t) = p0 + v*t + a*t(t-1)/2 with rounded rendering, so
    per-step displacements are integers and the returned motion fields are
    exact.  Later shapes draw on top; the topmost shape owns a pixel's
    label and motion.
    """
    rng = np.random.Generator(np.random.Philox(key=np.array([params.seed, 0], dtype=np.uint64)))
    h, w = params.height, params.width
    bg_texture = rng.uniform(-1.0, 1.0, size=(h, w)) * params.texture_sigma
    background = np.clip(
        _class_color(0, params.num_classes)[np.newaxis, np.newaxis, :]
        + bg_texture[:, :, np.newaxis],
        0.0,
        1.0,
    )
    shapes = [_sample_shape(rng, params) for _ in range(params.num_shapes)]

    frames: list[Frame] = []
    labels: list[LabelMap] = []
    owner_per_frame: list[np.ndarray] = []
    for t in range(params.num_frames):
        img = background.copy()
        lab = np.zeros((h, w), dtype=np.int32)
        owner = np.full((h, w), -1, dtype=np.int32)
        for s_idx, shape in enumerate(shapes):
            oy, ox = shape.offset(t)
            sh, sw = shape.size
            region = (slice(oy, oy + sh), slice(ox, ox + sw), slice(None))
            base = _class_color(shape.class_id, params.num_classes)
            values = np.clip(
                base[np.newaxis, np.newaxis, :] + shape.texture[:, :, np.newaxis], 0.0, 1.0
            )
            img[region][shape.mask] = values[shape.mask]
            lab[region[:2]][shape.mask] = shape.class_id
            owner[region[:2]][shape.mask] = s_idx
        frames.append(Frame(img.copy()))
        labels.append(LabelMap(lab, params.num_classes))
        owner_per_frame.append(owner)

    motions: list[MotionField] = []
    for t in range(params.num_frames - 1):
        field = np.zeros((h, w, 2), dtype=np.float64)
        owner = owner_per_frame[t + 1]
        for s_idx, shape in enumerate(shapes):
            d = shape.offset(t + 1) - shape.offset(t)  # (drow, dcol)
            sel = owner == s_idx
            field[sel, 0] = -float(d[1])  # u: column displacement
            field[sel, 1] = -float(d[0])  # v: row displacement
        motions.append(MotionField(field.astype(np.float32)))

    return Scene(tuple(frames), tuple(labels), tuple(motions), params)


# ---------------------------------------------------------------------------
# boundary corruption

_NOISE_DIRS = ((-1, 0), (0, -1), (0, 1), (1, 0), (-1, -1), (-1, 1), (1, -1), (1, 1))


def _shifted(arr: np.ndarray, dy: int, dx: int, fill) -> np.ndarray:
    """out[r, c] = arr[r + dy, c + dx], `fill` past the borders."""
    h, w = arr.shape
    out = np.full_like(arr, fill)
    ys = slice(max(0, dy), min(h, h + dy))
    xs = slice(max(0, dx), min(w, w + dx))
    yd = slice(max(0, -dy), min(h, h - dy))
    xd = slice(max(0, -dx), min(w, w - dx))
    out[yd, xd] = arr[ys, xs]
    return out


def boundary_noise(label: LabelMap, radius: int, seed: int) -> LabelMap:
    """Corrupt annotation boundaries: every connected component is grown or
    shrunk (Chebyshev metric) by a random amount in [-radius, radius]\\{0}.

    Growth claims neighboring non-void pixels; shrinkage hands boundary
    pixels to whichever non-void neighbor label comes first in a fixed
    scan order.  Void pixels are never created and never overwritten, so
    the void geography of the input is preserved exactly.
    """
    if radius < 0:
        raise ValidationError(f"radius must be >= 0, got {radius}")
    out = label.data.copy()
    if radius == 0:
        return LabelMap(out, label.num_classes)
    comp_map, records = connected_components(label)
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 1], dtype=np.uint64)))
    choices = [r for r in range(-radius, radius + 1) if r != 0]
    for cid, rec in enumerate(records):
        r = choices[int(rng.integers(len(choices)))]
        mask = comp_map == cid
        if r > 0:
            for _ in range(r):
                grown = np.zeros_like(mask)
                for dy, dx in _NOISE_DIRS:
                    grown |= _shifted(mask, dy, dx, False)
                claim = grown & ~mask & (out != VOID)
                out[claim] = rec.class_id
                mask = mask | claim
        else:
            for _ in range(-r):
                inner = mask.copy()
                for dy, dx in _NOISE_DIRS:
                    inner &= _shifted(mask, dy, dx, False)
                ring = mask & ~inner
                if not ring.any():
                    break
                newval = np.full(out.shape, -1, dtype=np.int64)
                for dy, dx in _NOISE_DIRS:
                    neigh_val = _shifted(out, dy, dx, VOID)
                    neigh_outside = _shifted(~mask, dy, dx, False)
                    ok = ring & neigh_outside & (neigh_val != VOID) & (newval == -1)
                    newval[ok] = neigh_val[ok]
                assigned = ring & (newval != -1)
                if not assigned.any():
                    break
                out[assigned] = newval[assigned].astype(out.dtype)
                mask = mask & ~assigned
    return LabelMap(out, label.num_classes)


# ---------------------------------------------------------------------------
# features and the linear classifier


def poly_lr(epoch: int, max_epochs: int, lr0: float = 0.002, power: float = 1.0) -> float:
    """Polynomial decay lr0 * (1 - epoch/max_epochs)^power."""
    if max_epochs < 1:
        raise ValidationError(f"max_epochs must be >= 1, got {max_epochs}")
    if not 0 <= epoch <= max_epochs:
        raise ValidationError(f"epoch {epoch} outside [0, {max_epochs}]")
    return lr0 * (1.0 - epoch / max_epochs) ** power


def pixel_features(frame: Frame) -> np.ndarray:
    """Per-pixel feature vectors (H, W, F): normalized row/col coordinates,
    raw colors, 3x3 local color means, 3x3 gray standard deviation, and a
    constant bias.  F = 2*C + 4."""
    h, w, c = frame.data.shape
    rows = np.repeat(
        (np.arange(h) / (h - 1) if h > 1 else np.zeros(h))[:, np.newaxis], w, axis=1
    )
    cols = np.repeat(
        (np.arange(w) / (w - 1) if w > 1 else np.zeros(w))[np.newaxis, :], h, axis=0
    )
    planes = [rows, cols]
    planes.extend(frame.data[:, :, i] for i in range(c))
    planes.extend(box_mean(frame.data[:, :, i], 1) for i in range(c))
    gray = frame.data.mean(axis=2)
    var = np.maximum(box_mean(gray * gray, 1) - box_mean(gray, 1) ** 2, 0.0)
    planes.append(np.sqrt(var))
    planes.append(np.ones((h, w)))
    return np.stack(planes, axis=2)


class LossKind(enum.Enum):
    ONEHOT = "onehot"
    RELAXED = "relaxed"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 1024
    lr0: float = 0.002
    power: float = 1.0
    loss: LossKind = LossKind.ONEHOT
    relax_window: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr0 <= 0:
            raise ValidationError(f"lr0 must be positive, got {self.lr0}")


@dataclass(frozen=True)
class TrainedModel:
    """Per-pixel linear softmax classifier: logits = features @ weights.T."""

    weights: np.ndarray  # (K, F)
    num_classes: int

    def __call__(self, frame: Frame) -> Logits:
        x = pixel_features(frame)
        if x.shape[2] != self.weights.shape[1]:
            raise ValidationError(
                f"frame yields {x.shape[2]} features, model expects {self.weights.shape[1]}"
            )
        return Logits(np.einsum("hwf,kf->hwk", x, self.weights))

    def predict(self, frame: Frame) -> LabelMap:
        z = self(frame)
        return LabelMap(z.data.argmax(axis=2).astype(np.int32), self.num_classes)


@dataclass(frozen=True)
class TrainResult:
    model: TrainedModel
    history: tuple[dict, ...]  # per-epoch: epoch, lr, loss, miou


def _neighbor_sets_for(label: LabelMap, config: TrainConfig) -> NeighborSetMap:
    if config.loss is LossKind.RELAXED:
        return boundary_neighbor_sets(label, config.relax_window)
    return onehot_neighbor_sets(label)


def train_on_samples(
    samples: Sequence[tuple[Frame, LabelMap]], config: TrainConfig = TrainConfig()
) -> TrainResult:
    """SGD on flattened valid pixels of all samples.

    Minibatch order is a fresh Philox-keyed permutation per epoch; the
    learning rate follows `poly_lr`.  Raises if the loss goes non-finite
    (a sign the rate is too high for the feature scale).
    """
    if not samples:
        raise ValidationError("need at least one training sample")
    num_classes = samples[0][1].num_classes
    xs: list[np.ndarray] = []
    masks: list[np.ndarray] = []
    feats_per_sample: list[np.ndarray] = []
    for frame, label in samples:
        if label.num_classes != num_classes:
            raise ValidationError("training labels disagree on num_classes")
        if (frame.height, frame.width) != (label.height, label.width):
            raise ValidationError("frame/label size mismatch in training sample")
        sets = _neighbor_sets_for(label, config)
        feats = pixel_features(frame)
        feats_per_sample.append(feats)
        xs.append(feats[sets.valid])
        masks.append(sets.mask[sets.valid])
    x = np.concatenate(xs, axis=0)  # (N, F)
    mask = np.concatenate(masks, axis=0)  # (N, K)
    n = x.shape[0]
    if n == 0:
        raise ValidationError("no valid (non-void) pixels to train on")

    weights = np.zeros((num_classes, x.shape[1]), dtype=np.float64)
    rng = np.random.Generator(np.random.Philox(key=np.array([config.seed, 2], dtype=np.uint64)))
    history: list[dict] = []
    for epoch in range(config.epochs):
        lr = poly_lr(epoch, config.epochs, config.lr0, config.power)
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            xb = x[batch]
            mb = mask[batch]
            z = Logits((xb @ weights.T)[:, np.newaxis, :])
            sets = NeighborSetMap(mb[:, np.newaxis, :], np.ones((len(batch), 1), dtype=bool))
            loss, _ = relaxed_loss(z, sets)
            if not np.isfinite(loss):
                raise ValidationError(
                    f"loss became non-finite at epoch {epoch}; lower lr0 (= {config.lr0})"
                )
            g = relaxed_loss_grad(z, sets)[:, 0, :]  # (B, K)
            weights -= lr * (g.T @ xb) / len(batch)
            epoch_loss += loss * len(batch)
        cm = ConfusionMatrix(num_classes)
        for feats, (_, label) in zip(feats_per_sample, samples):
            pred = np.einsum("hwf,kf->hwk", feats, weights).argmax(axis=2)
            cm.update(label, LabelMap(pred.astype(np.int32), num_classes))
        history.append(
            {"epoch": epoch, "lr": lr, "loss": epoch_loss / n, "miou": cm.miou()}
        )
    model = TrainedModel(weights, num_classes)
    return TrainResult(model, tuple(history))


def train_pixel_classifier(
    manifest: DatasetManifest, num_classes: int, config: TrainConfig = TrainConfig()
) -> TrainResult:
    """Train on every entry of an on-disk dataset manifest."""
    pairs = [
        (load_frame(manifest.frame_path(e)), load_label(manifest.label_path(e), num_classes))
        for e in manifest
    ]
    return train_on_samples(pairs, config)
