"""Evaluation: confusion accumulation, per-class IoU / mIoU, prediction
entropy maps, and multi-scale + mirror inference with logit averaging.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .types import Frame, LabelMap, Logits, ProbMap, ValidationError, VOID
from .warp import bilinear_sample

DEFAULT_SCALES = (0.5, 1.0, 2.0)

# A model maps a frame to per-pixel class logits at the same resolution.
Model = Callable[[Frame], Logits]


class ConfusionMatrix:
    """Streaming (K, K+1) confusion counts.

    Rows are ground-truth classes; columns 0..K-1 are predicted classes and
    the trailing column counts pixels the prediction marked void (a miss
    for the true class that is a false positive for no one).  Ground-truth
    void pixels are excluded entirely.
    """

    def __init__(self, num_classes: int):
        if not 1 <= num_classes <= 255:
            raise ValidationError(f"num_classes must be in [1, 255], got {num_classes}")
        self.num_classes = num_classes
        self.counts = np.zeros((num_classes, num_classes + 1), dtype=np.int64)

    def update(self, truth: LabelMap, prediction: LabelMap) -> None:
        if truth.num_classes != self.num_classes or prediction.num_classes != self.num_classes:
            raise ValidationError(
                f"label maps declare {truth.num_classes}/{prediction.num_classes} classes, "
                f"matrix has {self.num_classes}"
            )
        if truth.data.shape != prediction.data.shape:
            raise ValidationError(
                f"truth {truth.data.shape} and prediction {prediction.data.shape} differ in size"
            )
        keep = ~truth.void_mask()
        gt = truth.data[keep].astype(np.int64)
        pred = prediction.data[keep].astype(np.int64)
        pred = np.where(pred == VOID, self.num_classes, pred)
        idx = gt * (self.num_classes + 1) + pred
        self.counts += np.bincount(
            idx, minlength=self.num_classes * (self.num_classes + 1)
        ).reshape(self.num_classes, self.num_classes + 1)

    def iou_per_class(self) -> np.ndarray:
        """Length-K float array; classes absent from both truth and
        prediction are NaN."""
        k = self.num_classes
        tp = np.diag(self.counts[:, :k]).astype(np.float64)
        gt_total = self.counts.sum(axis=1).astype(np.float64)
        pred_total = self.counts[:, :k].sum(axis=0).astype(np.float64)
        union = gt_total + pred_total - tp
        with np.errstate(invalid="ignore", divide="ignore"):
            iou = np.where(union > 0, tp / union, np.nan)
        return iou

    def miou(self) -> float:
        """Mean IoU over classes that appear; NaN if none do."""
        iou = self.iou_per_class()
        present = ~np.isnan(iou)
        if not present.any():
            return float("nan")
        return float(iou[present].mean())


def miou(matrix: ConfusionMatrix) -> tuple[np.ndarray, float]:
    """(per-class IoU with NaN for absent classes, mean over present ones).
    The mean is NaN when no class is present — the degenerate-input marker."""
    return matrix.iou_per_class(), matrix.miou()


def entropy_map(probs: ProbMap) -> np.ndarray:
    """Per-pixel Shannon entropy -sum p ln p in nats, with 0 ln 0 = 0."""
    p = probs.data
    terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=2)


def softmax(logits: Logits) -> ProbMap:
    z = logits.data
    m = z.max(axis=2, keepdims=True)
    e = np.exp(z - m)
    return ProbMap(e / e.sum(axis=2, keepdims=True))


def _resize_bilinear(data: np.ndarray, h: int, w: int) -> np.ndarray:
    """Half-pixel-aligned bilinear resize of an (H, W, C) array."""
    hs, ws = data.shape[:2]
    if (hs, ws) == (h, w):
        return data.copy()
    ys = (np.arange(h, dtype=np.float64) + 0.5) * (hs / h) - 0.5
    xs = (np.arange(w, dtype=np.float64) + 0.5) * (ws / w) - 0.5
    ys, xs = np.meshgrid(ys, xs, indexing="ij")
    return bilinear_sample(data, ys, xs)


def resize_frame(frame: Frame, height: int, width: int) -> Frame:
    if height < 1 or width < 1:
        raise ValidationError(f"target size must be positive, got {height}x{width}")
    return Frame(np.clip(_resize_bilinear(frame.data, height, width), 0.0, 1.0))


def multiscale_flip_inference(
    model: Model,
    frame: Frame,
    scales: Sequence[float] = DEFAULT_SCALES,
    flip: bool = True,
) -> ProbMap:
    """Run the model at each scale (and mirrored copies), map every logit
    volume back onto the input grid, average the logits, and apply a single
    softmax to the average.
    """
    if not scales:
        raise ValidationError("scales must be non-empty")
    if any(s <= 0 for s in scales):
        raise ValidationError(f"scales must be positive, got {tuple(scales)}")
    h, w = frame.height, frame.width
    total: np.ndarray | None = None
    count = 0
    for scale in scales:
        sh = max(1, int(round(h * scale)))
        sw = max(1, int(round(w * scale)))
        scaled = resize_frame(frame, sh, sw)
        variants = [(scaled, False)]
        if flip:
            variants.append((Frame(scaled.data[:, ::-1, :].copy()), True))
        for variant, mirrored in variants:
            out = model(variant)
            if out.data.shape[:2] != (sh, sw):
                raise ValidationError(
                    f"model returned logits of shape {out.data.shape[:2]} "
                    f"for a {sh}x{sw} input"
                )
            z = out.data[:, ::-1, :] if mirrored else out.data
            z = _resize_bilinear(z, h, w)
            if total is None:
                total = np.zeros_like(z)
            elif z.shape[2] != total.shape[2]:
                raise ValidationError(
                    "model returned a different class count across invocations: "
                    f"{total.shape[2]} then {z.shape[2]}"
                )
            total += z
            count += 1
    assert total is not None
    return softmax(Logits(total / count))


def predict_label(probs: ProbMap) -> LabelMap:
    if probs.num_classes > 255:
        raise ValidationError(f"cannot express {probs.num_classes} classes in a label map")
    return LabelMap(probs.data.argmax(axis=2).astype(np.int32), probs.num_classes)


def evaluate_pairs(
    pairs: Iterable[tuple[LabelMap, LabelMap]], num_classes: int
) -> ConfusionMatrix:
    cm = ConfusionMatrix(num_classes)
    for truth, prediction in pairs:
        cm.update(truth, prediction)
    return cm
