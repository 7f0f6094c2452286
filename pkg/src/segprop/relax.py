"""Boundary label relaxation.

Along class boundaries a propagated label is the least trustworthy, so
instead of insisting on the single annotated class we accept any class
present in the pixel's local window: the loss is -log of the summed
softmax probability over that neighbor set.  For interior pixels the set
is a singleton and the loss reduces exactly to one-hot cross-entropy.

Both the loss and its analytic gradient with respect to the logits are
computed in log-space (differences of log-sum-exp), never by summing
probabilities directly, so large logits cannot overflow and near-one
sums cannot cancel.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .types import FormatError, LabelMap, Logits, ValidationError, VOID

LOGITS_MAGIC = b"LGT1"


@dataclass(frozen=True)
class NeighborSetMap:
    """Per-pixel class sets as a boolean mask of shape (H, W, K).

    `valid` marks pixels that participate in the loss; invalid pixels
    (void, or void-dominated windows) contribute zero loss and zero
    gradient.
    """

    mask: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        mask = np.ascontiguousarray(self.mask, dtype=bool)
        valid = np.ascontiguousarray(self.valid, dtype=bool)
        if mask.ndim != 3:
            raise ValidationError(f"neighbor mask must be (H, W, K), got shape {mask.shape}")
        if valid.shape != mask.shape[:2]:
            raise ValidationError(
                f"valid mask shape {valid.shape} does not match neighbor mask {mask.shape[:2]}"
            )
        if np.any(valid & ~mask.any(axis=2)):
            raise ValidationError("valid pixels must have at least one neighbor class")
        mask.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "valid", valid)

    @property
    def num_classes(self) -> int:
        return self.mask.shape[2]


def onehot_neighbor_sets(label: LabelMap) -> NeighborSetMap:
    """Singleton sets: each pixel accepts only its own class (void invalid)."""
    h, w = label.data.shape
    k = label.num_classes
    mask = np.zeros((h, w, k), dtype=bool)
    valid = ~label.void_mask()
    rr, cc = np.nonzero(valid)
    mask[rr, cc, label.data[rr, cc]] = True
    return NeighborSetMap(mask, valid)


def boundary_neighbor_sets(label: LabelMap, window: int = 3) -> NeighborSetMap:
    """Each pixel's set is every non-void class inside its window x window
    neighborhood (border windows are clipped).  Void pixels, and pixels
    whose whole window is void, are invalid."""
    if window < 1 or window % 2 == 0:
        raise ValidationError(f"window must be a positive odd integer, got {window}")
    h, w = label.data.shape
    k = label.num_classes
    radius = window // 2
    padded = np.full((h + 2 * radius, w + 2 * radius), VOID, dtype=label.data.dtype)
    padded[radius : radius + h, radius : radius + w] = label.data
    mask = np.zeros((h, w, k), dtype=bool)
    for dy in range(window):
        for dx in range(window):
            shifted = padded[dy : dy + h, dx : dx + w]
            inside = shifted != VOID
            rr, cc = np.nonzero(inside)
            mask[rr, cc, shifted[rr, cc]] = True
    valid = ~label.void_mask()
    mask &= valid[:, :, np.newaxis]  # invalid rows are all-False by contract
    return NeighborSetMap(mask, valid)


def _check_pair(logits: Logits, sets: NeighborSetMap) -> None:
    if logits.data.shape[:2] != sets.mask.shape[:2]:
        raise ValidationError(
            f"logits shape {logits.data.shape[:2]} does not match "
            f"neighbor sets {sets.mask.shape[:2]}"
        )
    if logits.num_classes != sets.num_classes:
        raise ValidationError(
            f"logits have {logits.num_classes} classes, neighbor sets {sets.num_classes}"
        )


def _lse(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=2)
    return m + np.log(np.exp(z - m[:, :, np.newaxis]).sum(axis=2))


def _masked_lse(z: np.ndarray, mask: np.ndarray, valid: np.ndarray) -> np.ndarray:
    zm = np.where(mask, z, -np.inf)
    m_raw = zm.max(axis=2, initial=-np.inf)
    m = np.where(np.isfinite(m_raw), m_raw, 0.0)
    terms = np.where(mask, np.exp(zm - m[:, :, np.newaxis]), 0.0)
    s = terms.sum(axis=2)
    out = m + np.log(np.where(s > 0, s, 1.0))
    return np.where(valid & (s > 0), out, 0.0)


def relaxed_loss(logits: Logits, sets: NeighborSetMap) -> tuple[float, np.ndarray]:
    """-log sum_{c in set} softmax(z)_c, written as lse(z) - lse(z[set]).

    Returns (mean over valid pixels, per-pixel loss map); invalid pixels
    hold 0 in the map and are excluded from the mean (0.0 if none valid).
    """
    _check_pair(logits, sets)
    z = logits.data
    loss = _lse(z) - _masked_lse(z, sets.mask, sets.valid)
    loss = np.where(sets.valid, loss, 0.0)
    n = int(sets.valid.sum())
    return (float(loss.sum() / n) if n else 0.0), loss


def relaxed_loss_grad(logits: Logits, sets: NeighborSetMap) -> np.ndarray:
    """Per-pixel gradient of the relaxed loss w.r.t. the logits:
    dL/dz_j = p_j - [j in set] * p_j / S with p = softmax(z) and
    S = sum of p over the set.  Invalid pixels get zeros.  No averaging
    factor is applied; callers doing batch means divide themselves."""
    _check_pair(logits, sets)
    z = logits.data
    lse_all = _lse(z)
    lse_set = _masked_lse(z, sets.mask, sets.valid)
    p = np.exp(z - lse_all[:, :, np.newaxis])
    # p_j / S in log space: exp(z_j - lse_set), evaluated only on set
    # members of valid pixels so stale lse values cannot overflow.
    keep = sets.mask & sets.valid[:, :, np.newaxis]
    p_over_s = np.exp(np.where(keep, z - lse_set[:, :, np.newaxis], -np.inf))
    grad = p - p_over_s
    return np.where(sets.valid[:, :, np.newaxis], grad, 0.0)


def cross_entropy_loss(logits: Logits, label: LabelMap) -> tuple[float, np.ndarray]:
    """Standard one-hot cross-entropy as (mean over non-void pixels,
    per-pixel map).  Bit-identical to `relaxed_loss` with singleton sets."""
    if logits.num_classes != label.num_classes:
        raise ValidationError(
            f"logits have {logits.num_classes} classes, label map {label.num_classes}"
        )
    if logits.data.shape[:2] != label.data.shape:
        raise ValidationError(
            f"logits shape {logits.data.shape[:2]} does not match label {label.data.shape}"
        )
    valid = ~label.void_mask()
    z = logits.data
    target = np.where(valid, label.data, 0)
    z_target = np.take_along_axis(z, target[:, :, np.newaxis].astype(np.intp), axis=2)[:, :, 0]
    loss = np.where(valid, _lse(z) - z_target, 0.0)
    n = int(valid.sum())
    return (float(loss.sum() / n) if n else 0.0), loss


def cross_entropy_grad(logits: Logits, label: LabelMap) -> np.ndarray:
    """softmax(z) - onehot(label), zeros at void pixels."""
    return relaxed_loss_grad(logits, onehot_neighbor_sets(label))


def save_logits(logits: Logits, path: str | os.PathLike) -> None:
    """Binary logits format: b"LGT1", int32 height, width, classes, then
    float32 little-endian values in (H, W, K) row-major order."""
    h, w, k = logits.data.shape
    with open(path, "wb") as fh:
        fh.write(LOGITS_MAGIC)
        fh.write(struct.pack("<iii", h, w, k))
        fh.write(np.ascontiguousarray(logits.data, dtype="<f4").tobytes())


def load_logits(path: str | os.PathLike) -> Logits:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise FormatError(f"logits file {os.fspath(path)!s} is truncated (no header)")
    if raw[:4] != LOGITS_MAGIC:
        raise FormatError(
            f"logits file {os.fspath(path)!s} has wrong magic {raw[:4]!r} "
            f"(expected {LOGITS_MAGIC!r})"
        )
    h, w, k = struct.unpack("<iii", raw[4:16])
    if h <= 0 or w <= 0 or k <= 0:
        raise FormatError(f"logits file {os.fspath(path)!s} declares shape {h}x{w}x{k}")
    expected = 16 + 4 * h * w * k
    if len(raw) != expected:
        raise FormatError(
            f"logits file {os.fspath(path)!s} has {len(raw)} bytes, expected {expected}"
        )
    data = np.frombuffer(raw, dtype="<f4", count=h * w * k, offset=16)
    return Logits(data.reshape(h, w, k).astype(np.float64))
