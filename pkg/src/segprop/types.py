"""Array-backed domain types shared by every module.

All types are immutable after construction (the wrapped numpy arrays are
marked read-only) and therefore safe to share across workers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VOID = 255


class ValidationError(ValueError):
    """Raised when a value violates a type or operation contract."""


class FormatError(ValueError):
    """Raised when a binary file does not match its declared format."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def require_same_hw(a, b, what: str = "inputs") -> None:
    """Reject dimension mismatches between paired inputs."""
    if (a.height, a.width) != (b.height, b.width):
        raise ValidationError(
            f"{what} differ in size: {a.height}x{a.width} vs {b.height}x{b.width}"
        )


@dataclass(frozen=True, eq=False)
class Frame:
    """H x W x C image with real values in [0, 1], row-major."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValidationError(f"frame must be HxWx1 or HxWx3, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"frame has empty spatial extent: {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("frame contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValidationError(
                f"frame values outside [0, 1]: min={arr.min()}, max={arr.max()}"
            )
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class LabelMap:
    """H x W categorical class IDs in [0, num_classes) plus VOID (255)."""

    data: np.ndarray
    num_classes: int

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValidationError(f"label map must be HxW, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValidationError(f"label map must be integer-typed, got {arr.dtype}")
        k = int(self.num_classes)
        if not 1 <= k <= VOID:
            raise ValidationError(f"num_classes must be in [1, {VOID}], got {k}")
        arr = arr.astype(np.int32, copy=True)
        bad = (arr != VOID) & ((arr < 0) | (arr >= k))
        if bad.any():
            offending = np.unique(arr[bad])
            raise ValidationError(
                f"label values outside [0, {k}) + {{VOID}}: {offending.tolist()}"
            )
        object.__setattr__(self, "data", _freeze(arr))
        object.__setattr__(self, "num_classes", k)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def void_mask(self) -> np.ndarray:
        return self.data == VOID


@dataclass(frozen=True, eq=False)
class MotionField:
    """H x W two-channel (u, v) displacements in pixels, backward-sampling.

    u is the x (column) displacement and v the y (row) displacement: a warp
    reads its source at (x + u, y + v) for each output pixel (x, y).  Values
    are stored as float32 so file round trips are bit-exact.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != 2:
            raise ValidationError(f"motion field must be HxWx2, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("motion field contains non-finite values")
        object.__setattr__(self, "data", _freeze(arr))

    @classmethod
    def from_uv(cls, u: np.ndarray, v: np.ndarray) -> "MotionField":
        return cls(np.stack([np.asarray(u), np.asarray(v)], axis=-1))

    @classmethod
    def zeros(cls, height: int, width: int) -> "MotionField":
        return cls(np.zeros((height, width, 2), dtype=np.float32))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def u(self) -> np.ndarray:
        return self.data[:, :, 0]

    @property
    def v(self) -> np.ndarray:
        return self.data[:, :, 1]


@dataclass(frozen=True, eq=False)
class Logits:
    """H x W x K unconstrained real scores, one channel per class."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] < 1:
            raise ValidationError(f"logits must be HxWxK, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("logits contain non-finite values")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def num_classes(self) -> int:
        return self.data.shape[2]


PROB_SUM_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class ProbMap:
    """H x W x K per-pixel class probabilities; channels sum to 1 per pixel."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] < 1:
            raise ValidationError(f"probability map must be HxWxK, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("probability map contains non-finite values")
        if arr.min() < 0.0:
            raise ValidationError(f"probability map has negative entries: min={arr.min()}")
        sums = arr.sum(axis=2)
        worst = np.abs(sums - 1.0).max()
        if worst > PROB_SUM_TOL:
            raise ValidationError(
                f"per-pixel channel sums deviate from 1 by {worst:.3g} (> {PROB_SUM_TOL})"
            )
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def num_classes(self) -> int:
        return self.data.shape[2]
