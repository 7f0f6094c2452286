"""Backward warping of frames and label maps with a shared motion field.

Convention: output(x, y) reads the source at (x + u(x, y), y + v(x, y)).
Images clamp source coordinates at the borders; labels turn VOID wherever
the source coordinate leaves the image.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .types import VOID, Frame, LabelMap, MotionField, require_same_hw


class LabelWarpMode(enum.Enum):
    # Bilinearly sample each class as a one-hot channel, then take the
    # per-pixel argmax.  Ties break to the lowest class ID; VOID loses ties.
    ONEHOT_BILINEAR_ARGMAX = "onehot_bilinear_argmax"
    # Read the label at the rounded source coordinate.
    NEAREST = "nearest"


@dataclass(frozen=True)
class LabelWarpPolicy:
    mode: LabelWarpMode = LabelWarpMode.ONEHOT_BILINEAR_ARGMAX


def bilinear_sample(data: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample (H, W, C) data at float coordinates, clamped to the image.

    Exact for integer coordinates: the interpolation weights collapse to
    0/1 so representable values pass through unchanged.
    """
    h, w = data.shape[:2]
    ys = np.clip(ys, 0.0, float(h - 1))
    xs = np.clip(xs, 0.0, float(w - 1))
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[..., np.newaxis]
    fx = (xs - x0)[..., np.newaxis]
    top = data[y0, x0] * (1.0 - fx) + data[y0, x1] * fx
    bot = data[y1, x0] * (1.0 - fx) + data[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def _source_coords(field: MotionField) -> tuple[np.ndarray, np.ndarray]:
    h, w = field.height, field.width
    ys, xs = np.mgrid[0:h, 0:w]
    return ys + field.v.astype(np.float64), xs + field.u.astype(np.float64)


def warp_image(frame: Frame, field: MotionField) -> Frame:
    """Bilinear backward warp; out-of-bounds sources clamp to the edge."""
    require_same_hw(frame, field, "frame and motion field")
    ys, xs = _source_coords(field)
    out = bilinear_sample(frame.data, ys, xs)
    return Frame(np.clip(out, 0.0, 1.0))


def warp_label(
    label: LabelMap,
    field: MotionField,
    policy: LabelWarpPolicy = LabelWarpPolicy(),
) -> LabelMap:
    """Warp a categorical map; sources outside the image become VOID."""
    require_same_hw(label, field, "label and motion field")
    ys, xs = _source_coords(field)
    h, w = label.height, label.width
    oob = (xs < 0.0) | (xs > w - 1) | (ys < 0.0) | (ys > h - 1)

    if policy.mode is LabelWarpMode.NEAREST:
        yi = np.floor(ys + 0.5).astype(np.intp).clip(0, h - 1)
        xi = np.floor(xs + 0.5).astype(np.intp).clip(0, w - 1)
        out = label.data[yi, xi].copy()
    else:
        classes = [int(c) for c in np.unique(label.data) if c != VOID]
        # Class channels in ascending ID order, VOID channel last: argmax's
        # first-match rule then implements the tie-break contract.
        channels = np.empty((h, w, len(classes) + 1), dtype=np.float64)
        for i, cls in enumerate(classes):
            channels[:, :, i] = label.data == cls
        channels[:, :, -1] = label.data == VOID
        sampled = bilinear_sample(channels, ys, xs)
        best = np.argmax(sampled, axis=2)
        lut = np.array(classes + [VOID], dtype=np.int32)
        out = lut[best]

    out[oob] = VOID
    return LabelMap(out, label.num_classes)
