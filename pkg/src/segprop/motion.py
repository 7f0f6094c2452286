"""Motion sources: estimate fields from frame pairs, extrapolate them from
past pairs, and read/write a bit-exact motion file format.

Estimation is dense pyramidal iterative least-squares matching in the
Lucas-Kanade family.  It observes both endpoint frames, so it plays the
reconstruction role; `predict_motion` is the past-only counterpart
(constant-motion extrapolation).  Neither handles disocclusion: pixels that
become visible have no well-defined source and simply inherit whatever the
local solve produces.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .types import FormatError, Frame, MotionField, ValidationError, require_same_hw
from .warp import bilinear_sample

MOTION_MAGIC = 202021.25


@dataclass(frozen=True)
class FlowParams:
    pyramid_levels: int = 4
    window_radius: int = 7
    iterations_per_level: int = 3
    min_eigen_threshold: float = 1e-4

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise ValidationError(f"pyramid_levels must be >= 1, got {self.pyramid_levels}")
        if self.window_radius < 1:
            raise ValidationError(f"window_radius must be >= 1, got {self.window_radius}")
        if self.iterations_per_level < 1:
            raise ValidationError(
                f"iterations_per_level must be >= 1, got {self.iterations_per_level}"
            )

    def min_frame_extent(self) -> int:
        return (2 ** (self.pyramid_levels - 1)) * (2 * self.window_radius + 1)


def _to_gray(frame: Frame) -> np.ndarray:
    return frame.data.mean(axis=2)


def _downsample2(a: np.ndarray) -> np.ndarray:
    h2, w2 = a.shape[0] // 2, a.shape[1] // 2
    a = a[: 2 * h2, : 2 * w2]
    return 0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2])


def box_mean(a: np.ndarray, radius: int) -> np.ndarray:
    """Mean over a (2*radius+1)^2 window, clipped at the image borders."""
    h, w = a.shape
    ii = np.zeros((h + 1, w + 1), dtype=np.float64)
    np.cumsum(np.cumsum(a, axis=0), axis=1, out=ii[1:, 1:])
    y0 = np.clip(np.arange(h) - radius, 0, h)
    y1 = np.clip(np.arange(h) + radius + 1, 0, h)
    x0 = np.clip(np.arange(w) - radius, 0, w)
    x1 = np.clip(np.arange(w) + radius + 1, 0, w)
    sums = (
        ii[y1[:, None], x1[None, :]]
        - ii[y0[:, None], x1[None, :]]
        - ii[y1[:, None], x0[None, :]]
        + ii[y0[:, None], x0[None, :]]
    )
    counts = (y1 - y0)[:, None] * (x1 - x0)[None, :]
    return sums / counts


def _resize_field(u: np.ndarray, h: int, w: int) -> np.ndarray:
    """Bilinear resize with half-pixel-aligned centers."""
    hs, ws = u.shape
    if (hs, ws) == (h, w):
        return u.copy()
    ys = (np.arange(h, dtype=np.float64) + 0.5) * (hs / h) - 0.5
    xs = (np.arange(w, dtype=np.float64) + 0.5) * (ws / w) - 0.5
    ys, xs = np.meshgrid(ys, xs, indexing="ij")
    return bilinear_sample(u[:, :, np.newaxis], ys, xs)[:, :, 0]


def estimate_motion(frame_a: Frame, frame_b: Frame, params: FlowParams = FlowParams()) -> MotionField:
    """Estimate a backward field such that warp(frame_a, field) ~ frame_b.

    Coarse-to-fine: the field from each pyramid level seeds the next finer
    one; per level, a windowed least-squares step is iterated.  Pixels whose
    local 2x2 system is degenerate (minimum eigenvalue below threshold)
    skip the update and keep the coarser-level estimate.
    """
    require_same_hw(frame_a, frame_b, "frames")
    if frame_a.channels != frame_b.channels:
        raise ValidationError(
            f"frames differ in channel count: {frame_a.channels} vs {frame_b.channels}"
        )
    min_extent = params.min_frame_extent()
    if min(frame_a.height, frame_a.width) < min_extent:
        raise ValidationError(
            f"frames of size {frame_a.height}x{frame_a.width} are smaller than the "
            f"{min_extent} px required by {params.pyramid_levels} pyramid levels with "
            f"window radius {params.window_radius}"
        )

    gray_a = _to_gray(frame_a)
    gray_b = _to_gray(frame_b)
    pyr_a = [gray_a]
    pyr_b = [gray_b]
    for _ in range(params.pyramid_levels - 1):
        pyr_a.append(_downsample2(pyr_a[-1]))
        pyr_b.append(_downsample2(pyr_b[-1]))

    u = np.zeros_like(pyr_a[-1])
    v = np.zeros_like(pyr_a[-1])
    step_cap = float(2 * params.window_radius + 1)

    for level in range(params.pyramid_levels - 1, -1, -1):
        a, b = pyr_a[level], pyr_b[level]
        h, w = a.shape
        if u.shape != (h, w):
            u = _resize_field(u, h, w) * (w / u.shape[1])
            v = _resize_field(v, h, w) * (h / v.shape[0])
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        # Differentiate the fixed target frame, not the evolving warp: a
        # field-dependent gradient feeds its own noise back into the solve
        # and the iteration diverges.  With a constant gradient the
        # structure tensor and its gating are constant per level too.
        iy, ix = np.gradient(b)
        sxx = box_mean(ix * ix, params.window_radius)
        sxy = box_mean(ix * iy, params.window_radius)
        syy = box_mean(iy * iy, params.window_radius)
        half_tr = 0.5 * (sxx + syy)
        lam_min = half_tr - np.sqrt((0.5 * (sxx - syy)) ** 2 + sxy * sxy)
        good = lam_min >= params.min_eigen_threshold
        det = sxx * syy - sxy * sxy
        for _ in range(params.iterations_per_level):
            sy, sx = ys + v, xs + u
            aw = bilinear_sample(a[:, :, np.newaxis], sy, sx)[:, :, 0]
            # Residuals where the source coordinate left the frame compare
            # real content against clamped border padding; they never vanish
            # and each box filter pass smears them one radius further inward.
            inside = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
            r = np.where(inside, b - aw, 0.0)
            sxr = box_mean(ix * r, params.window_radius)
            syr = box_mean(iy * r, params.window_radius)
            with np.errstate(divide="ignore", invalid="ignore"):
                du = (syy * sxr - sxy * syr) / det
                dv = (sxx * syr - sxy * sxr) / det
            du = np.where(good, np.clip(du, -step_cap, step_cap), 0.0)
            dv = np.where(good, np.clip(dv, -step_cap, step_cap), 0.0)
            # Smooth the update with the same window before applying it.
            # The raw iteration amplifies spatial error modes that fall in
            # the box filter's negative sidelobes (per-mode gain 1 - H(q),
            # and H(q) dips to about -0.22); squaring the response makes
            # every mode's gain 1 - H(q)^2, which stays within [0, 1].
            u = u + box_mean(du, params.window_radius)
            v = v + box_mean(dv, params.window_radius)

    return MotionField.from_uv(u, v)


def predict_motion(prev_field: MotionField) -> MotionField:
    """Constant-motion extrapolation: the next step's field equals the
    previous step's, value for value."""
    return MotionField(prev_field.data.copy())


def save_motion(field: MotionField, path: str | os.PathLike) -> None:
    """Write the binary motion format: magic, width, height, then row-major
    interleaved (u, v) float32 pairs, all little-endian."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", MOTION_MAGIC))
        fh.write(struct.pack("<i", field.width))
        fh.write(struct.pack("<i", field.height))
        fh.write(np.ascontiguousarray(field.data, dtype="<f4").tobytes())


def load_motion(path: str | os.PathLike) -> MotionField:
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise FormatError(f"motion file {os.fspath(path)!s} is truncated (no header)")
    (magic,) = struct.unpack("<f", raw[:4])
    if magic != MOTION_MAGIC:
        raise FormatError(
            f"motion file {os.fspath(path)!s} has wrong magic {magic!r} "
            f"(expected {MOTION_MAGIC})"
        )
    width, height = struct.unpack("<ii", raw[4:12])
    if width <= 0 or height <= 0:
        raise FormatError(f"motion file {os.fspath(path)!s} declares size {width}x{height}")
    expected = 12 + 8 * width * height
    if len(raw) != expected:
        raise FormatError(
            f"motion file {os.fspath(path)!s} has {len(raw)} bytes, expected {expected}"
        )
    data = np.frombuffer(raw, dtype="<f4", count=height * width * 2, offset=12)
    return MotionField(data.reshape(height, width, 2).copy())
