"""PNG loading and saving for frames and label maps.

Frames are normalized to [0, 1] regardless of source bit depth.  Label PNGs
follow the trainId convention: single channel, 8-bit, values 0..K-1 are
classes and 255 is VOID.
"""
from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .types import VOID, FormatError, Frame, LabelMap, ValidationError


def load_frame(path: str | os.PathLike) -> Frame:
    """Load an 8- or 16-bit PNG as a Frame with values scaled to [0, 1]."""
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            arr = np.asarray(img)
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise OSError(f"cannot read image {os.fspath(path)!s}: {exc}") from exc
    if mode in ("L", "RGB"):
        scale = 255.0
    elif mode in ("I", "I;16", "I;16B", "I;16L"):
        scale = 65535.0
    else:
        raise FormatError(
            f"unsupported PNG mode {mode!r} in {os.fspath(path)!s} "
            "(expected 8-bit L/RGB or 16-bit grayscale)"
        )
    if arr.max(initial=0) > scale:
        raise OSError(f"pixel values exceed declared bit depth in {os.fspath(path)!s}")
    return Frame(arr.astype(np.float64) / scale)


def save_frame(frame: Frame, path: str | os.PathLike) -> None:
    """Write a Frame as an 8-bit PNG (values rounded to 0..255)."""
    arr = np.rint(frame.data * 255.0).astype(np.uint8)
    if frame.channels == 1:
        img = Image.fromarray(arr[:, :, 0], mode="L")
    else:
        img = Image.fromarray(arr, mode="RGB")
    img.save(path, format="PNG")


def load_label(path: str | os.PathLike, num_classes: int) -> LabelMap:
    """Load a single-channel 8-bit label PNG; value 255 means VOID.

    Values in [num_classes, 255) are rejected with the offending values
    listed.
    """
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            arr = np.asarray(img)
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise OSError(f"cannot read label {os.fspath(path)!s}: {exc}") from exc
    if mode != "L":
        raise FormatError(
            f"label PNG must be single-channel 8-bit, got mode {mode!r} in {os.fspath(path)!s}"
        )
    bad = (arr >= num_classes) & (arr != VOID)
    if bad.any():
        offending = sorted(int(v) for v in np.unique(arr[bad]))
        raise ValidationError(
            f"label {os.fspath(path)!s} contains values outside "
            f"[0, {num_classes}) + {{255}}: {offending}"
        )
    return LabelMap(arr.astype(np.int32), num_classes)


def save_label(label: LabelMap, path: str | os.PathLike) -> None:
    """Write a LabelMap as a single-channel 8-bit PNG (round trip bit-exact)."""
    arr = label.data.astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")
