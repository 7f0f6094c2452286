"""Class-uniform crop sampling.

Rare classes vanish under plain random cropping, so half of each epoch's
crops (by default) are centered on connected-component centroids, visiting
classes round-robin; the rest are uniform random crops.  Streams are Philox
counter-based, keyed by (seed, epoch), so every epoch's plan is reproducible
in isolation.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from math import ceil
from typing import Sequence

import numpy as np

from .imageio import load_label
from .manifest import DatasetManifest
from .types import Frame, LabelMap, ValidationError, VOID


@dataclass(frozen=True)
class Component:
    """One 4-connected same-class region: where it lives and its centroid."""

    entry_index: int
    class_id: int
    row: float
    col: float
    area: int


def connected_components(label: LabelMap) -> tuple[np.ndarray, list[Component]]:
    """Label 4-connected components per class (void is background).

    Returns a component-id map ((H, W) int32, -1 where void) and the
    component records in discovery (raster) order, with `entry_index`
    left at 0 for the caller to rewrite.
    """
    data = label.data
    h, w = data.shape
    comp = np.full((h, w), -1, dtype=np.int32)
    records: list[Component] = []
    for r0 in range(h):
        for c0 in range(w):
            if comp[r0, c0] != -1 or data[r0, c0] == VOID:
                continue
            cid = len(records)
            cls = int(data[r0, c0])
            comp[r0, c0] = cid
            queue = deque([(r0, c0)])
            sum_r = 0
            sum_c = 0
            area = 0
            while queue:
                r, c = queue.popleft()
                sum_r += r
                sum_c += c
                area += 1
                for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                    if 0 <= rr < h and 0 <= cc < w and comp[rr, cc] == -1 and data[rr, cc] == cls:
                        comp[rr, cc] = cid
                        queue.append((rr, cc))
            records.append(Component(0, cls, sum_r / area, sum_c / area, area))
    return comp, records


def compute_class_centroids(label: LabelMap) -> list[Component]:
    """Component records (entry_index 0) for one label map; the centroid is
    the mean of the component's pixel coordinates."""
    _, records = connected_components(label)
    return records


@dataclass(frozen=True)
class CentroidIndex:
    components: tuple[Component, ...]
    entry_sizes: tuple[tuple[int, int], ...]
    num_classes: int

    def classes_present(self) -> list[int]:
        return sorted({c.class_id for c in self.components})


def _filtered(records: Sequence[Component], class_filter: Sequence[int] | None):
    if class_filter is None:
        return list(records)
    keep = set(class_filter)
    return [rec for rec in records if rec.class_id in keep]


def build_centroid_index(
    manifest: DatasetManifest,
    num_classes: int,
    class_filter: Sequence[int] | None = None,
) -> CentroidIndex:
    """Index every manifest entry's components; `class_filter` restricts
    the index to the listed (e.g. underrepresented) classes."""
    components: list[Component] = []
    sizes: list[tuple[int, int]] = []
    for i, entry in enumerate(manifest):
        label = load_label(manifest.label_path(entry), num_classes)
        sizes.append((label.height, label.width))
        components.extend(
            Component(i, rec.class_id, rec.row, rec.col, rec.area)
            for rec in _filtered(compute_class_centroids(label), class_filter)
        )
    return CentroidIndex(tuple(components), tuple(sizes), num_classes)


def index_from_labels(
    labels: Sequence[LabelMap], class_filter: Sequence[int] | None = None
) -> CentroidIndex:
    """Centroid index over in-memory label maps (entry order = list order)."""
    if not labels:
        raise ValidationError("need at least one label map")
    num_classes = labels[0].num_classes
    components: list[Component] = []
    sizes: list[tuple[int, int]] = []
    for i, label in enumerate(labels):
        if label.num_classes != num_classes:
            raise ValidationError("label maps disagree on num_classes")
        sizes.append((label.height, label.width))
        components.extend(
            Component(i, rec.class_id, rec.row, rec.col, rec.area)
            for rec in _filtered(compute_class_centroids(label), class_filter)
        )
    return CentroidIndex(tuple(components), tuple(sizes), num_classes)


@dataclass(frozen=True)
class CropSpec:
    entry_index: int
    top: int
    left: int
    size: int
    kind: str  # "centroid" | "random"
    class_id: int | None = None


def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    if not 0 <= seed < 2**64:
        raise ValidationError(f"seed must fit in a uint64, got {seed}")
    if not 0 <= epoch < 2**64:
        raise ValidationError(f"epoch must fit in a uint64, got {epoch}")
    key = np.array([seed, epoch], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _clamped_origin(center: float, size: int, extent: int) -> int:
    return int(np.clip(int(round(center)) - size // 2, 0, extent - size))


def sample_crops(
    index: CentroidIndex,
    crop_size: int,
    epoch_size: int,
    uniform_fraction: float = 0.5,
    seed: int = 0,
    epoch: int = 0,
) -> list[CropSpec]:
    """Plan one epoch of crops.

    The first ceil(uniform_fraction * epoch_size) crops are centroid
    crops, cycling through the present classes in ascending order and
    picking one of the class's components uniformly; the remainder are
    uniform random crops over entries and positions.
    """
    if crop_size < 1:
        raise ValidationError(f"crop_size must be >= 1, got {crop_size}")
    if epoch_size < 0:
        raise ValidationError(f"epoch_size must be >= 0, got {epoch_size}")
    if not 0.0 <= uniform_fraction <= 1.0:
        raise ValidationError(f"uniform_fraction must be in [0, 1], got {uniform_fraction}")
    for h, w in index.entry_sizes:
        if h < crop_size or w < crop_size:
            raise ValidationError(
                f"crop_size {crop_size} exceeds an entry of size {h}x{w}"
            )
    if epoch_size == 0:
        return []
    n_uniform = ceil(uniform_fraction * epoch_size)
    classes = index.classes_present()
    if n_uniform > 0 and not classes:
        raise ValidationError("centroid crops requested but the index has no components")
    by_class: dict[int, list[Component]] = {c: [] for c in classes}
    for comp in index.components:
        by_class[comp.class_id].append(comp)
    rng = _epoch_rng(seed, epoch)
    crops: list[CropSpec] = []
    for i in range(n_uniform):
        cls = classes[i % len(classes)]
        pool = by_class[cls]
        comp = pool[int(rng.integers(len(pool)))]
        h, w = index.entry_sizes[comp.entry_index]
        crops.append(
            CropSpec(
                entry_index=comp.entry_index,
                top=_clamped_origin(comp.row, crop_size, h),
                left=_clamped_origin(comp.col, crop_size, w),
                size=crop_size,
                kind="centroid",
                class_id=cls,
            )
        )
    for _ in range(epoch_size - n_uniform):
        entry = int(rng.integers(len(index.entry_sizes)))
        h, w = index.entry_sizes[entry]
        top = int(rng.integers(h - crop_size + 1))
        left = int(rng.integers(w - crop_size + 1))
        crops.append(CropSpec(entry, top, left, crop_size, "random"))
    return crops


def crop_frame(frame: Frame, spec: CropSpec) -> Frame:
    view = frame.data[spec.top : spec.top + spec.size, spec.left : spec.left + spec.size]
    return Frame(view.copy())


def crop_label(label: LabelMap, spec: CropSpec) -> LabelMap:
    view = label.data[spec.top : spec.top + spec.size, spec.left : spec.left + spec.size]
    return LabelMap(view.copy(), label.num_classes)
