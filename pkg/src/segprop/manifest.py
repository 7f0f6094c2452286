"""Dataset manifests: ordered frame/label records with provenance.

The on-disk form is line-delimited JSON so augmented sets can be streamed
and concatenated:

    {"frame":"<path>","label":"<path>","source":"gt"|"synth","step":<int>,"origin":"<id>"}

Synthesized entries may carry an extra "pairing" key ("joint"|"label_only")
recording how the frame half of the pair was produced.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator

from .types import FormatError, ValidationError

SOURCE_GT = "gt"
SOURCE_SYNTH = "synth"

_REQUIRED_KEYS = {"frame", "label", "source", "step", "origin"}
_OPTIONAL_KEYS = {"pairing"}


@dataclass(frozen=True)
class ManifestEntry:
    frame: str
    label: str
    source: str
    step: int
    origin: str
    pairing: str | None = None

    def __post_init__(self):
        if self.source not in (SOURCE_GT, SOURCE_SYNTH):
            raise ValidationError(f"entry source must be 'gt' or 'synth', got {self.source!r}")
        if self.source == SOURCE_GT and self.step != 0:
            raise ValidationError(f"gt entry must have step=0, got step={self.step}")
        if self.pairing not in (None, "joint", "label_only"):
            raise ValidationError(f"unknown pairing {self.pairing!r}")

    def to_json(self) -> str:
        record = {
            "frame": self.frame,
            "label": self.label,
            "source": self.source,
            "step": self.step,
            "origin": self.origin,
        }
        if self.pairing is not None:
            record["pairing"] = self.pairing
        return json.dumps(record)


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered manifest entries plus the root their paths resolve under."""

    entries: tuple[ManifestEntry, ...] = ()
    root: Path | None = None

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[ManifestEntry]:
        return iter(self.entries)

    def __getitem__(self, idx: int) -> ManifestEntry:
        return self.entries[idx]

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if p.is_absolute() or self.root is None:
            return p
        return self.root / p

    def frame_path(self, entry: ManifestEntry) -> Path:
        return self.resolve(entry.frame)

    def label_path(self, entry: ManifestEntry) -> Path:
        return self.resolve(entry.label)

    def with_entries(self, entries: Iterable[ManifestEntry]) -> "DatasetManifest":
        return replace(self, entries=tuple(entries))


def parse_manifest_line(line: str, lineno: int = 0) -> ManifestEntry:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest line {lineno}: invalid JSON: {exc}") from exc
    if not isinstance(record, dict):
        raise FormatError(f"manifest line {lineno}: expected an object")
    keys = set(record)
    missing = _REQUIRED_KEYS - keys
    unknown = keys - _REQUIRED_KEYS - _OPTIONAL_KEYS
    if missing:
        raise FormatError(f"manifest line {lineno}: missing keys {sorted(missing)}")
    if unknown:
        raise FormatError(f"manifest line {lineno}: unknown keys {sorted(unknown)}")
    if not isinstance(record["step"], int) or isinstance(record["step"], bool):
        raise FormatError(f"manifest line {lineno}: step must be an integer")
    try:
        return ManifestEntry(
            frame=str(record["frame"]),
            label=str(record["label"]),
            source=str(record["source"]),
            step=record["step"],
            origin=str(record["origin"]),
            pairing=record.get("pairing"),
        )
    except ValidationError as exc:
        raise FormatError(f"manifest line {lineno}: {exc}") from exc


def load_manifest(path: str | os.PathLike, root: str | os.PathLike | None = None) -> DatasetManifest:
    """Read a line-delimited manifest; paths resolve under `root`.

    `root` defaults to the manifest file's directory.
    """
    path = Path(path)
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            entries.append(parse_manifest_line(line, lineno))
    resolved_root = Path(root) if root is not None else path.parent
    return DatasetManifest(entries=tuple(entries), root=resolved_root)


def save_manifest(manifest: DatasetManifest, path: str | os.PathLike) -> None:
    """Write one JSON record per line, preserving entry order."""
    with open(path, "w", encoding="utf-8") as fh:
        for entry in manifest.entries:
            fh.write(entry.to_json())
            fh.write("\n")
