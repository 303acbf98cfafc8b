"""Manifest-driven export: labeled image paths in, embedding files out.

The manifest is a CSV with header `path,label,source`; relative image paths
resolve against the manifest's own directory.  Unreadable images are skipped
with a warning and reported in the result; a failing encoder load is a hard
error before any work starts.
"""

from __future__ import annotations

import csv
import json
import os
import sys
from dataclasses import dataclass, field

from .formats import VALID_LABELS, Record, write_bin, write_jsonl


class ManifestError(ValueError):
    """Malformed manifest; message carries the row number."""


@dataclass
class ManifestEntry:
    path: str
    label: str
    source: str


@dataclass
class ExportResult:
    written: int
    skipped: list[str] = field(default_factory=list)  # paths that failed to decode

    @property
    def complete(self) -> bool:
        return not self.skipped


def read_manifest(path) -> list[ManifestEntry]:
    base = os.path.dirname(os.path.abspath(path))
    entries: list[ManifestEntry] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["path", "label", "source"]:
            raise ManifestError(f"{path}: header must be exactly 'path,label,source', got {reader.fieldnames}")
        for row_no, row in enumerate(reader, start=2):
            img = (row.get("path") or "").strip()
            label = (row.get("label") or "").strip().lower()
            source = (row.get("source") or "").strip()
            if not img or not source:
                raise ManifestError(f"{path}: row {row_no}: path and source must be non-empty")
            if label not in VALID_LABELS:
                raise ManifestError(f"{path}: row {row_no}: label must be one of {VALID_LABELS}, got {label!r}")
            if not os.path.isabs(img):
                img = os.path.join(base, img)
            entries.append(ManifestEntry(img, label, source))
    return entries


def export_embeddings(manifest_path, output_path, fmt: str, encoder, batch_size: int = 32) -> ExportResult:
    """Encode every manifest image and write the dataset plus a metadata
    sidecar (`<output>.meta.json`) recording the encoder provenance.

    Returns the written count and the list of skipped (undecodable) paths.
    """
    if fmt not in ("jsonl", "bin"):
        raise ValueError(f"format must be 'jsonl' or 'bin', got {fmt!r}")
    entries = read_manifest(manifest_path)

    usable: list[ManifestEntry] = []
    skipped: list[str] = []
    for entry in entries:
        try:
            from PIL import Image

            with Image.open(entry.path) as img:
                img.verify()
            usable.append(entry)
        except Exception as exc:
            print(f"warning: skipping unreadable image {entry.path}: {exc}", file=sys.stderr)
            skipped.append(entry.path)

    records: list[Record] = []
    for lo in range(0, len(usable), batch_size):
        chunk = usable[lo : lo + batch_size]
        vecs = encoder.encode([e.path for e in chunk])
        for entry, vec in zip(chunk, vecs):
            rid = os.path.splitext(os.path.basename(entry.path))[0]
            records.append(Record(rid, entry.label, entry.source, vec))

    # ids must be unique; qualify duplicates by position
    seen: dict[str, int] = {}
    for rec in records:
        n = seen.get(rec.id, 0)
        seen[rec.id] = n + 1
        if n:
            rec.id = f"{rec.id}-{n}"

    if fmt == "jsonl":
        write_jsonl(records, output_path)
    else:
        write_bin(records, output_path)
    meta = dict(encoder.metadata())
    meta["records"] = len(records)
    meta["skipped"] = skipped
    with open(f"{output_path}.meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ExportResult(written=len(records), skipped=skipped)
