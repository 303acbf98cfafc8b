"""Writers and a validator for the shared embedding file formats.

Implemented independently from the classifier package against the same
documented byte layout:

* text: one JSON object per line with id / label ("real"|"generated") /
  source / embedding;
* binary: magic "KEMB", version u16 LE = 1, dim u32, count u64, then per
  record id length u16 + UTF-8, label u8, source length u16 + UTF-8,
  dim x f32 LE.

validate_file mirrors the loader checks on the classifier side (magic,
version, dimensions, finiteness, unit norms) so the two components accept
and reject the same files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

BIN_MAGIC = b"KEMB"
BIN_VERSION = 1
NORM_TOLERANCE = 1e-4

VALID_LABELS = ("real", "generated")
LABEL_BYTE = {"real": 0, "generated": 1}
BYTE_LABEL = {0: "real", 1: "generated"}


@dataclass
class Record:
    id: str
    label: str  # "real" | "generated"
    source: str
    embedding: np.ndarray


def write_jsonl(records: list[Record], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({
                "id": rec.id,
                "label": rec.label,
                "source": rec.source,
                "embedding": [float(v) for v in rec.embedding],
            }) + "\n")


def write_bin(records: list[Record], path) -> None:
    dim = records[0].embedding.size if records else 0
    with open(path, "wb") as fh:
        fh.write(BIN_MAGIC)
        fh.write(struct.pack("<HIQ", BIN_VERSION, dim, len(records)))
        for rec in records:
            rid = rec.id.encode("utf-8")
            src = rec.source.encode("utf-8")
            fh.write(struct.pack("<H", len(rid)))
            fh.write(rid)
            fh.write(struct.pack("<B", LABEL_BYTE[rec.label]))
            fh.write(struct.pack("<H", len(src)))
            fh.write(src)
            fh.write(rec.embedding.astype("<f4").tobytes())


@dataclass
class ValidationReport:
    path: str
    record_count: int = 0
    dim: int | None = None
    violations: list[str] = field(default_factory=list)  # structural: would fail to load
    warnings: list[str] = field(default_factory=list)  # soft: loads, but suspicious

    @property
    def ok(self) -> bool:
        return not self.violations and not self.warnings


def _check_embedding(report: ValidationReport, rid: str, emb: np.ndarray, where: str) -> None:
    if report.dim is None:
        report.dim = emb.size
    if emb.size != report.dim:
        report.violations.append(f"{where}: record {rid!r} has {emb.size} values, expected {report.dim}")
        return
    if not np.isfinite(emb).all():
        report.violations.append(f"{where}: record {rid!r} has non-finite values")
        return
    norm = float(np.linalg.norm(emb))
    if abs(norm - 1.0) > NORM_TOLERANCE:
        report.warnings.append(f"{where}: record {rid!r} has L2 norm {norm:.6f}")


def validate_file(path) -> ValidationReport:
    """Structural and content checks; never raises on bad content."""
    path = str(path)
    report = ValidationReport(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(4)
    except OSError as exc:
        report.violations.append(f"cannot read file: {exc}")
        return report
    if head == BIN_MAGIC:
        _validate_bin(path, report)
    else:
        _validate_jsonl(path, report)
    return report


def _validate_jsonl(path: str, report: ValidationReport) -> None:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"line {lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                report.violations.append(f"{where}: invalid JSON ({exc.msg})")
                continue
            missing = [k for k in ("id", "label", "source", "embedding") if k not in obj]
            if missing:
                report.violations.append(f"{where}: missing fields {missing}")
                continue
            if obj["label"] not in VALID_LABELS:
                report.violations.append(f"{where}: unknown label {obj['label']!r}")
                continue
            emb = np.asarray(obj["embedding"], dtype=np.float64)
            _check_embedding(report, str(obj["id"]), emb, where)
            report.record_count += 1


def _validate_bin(path: str, report: ValidationReport) -> None:
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 4  # past magic

    def take(n: int, what: str) -> bytes | None:
        nonlocal pos
        if pos + n > len(data):
            report.violations.append(f"truncated while reading {what} at byte offset {pos}")
            return None
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    header = take(14, "header")
    if header is None:
        return
    version, dim, count = struct.unpack("<HIQ", header)
    if version != BIN_VERSION:
        report.violations.append(f"unsupported version {version}")
        return
    report.dim = dim
    for i in range(count):
        raw = take(2, f"record {i} id length")
        if raw is None:
            return
        (id_len,) = struct.unpack("<H", raw)
        rid_raw = take(id_len, f"record {i} id")
        if rid_raw is None:
            return
        rid = rid_raw.decode("utf-8", errors="replace")
        raw = take(1, f"record {i} label")
        if raw is None:
            return
        if raw[0] not in BYTE_LABEL:
            report.violations.append(f"record {rid!r}: invalid label byte {raw[0]}")
        raw = take(2, f"record {i} source length")
        if raw is None:
            return
        (src_len,) = struct.unpack("<H", raw)
        if take(src_len, f"record {i} source") is None:
            return
        emb_raw = take(4 * dim, f"record {i} embedding")
        if emb_raw is None:
            return
        emb = np.frombuffer(emb_raw, dtype="<f4").astype(np.float64)
        _check_embedding(report, rid, emb, f"record {i}")
        report.record_count += 1
    if pos != len(data):
        report.violations.append(f"{len(data) - pos} trailing bytes at offset {pos}")
