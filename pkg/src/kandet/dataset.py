"""Embedding dataset records, file formats, splits, and synthetic data.

A dataset is a list of EmbeddingRecord: one labeled embedding vector with an
id and a source tag.  Records produced by the exporter are L2-normalized, so
every coordinate sits inside the spline grid range [-1, 1]; loaders warn (but
do not fail) on non-unit norms from third-party files.

Two interchangeable formats:

* text: one JSON object per line —
  {"id": str, "label": "real"|"generated", "source": str, "embedding": [...]}
* binary: magic "KEMB", version u16 LE, dim u32, count u64, then per record
  id length u16 + UTF-8 id, label u8 (0=real, 1=generated), source length
  u16 + UTF-8 source, dim x 32-bit IEEE-754 LE floats.

Embeddings are stored 32-bit in the binary format and widened to float64 on
load; the text format carries full precision and round-trips exactly.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .numerics import SeededRng

REAL = 0
GENERATED = 1

LABEL_TO_NAME = {REAL: "real", GENERATED: "generated"}
NAME_TO_LABEL = {"real": REAL, "generated": GENERATED}

BIN_MAGIC = b"KEMB"
BIN_VERSION = 1

NORM_TOLERANCE = 1e-4


class DatasetFormatError(ValueError):
    """Malformed dataset file; message carries the location."""


class SplitError(ValueError):
    """Requested split cannot be honored."""


class NormWarning(UserWarning):
    """Embedding norm departs from 1 beyond tolerance."""


@dataclass
class EmbeddingRecord:
    id: str
    label: int  # 0 = real, 1 = generated
    source: str
    embedding: np.ndarray  # float64

    @property
    def label_name(self) -> str:
        return LABEL_TO_NAME[self.label]


def to_arrays(records: list[EmbeddingRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Stack a dataset into (X [n x dim] float64, y [n] int64)."""
    if not records:
        return np.empty((0, 0)), np.empty(0, dtype=np.int64)
    x = np.stack([r.embedding for r in records]).astype(np.float64)
    y = np.array([r.label for r in records], dtype=np.int64)
    return x, y


def _check_record(rec: EmbeddingRecord, where: str) -> None:
    if not np.isfinite(rec.embedding).all():
        raise DatasetFormatError(f"{where}: record {rec.id!r} has non-finite embedding entries")
    norm = float(np.linalg.norm(rec.embedding))
    if abs(norm - 1.0) > NORM_TOLERANCE:
        warnings.warn(
            f"{where}: record {rec.id!r} has L2 norm {norm:.6f} (expected 1 +/- {NORM_TOLERANCE})",
            NormWarning,
            stacklevel=3,
        )


# ---------------------------------------------------------------------------
# text format

def load_jsonl(path, expected_dim: int | None = None) -> list[EmbeddingRecord]:
    """Order-preserving load; errors carry the 1-based line number."""
    records: list[EmbeddingRecord] = []
    dim = expected_dim
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            try:
                rid = str(obj["id"])
                label_name = obj["label"]
                source = str(obj["source"])
                emb = np.asarray(obj["embedding"], dtype=np.float64)
            except (KeyError, TypeError) as exc:
                raise DatasetFormatError(f"{path}: line {lineno}: missing or malformed field ({exc})") from exc
            if label_name not in NAME_TO_LABEL:
                raise DatasetFormatError(f"{path}: line {lineno}: unknown label {label_name!r}")
            if dim is None:
                dim = emb.size
            if emb.ndim != 1 or emb.size != dim:
                raise DatasetFormatError(
                    f"{path}: line {lineno}: record {rid!r} has {emb.size} values, expected {dim}"
                )
            rec = EmbeddingRecord(rid, NAME_TO_LABEL[label_name], source, emb)
            _check_record(rec, f"{path}: line {lineno}")
            records.append(rec)
    return records


def write_jsonl(records: list[EmbeddingRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "id": rec.id,
                "label": rec.label_name,
                "source": rec.source,
                "embedding": [float(v) for v in rec.embedding],
            }
            fh.write(json.dumps(obj) + "\n")


# ---------------------------------------------------------------------------
# binary format

def write_bin(records: list[EmbeddingRecord], path) -> None:
    dim = records[0].embedding.size if records else 0
    with open(path, "wb") as fh:
        fh.write(BIN_MAGIC)
        fh.write(struct.pack("<HIQ", BIN_VERSION, dim, len(records)))
        for rec in records:
            rid = rec.id.encode("utf-8")
            src = rec.source.encode("utf-8")
            if rec.embedding.size != dim:
                raise DatasetFormatError(
                    f"{path}: record {rec.id!r} has {rec.embedding.size} values, expected {dim}"
                )
            fh.write(struct.pack("<H", len(rid)))
            fh.write(rid)
            fh.write(struct.pack("<B", rec.label))
            fh.write(struct.pack("<H", len(src)))
            fh.write(src)
            fh.write(rec.embedding.astype("<f4").tobytes())


def load_bin(path) -> list[EmbeddingRecord]:
    """Bit-exact load of the 32-bit embeddings, widened to float64."""
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise DatasetFormatError(f"{path}: truncated while reading {what} at byte offset {pos}")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    if take(4, "magic") != BIN_MAGIC:
        raise DatasetFormatError(f"{path}: bad magic at byte offset 0 (not an embedding file)")
    version, dim, count = struct.unpack("<HIQ", take(14, "header"))
    if version != BIN_VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version} at byte offset 4")
    records: list[EmbeddingRecord] = []
    for i in range(count):
        (id_len,) = struct.unpack("<H", take(2, f"record {i} id length"))
        rid = take(id_len, f"record {i} id").decode("utf-8")
        (label,) = struct.unpack("<B", take(1, f"record {i} label"))
        if label not in (REAL, GENERATED):
            raise DatasetFormatError(f"{path}: record {rid!r} has invalid label byte {label}")
        (src_len,) = struct.unpack("<H", take(2, f"record {i} source length"))
        src = take(src_len, f"record {i} source").decode("utf-8")
        emb = np.frombuffer(take(4 * dim, f"record {i} embedding"), dtype="<f4").astype(np.float64)
        rec = EmbeddingRecord(rid, int(label), src, emb)
        _check_record(rec, f"{path}: record {i}")
        records.append(rec)
    if pos != len(data):
        raise DatasetFormatError(f"{path}: {len(data) - pos} trailing bytes at offset {pos}")
    return records


# ---------------------------------------------------------------------------
# manifest / splits / synthetic data

@dataclass(frozen=True)
class DatasetManifest:
    per_source: dict[str, int]
    per_label: dict[str, int]
    total: int
    split_seed: int | None = None
    split_fractions: tuple[float, ...] | None = None

    def as_table(self) -> str:
        lines = [f"{'source':<16} {'count':>8}"]
        for src in sorted(self.per_source):
            lines.append(f"{src:<16} {self.per_source[src]:>8}")
        lines.append(f"{'total':<16} {self.total:>8}")
        return "\n".join(lines)


def summarize(records: list[EmbeddingRecord]) -> DatasetManifest:
    per_source: dict[str, int] = {}
    per_label: dict[str, int] = {}
    for rec in records:
        per_source[rec.source] = per_source.get(rec.source, 0) + 1
        per_label[rec.label_name] = per_label.get(rec.label_name, 0) + 1
    return DatasetManifest(per_source, per_label, len(records))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    val_fraction: float = 0.1
    seed: int = 0
    stratify: bool = True

    def __post_init__(self):
        if self.train_fraction <= 0 or self.val_fraction < 0:
            raise SplitError(f"fractions must be positive, got {self.train_fraction}/{self.val_fraction}")
        if self.train_fraction + self.val_fraction > 1.0 + 1e-12:
            raise SplitError("train + validation fractions exceed 1")


def stratified_split(
    records: list[EmbeddingRecord], spec: SplitSpec
) -> tuple[list[EmbeddingRecord], list[EmbeddingRecord], list[EmbeddingRecord]]:
    """Deterministic (dataset, spec) -> (train, validation, holdout).

    Per-label proportions are preserved within one record per split; the
    three parts are disjoint and exhaust the input.
    """
    rng = SeededRng(spec.seed)
    if spec.stratify:
        groups: dict[int, list[int]] = {}
        for i, rec in enumerate(records):
            groups.setdefault(rec.label, []).append(i)
        for label, idxs in groups.items():
            if len(idxs) < 2:
                raise SplitError(
                    f"stratified split needs >= 2 records per label, class {LABEL_TO_NAME.get(label, label)} has {len(idxs)}"
                )
        group_list = [groups[k] for k in sorted(groups)]
    else:
        group_list = [list(range(len(records)))]

    train_idx: list[int] = []
    val_idx: list[int] = []
    hold_idx: list[int] = []
    for idxs in group_list:
        perm = rng.permutation(len(idxs))
        shuffled = [idxs[j] for j in perm]
        n = len(shuffled)
        n_train = int(round(n * spec.train_fraction))
        n_val = int(round(n * spec.val_fraction))
        n_train = min(n_train, n)
        n_val = min(n_val, n - n_train)
        train_idx += shuffled[:n_train]
        val_idx += shuffled[n_train : n_train + n_val]
        hold_idx += shuffled[n_train + n_val :]
    return (
        [records[i] for i in sorted(train_idx)],
        [records[i] for i in sorted(val_idx)],
        [records[i] for i in sorted(hold_idx)],
    )


def synthetic_gaussians(
    n_per_class: int, dim: int = 512, separation: float = 6.0, seed: int = 0
) -> list[EmbeddingRecord]:
    """Two L2-normalized Gaussian clouds: class means at +/-(separation/2)
    along a fixed unit direction, isotropic unit noise.  separation=0 makes
    the classes statistically identical; the normalization keeps every
    coordinate inside the spline grid range.
    """
    if separation < 0:
        raise ValueError(f"separation must be >= 0, got {separation}")
    rng = SeededRng(seed)
    direction = np.ones(dim) / np.sqrt(dim)
    records: list[EmbeddingRecord] = []
    for label, sign in ((REAL, -1.0), (GENERATED, +1.0)):
        mean = sign * (separation / 2.0) * direction
        noise = rng.normal(n_per_class * dim).reshape(n_per_class, dim)
        points = mean + noise
        points /= np.linalg.norm(points, axis=1, keepdims=True)
        for i in range(n_per_class):
            records.append(
                EmbeddingRecord(
                    id=f"syn-{LABEL_TO_NAME[label]}-{i:06d}",
                    label=label,
                    source="synthetic",
                    embedding=points[i],
                )
            )
    return records
