"""Region-feature matrices per image and the FEAT binary file format.

FEAT layout: magic "FEAT", rows and cols as unsigned 32-bit little-endian,
then rows*cols IEEE-754 float32 little-endian values, row-major. Values
are float64 in memory, float32 on disk. Real extractor output (e.g. a CNN
region layer exported by an external script) and the deterministic mock
extractor both flow through the same format.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "FeatureMatrix",
    "FeatureBundle",
    "write_feature_file",
    "read_feature_file",
    "mock_extract",
    "blank_matrix",
    "MockFeatureSource",
    "FileFeatureSource",
    "assemble_bundles",
    "write_feature_index",
    "read_feature_index",
]

DEFAULT_ROWS = 196
DEFAULT_COLS = 1024

_MAGIC = b"FEAT"


@dataclass
class FeatureMatrix:
    values: np.ndarray  # (R, D) float64
    flag: str = "real"  # real | mock | blank | shuffled

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]


@dataclass
class FeatureBundle:
    sid: int
    matrices: list = field(default_factory=list)

    def __post_init__(self):
        shapes = {m.values.shape for m in self.matrices}
        if len(shapes) > 1:
            raise ValueError(f"heterogeneous feature shapes in bundle {self.sid}: {sorted(shapes)}")


def write_feature_file(path, matrix: FeatureMatrix) -> None:
    vals = np.asarray(matrix.values, dtype=np.float64)
    if vals.ndim != 2:
        raise ValueError("feature matrix must be 2-D")
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite values in feature matrix")
    r, d = vals.shape
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", r, d))
        f.write(vals.astype("<f4").tobytes())
    tmp.replace(path)


def read_feature_file(path) -> FeatureMatrix:
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise ValueError(f"truncated FEAT header at offset {len(data)}")
    if data[:4] != _MAGIC:
        raise ValueError(f"bad FEAT magic at offset 0: {data[:4]!r}")
    r, d = struct.unpack_from("<II", data, 4)
    if r < 1 or d < 1:
        raise ValueError(f"invalid dimensions {r}x{d} at offset 4")
    expected = 12 + 4 * r * d
    if len(data) != expected:
        raise ValueError(f"truncated payload: expected {expected} bytes, got {len(data)} "
                         f"(offset {len(data)})")
    vals = np.frombuffer(data, dtype="<f4", count=r * d, offset=12)
    return FeatureMatrix(values=vals.astype(np.float64).reshape(r, d))


def _hash_to_seed(content_hash: str) -> int:
    try:
        return int(content_hash[:16], 16)
    except ValueError:
        return int.from_bytes(content_hash.encode("utf-8")[:8], "little")


def mock_extract(content_hash: str, rows: int = DEFAULT_ROWS, cols: int = DEFAULT_COLS) -> FeatureMatrix:
    """Deterministic stand-in for a real CNN region extractor: uniform
    [-1, 1] values from a counter-based generator keyed by the content hash."""
    rng = np.random.Generator(np.random.Philox(key=_hash_to_seed(content_hash)))
    vals = rng.uniform(-1.0, 1.0, size=(rows, cols))
    return FeatureMatrix(values=vals, flag="mock")


def blank_matrix(rows: int = DEFAULT_ROWS, cols: int = DEFAULT_COLS) -> FeatureMatrix:
    return FeatureMatrix(values=np.zeros((rows, cols)), flag="blank")


class MockFeatureSource:
    """Feature source deriving matrices from each record's content hash."""

    def __init__(self, rows: int = DEFAULT_ROWS, cols: int = DEFAULT_COLS):
        self.rows = rows
        self.cols = cols

    def get(self, content_hash: str) -> FeatureMatrix:
        return mock_extract(content_hash, self.rows, self.cols)


class FileFeatureSource:
    """Feature source backed by FEAT files listed in a features.jsonl index."""

    def __init__(self, index: dict):
        self._index = dict(index)  # hash -> path
        first = next(iter(self._index.values()), None)
        probe = read_feature_file(first) if first else None
        self.rows = probe.rows if probe else DEFAULT_ROWS
        self.cols = probe.cols if probe else DEFAULT_COLS

    @classmethod
    def from_index_file(cls, path) -> "FileFeatureSource":
        return cls({rec["hash"]: rec["path"] for rec in read_feature_index(path)})

    def get(self, content_hash: str) -> FeatureMatrix:
        if content_hash not in self._index:
            raise KeyError(f"no feature file for hash {content_hash}")
        return read_feature_file(self._index[content_hash])


def assemble_bundles(manifest, feature_source, m: int = 5):
    """Yield one FeatureBundle per sid: m matrices in query-rank order,
    failed retrieval slots materialized as blank (all-zero) matrices."""
    for sid, records in sorted(manifest.by_sid().items()):
        matrices = []
        for rank in range(1, m + 1):
            rec = next((r for r in records if r.rank == rank), None)
            if rec is None or rec.status != "ok":
                matrices.append(blank_matrix(feature_source.rows, feature_source.cols))
            else:
                if rec.content_hash is None:
                    raise ValueError(f"ok record without content hash at sid {sid} rank {rank}")
                matrices.append(feature_source.get(rec.content_hash))
        yield FeatureBundle(sid=sid, matrices=matrices)


def write_feature_index(path, entries) -> None:
    """entries: iterable of {"hash","path","rows","cols","flag"} dicts."""
    with open(path, "w", encoding="utf-8") as f:
        for e in entries:
            f.write(json.dumps(e) + "\n")


def read_feature_index(path) -> list:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(json.loads(line))
    return out
