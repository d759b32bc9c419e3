"""FeatureMatrix and the ``FMAT`` binary format.

Layout (all little-endian)::

    b"FMAT" | u32 version | u64 n | u64 d | n*d float32, row-major

A ``<name>.meta.json`` sidecar carries row ids, the featurizer tag and an
echo of the featurizer config.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..geodata import DataError, TileId, format_tile_id, parse_tile_id

MAGIC = b"FMAT"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


class CorruptFileError(DataError):
    """An FMAT file failed its header or size check."""


@dataclass
class FeatureMatrix:
    values: np.ndarray
    row_ids: list[TileId]
    featurizer_tag: str
    config: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise DataError(f"feature values must be 2-D, got shape {self.values.shape}")
        if len(self.row_ids) != self.values.shape[0]:
            raise DataError(f"{len(self.row_ids)} row ids for {self.values.shape[0]} rows")
        self.row_ids = [(int(r), int(c)) for r, c in self.row_ids]

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def rows_for(self, tile_ids: Sequence[TileId]) -> np.ndarray:
        """Feature rows for ``tile_ids`` in the given order."""
        index = {tid: i for i, tid in enumerate(self.row_ids)}
        try:
            return self.values[[index[tuple(t)] for t in tile_ids]]
        except KeyError as exc:
            raise DataError(f"tile {exc} has no feature row") from exc

    def sorted(self) -> FeatureMatrix:
        order = sorted(range(self.n), key=lambda i: self.row_ids[i])
        return FeatureMatrix(self.values[order], [self.row_ids[i] for i in order],
                             self.featurizer_tag, self.config)


def write_fmat(path: str | Path, values: np.ndarray) -> None:
    """Atomically write a matrix (temp file in the same directory, then rename)."""
    path = Path(path)
    arr = np.ascontiguousarray(values, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("FMAT holds 2-D matrices only")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, arr.shape[0], arr.shape[1]))
            fh.write(arr.tobytes())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def read_fmat(path: str | Path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise CorruptFileError(f"{path}: truncated header")
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CorruptFileError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CorruptFileError(f"{path}: unsupported FMAT version {version}")
    if len(raw) != _HEADER.size + 4 * n * d:
        raise CorruptFileError(f"{path}: expected {n}x{d} payload, file size {len(raw)}")
    return np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(n, d).astype(np.float32)


def meta_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def save_features(path: str | Path, fm: FeatureMatrix) -> None:
    path = Path(path)
    write_fmat(path, fm.values)
    meta = {
        "row_ids": [format_tile_id(t) for t in fm.row_ids],
        "featurizer_tag": fm.featurizer_tag,
        "config": fm.config,
    }
    tmp = meta_path(path).with_suffix(".tmp")
    tmp.write_text(json.dumps(meta))
    os.replace(tmp, meta_path(path))


def load_features(path: str | Path) -> FeatureMatrix:
    """Read an FMAT file written by :func:`save_features` with its sidecar."""
    values = read_fmat(path)
    mp = meta_path(path)
    if not mp.exists():
        raise CorruptFileError(f"missing sidecar {mp}")
    meta = json.loads(mp.read_text())
    ids = [parse_tile_id(s) for s in meta["row_ids"]]
    if len(ids) != values.shape[0]:
        raise CorruptFileError(f"{mp}: {len(ids)} ids for {values.shape[0]} rows")
    return FeatureMatrix(values, ids, meta["featurizer_tag"], meta.get("config", {}))


def _read_ids(path: Path) -> list[TileId]:
    text = path.read_text()
    if path.suffix == ".json":
        data = json.loads(text)
        items = data["row_ids"] if isinstance(data, dict) else data
    else:
        items = [line.strip() for line in text.splitlines() if line.strip()]
    return [parse_tile_id(s) for s in items]


def _read_csv_features(path: Path) -> tuple[np.ndarray, list[TileId]]:
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "tile_id":
            raise DataError(f"{path}: header must start with tile_id,f0,f1,...")
        ids, rows = [], []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{reader.line_num}: expected {len(header)} fields")
            ids.append(parse_tile_id(row[0]))
            rows.append([float(v) for v in row[1:]])
    return np.array(rows, dtype=np.float32).reshape(len(rows), len(header) - 1), ids


def load_external_features(matrix_path: str | Path, ids_path: str | Path | None = None) -> FeatureMatrix:
    """Validate externally computed features (e.g. CNN bottleneck activations).

    Accepts an FMAT file (ids from ``ids_path`` or its sidecar) or a CSV with
    header ``tile_id,f0,f1,...``. Rows come back sorted by tile_id.

    Raises:
        DataError: on an id/row count mismatch, duplicate ids, or a
            non-finite value (the message names the row index).
    """
    matrix_path = Path(matrix_path)
    digest = hashlib.sha256(matrix_path.read_bytes()).hexdigest()[:16]
    if matrix_path.suffix == ".csv":
        values, ids = _read_csv_features(matrix_path)
    else:
        values = read_fmat(matrix_path)
        ids_file = Path(ids_path) if ids_path is not None else meta_path(matrix_path)
        ids = _read_ids(ids_file)
    if len(ids) != values.shape[0]:
        raise DataError(f"{len(ids)} ids for {values.shape[0]} feature rows")
    if len(set(ids)) != len(ids):
        raise DataError("duplicate tile ids in external features")
    bad = np.flatnonzero(~np.isfinite(values).all(axis=1))
    if len(bad):
        raise DataError(f"non-finite feature value in row {int(bad[0])}")
    fm = FeatureMatrix(values, ids, f"external:{digest}", {"source": str(matrix_path)})
    return fm.sorted()
