"""Corpus-level featurization over a bounded worker pool with an on-disk cache."""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..geodata import DataError, ImageTile
from .fmat import CorruptFileError, FeatureMatrix, load_external_features, load_features, save_features
from .gist import GistConfig, gist
from .randconv import RandomConvConfig, make_filter_bank, random_conv_features

logger = logging.getLogger(__name__)

KINDS = ("gist", "randconv", "external")


class _Counter:
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.value = 0

    def add(self, k: int) -> None:
        with self._lock:
            self.value += k


# Per-tile featurizer evaluations since import (or the last reset).
EVALUATIONS = _Counter()


def reset_evaluation_count() -> None:
    EVALUATIONS.value = 0


def evaluation_count() -> int:
    return EVALUATIONS.value


@dataclass(frozen=True)
class FeaturizerSpec:
    kind: str
    gist: GistConfig = field(default_factory=GistConfig)
    randconv: RandomConvConfig = field(default_factory=RandomConvConfig)
    external_path: str | None = None
    external_ids: str | None = None
    name: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"featurizer kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "external" and not self.external_path:
            raise ValueError("external featurizer needs external_path")

    @property
    def label(self) -> str:
        return self.name or self.kind

    def config_echo(self) -> dict:
        if self.kind == "gist":
            return {"kind": "gist", **self.gist.to_dict()}
        if self.kind == "randconv":
            return {"kind": "randconv", **self.randconv.to_dict()}
        return {"kind": "external", "path": self.external_path, "ids": self.external_ids}

    @property
    def tag(self) -> str:
        blob = json.dumps(self.config_echo(), sort_keys=True).encode()
        return f"{self.kind}:{hashlib.sha256(blob).hexdigest()[:16]}"

    @classmethod
    def from_dict(cls, d: dict) -> FeaturizerSpec:
        d = dict(d)
        kind = d.pop("kind")
        kw: dict = {"name": d.pop("name", None)}
        if kind == "gist":
            kw["gist"] = GistConfig(**d)
        elif kind == "randconv":
            kw["randconv"] = RandomConvConfig(**d)
        else:
            kw["external_path"] = d.get("path") or d.get("external_path")
            kw["external_ids"] = d.get("ids") or d.get("external_ids")
        return cls(kind, **kw)

    def to_dict(self) -> dict:
        d = self.config_echo()
        if self.name:
            d["name"] = self.name
        return d


def make_tile_fn(spec: FeaturizerSpec) -> tuple[Callable[[ImageTile], np.ndarray], int]:
    """Per-tile feature function and its output dimension."""
    if spec.kind == "gist":
        cfg = spec.gist
        return (lambda t: gist(t, cfg)), cfg.dim
    if spec.kind == "randconv":
        cfg = spec.randconv
        bank = make_filter_bank(cfg)
        return (lambda t: random_conv_features(t, bank, cfg)), cfg.dim
    raise ValueError("external features are loaded, not computed")


def corpus_digest(tiles: Sequence[ImageTile]) -> str:
    h = hashlib.sha256()
    for t in tiles:
        h.update(f"{t.tile_id[0]}_{t.tile_id[1]}:{t.pixels.shape}".encode())
        h.update(np.ascontiguousarray(t.pixels).tobytes())
    return h.hexdigest()[:16]


def cache_file(cache_dir: str | Path, spec: FeaturizerSpec, digest: str) -> Path:
    tag_hash = spec.tag.split(":", 1)[1]
    return Path(cache_dir) / f"{spec.kind}-{tag_hash}-{digest}.fmat"


def _compute_rows(fn, tiles: Sequence[ImageTile], d: int) -> np.ndarray:
    out = np.empty((len(tiles), d), dtype=np.float32)
    for i, t in enumerate(tiles):
        out[i] = fn(t)
    EVALUATIONS.add(len(tiles))
    return out


def featurize_corpus(
    tiles: Sequence[ImageTile],
    spec: FeaturizerSpec,
    n_workers: int = 1,
    cache_dir: str | Path | None = None,
    chunk: int = 64,
) -> FeatureMatrix:
    """Feature rows for every tile, in tile_id order.

    Each tile is featurized sequentially by one worker, so the matrix is
    bit-identical for any worker count. With ``cache_dir`` the result is
    stored under a key made of the featurizer tag and a digest of the tile
    pixels; a cache file that fails its header check is recomputed.
    """
    if not tiles:
        raise DataError("no tiles to featurize")
    ordered = sorted(tiles, key=lambda t: t.tile_id)
    ids = [t.tile_id for t in ordered]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate tile ids in corpus")

    if spec.kind == "external":
        ext = load_external_features(spec.external_path, spec.external_ids)
        return FeatureMatrix(ext.rows_for(ids), ids, ext.featurizer_tag, spec.config_echo())

    path = None
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        path = cache_file(cache_dir, spec, corpus_digest(ordered))
        if path.exists():
            try:
                fm = load_features(path)
                if fm.row_ids == ids and fm.featurizer_tag == spec.tag:
                    logger.debug("feature cache hit %s", path)
                    return fm
                logger.warning("feature cache %s does not match corpus; recomputing", path)
            except (CorruptFileError, ValueError, KeyError) as exc:
                logger.warning("corrupt feature cache %s (%s); recomputing", path, exc)

    fn, d = make_tile_fn(spec)
    chunks = [ordered[s:s + chunk] for s in range(0, len(ordered), chunk)]
    if n_workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(lambda c: _compute_rows(fn, c, d), chunks))
    else:
        parts = [_compute_rows(fn, c, d) for c in chunks]
    values = np.concatenate(parts, axis=0)
    if not np.isfinite(values).all():
        raise DataError(f"{spec.kind} produced non-finite features")
    fm = FeatureMatrix(values, ids, spec.tag, spec.config_echo())
    if path is not None:
        save_features(path, fm)
    return fm
