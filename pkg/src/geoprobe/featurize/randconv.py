"""Random convolutional features: one layer of Gaussian filters, ReLU, grid pooling."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..rng import keyed_rng
from .gist import LUMA

_FILTER_STREAM = 11


@dataclass(frozen=True)
class RandomConvConfig:
    n_filters: int = 256
    patch: int = 8
    bias: float = 0.0
    pool_grid: int = 2
    seed: int = 0
    channels: int = 3

    def __post_init__(self) -> None:
        if min(self.n_filters, self.patch, self.pool_grid) < 1:
            raise ValueError("n_filters, patch and pool_grid must be positive")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")

    @property
    def dim(self) -> int:
        return self.n_filters * self.pool_grid**2

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        bank_fields = {k: v for k, v in self.to_dict().items() if k in ("n_filters", "patch", "seed", "channels")}
        return hashlib.sha256(json.dumps(bank_fields, sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class FilterBank:
    filters: np.ndarray  # (n_filters, patch, patch, channels)
    provenance: str


def raw_filter(cfg: RandomConvConfig, index: int) -> np.ndarray:
    """Unnormalized standard-normal entries for filter ``index``."""
    rng = keyed_rng(cfg.seed, _FILTER_STREAM, index)
    return rng.standard_normal((cfg.patch, cfg.patch, cfg.channels))


def make_filter_bank(cfg: RandomConvConfig) -> FilterBank:
    """Sample filters, then zero-mean and unit-Frobenius-normalize each one."""
    filters = np.empty((cfg.n_filters, cfg.patch, cfg.patch, cfg.channels))
    for i in range(cfg.n_filters):
        w = raw_filter(cfg, i)
        w -= w.mean()
        filters[i] = w / np.linalg.norm(w)
    filters.setflags(write=False)
    return FilterBank(filters, cfg.digest())


def _match_channels(x: np.ndarray, channels: int) -> np.ndarray:
    if x.shape[2] == channels:
        return x
    if x.shape[2] == 1:
        return np.repeat(x, channels, axis=2)
    return (x[:, :, :3] @ LUMA)[:, :, None]


def cell_bounds(m: int, grid: int) -> list[int]:
    """Boundaries splitting ``m`` positions into ``grid`` near-equal cells."""
    return [(i * m) // grid for i in range(grid + 1)]


def random_conv_features(tile, bank: FilterBank, cfg: RandomConvConfig) -> np.ndarray:
    """Pooled ReLU responses, filter-major then cell row-major.

    Raises:
        ValueError: if the bank was built from a different config, or the
            tile is not larger than the filter patch.
    """
    if bank.provenance != cfg.digest():
        raise ValueError("filter bank was built from a different config")
    pixels = tile.pixels if hasattr(tile, "pixels") else tile
    x = np.asarray(pixels, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    if min(x.shape[:2]) <= cfg.patch:
        raise ValueError(f"tile {x.shape[:2]} must be larger than patch {cfg.patch}")
    x = _match_channels(x / 255.0, cfg.channels)
    windows = sliding_window_view(x, (cfg.patch, cfg.patch), axis=(0, 1))
    # windows: (mh, mw, C, p, p) -> responses (mh, mw, F)
    mh, mw = windows.shape[:2]
    flat = windows.transpose(0, 1, 3, 4, 2).reshape(mh * mw, -1)
    resp = flat @ bank.filters.reshape(cfg.n_filters, -1).T
    act = np.maximum(resp - cfg.bias, 0.0).reshape(mh, mw, cfg.n_filters)
    rb, cb = cell_bounds(mh, cfg.pool_grid), cell_bounds(mw, cfg.pool_grid)
    out = np.empty((cfg.n_filters, cfg.pool_grid, cfg.pool_grid))
    for i in range(cfg.pool_grid):
        for j in range(cfg.pool_grid):
            out[:, i, j] = act[rb[i]:rb[i + 1], cb[j]:cb[j + 1]].mean(axis=(0, 1))
    return out.reshape(-1)
