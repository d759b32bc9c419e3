"""Seeded synthetic corpora: homes plus imagery over a latent log-price field.

The latent field is a global mean plus a sum of isotropic Gaussian bumps.
Homes are dropped uniformly over the AOI and priced from the field with
i.i.d. log-normal noise. Each tile image carries the field value at its
centre in two ways: as a shift of mean intensity, and as the contrast of
its pixel texture. The second channel exists because every featurizer in
this package is blind to mean intensity (zero-mean filters, zero-DC Gabor
bank), so ``texture_gain`` is what makes the corpus learnable from images.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import spatial

from .geodata import (
    GeoPoint,
    HomeRecord,
    ImageTile,
    TileGrid,
    write_homes,
    write_tiles,
)
from .rng import keyed_rng

_HOME_STREAM = 1
_FIELD_STREAM = 2
_TILE_STREAM = 3
_STYLE_STREAM = 4


@dataclass(frozen=True)
class SynthConfig:
    n_homes: int
    grid: TileGrid
    n_price_bumps: int = 50
    bump_amplitude: float = 0.8
    noise_sd: float = 0.2
    image_signal_gain: float = 20.0
    image_noise_sd: float = 12.0
    seed: int = 0
    base_log_price: float = 12.4
    texture_amplitude: float = 10.0
    texture_gain: float = 1.0
    texture_freq_range: tuple[float, float] = (0.05, 0.3)
    style_regions: int = 16
    clutter_amplitude: float = 0.0
    channels: int = 1

    def __post_init__(self) -> None:
        if self.n_homes < 1 or self.n_price_bumps < 1:
            raise ValueError("n_homes and n_price_bumps must be positive")
        if self.noise_sd < 0 or self.image_noise_sd < 0:
            raise ValueError("standard deviations must be >= 0")
        if self.style_regions < 1:
            raise ValueError("style_regions must be >= 1")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = self.grid.to_manifest()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SynthConfig:
        d = dict(d)
        d["grid"] = TileGrid.from_manifest(d["grid"])
        if "texture_freq_range" in d:
            d["texture_freq_range"] = tuple(d["texture_freq_range"])
        return cls(**d)


@dataclass
class SynthCorpus:
    homes: list[HomeRecord]
    tiles: list[ImageTile]
    true_field: np.ndarray
    config: SynthConfig
    orientation: np.ndarray | None = None
    frequency: np.ndarray | None = None


@dataclass(frozen=True)
class PriceField:
    """Sum of signed Gaussian bumps in grid (row, col) coordinates."""

    base: float
    centers: np.ndarray  # (k, 2) row, col
    widths: np.ndarray  # (k,) in tile lengths
    amplitudes: np.ndarray  # (k,)

    def __call__(self, y, x, chunk: int = 8192) -> np.ndarray:
        y = np.asarray(y, dtype=float).ravel()
        x = np.asarray(x, dtype=float).ravel()
        out = np.empty_like(y)
        inv = 1.0 / (2.0 * self.widths**2)
        for s in range(0, len(y), chunk):
            dy = y[s:s + chunk, None] - self.centers[None, :, 0]
            dx = x[s:s + chunk, None] - self.centers[None, :, 1]
            out[s:s + chunk] = np.exp(-(dy * dy + dx * dx) * inv) @ self.amplitudes
        return self.base + out


def make_field(cfg: SynthConfig) -> PriceField:
    rng = keyed_rng(cfg.seed, _FIELD_STREAM)
    k, g = cfg.n_price_bumps, cfg.grid
    centers = np.column_stack([rng.uniform(0, g.rows, k), rng.uniform(0, g.cols, k)])
    widths = rng.uniform(2.0, 10.0, k)
    signs = rng.choice(np.array([-1.0, 1.0]), size=k)
    return PriceField(cfg.base_log_price, centers, widths, cfg.bump_amplitude * signs)


@dataclass(frozen=True)
class StyleField:
    """Regional appearance regimes: grating orientation and frequency.

    The AOI is cut into Voronoi cells around ``sites`` (tile coordinates);
    every tile in a cell shares its regime's orientation and frequency
    (cycles per pixel). Orientations are stratified over [0, pi) so that
    neighbouring regimes rarely look alike.
    """

    sites: np.ndarray  # (m, 2) row, col
    orientation: np.ndarray  # (m,)
    frequency: np.ndarray  # (m,)

    def regime(self, y, x) -> np.ndarray:
        pts = np.column_stack([np.asarray(y, dtype=float).ravel(), np.asarray(x, dtype=float).ravel()])
        _, idx = spatial.cKDTree(self.sites).query(pts)
        return idx

    def __call__(self, y, x) -> tuple[np.ndarray, np.ndarray]:
        idx = self.regime(y, x)
        return self.orientation[idx], self.frequency[idx]


def make_style(cfg: SynthConfig) -> StyleField:
    rng = keyed_rng(cfg.seed, _STYLE_STREAM)
    m, g = cfg.style_regions, cfg.grid
    sites = rng.uniform(0, 1, (m, 2)) * [g.rows, g.cols]
    orientation = (rng.permutation(m) + rng.uniform(0, 1, m)) * np.pi / m
    lo, hi = cfg.texture_freq_range
    frequency = lo * (hi / lo) ** rng.uniform(0, 1, m)
    return StyleField(sites, orientation, frequency)


def render_tile(
    cfg: SynthConfig,
    tile_id: tuple[int, int],
    value: float,
    orientation: float,
    frequency: float,
) -> np.ndarray:
    """Pixels for one tile from its own keyed stream.

    Mean 128 + gain * s, plus white noise, plus a grating with the tile's
    regional orientation and frequency whose amplitude grows as
    exp(texture_gain * s), where s is the latent value minus the base price.
    """
    side = cfg.grid.tile_pixels
    rng = keyed_rng(cfg.seed, _TILE_STREAM, tile_id[0], tile_id[1])
    s = value - cfg.base_log_price
    noise = rng.standard_normal((side, side, cfg.channels))
    phase = rng.uniform(0, 2 * np.pi)
    yy, xx = np.mgrid[0:side, 0:side]
    arg = xx * np.cos(orientation) + yy * np.sin(orientation)
    wave = np.cos(2 * np.pi * frequency * arg + phase)
    amp = cfg.texture_amplitude * np.exp(cfg.texture_gain * s)
    texture = amp * wave
    if cfg.clutter_amplitude > 0:
        # price-independent grating with a random look, one per tile
        theta, u, ph2 = rng.uniform(0, 1, 3) * [np.pi, 1.0, 2 * np.pi]
        lo, hi = cfg.texture_freq_range
        f2 = lo * (hi / lo) ** u
        arg2 = xx * np.cos(theta) + yy * np.sin(theta)
        texture = texture + cfg.clutter_amplitude * np.cos(2 * np.pi * f2 * arg2 + ph2)
    px = 128.0 + cfg.image_signal_gain * s + cfg.image_noise_sd * noise + texture[:, :, None]
    return np.clip(np.rint(px), 0, 255).astype(np.uint8)


def gen_corpus(cfg: SynthConfig, n_workers: int = 1) -> SynthCorpus:
    """Generate homes, tiles and the latent field; a pure function of cfg."""
    g = cfg.grid
    field = make_field(cfg)
    rr, cc = np.meshgrid(np.arange(g.rows), np.arange(g.cols), indexing="ij")
    true_field = field(rr + 0.5, cc + 0.5).reshape(g.rows, g.cols)
    orient, freq = make_style(cfg)(rr + 0.5, cc + 0.5)
    orient, freq = orient.reshape(g.rows, g.cols), freq.reshape(g.rows, g.cols)

    rng = keyed_rng(cfg.seed, _HOME_STREAM)
    hy = rng.uniform(0, g.rows, cfg.n_homes)
    hx = rng.uniform(0, g.cols, cfg.n_homes)
    logp = field(hy, hx) + rng.normal(0.0, cfg.noise_sd, cfg.n_homes)
    lat, lon = g.grid_to_latlon(hy, hx)
    width = len(str(cfg.n_homes - 1))
    homes = [
        HomeRecord(f"h{i:0{width}d}", GeoPoint(float(a), float(o)), float(np.exp(p)))
        for i, (a, o, p) in enumerate(zip(lat, lon, logp))
    ]

    ids = [(r, c) for r in range(g.rows) for c in range(g.cols)]

    def build(tid):
        return ImageTile(tid, render_tile(cfg, tid, true_field[tid], orient[tid], freq[tid]), g.bbox(tid))

    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            tiles = list(pool.map(build, ids, chunksize=64))
    else:
        tiles = [build(t) for t in ids]
    return SynthCorpus(homes, tiles, true_field, cfg, orient, freq)


def write_corpus(corpus: SynthCorpus, out_dir: str | Path) -> dict[str, Path]:
    """Write homes.csv, tiles/ (manifest + PNGs) and truth.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"homes": out / "homes.csv", "tiles": out / "tiles", "truth": out / "truth.json"}
    write_homes(paths["homes"], corpus.homes)
    write_tiles(paths["tiles"], corpus.config.grid, corpus.tiles)
    paths["truth"].write_text(json.dumps({
        "config": corpus.config.to_dict(),
        "true_field": corpus.true_field.tolist(),
    }))
    return paths
