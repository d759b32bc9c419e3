"""GIST scene descriptor: pooled Gabor energies on a coarse grid.

The Gabor bank is built directly in the frequency domain (a Gaussian in
log-radius around each centre frequency times a Gaussian in angle), with the
DC bin forced to zero. Responses are complex, so the squared magnitude is
the local quadrature energy of each oriented band.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy import ndimage

LUMA = np.array([0.299, 0.587, 0.114])

# Centre frequency of the finest scale (cycles/pixel) and the ratio between
# successive scales; radial and angular bandwidth constants follow the usual
# Oliva-Torralba implementation.
_F_MAX = 0.3
_SCALE_RATIO = 1.85
_RADIAL_BW = 0.35


@dataclass(frozen=True)
class GistConfig:
    resize: int = 128
    n_scales: int = 4
    n_orientations: int = 8
    grid: int = 4

    def __post_init__(self) -> None:
        if min(self.resize, self.n_scales, self.n_orientations, self.grid) < 1:
            raise ValueError("GistConfig fields must be positive")
        if self.resize % self.grid:
            raise ValueError(f"resize {self.resize} not divisible by grid {self.grid}")

    @property
    def dim(self) -> int:
        return self.n_scales * self.n_orientations * self.grid**2

    def to_dict(self) -> dict:
        return asdict(self)


def to_gray(pixels: np.ndarray) -> np.ndarray:
    px = np.asarray(pixels, dtype=np.float64)
    if px.ndim == 2:
        return px
    if px.shape[2] == 1:
        return px[:, :, 0]
    return px[:, :, :3] @ LUMA


def resize_bilinear(img: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resample of a square image to ``size`` x ``size`` (pixel-centre grid)."""
    if img.shape == (size, size):
        return img
    zoom = (size / img.shape[0], size / img.shape[1])
    return ndimage.zoom(img, zoom, order=1, grid_mode=True, mode="nearest")


def center_frequencies(n_scales: int) -> np.ndarray:
    return _F_MAX / _SCALE_RATIO ** np.arange(n_scales)


@lru_cache(maxsize=16)
def gabor_bank(size: int, n_scales: int, n_orientations: int) -> np.ndarray:
    """Frequency responses, shape (n_scales * n_orientations, size, size).

    Laid out in unshifted FFT order; filter index = scale * n_orientations + orientation.
    """
    f = np.fft.fftfreq(size)
    fy, fx = np.meshgrid(f, f, indexing="ij")
    radius = np.hypot(fx, fy)
    angle = np.arctan2(fy, fx)
    angular_bw = 16.0 * n_orientations**2 / 32.0**2
    bank = np.empty((n_scales * n_orientations, size, size))
    k = 0
    for f0 in center_frequencies(n_scales):
        radial = np.exp(-10.0 * _RADIAL_BW * (radius / f0 - 1.0) ** 2)
        for j in range(n_orientations):
            theta = np.pi * j / n_orientations
            d = np.angle(np.exp(1j * (angle - theta)))
            bank[k] = radial * np.exp(-2.0 * angular_bw * np.pi * d**2)
            k += 1
    bank[:, 0, 0] = 0.0
    bank.setflags(write=False)
    return bank


def pool_grid(energy: np.ndarray, grid: int) -> np.ndarray:
    """Mean over ``grid`` x ``grid`` equal cells of the trailing two axes."""
    *lead, h, w = energy.shape
    return energy.reshape(*lead, grid, h // grid, grid, w // grid).mean(axis=(-3, -1))


def gist_from_gray(img: np.ndarray, cfg: GistConfig) -> np.ndarray:
    img = resize_bilinear(img, cfg.resize)
    bank = gabor_bank(cfg.resize, cfg.n_scales, cfg.n_orientations)
    response = np.fft.ifft2(np.fft.fft2(img)[None] * bank)
    energy = response.real**2 + response.imag**2
    return pool_grid(energy, cfg.grid).reshape(-1)


def gist(tile, cfg: GistConfig = GistConfig()) -> np.ndarray:
    """Descriptor of length ``cfg.dim``: scale-major, then orientation, then cell row-major."""
    pixels = tile.pixels if hasattr(tile, "pixels") else tile
    return gist_from_gray(to_gray(pixels), cfg)
