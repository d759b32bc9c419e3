import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from geoprobe.geodata import GeoPoint, LabeledTile, TileGrid  # noqa: E402


def grid_population(rows: int, cols: int, tile_size_m: float = 128.0, seed: int = 0) -> list[LabeledTile]:
    """Every tile of a regular grid, with random labels."""
    grid = TileGrid(GeoPoint(33.5, -112.0), tile_size_m, rows, cols, 4.0)
    rng = np.random.default_rng(seed)
    return [
        LabeledTile((r, c), float(rng.normal(12.4, 0.5)), 1, grid.centroid((r, c)), int(rng.integers(3)))
        for r in range(rows) for c in range(cols)
    ]


def scattered_population(n: int, seed: int = 0, span_deg: float = 0.05) -> list[LabeledTile]:
    """Tiles with random, distinct centroids (ids are just ordinals)."""
    rng = np.random.default_rng(seed)
    lat = 33.5 + rng.uniform(0, span_deg, n)
    lon = -112.0 + rng.uniform(0, span_deg, n)
    return [LabeledTile((i, 0), 12.0, 1, GeoPoint(float(a), float(b)), int(rng.integers(3)))
            for i, (a, b) in enumerate(zip(lat, lon))]


@pytest.fixture
def small_grid():
    return TileGrid(GeoPoint(33.5, -112.0), 128.0, 12, 12, 4.0)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
