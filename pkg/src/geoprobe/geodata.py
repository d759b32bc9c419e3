"""Georeferenced price records, tile grids, class labels and buffered splits.

Homes are binned onto an axis-aligned grid of square image tiles. Each tile
that contains at least one sale carries the mean natural-log price of those
sales and a three-way class label cut at one standard deviation either side
of the corpus-wide mean log price.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0
_M_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0

TileId = tuple[int, int]


class DataError(ValueError):
    """Input data violates a documented invariant."""


class EmptyTrainSetError(DataError):
    """A spatial split discarded every candidate training tile."""


def format_tile_id(tile_id: TileId) -> str:
    return f"{tile_id[0]}_{tile_id[1]}"


def parse_tile_id(text: str) -> TileId:
    try:
        row, col = text.split("_")
        return int(row), int(col)
    except ValueError as exc:
        raise DataError(f"bad tile id {text!r}; expected '<row>_<col>'") from exc


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise DataError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise DataError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise DataError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class HomeRecord:
    id: str
    point: GeoPoint
    price: float
    date: str | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.price) and self.price > 0):
            raise DataError(f"home {self.id!r}: price must be > 0, got {self.price}")


def _floor_snapped(q):
    # a point on a tile edge should not fall to the previous tile because
    # the degree conversion left it 1 ulp short
    r = np.rint(q)
    q = np.where(np.abs(q - r) < 1e-9, r, q)
    return np.floor(q).astype(np.int64)


@dataclass(frozen=True)
class TileGrid:
    """Square tiles laid out south and east of a north-west origin.

    Degree steps are derived once from the origin latitude, so every tile
    spans the same lat/lon rectangle size.
    """

    origin: GeoPoint
    tile_size_m: float
    rows: int
    cols: int
    meters_per_pixel: float

    def __post_init__(self) -> None:
        if self.tile_size_m <= 0 or self.meters_per_pixel <= 0:
            raise DataError("tile_size_m and meters_per_pixel must be > 0")
        if self.rows < 1 or self.cols < 1:
            raise DataError("rows and cols must be positive")
        ratio = self.tile_size_m / self.meters_per_pixel
        if abs(ratio - round(ratio)) > 1e-9:
            raise DataError("tile_size_m must be an integer multiple of meters_per_pixel")

    @property
    def tile_pixels(self) -> int:
        return int(round(self.tile_size_m / self.meters_per_pixel))

    @property
    def dlat(self) -> float:
        return self.tile_size_m / _M_PER_DEG

    @property
    def dlon(self) -> float:
        return self.tile_size_m / (_M_PER_DEG * math.cos(math.radians(self.origin.lat)))

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(south, west, north, east) bounds of the AOI in degrees."""
        return (
            self.origin.lat - self.rows * self.dlat,
            self.origin.lon,
            self.origin.lat,
            self.origin.lon + self.cols * self.dlon,
        )

    def tile_index(self, lat, lon):
        """Row/col of the tile containing each point (half-open cells).

        Works on scalars or arrays; no bounds check.
        """
        row = _floor_snapped((self.origin.lat - np.asarray(lat, dtype=float)) / self.dlat)
        col = _floor_snapped((np.asarray(lon, dtype=float) - self.origin.lon) / self.dlon)
        return row, col

    def grid_to_latlon(self, y, x):
        """Map fractional (row, col) grid coordinates to (lat, lon)."""
        lat = self.origin.lat - np.asarray(y, dtype=float) * self.dlat
        lon = self.origin.lon + np.asarray(x, dtype=float) * self.dlon
        return lat, lon

    def centroid(self, tile_id: TileId) -> GeoPoint:
        lat, lon = self.grid_to_latlon(tile_id[0] + 0.5, tile_id[1] + 0.5)
        return GeoPoint(float(lat), float(lon))

    def bbox(self, tile_id: TileId) -> tuple[float, float, float, float]:
        """(south, west, north, east) of one tile."""
        north, west = self.grid_to_latlon(tile_id[0], tile_id[1])
        south, east = self.grid_to_latlon(tile_id[0] + 1, tile_id[1] + 1)
        return float(south), float(west), float(north), float(east)

    def to_manifest(self) -> dict:
        return {
            "origin_lat": self.origin.lat,
            "origin_lon": self.origin.lon,
            "tile_size_m": self.tile_size_m,
            "meters_per_pixel": self.meters_per_pixel,
            "rows": self.rows,
            "cols": self.cols,
        }

    @classmethod
    def from_manifest(cls, data: dict) -> TileGrid:
        try:
            return cls(
                origin=GeoPoint(float(data["origin_lat"]), float(data["origin_lon"])),
                tile_size_m=float(data["tile_size_m"]),
                rows=int(data["rows"]),
                cols=int(data["cols"]),
                meters_per_pixel=float(data["meters_per_pixel"]),
            )
        except KeyError as exc:
            raise DataError(f"tiles manifest missing key {exc}") from exc


@dataclass
class ImageTile:
    tile_id: TileId
    pixels: np.ndarray
    bbox: tuple[float, float, float, float] | None = None

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise DataError(f"tile {self.tile_id}: pixels must be HxWxC with C in (1, 3)")
        if px.shape[0] != px.shape[1]:
            raise DataError(f"tile {self.tile_id}: tiles must be square, got {px.shape[:2]}")
        if px.dtype != np.uint8:
            raise DataError(f"tile {self.tile_id}: pixels must be 8-bit, got {px.dtype}")
        self.tile_id = (int(self.tile_id[0]), int(self.tile_id[1]))
        self.pixels = px


@dataclass(frozen=True)
class ClassThresholds:
    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if not self.sigma >= 0:
            raise DataError(f"sigma must be >= 0, got {self.sigma}")

    @property
    def t_low(self) -> float:
        return self.mu - self.sigma

    @property
    def t_high(self) -> float:
        return self.mu + self.sigma


@dataclass(frozen=True)
class LabeledTile:
    tile_id: TileId
    mean_log_price: float
    n_homes: int
    centroid: GeoPoint
    label: int | None = None

    def to_dict(self) -> dict:
        return {
            "tile_id": format_tile_id(self.tile_id),
            "mean_log_price": self.mean_log_price,
            "n_homes": self.n_homes,
            "lat": self.centroid.lat,
            "lon": self.centroid.lon,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> LabeledTile:
        return cls(
            tile_id=parse_tile_id(d["tile_id"]),
            mean_log_price=float(d["mean_log_price"]),
            n_homes=int(d["n_homes"]),
            centroid=GeoPoint(float(d["lat"]), float(d["lon"])),
            label=None if d.get("label") is None else int(d["label"]),
        )


# ----------------------------------------------------------------------
# Homes CSV
# ----------------------------------------------------------------------

_HOME_FIELDS = ("id", "lat", "lon", "price")


def load_homes(path: str | Path) -> list[HomeRecord]:
    """Parse a homes CSV with header ``id,lat,lon,price[,date]``.

    Raises:
        DataError: on a malformed row (the message names the line), a
            non-positive price, or a duplicate id.
    """
    path = Path(path)
    homes: list[HomeRecord] = []
    seen: set[str] = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return homes
        header = [h.strip() for h in header]
        if tuple(header[:4]) != _HOME_FIELDS or len(header) > 5:
            raise DataError(f"{path}: header must be id,lat,lon,price[,date], got {header}")
        has_date = len(header) == 5
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) not in (4, 5) or (len(row) == 5 and not has_date):
                raise DataError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            try:
                hid = row[0].strip()
                point = GeoPoint(float(row[1]), float(row[2]))
                price = float(row[3])
                date = row[4].strip() or None if len(row) == 5 else None
                home = HomeRecord(hid, point, price, date)
            except ValueError as exc:
                raise DataError(f"{path}:{line}: {exc}") from exc
            if not hid:
                raise DataError(f"{path}:{line}: empty id")
            if hid in seen:
                raise DataError(f"{path}:{line}: duplicate id {hid!r}")
            seen.add(hid)
            homes.append(home)
    return homes


def write_homes(path: str | Path, homes: Iterable[HomeRecord]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "lat", "lon", "price", "date"])
        for h in homes:
            w.writerow([h.id, repr(h.point.lat), repr(h.point.lon), repr(h.price), h.date or ""])


# ----------------------------------------------------------------------
# Labels
# ----------------------------------------------------------------------


def bin_homes(homes: Sequence[HomeRecord], grid: TileGrid) -> tuple[dict[TileId, list[float]], int]:
    """Group log prices by containing tile; also return the out-of-AOI count."""
    if not homes:
        raise DataError("no homes to aggregate")
    lat = np.array([h.point.lat for h in homes])
    lon = np.array([h.point.lon for h in homes])
    logp = np.log(np.array([h.price for h in homes], dtype=float))
    rows, cols = grid.tile_index(lat, lon)
    inside = (rows >= 0) & (rows < grid.rows) & (cols >= 0) & (cols < grid.cols)
    bins: dict[TileId, list[float]] = {}
    for r, c, v in zip(rows[inside].tolist(), cols[inside].tolist(), logp[inside].tolist()):
        bins.setdefault((r, c), []).append(v)
    return bins, int((~inside).sum())


def aggregate_labels(homes: Sequence[HomeRecord], grid: TileGrid) -> list[LabeledTile]:
    """One unlabeled tile per grid cell holding at least one home.

    Homes outside the grid are skipped and tallied in a warning.
    """
    bins, skipped = bin_homes(homes, grid)
    if skipped:
        logger.warning("skipped %d of %d homes outside the tile grid", skipped, len(homes))
    return [
        LabeledTile(
            tile_id=tid,
            mean_log_price=math.fsum(vals) / len(vals),
            n_homes=len(vals),
            centroid=grid.centroid(tid),
        )
        for tid, vals in sorted(bins.items())
    ]


def compute_thresholds(homes: Sequence[HomeRecord]) -> ClassThresholds:
    """Mean and population sd of ln(price) over every home in the corpus."""
    if len(homes) < 2:
        raise DataError(f"need at least 2 homes for thresholds, got {len(homes)}")
    logp = np.log(np.array([h.price for h in homes], dtype=float))
    mu = float(logp.mean())
    sigma = float(np.sqrt(np.mean((logp - mu) ** 2)))
    return ClassThresholds(mu, sigma)


def classify(mean_log_price: float, th: ClassThresholds) -> int:
    if mean_log_price < th.t_low:
        return 0
    if mean_log_price > th.t_high:
        return 2
    return 1


def assign_labels(tiles: Iterable[LabeledTile], th: ClassThresholds) -> list[LabeledTile]:
    return [replace(t, label=classify(t.mean_log_price, th)) for t in tiles]


def label_tiles(homes: Sequence[HomeRecord], grid: TileGrid) -> tuple[list[LabeledTile], ClassThresholds]:
    """Aggregate, threshold and label in one call."""
    th = compute_thresholds(homes)
    return assign_labels(aggregate_labels(homes, grid), th), th


def save_labeled_tiles(path: str | Path, tiles: Sequence[LabeledTile], th: ClassThresholds | None = None) -> None:
    payload = {"tiles": [t.to_dict() for t in tiles]}
    if th is not None:
        payload["thresholds"] = {"mu": th.mu, "sigma": th.sigma}
    Path(path).write_text(json.dumps(payload, indent=1))


def load_labeled_tiles(path: str | Path) -> list[LabeledTile]:
    data = json.loads(Path(path).read_text())
    return [LabeledTile.from_dict(d) for d in data["tiles"]]


# ----------------------------------------------------------------------
# Distances and splits
# ----------------------------------------------------------------------


def haversine_m(lat1, lon1, lat2, lon2):
    """Great-circle distance in meters on a sphere; broadcasts over arrays."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(lon2) - np.radians(lon1)
    a = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    return float(haversine_m(a.lat, a.lon, b.lat, b.lon))


def unit_vectors(lat, lon) -> np.ndarray:
    phi, lmb = np.radians(lat), np.radians(lon)
    return np.column_stack([np.cos(phi) * np.cos(lmb), np.cos(phi) * np.sin(lmb), np.sin(phi)])


def centroid_arrays(tiles: Sequence[LabeledTile]) -> tuple[np.ndarray, np.ndarray]:
    lat = np.fromiter((t.centroid.lat for t in tiles), float, len(tiles))
    lon = np.fromiter((t.centroid.lon for t in tiles), float, len(tiles))
    return lat, lon


@dataclass
class SpatialSplit:
    seed: int
    buffer_m: float
    test: list[LabeledTile]
    train: list[LabeledTile]
    discarded: list[LabeledTile] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "buffer_m": self.buffer_m,
            "test_ids": [format_tile_id(t.tile_id) for t in self.test],
            "train_ids": [format_tile_id(t.tile_id) for t in self.train],
            "discarded_ids": [format_tile_id(t.tile_id) for t in self.discarded],
        }

    @classmethod
    def from_json(cls, data: dict, tiles: Sequence[LabeledTile]) -> SpatialSplit:
        by_id = {format_tile_id(t.tile_id): t for t in tiles}
        try:
            pick = lambda key: [by_id[i] for i in data[key]]  # noqa: E731
            return cls(int(data["seed"]), float(data["buffer_m"]), pick("test_ids"),
                       pick("train_ids"), pick("discarded_ids"))
        except KeyError as exc:
            raise DataError(f"split refers to unknown tile or key {exc}") from exc


def spatial_split(
    tiles: Sequence[LabeledTile],
    test_fraction: float,
    buffer_m: float,
    seed: int,
) -> SpatialSplit:
    """Hold out a UAR test set, then drop training tiles too close to it.

    Tiles are canonicalized by tile_id before drawing, so the result depends
    only on the tile set and the seed. A candidate training tile is
    discarded when its centroid lies strictly closer than ``buffer_m`` to
    any test centroid.

    Raises:
        EmptyTrainSetError: if the buffer removes every training tile.
    """
    if not tiles:
        raise DataError("cannot split an empty tile list")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if buffer_m < 0:
        raise ValueError(f"buffer_m must be >= 0, got {buffer_m}")
    ordered = sorted(tiles, key=lambda t: t.tile_id)
    n = len(ordered)
    n_test = int(math.floor(test_fraction * n + 0.5))
    if n_test < 1:
        raise DataError(f"test_fraction {test_fraction} of {n} tiles leaves an empty test set")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    test_idx = np.sort(perm[:n_test])
    rest_idx = np.sort(perm[n_test:])

    lat, lon = centroid_arrays(ordered)
    too_close = np.zeros(len(rest_idx), dtype=bool)
    if buffer_m > 0 and len(rest_idx):
        too_close = _within_buffer(lat, lon, test_idx, rest_idx, buffer_m)
    train = [ordered[i] for i in rest_idx[~too_close]]
    discarded = [ordered[i] for i in rest_idx[too_close]]
    if not train:
        raise EmptyTrainSetError(
            f"buffer of {buffer_m} m discarded all {len(rest_idx)} candidate training tiles"
        )
    return SpatialSplit(seed, buffer_m, [ordered[i] for i in test_idx], train, discarded)


def _within_buffer(lat, lon, test_idx, rest_idx, buffer_m) -> np.ndarray:
    """Flag rest tiles closer than buffer_m to any test tile.

    A KD-tree over unit vectors proposes candidates with a slightly padded
    chord radius; haversine decides.
    """
    xyz = unit_vectors(lat, lon)
    tree = cKDTree(xyz[test_idx])
    chord = 2.0 * math.sin(min(buffer_m / (2 * EARTH_RADIUS_M), math.pi / 2))
    cand = tree.query_ball_point(xyz[rest_idx], r=chord * (1 + 1e-6) + 1e-12)
    flags = np.zeros(len(rest_idx), dtype=bool)
    for j, near in enumerate(cand):
        if near:
            t = test_idx[np.asarray(near)]
            d = haversine_m(lat[rest_idx[j]], lon[rest_idx[j]], lat[t], lon[t])
            flags[j] = bool((d < buffer_m).any())
    return flags


# ----------------------------------------------------------------------
# Tile manifests
# ----------------------------------------------------------------------

MANIFEST_NAME = "manifest.json"


def write_tiles(directory: str | Path, grid: TileGrid, tiles: Iterable[ImageTile]) -> None:
    """Write ``manifest.json`` plus one ``tile_{row}_{col}.png`` per tile."""
    from PIL import Image

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / MANIFEST_NAME).write_text(json.dumps(grid.to_manifest(), indent=1))
    for t in tiles:
        px = t.pixels[:, :, 0] if t.pixels.shape[2] == 1 else t.pixels
        Image.fromarray(px).save(directory / f"tile_{t.tile_id[0]}_{t.tile_id[1]}.png")


def load_grid(directory: str | Path) -> TileGrid:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise DataError(f"no {MANIFEST_NAME} in {directory}")
    return TileGrid.from_manifest(json.loads(path.read_text()))


def load_tiles(
    directory: str | Path,
    tile_ids: Iterable[TileId] | None = None,
) -> tuple[TileGrid, list[ImageTile]]:
    """Read a tiles manifest and its PNGs (all, or just ``tile_ids``).

    Raises:
        DataError: if a requested tile image is missing or has the wrong size.
    """
    from PIL import Image

    directory = Path(directory)
    grid = load_grid(directory)
    if tile_ids is None:
        tile_ids = sorted(
            parse_tile_id(p.stem[len("tile_"):]) for p in directory.glob("tile_*_*.png")
        )
    side = grid.tile_pixels
    tiles = []
    for tid in tile_ids:
        path = directory / f"tile_{tid[0]}_{tid[1]}.png"
        if not path.exists():
            raise DataError(f"missing tile image {path}")
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            px = np.asarray(im, dtype=np.uint8)
        if px.shape[0] != side or px.shape[1] != side:
            raise DataError(f"{path}: expected {side}x{side} pixels, got {px.shape[:2]}")
        tiles.append(ImageTile(tid, px, grid.bbox(tid)))
    return grid, tiles
