"""Survey-style training subsets: UAR, cluster and coordinate-stratified.

Every scheme first sorts the population by tile_id, so draws depend only on
the set of tiles and the seed, not on ingestion order. Uniform draws take a
prefix of one seeded permutation, which makes samples of increasing size
from the same seed nested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .geodata import GeoPoint, LabeledTile, centroid_arrays, format_tile_id, haversine_m


class Scheme(str, Enum):
    UAR = "uar"
    CLUSTER = "cluster"
    LAT = "lat"
    LON = "lon"


class InfeasibleSample(ValueError):
    """The population cannot supply the requested sample."""

    def __init__(self, reason: str, message: str):
        super().__init__(message)
        self.reason = reason


@dataclass(frozen=True)
class SamplePlan:
    scheme: Scheme
    n: int
    seed: int = 0
    k_clusters: int | None = None
    boundary: float | None = None
    side: str = "low"

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.n < 1:
            raise ValueError(f"sample size must be >= 1, got {self.n}")
        if self.scheme is Scheme.CLUSTER and (self.k_clusters is None or self.k_clusters < 1):
            raise ValueError("cluster sampling needs k_clusters >= 1")
        if self.side not in ("low", "high"):
            raise ValueError(f"side must be 'low' or 'high', got {self.side!r}")

    @property
    def label(self) -> str:
        if self.scheme is Scheme.CLUSTER:
            return f"cluster{self.k_clusters}"
        if self.scheme in (Scheme.LAT, Scheme.LON):
            return f"{self.scheme.value}-{self.side}"
        return self.scheme.value

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "n": self.n,
            "seed": self.seed,
            "k_clusters": self.k_clusters,
            "boundary": self.boundary,
            "side": self.side,
        }


@dataclass
class SampleResult:
    plan: SamplePlan
    tile_ids: list[tuple[int, int]]
    cluster_centers: list[GeoPoint] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "plan": self.plan.to_dict(),
            "tile_ids": [format_tile_id(t) for t in self.tile_ids],
            "cluster_centers": [[p.lat, p.lon] for p in self.cluster_centers],
        }


def _canonical(pop: Sequence[LabeledTile]) -> list[LabeledTile]:
    ordered = sorted(pop, key=lambda t: t.tile_id)
    for a, b in zip(ordered, ordered[1:]):
        if a.tile_id == b.tile_id:
            raise ValueError(f"duplicate tile id {a.tile_id} in population")
    return ordered


def _check_size(n: int, available: int) -> None:
    if n > available:
        raise InfeasibleSample("pool_too_small", f"requested {n} tiles but only {available} available")


def sample_uar(pop: Sequence[LabeledTile], n: int, seed: int) -> SampleResult:
    plan = SamplePlan(Scheme.UAR, n, seed)
    ordered = _canonical(pop)
    _check_size(n, len(ordered))
    perm = np.random.default_rng(seed).permutation(len(ordered))[:n]
    return SampleResult(plan, [ordered[i].tile_id for i in perm])


def sample_cluster(pop: Sequence[LabeledTile], n: int, k: int, seed: int) -> SampleResult:
    """k centres drawn UAR from the population, each claiming its nearest tiles.

    Centres take turns claiming their nearest unclaimed tile (haversine
    between centroids, ties by tile_id) until each holds its quota of
    ceil(n/k) or floor(n/k) tiles; the first ``n mod k`` centres get the
    larger quota. Each centre claims itself first.
    """
    plan = SamplePlan(Scheme.CLUSTER, n, seed, k_clusters=k)
    ordered = _canonical(pop)
    _check_size(n, len(ordered))
    if k > n:
        raise InfeasibleSample("k_gt_n", f"{k} clusters cannot share {n} samples")
    rng = np.random.default_rng(seed)
    # centres come from a full permutation so they do not depend on n
    centers = rng.permutation(len(ordered))[:k]
    lat, lon = centroid_arrays(ordered)
    quotas = [n // k + (1 if j < n % k else 0) for j in range(k)]
    # each centre's preference list; stable argsort keeps tile_id order on ties
    prefs = []
    for c in centers:
        d = haversine_m(lat[c], lon[c], lat, lon)
        d[c] = -1.0
        prefs.append(np.argsort(d, kind="stable"))
    claimed = np.zeros(len(ordered), dtype=bool)
    cursor = [0] * k
    taken: list[list[int]] = [[] for _ in range(k)]
    remaining = n
    while remaining:
        for j in range(k):
            if len(taken[j]) >= quotas[j]:
                continue
            p = prefs[j]
            while claimed[p[cursor[j]]]:
                cursor[j] += 1
            idx = int(p[cursor[j]])
            claimed[idx] = True
            taken[j].append(idx)
            remaining -= 1
    ids = [ordered[i].tile_id for j in range(k) for i in taken[j]]
    return SampleResult(plan, ids, [ordered[c].centroid for c in centers])


def _strat(pop, n, boundary, side, seed, scheme: Scheme, coord: str) -> SampleResult:
    ordered = _canonical(pop)
    lat, lon = centroid_arrays(ordered)
    values = lat if coord == "lat" else lon
    if len(values) == 0:
        raise InfeasibleSample("pool_too_small", "empty population")
    if boundary is None:
        boundary = float(np.median(values))
    if not math.isfinite(boundary):
        raise ValueError(f"boundary must be finite, got {boundary}")
    plan = SamplePlan(scheme, n, seed, boundary=boundary, side=side)
    mask = values < boundary if side == "low" else values > boundary
    eligible = np.flatnonzero(mask)
    _check_size(n, len(eligible))
    perm = np.random.default_rng(seed).permutation(len(eligible))[:n]
    return SampleResult(plan, [ordered[eligible[i]].tile_id for i in perm])


def sample_lat_strat(pop, n: int, boundary_lat: float | None, side: str, seed: int) -> SampleResult:
    """UAR among tiles strictly south (``low``) or north (``high``) of a latitude."""
    return _strat(pop, n, boundary_lat, side, seed, Scheme.LAT, "lat")


def sample_lon_strat(pop, n: int, boundary_lon: float | None, side: str, seed: int) -> SampleResult:
    """UAR among tiles strictly west (``low``) or east (``high``) of a longitude."""
    return _strat(pop, n, boundary_lon, side, seed, Scheme.LON, "lon")


def draw(pop: Sequence[LabeledTile], plan: SamplePlan) -> SampleResult:
    """Dispatch a plan to its scheme."""
    if plan.scheme is Scheme.UAR:
        return sample_uar(pop, plan.n, plan.seed)
    if plan.scheme is Scheme.CLUSTER:
        return sample_cluster(pop, plan.n, plan.k_clusters, plan.seed)
    if plan.scheme is Scheme.LAT:
        return sample_lat_strat(pop, plan.n, plan.boundary, plan.side, plan.seed)
    return sample_lon_strat(pop, plan.n, plan.boundary, plan.side, plan.seed)
