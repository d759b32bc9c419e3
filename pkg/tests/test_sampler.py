import numpy as np
import pytest
from scipy import stats

import oracles
from conftest import grid_population, scattered_population
from geoprobe.geodata import GeoPoint, LabeledTile, haversine
from geoprobe.sampler import (
    InfeasibleSample,
    SamplePlan,
    Scheme,
    draw,
    sample_cluster,
    sample_lat_strat,
    sample_lon_strat,
    sample_uar,
)


def _coords(pop, ids):
    by_id = {t.tile_id: t.centroid for t in pop}
    pts = [by_id[i] for i in ids]
    return np.array([p.lat for p in pts]), np.array([p.lon for p in pts])


def _mean_pairwise(pop, ids):
    lat, lon = _coords(pop, ids)
    d = oracles.pairwise_haversine(lat, lon, lat, lon)
    return d[np.triu_indices(len(ids), 1)].mean()


class TestPlan:
    def test_validation(self):
        with pytest.raises(ValueError):
            SamplePlan("uar", 0)
        with pytest.raises(ValueError):
            SamplePlan("cluster", 10)
        with pytest.raises(ValueError):
            SamplePlan("lat", 10, side="north")

    def test_labels(self):
        assert SamplePlan("cluster", 5, k_clusters=4).label == "cluster4"
        assert SamplePlan("lon", 5, side="high").label == "lon-high"
        assert SamplePlan(Scheme.UAR, 5).label == "uar"


class TestUAR:
    def test_exhaustive_is_permutation(self):
        pop = grid_population(5, 5)
        r = sample_uar(pop, 25, seed=3)
        assert sorted(r.tile_ids) == sorted(t.tile_id for t in pop)

    def test_too_large(self):
        with pytest.raises(InfeasibleSample) as e:
            sample_uar(grid_population(3, 3), 10, seed=0)
        assert e.value.reason == "pool_too_small"

    def test_single_draw_frequencies(self):
        pop = grid_population(2, 5)
        counts = np.zeros(10)
        index = {t.tile_id: i for i, t in enumerate(sorted(pop, key=lambda t: t.tile_id))}
        for s in range(10_000):
            counts[index[sample_uar(pop, 1, seed=s).tile_ids[0]]] += 1
        chi2 = ((counts - 1000) ** 2 / 1000).sum()
        assert chi2 < stats.chi2.ppf(0.999, 9)

    def test_spatial_bins_uniform(self):
        # 10 equal-probability bands of two rows, 1,000 samples of size 100
        pop = grid_population(20, 20)
        bands = np.zeros(10)
        for s in range(1000):
            for r, _ in sample_uar(pop, 100, seed=s).tile_ids:
                bands[r // 2] += 1
        assert stats.chisquare(bands).pvalue > 0.001

    def test_nested_across_sizes(self):
        pop = grid_population(10, 10)
        small, big = sample_uar(pop, 20, seed=5), sample_uar(pop, 60, seed=5)
        assert big.tile_ids[:20] == small.tile_ids

    def test_order_independent(self):
        pop = grid_population(6, 6)
        assert sample_uar(pop, 10, 1).tile_ids == sample_uar(pop[::-1], 10, 1).tile_ids

    def test_duplicate_ids_rejected(self):
        pop = grid_population(2, 2)
        with pytest.raises(ValueError):
            sample_uar(pop + pop[:1], 2, 0)


class TestCluster:
    def test_cardinality_and_uniqueness(self):
        pop = grid_population(20, 20)
        for n, k in [(50, 4), (51, 4), (7, 7), (400, 1)]:
            r = sample_cluster(pop, n, k, seed=1)
            assert len(r.tile_ids) == len(set(r.tile_ids)) == n
            assert len(r.cluster_centers) == k

    def test_k_equals_n_is_uar_of_centres(self):
        pop = grid_population(10, 10)
        r = sample_cluster(pop, 12, 12, seed=4)
        by_id = {t.tile_id: t.centroid for t in pop}
        assert [by_id[i] for i in r.tile_ids] == r.cluster_centers

    def test_k_one_takes_nearest(self):
        pop = grid_population(15, 15)
        r = sample_cluster(pop, 30, 1, seed=2)
        c = r.cluster_centers[0]
        d = {t.tile_id: haversine(t.centroid, c) for t in pop}
        chosen = max(d[i] for i in r.tile_ids)
        outside = min(v for k, v in d.items() if k not in set(r.tile_ids))
        assert chosen <= outside

    def test_k_gt_n(self):
        with pytest.raises(InfeasibleSample) as e:
            sample_cluster(grid_population(5, 5), 3, 4, seed=0)
        assert e.value.reason == "k_gt_n"

    def test_centres_fixed_across_sizes(self):
        pop = grid_population(30, 30)
        a, b = sample_cluster(pop, 100, 4, 9), sample_cluster(pop, 400, 4, 9)
        assert a.cluster_centers == b.cluster_centers

    def test_quotas(self):
        pop = grid_population(20, 20)
        r = sample_cluster(pop, 10, 4, seed=0)
        # ids are emitted cluster by cluster: sizes 3, 3, 2, 2
        by_id = {t.tile_id: t.centroid for t in pop}
        owners = [min(range(4), key=lambda j: haversine(by_id[i], r.cluster_centers[j])) for i in r.tile_ids]
        assert owners[:3] == [owners[0]] * 3

    def test_closer_to_centres_than_uar(self):
        pop = grid_population(40, 40)
        wins = 0
        for s in range(10):
            r = sample_cluster(pop, 400, 4, seed=s)
            u = sample_uar(pop, 400, seed=s + 100)
            lat, lon = _coords(pop, r.tile_ids)
            ulat, ulon = _coords(pop, u.tile_ids)
            clat = np.array([p.lat for p in r.cluster_centers])
            clon = np.array([p.lon for p in r.cluster_centers])
            dc = oracles.pairwise_haversine(lat, lon, clat, clon).min(axis=1).max()
            du = oracles.pairwise_haversine(ulat, ulon, clat, clon).min(axis=1).max()
            wins += dc < du
        assert wins >= 9

    def test_locality_mean_pairwise(self):
        pop = grid_population(40, 40)
        wins = sum(
            _mean_pairwise(pop, sample_cluster(pop, 400, 4, s).tile_ids)
            < _mean_pairwise(pop, sample_uar(pop, 400, s + 50).tile_ids)
            for s in range(10)
        )
        assert wins >= 9


class TestStratified:
    def test_side_purity(self):
        pop = scattered_population(400, seed=1)
        for side in ("low", "high"):
            r = sample_lat_strat(pop, 100, None, side, seed=2)
            b = r.plan.boundary
            lat, _ = _coords(pop, r.tile_ids)
            assert ((lat < b) if side == "low" else (lat > b)).all()
            r = sample_lon_strat(pop, 100, None, side, seed=2)
            _, lon = _coords(pop, r.tile_ids)
            assert ((lon < r.plan.boundary) if side == "low" else (lon > r.plan.boundary)).all()

    def test_vacuous_boundary_is_uar(self):
        pop = scattered_population(200)
        top = max(t.centroid.lat for t in pop) + 1
        assert sample_lat_strat(pop, 50, top, "low", 3).tile_ids == sample_uar(pop, 50, 3).tile_ids

    def test_median_pool_size(self):
        for n in (101, 100):
            pop = scattered_population(n, seed=n)
            lat = np.sort([t.centroid.lat for t in pop])
            median = float(np.median(lat))
            eligible = int((lat < median).sum())
            assert eligible in (n // 2, (n + 1) // 2)
            sample_lat_strat(pop, eligible, None, "low", 0)
            with pytest.raises(InfeasibleSample):
                sample_lat_strat(pop, eligible + 1, None, "low", 0)

    def test_empty_side(self):
        pop = scattered_population(50)
        east = max(t.centroid.lon for t in pop) + 0.1
        with pytest.raises(InfeasibleSample) as e:
            sample_lon_strat(pop, 1, east, "high", 0)
        assert e.value.reason == "pool_too_small"

    def test_coordinate_swap(self):
        pop = scattered_population(300, seed=4)
        swapped = [LabeledTile(t.tile_id, t.mean_log_price, 1, GeoPoint(t.centroid.lon + 145.5, t.centroid.lat - 145.5), t.label)
                   for t in pop]
        # swapped lat = old lon + 145.5, swapped lon = old lat - 145.5
        for side in ("low", "high"):
            a = sample_lat_strat(pop, 80, None, side, seed=6)
            b = sample_lon_strat(swapped, 80, None, side, seed=6)
            assert a.tile_ids == b.tile_ids


class TestDraw:
    def test_dispatch(self):
        pop = grid_population(10, 10)
        assert draw(pop, SamplePlan("uar", 5, 1)).tile_ids == sample_uar(pop, 5, 1).tile_ids
        assert draw(pop, SamplePlan("cluster", 8, 1, 2)).tile_ids == sample_cluster(pop, 8, 2, 1).tile_ids
        assert draw(pop, SamplePlan("lon", 5, 1, side="high")).tile_ids == sample_lon_strat(pop, 5, None, "high", 1).tile_ids

    def test_json(self):
        r = draw(grid_population(4, 4), SamplePlan("cluster", 4, 0, 2))
        j = r.to_json()
        assert j["plan"]["scheme"] == "cluster" and len(j["tile_ids"]) == 4 and len(j["cluster_centers"]) == 2
