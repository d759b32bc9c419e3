import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import oracles
from conftest import grid_population, scattered_population
from geoprobe.geodata import (
    ClassThresholds,
    DataError,
    EmptyTrainSetError,
    GeoPoint,
    HomeRecord,
    ImageTile,
    LabeledTile,
    SpatialSplit,
    TileGrid,
    aggregate_labels,
    bin_homes,
    classify,
    compute_thresholds,
    format_tile_id,
    haversine,
    haversine_m,
    label_tiles,
    load_homes,
    load_labeled_tiles,
    load_tiles,
    parse_tile_id,
    save_labeled_tiles,
    spatial_split,
    write_homes,
    write_tiles,
)


def _home(i, lat, lon, price):
    return HomeRecord(f"h{i}", GeoPoint(lat, lon), price)


class TestTypes:
    def test_geopoint_range(self):
        with pytest.raises(DataError):
            GeoPoint(91.0, 0.0)
        with pytest.raises(DataError):
            GeoPoint(0.0, 181.0)
        with pytest.raises(DataError):
            GeoPoint(float("nan"), 0.0)

    def test_price_must_be_positive(self):
        with pytest.raises(DataError):
            _home(0, 33.0, -112.0, 0.0)

    def test_grid_pixel_multiple(self):
        with pytest.raises(DataError):
            TileGrid(GeoPoint(33.5, -112.0), 100.0, 2, 2, 3.0)

    def test_tile_id_text(self):
        assert parse_tile_id(format_tile_id((3, 14))) == (3, 14)
        with pytest.raises(DataError):
            parse_tile_id("3-14")

    def test_image_tile_shape(self):
        ImageTile((0, 0), np.zeros((8, 8), np.uint8))
        with pytest.raises(DataError):
            ImageTile((0, 0), np.zeros((8, 6, 1), np.uint8))
        with pytest.raises(DataError):
            ImageTile((0, 0), np.zeros((8, 8, 2), np.uint8))
        with pytest.raises(DataError):
            ImageTile((0, 0), np.zeros((8, 8), np.float32))

    def test_grid_centroid_inside_bbox(self, small_grid):
        s, w, n, e = small_grid.bbox((5, 7))
        c = small_grid.centroid((5, 7))
        assert s < c.lat < n and w < c.lon < e
        assert small_grid.tile_index(c.lat, c.lon) == (5, 7)

    def test_manifest_round_trip(self, small_grid):
        assert TileGrid.from_manifest(small_grid.to_manifest()) == small_grid


class TestLoadHomes:
    def test_empty_file(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("id,lat,lon,price,date\n")
        assert load_homes(p) == []

    def test_direct_parse(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("id,lat,lon,price\nh1,33.4,-112.0,250000\n")
        (h,) = load_homes(p)
        assert h.id == "h1" and h.price == 250000 and h.point == GeoPoint(33.4, -112.0)

    def test_negative_price_names_line(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("id,lat,lon,price\nh1,33.4,-112.0,250000\nh2,33.4,-112.0,-5\n")
        with pytest.raises(DataError, match=":3:"):
            load_homes(p)

    def test_duplicate_id(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("id,lat,lon,price\nh1,33.4,-112.0,1\nh1,33.4,-112.0,2\n")
        with pytest.raises(DataError, match="duplicate"):
            load_homes(p)

    def test_malformed_row(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("id,lat,lon,price\nh1,abc,-112.0,1\n")
        with pytest.raises(DataError, match=":2:"):
            load_homes(p)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("lat,lon,price\n")
        with pytest.raises(DataError, match="header"):
            load_homes(p)

    def test_round_trip_with_dates(self, tmp_path):
        homes = [HomeRecord("a", GeoPoint(33.1, -111.9), 1.5e5, "2020-01-02"), _home(1, 33.2, -111.8, 2e5)]
        write_homes(tmp_path / "h.csv", homes)
        assert load_homes(tmp_path / "h.csv") == homes


class TestLabels:
    def test_single_home(self, small_grid):
        c = small_grid.centroid((0, 0))
        (t,) = aggregate_labels([_home(0, c.lat, c.lon, math.exp(12))], small_grid)
        assert t.mean_log_price == pytest.approx(12.0, abs=1e-12) and t.n_homes == 1

    def test_two_point_mean(self, small_grid):
        c = small_grid.centroid((2, 3))
        (t,) = aggregate_labels([_home(0, c.lat, c.lon, math.exp(12)), _home(1, c.lat, c.lon, math.exp(14))],
                                small_grid)
        assert t.mean_log_price == pytest.approx(13.0, abs=1e-12)

    def test_cardinality(self, small_grid):
        homes = [_home(i, *_latlon(small_grid.centroid(t)), 1e5) for i, t in enumerate([(0, 0), (1, 1), (1, 1), (4, 2)])]
        assert len(aggregate_labels(homes, small_grid)) == 3

    def test_empty_homes(self, small_grid):
        with pytest.raises(DataError):
            aggregate_labels([], small_grid)

    def test_mass_preserved(self, small_grid):
        rng = np.random.default_rng(3)
        s, w, n, e = small_grid.extent
        lat = rng.uniform(s - 0.01, n + 0.01, 500)
        lon = rng.uniform(w - 0.01, e + 0.01, 500)
        homes = [_home(i, a, b, 1e5) for i, (a, b) in enumerate(zip(lat, lon))]
        bins, skipped = bin_homes(homes, small_grid)
        tiles = aggregate_labels(homes, small_grid)
        assert skipped > 0
        assert sum(t.n_homes for t in tiles) + skipped == len(homes)
        assert sum(len(v) for v in bins.values()) == sum(t.n_homes for t in tiles)

    def test_edge_home_goes_to_floor_tile(self, small_grid):
        lat, lon = small_grid.grid_to_latlon(3.0, 4.0)  # NW corner of tile (3, 4)
        assert small_grid.tile_index(lat, lon) == (3, 4)

    def test_two_point_thresholds(self):
        th = compute_thresholds([_home(0, 33, -112, math.exp(10)), _home(1, 33, -112, math.exp(12))])
        assert (th.mu, th.sigma) == pytest.approx((11.0, 1.0), abs=1e-12)
        assert (th.t_low, th.t_high) == pytest.approx((10.0, 12.0), abs=1e-12)

    def test_identical_prices(self):
        th = compute_thresholds([_home(i, 33, -112, 3e5) for i in range(5)])
        assert th.sigma == pytest.approx(0.0, abs=1e-12)
        assert th.t_low == pytest.approx(th.t_high)

    def test_too_few_homes(self):
        with pytest.raises(DataError):
            compute_thresholds([_home(0, 33, -112, 1e5)])

    def test_thresholds_match_two_pass_oracle(self):
        rng = np.random.default_rng(11)
        prices = np.exp(rng.normal(12.5, 0.7, 10_000))
        th = compute_thresholds([_home(i, 33, -112, p) for i, p in enumerate(prices)])
        mu, sd = oracles.two_pass_mean_sd(np.log(prices))
        assert abs(th.mu - mu) <= 1e-9 and abs(th.sigma - sd) <= 1e-9

    @pytest.mark.parametrize("value,expected", [(11.5, 0), (12.0, 1), (12.7, 1), (13.0, 1), (13.5, 2)])
    def test_classify(self, value, expected):
        th = ClassThresholds(12.5, 0.5)
        assert classify(value, th) == expected

    def test_labels_consistent_with_thresholds(self, small_grid):
        rng = np.random.default_rng(5)
        s, w, n, e = small_grid.extent
        homes = [_home(i, rng.uniform(s, n), rng.uniform(w, e), float(np.exp(rng.normal(12, 1))))
                 for i in range(400)]
        tiles, th = label_tiles(homes, small_grid)
        assert all(t.label == classify(t.mean_log_price, th) for t in tiles)

    def test_class_frequencies_match_normal_cdf(self):
        # one home per tile at the tile centre
        grid = TileGrid(GeoPoint(33.5, -112.0), 128.0, 100, 100, 4.0)
        rng = np.random.default_rng(8)
        logp = rng.normal(12.4, 0.6, 10_000)
        homes = [_home(i, *_latlon(grid.centroid((i // 100, i % 100))), float(np.exp(v)))
                 for i, v in enumerate(logp)]
        tiles, _ = label_tiles(homes, grid)
        freq = np.bincount([t.label for t in tiles], minlength=3) / len(tiles)
        expected = [stats.norm.cdf(-1), stats.norm.cdf(1) - stats.norm.cdf(-1), stats.norm.sf(1)]
        np.testing.assert_allclose(freq, expected, atol=0.02)

    def test_labeled_tiles_round_trip(self, tmp_path):
        tiles = grid_population(3, 3)
        save_labeled_tiles(tmp_path / "l.json", tiles, ClassThresholds(1.0, 0.5))
        assert load_labeled_tiles(tmp_path / "l.json") == tiles


def _latlon(p: GeoPoint):
    return p.lat, p.lon


class TestHaversine:
    def test_identity(self):
        p = GeoPoint(33.4, -112.0)
        assert haversine(p, p) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-89, 89), st.floats(-179, 179), st.floats(-89, 89), st.floats(-179, 179))
    def test_symmetric_nonnegative(self, a, b, c, d):
        p, q = GeoPoint(a, b), GeoPoint(c, d)
        assert haversine(p, q) == haversine(q, p) >= 0.0

    def test_phoenix_tucson_law_of_cosines(self):
        d = haversine(GeoPoint(33.4484, -112.0740), GeoPoint(32.2226, -110.9747))
        ref = oracles.law_of_cosines_m(33.4484, -112.0740, 32.2226, -110.9747)
        assert abs(d - ref) / ref < 1e-3
        assert 150_000 < d < 200_000

    def test_random_pairs_law_of_cosines(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(-60, 60, (200, 2))
        b = rng.uniform(-60, 60, (200, 2))
        d = haversine_m(a[:, 0], a[:, 1], b[:, 0], b[:, 1])
        ref = [oracles.law_of_cosines_m(*x, *y) for x, y in zip(a, b)]
        np.testing.assert_allclose(d, ref, rtol=1e-6)


class TestSpatialSplit:
    def test_zero_buffer_keeps_all(self):
        tiles = scattered_population(300)
        sp = spatial_split(tiles, 0.2, 0.0, seed=1)
        assert not sp.discarded
        assert len(sp.test) == 60
        assert {t.tile_id for t in sp.train} | {t.tile_id for t in sp.test} == {t.tile_id for t in tiles}
        assert not {t.tile_id for t in sp.train} & {t.tile_id for t in sp.test}

    def test_colocated_tiles_leave_empty_train(self):
        p = GeoPoint(33.5, -112.0)
        tiles = [LabeledTile((i, 0), 12.0, 1, p, 1) for i in range(20)]
        with pytest.raises(EmptyTrainSetError):
            spatial_split(tiles, 0.2, 100.0, seed=0)

    def test_empty_test_set_rejected(self):
        with pytest.raises(DataError):
            spatial_split(scattered_population(2), 0.1, 0.0, seed=0)

    def test_strict_buffer_boundary(self):
        # two tiles exactly buffer_m apart stay on opposite sides
        a = GeoPoint(0.0, 0.0)
        lon = math.degrees(100.0 / oracles.EARTH_R)
        b = GeoPoint(0.0, lon)
        d = haversine(a, b)
        tiles = [LabeledTile((0, 0), 1.0, 1, a, 1), LabeledTile((1, 0), 1.0, 1, b, 1)]
        sp = spatial_split(tiles, 0.5, d, seed=0)
        assert len(sp.train) == 1
        with pytest.raises(EmptyTrainSetError):
            spatial_split(tiles, 0.5, math.nextafter(d, math.inf), seed=0)

    def test_brute_force_no_violations(self):
        tiles = scattered_population(5000, seed=2, span_deg=0.06)
        sp = spatial_split(tiles, 0.2, 100.0, seed=3)
        tr = np.array([[t.centroid.lat, t.centroid.lon] for t in sp.train])
        te = np.array([[t.centroid.lat, t.centroid.lon] for t in sp.test])
        dist = oracles.pairwise_haversine(tr[:, 0], tr[:, 1], te[:, 0], te[:, 1])
        assert dist.min() >= 100.0
        # every discarded tile really was too close
        di = np.array([[t.centroid.lat, t.centroid.lon] for t in sp.discarded])
        dd = oracles.pairwise_haversine(di[:, 0], di[:, 1], te[:, 0], te[:, 1])
        assert (dd.min(axis=1) < 100.0).all()

    def test_deterministic_and_order_free(self):
        tiles = scattered_population(500)
        a = spatial_split(tiles, 0.25, 100.0, seed=9)
        b = spatial_split(list(reversed(tiles)), 0.25, 100.0, seed=9)
        assert a.to_json() == b.to_json()

    def test_json_round_trip(self):
        tiles = scattered_population(100)
        sp = spatial_split(tiles, 0.3, 50.0, seed=4)
        again = SpatialSplit.from_json(json.loads(json.dumps(sp.to_json())), tiles)
        assert again.to_json() == sp.to_json()
        assert set(sp.to_json()) == {"seed", "buffer_m", "test_ids", "train_ids", "discarded_ids"}


class TestTileIO:
    def test_png_round_trip(self, tmp_path, small_grid):
        rng = np.random.default_rng(0)
        side = small_grid.tile_pixels
        tiles = [ImageTile((r, c), rng.integers(0, 256, (side, side, 1), dtype=np.uint8)) for r in range(2) for c in range(2)]
        rgb = ImageTile((5, 5), rng.integers(0, 256, (side, side, 3), dtype=np.uint8))
        write_tiles(tmp_path, small_grid, tiles + [rgb])
        grid, back = load_tiles(tmp_path)
        assert grid == small_grid
        by_id = {t.tile_id: t for t in back}
        for t in tiles + [rgb]:
            np.testing.assert_array_equal(by_id[t.tile_id].pixels, t.pixels)

    def test_missing_image(self, tmp_path, small_grid):
        write_tiles(tmp_path, small_grid, [])
        with pytest.raises(DataError, match="missing"):
            load_tiles(tmp_path, [(0, 0)])
