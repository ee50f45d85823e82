"""Geographic distance and KNN index tests against independent oracles."""

import math

import numpy as np
import pytest

from metrovec.errors import NotFoundError, ValidationError
from metrovec.geo import GeoPoint, assign_neighborhood, build_index, haversine_distance, k_nearest

# Frozen before implementation from a 50-digit haversine evaluation
# (R = 6,371,000 m) of the (37.7749,-122.4194)-(37.7849,-122.4094) pair.
SF_PAIR_METERS = 1417.3252285690712
ANTIPODAL_METERS = 20015086.796020572  # pi * R


def brute_haversine(a: GeoPoint, b: GeoPoint) -> float:
    # atan2 formulation, deliberately a different code path than the package.
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dp, dl = math.radians(b.lat - a.lat), math.radians(b.lon - a.lon)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 6_371_000.0 * 2 * math.atan2(math.sqrt(h), math.sqrt(max(0.0, 1.0 - h)))


def brute_k_nearest(points, query_id, k):
    q = dict(points)[query_id]
    ranked = sorted((brute_haversine(q, p), pid) for pid, p in points if pid != query_id)
    return [pid for _, pid in ranked[:k]]


def random_points(rng, n, lat_span=(36.5, 38.0), lon_span=(-122.8, -121.2)):
    return [(f"p{i:05d}", GeoPoint(float(rng.uniform(*lat_span)), float(rng.uniform(*lon_span))))
            for i in range(n)]


class TestHaversine:
    def test_identical_points_zero(self):
        assert haversine_distance(GeoPoint(0, 0), GeoPoint(0, 0)) == 0.0
        assert haversine_distance(GeoPoint(37.5, -122.1), GeoPoint(37.5, -122.1)) == 0.0

    def test_antipodal_equatorial(self):
        d = haversine_distance(GeoPoint(0, 0), GeoPoint(0, 180))
        assert abs(d - ANTIPODAL_METERS) < 1.0

    def test_sf_pair_matches_independent_oracle(self):
        d = haversine_distance(GeoPoint(37.7749, -122.4194), GeoPoint(37.7849, -122.4094))
        assert abs(d - SF_PAIR_METERS) < 0.01

    def test_symmetry_and_triangle(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            a, b, c = (GeoPoint(float(rng.uniform(-89, 89)), float(rng.uniform(-180, 180)))
                       for _ in range(3))
            assert haversine_distance(a, b) == haversine_distance(b, a)
            assert haversine_distance(a, b) <= haversine_distance(a, c) + haversine_distance(c, b) + 1e-6

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            GeoPoint(float("nan"), 0.0)
        with pytest.raises(ValidationError):
            GeoPoint(0.0, float("inf"))

    def test_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            GeoPoint(91.0, 0.0)
        with pytest.raises(ValidationError):
            GeoPoint(0.0, -181.0)


class TestIndex:
    def test_single_point(self):
        idx = build_index([("only", GeoPoint(1.0, 2.0))])
        assert len(idx) == 1
        assert idx.k_nearest("only", 3) == []

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValidationError, match="duplicate"):
            build_index([("a", GeoPoint(0, 0)), ("a", GeoPoint(1, 1))])

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            build_index([])

    def test_collinear_ordering(self):
        pts = [("A", GeoPoint(0, 0)), ("B", GeoPoint(0, 0.001)), ("C", GeoPoint(0, 0.01))]
        idx = build_index(pts)
        assert idx.k_nearest("A", 1) == ["B"]
        assert idx.k_nearest("A", 2) == ["B", "C"]

    def test_saturation_returns_all_others(self):
        pts = [(i, GeoPoint(0, 0.001 * i)) for i in range(4)]
        idx = build_index(pts)
        assert idx.k_nearest(0, 99) == [1, 2, 3]

    def test_unknown_query(self):
        idx = build_index([("a", GeoPoint(0, 0)), ("b", GeoPoint(1, 1))])
        with pytest.raises(NotFoundError):
            idx.k_nearest("nope", 1)

    def test_bad_k(self):
        idx = build_index([("a", GeoPoint(0, 0)), ("b", GeoPoint(1, 1))])
        with pytest.raises(ValidationError):
            idx.k_nearest("a", 0)

    def test_matches_brute_force_city_scale(self):
        rng = np.random.default_rng(3)
        pts = random_points(rng, 500)
        idx = build_index(pts)
        for qid, _ in pts:
            assert idx.k_nearest(qid, 5) == brute_k_nearest(pts, qid, 5)

    def test_matches_brute_force_global(self):
        rng = np.random.default_rng(4)
        pts = [(i, GeoPoint(float(rng.uniform(-90, 90)), float(rng.uniform(-180, 180))))
               for i in range(300)]
        idx = build_index(pts)
        for qid, _ in pts:
            assert idx.k_nearest(qid, 7) == brute_k_nearest(pts, qid, 7)

    def test_matches_brute_force_2000_points(self):
        rng = np.random.default_rng(12)
        pts = random_points(rng, 2000)
        idx = build_index(pts)
        lat = np.radians(np.array([p.lat for _, p in pts]))
        lon = np.radians(np.array([p.lon for _, p in pts]))
        ids = [pid for pid, _ in pts]
        rank = np.argsort(np.argsort(ids))

        def oracle(qrow, k):
            h = (np.sin((lat - lat[qrow]) / 2) ** 2
                 + np.cos(lat[qrow]) * np.cos(lat) * np.sin((lon - lon[qrow]) / 2) ** 2)
            d = 6_371_000.0 * 2 * np.arctan2(np.sqrt(h), np.sqrt(np.clip(1 - h, 0, None)))
            order = np.lexsort((rank, d))
            return [ids[i] for i in order if i != qrow][:k]

        for qrow in range(0, 2000, 7):
            assert idx.k_nearest(ids[qrow], 5) == oracle(qrow, 5)

    def test_exact_ties_break_by_ascending_id(self):
        pts = [(5, GeoPoint(0.0, 0.0)), (9, GeoPoint(0.0, 0.002)), (2, GeoPoint(0.0, -0.002)),
               (7, GeoPoint(0.02, 0.0))]
        idx = build_index(pts)
        # ids 2 and 9 are exactly equidistant from 5
        assert idx.k_nearest(5, 2) == [2, 9]

    def test_single_latitude_band_degenerate(self):
        # identical latitudes collapse the index to one band: pure scan path
        pts = [(i, GeoPoint(12.5, -50.0 + 0.01 * i)) for i in range(40)]
        idx = build_index(pts)
        for qid, _ in pts:
            assert idx.k_nearest(qid, 4) == brute_k_nearest(pts, qid, 4)

    def test_near_poles_and_antimeridian(self):
        rng = np.random.default_rng(13)
        pts = [(i, GeoPoint(float(rng.uniform(88.0, 90.0)),
                            float(rng.choice([-1, 1]) * rng.uniform(170.0, 180.0))))
               for i in range(60)]
        idx = build_index(pts)
        for qid, _ in pts:
            assert idx.k_nearest(qid, 5) == brute_k_nearest(pts, qid, 5)

    def test_repeat_queries_identical(self):
        rng = np.random.default_rng(5)
        pts = random_points(rng, 80)
        idx = build_index(pts)
        first = [idx.k_nearest(qid, 6) for qid, _ in pts]
        second = [idx.k_nearest(qid, 6) for qid, _ in pts]
        assert first == second

    def test_module_level_wrapper(self):
        pts = [("a", GeoPoint(0, 0)), ("b", GeoPoint(0, 0.001)), ("c", GeoPoint(0, 0.01))]
        idx = build_index(pts)
        assert k_nearest(idx, "a", 1) == ["b"]


class TestAssignNeighborhood:
    def test_exact_centroid(self):
        cents = [("c1", GeoPoint(10, 10)), ("c2", GeoPoint(20, 20))]
        assert assign_neighborhood(GeoPoint(10, 10), cents) == "c1"

    def test_equidistant_tie_prefers_smaller_id(self):
        cents = [("c2", GeoPoint(0, 1)), ("c1", GeoPoint(0, -1))]
        assert assign_neighborhood(GeoPoint(0, 0), cents) == "c1"

    def test_empty_centroids(self):
        with pytest.raises(ValidationError):
            assign_neighborhood(GeoPoint(0, 0), [])

    def test_matches_brute_force(self):
        rng = np.random.default_rng(6)
        cents = [(f"c{i}", GeoPoint(float(rng.uniform(30, 40)), float(rng.uniform(-125, -115))))
                 for i in range(10)]
        for _ in range(100):
            p = GeoPoint(float(rng.uniform(30, 40)), float(rng.uniform(-125, -115)))
            expected = min(((brute_haversine(p, c), cid) for cid, c in cents))[1]
            assert assign_neighborhood(p, cents) == expected
