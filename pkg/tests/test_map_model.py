import json

import numpy as np
import pytest

from trajgate.map_model import (
    EmptyMapError,
    HdMap,
    LaneSegment,
    MapParseError,
    MapValidationError,
    QueryWindow,
    lanes_in_window,
    load_map,
    map_to_dict,
    nearest_lane,
    save_map,
)

from conftest import straight_lane_map, write_map_json


def _point_to_segment_dist(p, a, b) -> float:
    """Brute-force oracle: exact point-to-segment distance."""
    p, a, b = (np.asarray(v, dtype=float) for v in (p, a, b))
    d = b - a
    t = float(np.dot(p - a, d) / np.dot(d, d))
    t = min(max(t, 0.0), 1.0)
    return float(np.linalg.norm(p - (a + t * d)))


def _brute_nearest(hdmap, p):
    best = (np.inf, None)
    for lane_id in sorted(hdmap.lanes):
        lane = hdmap.lanes[lane_id]
        cl = lane.centerline
        d = min(_point_to_segment_dist(p, cl[i], cl[i + 1]) for i in range(len(cl) - 1))
        if d < best[0]:
            best = (d, lane_id)
    return best


def _random_map(rng, n_lanes=10) -> HdMap:
    lanes = {}
    for i in range(n_lanes):
        start = rng.uniform(-100, 100, size=2)
        heading = rng.uniform(0, 2 * np.pi)
        n_pts = rng.integers(2, 8)
        step = rng.uniform(5, 15)
        pts = start + np.arange(n_pts)[:, None] * step * np.array([np.cos(heading), np.sin(heading)])
        lane_id = f"L{i:02d}"
        lanes[lane_id] = LaneSegment(id=lane_id, centerline=pts, width=float(rng.uniform(2.5, 4.5)))
    return HdMap(lanes=lanes, frame="random")


class TestLoadMap:
    def test_single_lane_file(self, tmp_path):
        payload = {
            "frame": "PIT",
            "lanes": [
                {
                    "id": "L1",
                    "width": 3.5,
                    "centerline": [[0.0, 0.0], [5.0, 0.0], [10.0, 0.5]],
                    "successors": [],
                    "predecessors": [],
                }
            ],
        }
        path = tmp_path / "map.json"
        write_map_json(path, payload)
        hdmap = load_map(path)
        assert len(hdmap.lanes) == 1
        assert hdmap.frame == "PIT"
        assert hdmap.lanes["L1"].width == 3.5

    def test_dangling_successor_names_lane(self, tmp_path):
        payload = {
            "frame": "PIT",
            "lanes": [
                {
                    "id": "L1",
                    "width": 3.5,
                    "centerline": [[0.0, 0.0], [5.0, 0.0]],
                    "successors": ["L99"],
                    "predecessors": [],
                }
            ],
        }
        path = tmp_path / "map.json"
        write_map_json(path, payload)
        with pytest.raises(MapValidationError, match="L99"):
            load_map(path)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "map.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(MapParseError):
            load_map(path)

    def test_width_and_centerline_validation(self):
        with pytest.raises(MapValidationError, match="L1"):
            LaneSegment(id="L1", centerline=[[0, 0], [1, 0]], width=0.0)
        with pytest.raises(MapValidationError, match="L1"):
            LaneSegment(id="L1", centerline=[[0, 0]], width=3.0)
        with pytest.raises(MapValidationError, match="L1"):
            LaneSegment(id="L1", centerline=[[0, 0], [0, 0], [1, 0]], width=3.0)

    def test_intersection_roundtrip(self, tmp_path):
        lanes = {
            "A": LaneSegment(id="A", centerline=[[-20.0, 0.0], [0.0, 0.0]], width=3.5, successors=("B", "C")),
            "B": LaneSegment(id="B", centerline=[[0.0, 0.0], [20.0, 0.0]], width=3.5, predecessors=("A",)),
            "C": LaneSegment(id="C", centerline=[[0.0, 0.0], [0.01, 2.0], [1.0, 20.0]], width=3.25, predecessors=("A",)),
            "D": LaneSegment(id="D", centerline=[[0.0, -20.0], [0.0, -1.0]], width=4.0, successors=("C",)),
        }
        hdmap = HdMap(lanes=lanes, frame="synthetic")
        path = tmp_path / "m.json"
        save_map(hdmap, path)
        again = load_map(path)
        assert map_to_dict(again) == map_to_dict(hdmap)
        # a second round trip is byte-identical
        path2 = tmp_path / "m2.json"
        save_map(again, path2)
        assert path.read_text() == path2.read_text()


class TestLanesInWindow:
    def test_first_point_within_radius(self):
        hdmap = straight_lane_map()
        window = QueryWindow(center=(-80.0, 0.5), radius=1.0)
        assert [l.id for l in lanes_in_window(hdmap, window)] == ["L1"]

    def test_zero_radius_rejected(self):
        with pytest.raises(MapValidationError):
            QueryWindow(center=(0.0, 0.0), radius=0.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(42)
        hdmap = _random_map(rng)
        for _ in range(20):
            center = rng.uniform(-120, 120, size=2)
            radius = float(rng.uniform(5, 80))
            window = QueryWindow(center=tuple(center), radius=radius)
            got = {l.id for l in lanes_in_window(hdmap, window)}
            want = {
                lane.id
                for lane in hdmap.lanes.values()
                if min(np.linalg.norm(p - center) for p in lane.centerline) <= radius
            }
            assert got == want

    def test_ordering_ascending_id(self):
        rng = np.random.default_rng(3)
        hdmap = _random_map(rng)
        window = QueryWindow(center=(0.0, 0.0), radius=300.0)
        ids = [l.id for l in lanes_in_window(hdmap, window)]
        assert ids == sorted(ids)

    def test_monotone_in_radius(self):
        rng = np.random.default_rng(11)
        hdmap = _random_map(rng)
        center = (10.0, -5.0)
        previous: set = set()
        for radius in (5.0, 20.0, 60.0, 150.0):
            ids = {l.id for l in lanes_in_window(hdmap, QueryWindow(center=center, radius=radius))}
            assert previous <= ids
            previous = ids


class TestNearestLane:
    def test_point_on_centerline_tangent(self):
        hdmap = straight_lane_map()
        lane, tangent = nearest_lane(hdmap, (5.0, 0.0))
        assert lane.id == "L1"
        assert abs(float(tangent @ np.array([1.0, 0.0])) - 1.0) <= 1e-9

    def test_tie_breaks_to_ascending_id(self):
        lanes = {
            "A": LaneSegment(id="A", centerline=[[0.0, 1.0], [10.0, 1.0]], width=3.0),
            "B": LaneSegment(id="B", centerline=[[0.0, -1.0], [10.0, -1.0]], width=3.0),
        }
        hdmap = HdMap(lanes=lanes, frame="test")
        lane, _ = nearest_lane(hdmap, (5.0, 0.0))
        assert lane.id == "A"

    def test_empty_map(self):
        with pytest.raises(EmptyMapError):
            nearest_lane(HdMap(lanes={}, frame="test"), (0.0, 0.0))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        hdmap = _random_map(rng, n_lanes=12)
        for _ in range(20):
            p = rng.uniform(-130, 130, size=2)
            lane, tangent = nearest_lane(hdmap, p)
            want_dist, want_id = _brute_nearest(hdmap, p)
            assert lane.id == want_id
            assert abs(np.linalg.norm(tangent) - 1.0) <= 1e-12
            # returned lane is at least as близко as every other lane
            for other in hdmap.lanes.values():
                cl = other.centerline
                d = min(_point_to_segment_dist(p, cl[i], cl[i + 1]) for i in range(len(cl) - 1))
                assert d >= want_dist - 1e-12

    def test_tangent_at_final_vertex_uses_preceding_segment(self):
        lane = LaneSegment(id="L1", centerline=[[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]], width=3.0)
        hdmap = HdMap(lanes={"L1": lane}, frame="test")
        _, tangent = nearest_lane(hdmap, (10.0, 25.0))
        assert np.allclose(tangent, [0.0, 1.0])

    def test_tangent_at_shared_vertex_uses_following_segment(self):
        lane = LaneSegment(id="L1", centerline=[[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]], width=3.0)
        hdmap = HdMap(lanes={"L1": lane}, frame="test")
        # closest point is the interior vertex (10, 0); tangent follows the next segment
        _, tangent = nearest_lane(hdmap, (14.0, -4.0))
        assert np.allclose(tangent, [0.0, 1.0])
