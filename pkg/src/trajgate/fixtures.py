"""Synthetic map and scene fixtures: straight, curve, t_intersection, fork.

Each fixture lays out lanes and actor paths in a canonical east-bound layout,
then applies a seeded rigid transform so city coordinates exercise the full
frame machinery. The target actor is always fully observed; the ground truth
runs along a lane centerline path at constant speed.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .map_model import HdMap, LaneSegment, map_to_dict
from .refinement import Scene, scene_to_dict
from .trajset import DT, HORIZON_STEPS, PAST_STEPS, PastTrajectory, Trajectory

FIXTURE_SPECS = ("straight", "curve", "t_intersection", "fork")
LANE_WIDTH = 3.5


class FixtureError(ValueError):
    pass


def _arc(radius: float, side: float, s0: float, s1: float, step: float = 5.0) -> np.ndarray:
    """Polyline along a constant-curvature arc, parameterized by arc length.

    Starts tangent to +x at the arc-length origin; ``side`` +1 curves left.
    """
    n = max(2, int(math.ceil((s1 - s0) / step)) + 1)
    s = np.linspace(s0, s1, n)
    return np.stack([radius * np.sin(s / radius), side * radius * (1.0 - np.cos(s / radius))], axis=1)


def _line(x0: float, x1: float, y: float = 0.0, step: float = 10.0) -> np.ndarray:
    n = max(2, int(math.ceil((x1 - x0) / step)) + 1)
    x = np.linspace(x0, x1, n)
    return np.stack([x, np.full(n, y)], axis=1)


def _station_points(polyline: np.ndarray, stations: np.ndarray) -> np.ndarray:
    seg = np.diff(polyline, axis=0)
    s = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
    return np.stack(
        [np.interp(stations, s, polyline[:, 0]), np.interp(stations, s, polyline[:, 1])], axis=1
    )


def _path_length(polyline: np.ndarray) -> float:
    seg = np.diff(polyline, axis=0)
    return float(np.hypot(seg[:, 0], seg[:, 1]).sum())


def _join_path(*polylines: np.ndarray) -> np.ndarray:
    pts = [polylines[0]]
    for p in polylines[1:]:
        drop = 1 if np.allclose(p[0], pts[-1][-1], atol=1e-9) else 0
        pts.append(p[drop:])
    return np.vstack(pts)


def _canonical_layout(spec: str, rng: np.random.Generator):
    """Lanes plus the target's travel path and its zero station (current position)."""
    if spec == "straight":
        lane = _line(-80.0, 90.0)
        lanes = [LaneSegment(id="L1", centerline=lane, width=LANE_WIDTH)]
        return lanes, lane, 80.0
    if spec == "curve":
        radius = float(rng.uniform(110.0, 220.0))  # keeps the 170 m lane under a ~90 degree sweep
        side = float(rng.choice((-1.0, 1.0)))
        lane = _arc(radius, side, -80.0, 90.0)
        lanes = [LaneSegment(id="L1", centerline=lane, width=LANE_WIDTH)]
        return lanes, lane, 80.0
    if spec == "t_intersection":
        root = _line(-80.0, 0.0)
        through = _line(0.0, 80.0)
        turn = _join_path(_arc(15.0, 1.0, 0.0, 15.0 * math.pi / 2.0),
                          np.array([[15.0, 15.0], [15.0, 70.0]]))
        lanes = [
            LaneSegment(id="L1", centerline=root, width=LANE_WIDTH, successors=("L2", "L3")),
            LaneSegment(id="L2", centerline=through, width=LANE_WIDTH, predecessors=("L1",)),
            LaneSegment(id="L3", centerline=turn, width=LANE_WIDTH, predecessors=("L1",)),
        ]
        branch = through if rng.random() < 0.5 else turn
        return lanes, _join_path(root, branch), 80.0
    if spec == "fork":
        root = _line(-80.0, 0.0)
        left = _arc(220.0, 1.0, 0.0, 80.0)
        right = _arc(220.0, -1.0, 0.0, 80.0)
        lanes = [
            LaneSegment(id="L1", centerline=root, width=LANE_WIDTH, successors=("L2", "L3")),
            LaneSegment(id="L2", centerline=left, width=LANE_WIDTH, predecessors=("L1",)),
            LaneSegment(id="L3", centerline=right, width=LANE_WIDTH, predecessors=("L1",)),
        ]
        branch = left if rng.random() < 0.5 else right
        return lanes, _join_path(root, branch), 80.0
    raise FixtureError(f"unknown fixture spec {spec!r}; expected one of {FIXTURE_SPECS}")


def make_fixture(spec: str, seed: int = 0) -> tuple[HdMap, Scene]:
    """Build a validated map and scene for one of the four synthetic specs."""
    rng = np.random.default_rng(seed)
    lanes, path, s0 = _canonical_layout(spec, rng)

    theta = float(rng.uniform(-math.pi, math.pi))
    shift = rng.uniform(-400.0, 400.0, size=2)
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])

    def city(pts: np.ndarray) -> np.ndarray:
        return pts @ rot.T + shift

    speed = float(rng.uniform(6.0, 12.0))
    past_stations = s0 + speed * DT * np.arange(-(PAST_STEPS - 1), 1)
    gt_stations = s0 + speed * DT * np.arange(1, HORIZON_STEPS + 1)
    target_past = PastTrajectory(waypoints=city(_station_points(path, past_stations)))
    ground_truth = Trajectory(waypoints=city(_station_points(path, gt_stations)))

    actors = {"target": target_past}
    total = _path_length(path)
    for i in range(int(rng.integers(1, 5))):
        other_speed = float(rng.uniform(3.0, 10.0))
        offset = float(rng.uniform(12.0, 45.0)) * (1 if rng.random() < 0.5 else -1)
        center = min(max(s0 + offset, (PAST_STEPS - 1) * other_speed * DT + 1.0), total - 1.0)
        stations = center + other_speed * DT * np.arange(-(PAST_STEPS - 1), 1)
        wps = city(_station_points(path, stations))
        pad = int(rng.integers(0, 11))
        mask = np.zeros(PAST_STEPS, dtype=bool)
        mask[:pad] = True
        wps[mask] = 0.0
        actors[f"agent{i + 1}"] = PastTrajectory(waypoints=wps, padding_mask=mask)

    city_lanes = {
        lane.id: LaneSegment(
            id=lane.id,
            centerline=city(lane.centerline),
            width=lane.width,
            successors=lane.successors,
            predecessors=lane.predecessors,
        )
        for lane in lanes
    }
    hdmap = HdMap(lanes=city_lanes, frame=f"synthetic-{spec}")
    scene = Scene(target="target", actors=actors, ground_truth=ground_truth, map_ref=hdmap)
    return hdmap, scene


def write_fixture(spec: str, seed: int, out_dir) -> tuple[Path, Path]:
    """Write map and scene JSON files for a fixture; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    hdmap, scene = make_fixture(spec, seed)
    map_path = out_dir / f"{spec}_{seed}_map.json"
    scene_path = out_dir / f"{spec}_{seed}_scene.json"
    map_path.write_text(json.dumps(map_to_dict(hdmap), indent=2, sort_keys=True), encoding="utf-8")
    scene_path.write_text(
        json.dumps(scene_to_dict(scene, map_path.name), indent=2, sort_keys=True), encoding="utf-8"
    )
    return map_path, scene_path
