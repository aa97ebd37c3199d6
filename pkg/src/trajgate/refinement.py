"""The refinement layer: frame construction from the nearest lane tangent,
drivable-envelope construction from in-window lanes, trajectory pruning by
the containment predicate, and goal-lane search over lane connectivity."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .geometry import (
    BOUNDARY_EPS,
    PackedRegion,
    RotationFrame,
    buffer_centerline,
    frame_from_tangent,
    make_local_buffer,
    merge_polygons,
    to_city,
    to_local,
)
from .map_model import HdMap, QueryWindow, lanes_in_window, nearest_lane
from .scoring import ade, fde
from .trajset import (
    PAST_STEPS,
    PastTrajectory,
    Trajectory,
    TrajectorySet,
    stack_waypoints,
    waypoints_of,
)

_ALGO_CODES = {"ray_cast": 0, "winding": 1}


class RefinementError(ValueError):
    pass


class EmptyWindowError(RefinementError):
    pass


@dataclass(frozen=True, eq=False)
class Scene:
    """One prediction scene: a fully observed target actor, other actors with
    possibly padded histories, optional ground truth, and the map."""

    target: str
    actors: dict[str, PastTrajectory]
    ground_truth: Trajectory | None
    map_ref: HdMap
    timestamp_hz: int = 10

    def __post_init__(self):
        if self.target not in self.actors:
            raise RefinementError(f"target actor {self.target!r} missing from the scene")
        if not self.actors[self.target].fully_observed:
            raise RefinementError("target actor history must be fully observable")
        if self.timestamp_hz <= 0:
            raise RefinementError("timestamp_hz must be positive")

    @property
    def target_past(self) -> PastTrajectory:
        return self.actors[self.target]

    @property
    def target_position(self) -> np.ndarray:
        return self.target_past.waypoints[-1]

    def target_heading(self) -> np.ndarray:
        obs = self.target_past.observed()
        d = obs[-1] - obs[-2]
        n = math.hypot(d[0], d[1])
        if n <= 0.0:
            raise RefinementError("target heading undefined: last two waypoints coincide")
        return d / n


@dataclass(frozen=True, eq=False)
class FeasibleSet:
    """Pruning survivors in the local frame, with their source indices into
    the input trajectory set."""

    trajectories: list
    source_indices: np.ndarray
    frame: RotationFrame
    fallback: bool = False

    def __post_init__(self):
        object.__setattr__(self, "source_indices", np.asarray(self.source_indices, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.trajectories)


@dataclass(frozen=True, eq=False)
class GoalLaneBatch:
    """Reachable heading-consistent lane chains, padded to a common station
    count with a validity flag per station (0 exactly at padded stations)."""

    lanes: np.ndarray
    lane_ids: tuple = ()

    def __post_init__(self):
        arr = np.asarray(self.lanes, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise RefinementError(f"goal lanes must be (R, N, 3), got {arr.shape}")
        flags = arr[:, :, 2]
        if not np.all((flags == 0.0) | (flags == 1.0)):
            raise RefinementError("goal lane validity flags must be 0 or 1")
        object.__setattr__(self, "lanes", arr)
        object.__setattr__(self, "lane_ids", tuple(tuple(c) for c in self.lane_ids))

    @property
    def count(self) -> int:
        return self.lanes.shape[0]

    @property
    def station_count(self) -> int:
        return self.lanes.shape[1]


@dataclass(frozen=True)
class RefineConfig:
    window_radius: float | None = None  # None derives from the set footprint
    window_margin: float = 10.0
    use_local_buffer: bool = True
    local_buffer_radius: float | None = None  # None ties to the window radius
    algo: str = "ray_cast"
    workers: int = 1
    fallback_k: int = 6
    goal_radius: float = 100.0
    heading_tolerance: float = math.pi / 2
    speed_filter: float | None = None  # optional: prune candidates far from the actor speed


@dataclass(frozen=True, eq=False)
class RefineResult:
    feasible: FeasibleSet
    goal_lanes: GoalLaneBatch
    window: QueryWindow
    region: list  # merged BoundaryPolygon envelopes used for pruning
    city_survivors: np.ndarray  # (S, T, 2), bitwise the waypoints that were tested


def _prune_chunked(city: np.ndarray, region: PackedRegion, algo_code: int, workers: int) -> np.ndarray:
    if workers <= 1 or city.shape[0] < 2 * workers:
        return _kernels.region_prune(
            city, region.vx, region.vy, region.offsets, region.bboxes, BOUNDARY_EPS, algo_code
        )
    chunks = np.array_split(np.arange(city.shape[0]), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(
            pool.map(
                lambda idx: _kernels.region_prune(
                    np.ascontiguousarray(city[idx]),
                    region.vx, region.vy, region.offsets, region.bboxes,
                    BOUNDARY_EPS, algo_code,
                ),
                chunks,
            )
        )
    return np.concatenate(parts)


def refine_scene(scene: Scene, traj_set: TrajectorySet, window: QueryWindow | None = None,
                 config: RefineConfig | None = None) -> RefineResult:
    """Full refinement with intermediates exposed (see :func:`refine`)."""
    config = config or RefineConfig()
    algo_code = _ALGO_CODES[config.algo]
    set_arr = traj_set.as_array()
    if set_arr.shape[0] == 0:
        raise RefinementError("refine on an empty trajectory set")

    origin = scene.target_position
    _, tangent = nearest_lane(scene.map_ref, origin)
    frame = frame_from_tangent(origin, tangent)

    if window is None:
        radius = config.window_radius
        if radius is None:
            radius = float(np.hypot(set_arr[:, :, 0], set_arr[:, :, 1]).max()) + config.window_margin
        window = QueryWindow(center=(float(origin[0]), float(origin[1])), radius=radius)
    lanes = lanes_in_window(scene.map_ref, window)
    if not lanes:
        raise EmptyWindowError(
            f"no lanes within radius {window.radius} of {window.center}"
        )
    envelopes = [buffer_centerline(l.centerline, l.width, (l.id,)) for l in lanes]

    clipped = envelopes
    if config.use_local_buffer:
        clip_radius = config.local_buffer_radius or window.radius
        clipped = make_local_buffer(origin, clip_radius, envelopes)
    region_polys = merge_polygons(clipped)

    candidate_indices = np.arange(set_arr.shape[0])
    if config.speed_filter is not None:
        obs = scene.target_past.observed()
        actor_speed = float(np.hypot(*(obs[-1] - obs[-2]))) * scene.timestamp_hz
        first_speed = np.hypot(set_arr[:, 0, 0], set_arr[:, 0, 1]) * scene.timestamp_hz
        mask = np.abs(first_speed - actor_speed) <= config.speed_filter
        candidate_indices = candidate_indices[mask]

    city = to_city(frame, set_arr)
    fallback = False
    if region_polys and candidate_indices.size:
        region = PackedRegion.from_polygons(region_polys)
        keep = _prune_chunked(
            np.ascontiguousarray(city[candidate_indices]), region, algo_code, config.workers
        )
        survivor_indices = candidate_indices[keep]
    else:
        survivor_indices = np.zeros(0, dtype=np.int64)

    if survivor_indices.size == 0:
        # nothing satisfies the predicate: fall back to the k least-excursive
        # candidates from the full set, measured against the unclipped region
        fallback = True
        full_region_polys = merge_polygons(envelopes)
        full_region = PackedRegion.from_polygons(full_region_polys)
        excursion = _kernels.region_excursion(
            np.ascontiguousarray(city), full_region.vx, full_region.vy,
            full_region.offsets, full_region.bboxes, BOUNDARY_EPS, algo_code,
        )
        k = min(config.fallback_k, city.shape[0])
        survivor_indices = np.lexsort((np.arange(city.shape[0]), excursion))[:k]
        survivor_indices = np.sort(survivor_indices)

    city_survivors = city[survivor_indices]
    local = to_local(frame, city_survivors)
    feasible = FeasibleSet(
        trajectories=[Trajectory(w) for w in local],
        source_indices=survivor_indices,
        frame=frame,
        fallback=fallback,
    )
    goals = goal_lane_search(
        scene, scene.map_ref, radius=config.goal_radius,
        heading_tolerance=config.heading_tolerance,
    )
    return RefineResult(
        feasible=feasible, goal_lanes=goals, window=window,
        region=region_polys, city_survivors=city_survivors,
    )


def refine(scene: Scene, traj_set: TrajectorySet, window: QueryWindow | None = None,
           config: RefineConfig | None = None) -> tuple[FeasibleSet, GoalLaneBatch]:
    """Prune a canonical trajectory set against the scene's drivable region.

    Builds the local frame from the target position and nearest-lane tangent,
    buffers all in-window lanes into envelopes (optionally clipped around the
    actor), places the set into the city frame, keeps exactly the trajectories
    whose every waypoint is inside-or-boundary of the merged region, returns
    survivors rotated to the local frame plus the goal-lane batch.
    """
    result = refine_scene(scene, traj_set, window=window, config=config)
    return result.feasible, result.goal_lanes


def _lane_admissible(lane, origin: np.ndarray, heading: np.ndarray,
                     radius: float, heading_tolerance: float) -> bool:
    span = lane.centerline[-1] - lane.centerline[0]
    n = math.hypot(span[0], span[1])
    if n <= 1e-9:
        return False
    cos_angle = float(np.clip((span / n) @ heading, -1.0, 1.0))
    if math.acos(cos_angle) > heading_tolerance:
        return False
    d = np.hypot(lane.centerline[:, 0] - origin[0], lane.centerline[:, 1] - origin[1])
    return float(d.min()) <= radius


def goal_lane_search(scene: Scene, hdmap: HdMap, radius: float = 100.0,
                     heading_tolerance: float = math.pi / 2) -> GoalLaneBatch:
    """Beam search over lane successors from the nearest lane to the target.

    A lane stays on the beam when its mean centerline direction is within the
    heading tolerance of the actor heading and its nearest centerline point is
    within the radius. Each maximal root-to-leaf chain becomes one goal lane;
    chains are ordered lexicographically by their lane-id tuples and padded to
    a common station count with zeroed validity flags.
    """
    origin = scene.target_position
    heading = scene.target_heading()
    root, _ = nearest_lane(hdmap, origin)

    def admissible(lane) -> bool:
        return _lane_admissible(lane, origin, heading, radius, heading_tolerance)

    chains: list[tuple[str, ...]] = []
    if admissible(root):
        stack = [(root.id, (root.id,))]
        while stack:
            lane_id, path = stack.pop()
            succs = [
                s for s in sorted(hdmap.lanes[lane_id].successors, reverse=True)
                if s not in path and admissible(hdmap.lanes[s])
            ]
            if not succs:
                chains.append(path)
            else:
                stack.extend((s, path + (s,)) for s in succs)
    chains.sort()

    polylines = []
    for chain in chains:
        pts = []
        for lane_id in chain:
            for p in hdmap.lanes[lane_id].centerline:
                if pts and math.hypot(p[0] - pts[-1][0], p[1] - pts[-1][1]) <= 1e-9:
                    continue
                pts.append((float(p[0]), float(p[1])))
        polylines.append(np.array(pts))

    if not polylines:
        return GoalLaneBatch(lanes=np.zeros((0, 0, 3)), lane_ids=())
    n_stations = max(len(p) for p in polylines)
    lanes = np.zeros((len(polylines), n_stations, 3))
    for i, p in enumerate(polylines):
        lanes[i, : len(p), :2] = p
        lanes[i, : len(p), 2] = 1.0
    return GoalLaneBatch(lanes=lanes, lane_ids=tuple(chains))


def lower_bound(trajectories, ground_truth) -> tuple[float, float]:
    """Best achievable (minADE, minFDE) of a set against the ground truth."""
    if len(trajectories) == 0:
        raise RefinementError("lower_bound on an empty trajectory list")
    return (
        min(ade(t, ground_truth) for t in trajectories),
        min(fde(t, ground_truth) for t in trajectories),
    )


def scene_from_dict(payload: dict, hdmap: HdMap) -> Scene:
    actors = {}
    for rec in payload["actors"]:
        observed = rec["observed"]
        if len(observed) != PAST_STEPS:
            raise RefinementError(
                f"actor {rec['id']!r} history must have {PAST_STEPS} entries, got {len(observed)}"
            )
        mask = np.array([p is None for p in observed])
        wps = np.array([(0.0, 0.0) if p is None else (float(p[0]), float(p[1])) for p in observed])
        actors[str(rec["id"])] = PastTrajectory(waypoints=wps, padding_mask=mask)
    gt = payload.get("ground_truth")
    ground_truth = Trajectory(np.asarray(gt, dtype=np.float64)) if gt is not None else None
    return Scene(target=str(payload["target"]), actors=actors, ground_truth=ground_truth, map_ref=hdmap)


def scene_to_dict(scene: Scene, map_path: str) -> dict:
    actors = []
    for actor_id in sorted(scene.actors):
        past = scene.actors[actor_id]
        observed = [
            None if past.padding_mask[i] else [float(past.waypoints[i, 0]), float(past.waypoints[i, 1])]
            for i in range(PAST_STEPS)
        ]
        actors.append({"id": actor_id, "observed": observed})
    return {
        "target": scene.target,
        "actors": actors,
        "ground_truth": waypoints_of(scene.ground_truth).tolist() if scene.ground_truth is not None else None,
        "map": map_path,
    }


def scene_from_json(path, hdmap: HdMap | None = None) -> Scene:
    from .map_model import load_map

    path = Path(path)
    payload = json.loads(path.read_text(encoding="utf-8"))
    if hdmap is None:
        map_path = Path(payload["map"])
        if not map_path.is_absolute():
            map_path = path.parent / map_path
        hdmap = load_map(map_path)
    return scene_from_dict(payload, hdmap)


def scene_to_json(scene: Scene, path, map_path: str) -> None:
    Path(path).write_text(
        json.dumps(scene_to_dict(scene, map_path), indent=2, sort_keys=True), encoding="utf-8"
    )
