"""HD-map representation: lane segments keyed by id, the map JSON format,
and spatial queries over lane centerline points."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MapError(ValueError):
    pass


class MapParseError(MapError):
    pass


class MapValidationError(MapError):
    def __init__(self, message: str, lane_id: str | None = None):
        super().__init__(message if lane_id is None else f"lane {lane_id!r}: {message}")
        self.lane_id = lane_id


class EmptyMapError(MapError):
    pass


@dataclass(frozen=True, eq=False)
class LaneSegment:
    """One lane: ordered centerline points (meters, city frame), a constant
    width, and connectivity to successor/predecessor lanes."""

    id: str
    centerline: np.ndarray
    width: float
    successors: tuple[str, ...] = ()
    predecessors: tuple[str, ...] = ()

    def __post_init__(self):
        pts = np.asarray(self.centerline, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise MapValidationError("centerline needs at least 2 (x, y) points", self.id)
        if not np.all(np.isfinite(pts)):
            raise MapValidationError("centerline has non-finite coordinates", self.id)
        seps = np.hypot(*(pts[1:] - pts[:-1]).T)
        if np.any(seps <= 1e-9):
            raise MapValidationError("centerline has coincident consecutive points", self.id)
        if not (float(self.width) > 0.0):
            raise MapValidationError(f"width must be positive, got {self.width}", self.id)
        object.__setattr__(self, "centerline", pts)
        object.__setattr__(self, "width", float(self.width))
        object.__setattr__(self, "successors", tuple(self.successors))
        object.__setattr__(self, "predecessors", tuple(self.predecessors))


@dataclass(frozen=True, eq=False)
class HdMap:
    """Immutable lane collection with a closed connectivity graph."""

    lanes: dict[str, LaneSegment]
    frame: str = "city"

    def __post_init__(self):
        for lane_id, lane in self.lanes.items():
            if lane.id != lane_id:
                raise MapValidationError(f"keyed as {lane_id!r} but carries id {lane.id!r}", lane.id)
            for ref in (*lane.successors, *lane.predecessors):
                if ref not in self.lanes:
                    raise MapValidationError(f"references unknown lane {ref!r}", lane.id)

    def sorted_lanes(self) -> list[LaneSegment]:
        return [self.lanes[k] for k in sorted(self.lanes)]


@dataclass(frozen=True)
class QueryWindow:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not (self.radius > 0.0):
            raise MapValidationError(f"window radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "radius", float(self.radius))


def map_from_dict(payload: dict) -> HdMap:
    try:
        frame = payload["frame"]
        raw_lanes = payload["lanes"]
    except (KeyError, TypeError) as exc:
        raise MapParseError(f"map object missing required key: {exc}") from exc
    lanes: dict[str, LaneSegment] = {}
    for raw in raw_lanes:
        try:
            lane = LaneSegment(
                id=str(raw["id"]),
                centerline=raw["centerline"],
                width=raw["width"],
                successors=tuple(raw.get("successors", ())),
                predecessors=tuple(raw.get("predecessors", ())),
            )
        except KeyError as exc:
            raise MapParseError(f"lane record missing required key {exc}") from exc
        if lane.id in lanes:
            raise MapValidationError("duplicate lane id", lane.id)
        lanes[lane.id] = lane
    return HdMap(lanes=lanes, frame=str(frame))


def map_to_dict(hdmap: HdMap) -> dict:
    return {
        "frame": hdmap.frame,
        "lanes": [
            {
                "id": lane.id,
                "width": lane.width,
                "centerline": lane.centerline.tolist(),
                "successors": list(lane.successors),
                "predecessors": list(lane.predecessors),
            }
            for lane in hdmap.sorted_lanes()
        ],
    }


def load_map(path) -> HdMap:
    """Parse and validate a map JSON file (schema in the README)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise MapParseError(f"cannot read map file {path}: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MapParseError(f"malformed map JSON in {path}: {exc}") from exc
    return map_from_dict(payload)


def save_map(hdmap: HdMap, path) -> None:
    Path(path).write_text(json.dumps(map_to_dict(hdmap), indent=2, sort_keys=True), encoding="utf-8")


def lanes_in_window(hdmap: HdMap, window: QueryWindow) -> list[LaneSegment]:
    """Lanes with at least one centerline point within the window radius,
    in ascending lane-id order."""
    cx, cy = window.center
    out = []
    for lane in hdmap.sorted_lanes():
        d = np.hypot(lane.centerline[:, 0] - cx, lane.centerline[:, 1] - cy)
        if float(d.min()) <= window.radius:
            out.append(lane)
    return out


def _closest_on_polyline(pts: np.ndarray, x: float, y: float) -> tuple[float, int]:
    """Squared distance to the polyline and the segment index whose direction
    is the tangent at the closest point.

    At a shared vertex the segment *following* the vertex wins; at the final
    vertex the preceding (last) segment is used.
    """
    a = pts[:-1]
    d = pts[1:] - a
    r = np.array([x, y]) - a
    t = np.clip((r * d).sum(axis=1) / (d * d).sum(axis=1), 0.0, 1.0)
    # exact endpoint coordinates at the clamps so shared-vertex candidates tie bitwise
    closest = np.where(t[:, None] <= 0.0, a, np.where(t[:, None] >= 1.0, pts[1:], a + t[:, None] * d))
    e = closest - np.array([x, y])
    d2 = (e * e).sum(axis=1)
    best = float(d2.min())
    candidates = np.flatnonzero(d2 == best)
    interior = candidates[t[candidates] < 1.0]
    seg_idx = int(interior.max()) if interior.size else int(candidates.max())
    return best, seg_idx


def nearest_lane(hdmap: HdMap, point) -> tuple[LaneSegment, np.ndarray]:
    """Lane minimizing point-to-polyline distance, plus the unit tangent of
    the closest centerline segment. Ties break by ascending lane id."""
    if not hdmap.lanes:
        raise EmptyMapError("nearest_lane on an empty map")
    x, y = float(point[0]), float(point[1])
    best_d2 = np.inf
    best_lane = None
    best_seg = -1
    for lane in hdmap.sorted_lanes():
        d2, seg_idx = _closest_on_polyline(lane.centerline, x, y)
        if d2 < best_d2:
            best_d2, best_lane, best_seg = d2, lane, seg_idx
    seg = best_lane.centerline[best_seg + 1] - best_lane.centerline[best_seg]
    return best_lane, seg / np.hypot(seg[0], seg[1])
