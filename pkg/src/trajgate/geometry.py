"""Pure geometric kernels: rotation frames, lane-width buffering, polygon
merging/clipping, and point/trajectory containment tests.

All geometry is double precision; near-edge degeneracies are absorbed by a
boundary band of ``BOUNDARY_EPS`` around every polygon edge. Points inside
the band classify as ``BOUNDARY`` and count as contained.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import Polygon as ShapelyPolygon
from shapely.ops import unary_union
from shapely.prepared import prep

from . import _kernels

BOUNDARY_EPS = 1e-9
MITER_LIMIT = 2.0
CIRCLE_SEGMENTS = 32

_ALGO_CODES = {"ray_cast": _kernels.ALGO_RAY_CAST, "winding": _kernels.ALGO_WINDING}


class GeometryError(ValueError):
    pass


class NonUnitTangentError(GeometryError):
    pass


class DegenerateCenterlineError(GeometryError):
    pass


class InvalidRingError(GeometryError):
    pass


class PolygonHoleError(GeometryError):
    pass


class Containment(enum.IntEnum):
    OUTSIDE = _kernels.OUTSIDE
    INSIDE = _kernels.INSIDE
    BOUNDARY = _kernels.BOUNDARY

    @property
    def contained(self) -> bool:
        return self is not Containment.OUTSIDE


def _algo_code(algo: str) -> int:
    try:
        return _ALGO_CODES[algo]
    except KeyError:
        raise GeometryError(f"unknown point-in-polygon algorithm {algo!r}") from None


@dataclass(frozen=True, eq=False)
class RotationFrame:
    """Rigid city<->local transform: rotation by theta about ``origin``.

    ``rotation`` maps local directions to city directions; the local frame
    has its +x axis along the tangent the frame was built from.
    """

    origin: tuple[float, float]
    theta: float
    rotation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        if rot.shape != (2, 2):
            raise GeometryError("rotation must be a 2x2 matrix")
        if not np.allclose(rot.T @ rot, np.eye(2), rtol=0.0, atol=1e-12):
            raise GeometryError("rotation matrix is not orthonormal")
        if abs(float(np.linalg.det(rot)) - 1.0) > 1e-12:
            raise GeometryError("rotation matrix must have determinant +1")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "rotation", rot)


def frame_from_tangent(origin, tangent) -> RotationFrame:
    """Build the local frame whose +x axis is the given unit tangent."""
    t = np.asarray(tangent, dtype=np.float64)
    if t.shape != (2,) or abs(math.hypot(t[0], t[1]) - 1.0) > 1e-9:
        raise NonUnitTangentError(f"tangent {tangent!r} is not a unit vector")
    theta = math.atan2(t[1], t[0])
    if theta == -math.pi:
        theta = math.pi
    c, s = math.cos(theta), math.sin(theta)
    rotation = np.array([[c, -s], [s, c]])
    return RotationFrame(origin=(float(origin[0]), float(origin[1])), theta=theta, rotation=rotation)


def to_local(frame: RotationFrame, points) -> np.ndarray:
    """Rotate city points into the frame: R^-1 (p - origin)."""
    pts = np.asarray(points, dtype=np.float64)
    return (pts - np.asarray(frame.origin)) @ frame.rotation


def to_city(frame: RotationFrame, points) -> np.ndarray:
    """Inverse of :func:`to_local`: origin + R p."""
    pts = np.asarray(points, dtype=np.float64)
    return pts @ frame.rotation.T + np.asarray(frame.origin)


def ring_area(ring) -> float:
    """Unsigned shoelace area of a closed ring."""
    r = np.asarray(ring, dtype=np.float64)
    x, y = r[:-1, 0], r[:-1, 1]
    xn, yn = r[1:, 0], r[1:, 1]
    return abs(float(np.sum(x * yn - xn * y))) / 2.0


def _signed_ring_area(ring: np.ndarray) -> float:
    x, y = ring[:-1, 0], ring[:-1, 1]
    xn, yn = ring[1:, 0], ring[1:, 1]
    return float(np.sum(x * yn - xn * y)) / 2.0


def canonical_ring(ring) -> np.ndarray:
    """Closed ring normalized to CCW orientation, starting at the lexicographic
    minimum vertex. Used for deterministic ordering and structural comparison."""
    r = np.asarray(ring, dtype=np.float64)
    body = r[:-1]
    if _signed_ring_area(r) < 0.0:
        body = body[::-1]
    start = np.lexsort((body[:, 1], body[:, 0]))[0]
    body = np.roll(body, -start, axis=0)
    return np.vstack([body, body[:1]])


def _ring_is_simple(ring: np.ndarray) -> bool:
    """No proper or improper self-intersection between non-adjacent edges and
    no fold-back spikes between adjacent ones. Exact fp predicates; near-misses
    inside rounding noise are accepted (no exact arithmetic by design)."""
    a = ring[:-1]
    b = ring[1:]
    m = len(a)
    d = b - a
    for i in range(m - 2):
        # candidate edges j > i, skipping the shared-vertex neighbor and the
        # first/last adjacency around the ring closure
        j0 = i + 2
        j1 = m - 1 if i == 0 else m
        if j0 >= j1:
            continue
        p, r = a[i], d[i]
        q = a[j0:j1]
        s = d[j0:j1]
        qp = q - p
        rxs = r[0] * s[:, 1] - r[1] * s[:, 0]
        qpxr = qp[:, 0] * r[1] - qp[:, 1] * r[0]
        qpxs = qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = qpxs / rxs
            u = qpxr / rxs
        crossing = (rxs != 0.0) & (t >= 0.0) & (t <= 1.0) & (u >= 0.0) & (u <= 1.0)
        if np.any(crossing):
            return False
        # collinear overlap: rxs == 0 and qp x r == 0 with projected overlap
        coll = (rxs == 0.0) & (qpxr == 0.0)
        if np.any(coll):
            rr = float(r @ r)
            t0 = (qp[coll] @ r) / rr
            t1 = t0 + (s[coll] @ r) / rr
            lo = np.minimum(t0, t1)
            hi = np.maximum(t0, t1)
            if np.any((hi >= 0.0) & (lo <= 1.0)):
                return False
    # adjacent fold-back spikes
    for i in range(m):
        u = d[i]
        v = d[(i + 1) % m]
        if u[0] * v[1] - u[1] * v[0] == 0.0 and float(u @ v) < 0.0:
            return False
    return True


@dataclass(frozen=True, eq=False)
class BoundaryPolygon:
    """Simple closed ring delineating a drivable envelope.

    The ring is validated at construction (closed, >= 4 points, no
    zero-length edges, simple) and normalized to CCW orientation.
    """

    exterior: np.ndarray
    source_lane_ids: tuple[str, ...] = ()

    def __post_init__(self):
        ring = np.asarray(self.exterior, dtype=np.float64)
        if ring.ndim != 2 or ring.shape[1] != 2:
            raise InvalidRingError("ring must be an (N, 2) point array")
        if len(ring) < 4:
            raise InvalidRingError("ring needs at least 4 points (triangle plus closure)")
        if not np.array_equal(ring[0], ring[-1]):
            raise InvalidRingError("ring is not closed (first point must equal last)")
        if not np.all(np.isfinite(ring)):
            raise InvalidRingError("ring contains non-finite coordinates")
        seps = np.hypot(*(ring[1:] - ring[:-1]).T)
        if np.any(seps <= 1e-12):
            raise InvalidRingError("ring has coincident consecutive points")
        if _signed_ring_area(ring) < 0.0:
            ring = ring[::-1]
        if not _ring_is_simple(ring):
            raise InvalidRingError("ring is self-intersecting")
        object.__setattr__(self, "exterior", ring)
        object.__setattr__(self, "source_lane_ids", tuple(self.source_lane_ids))

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        lo = self.exterior.min(axis=0)
        hi = self.exterior.max(axis=0)
        return (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))

    def area(self) -> float:
        return ring_area(self.exterior)


# LocalBuffer is structurally a clip ring with the same invariants.
LocalBuffer = BoundaryPolygon


@dataclass(frozen=True, eq=False)
class PackedRegion:
    """Flattened polygon set ready for the compiled containment kernels."""

    vx: np.ndarray
    vy: np.ndarray
    offsets: np.ndarray
    bboxes: np.ndarray

    @classmethod
    def from_polygons(cls, polys, eps: float = BOUNDARY_EPS) -> "PackedRegion":
        rings = [np.ascontiguousarray(p.exterior) for p in polys]
        offsets = np.zeros(len(rings) + 1, dtype=np.int64)
        for i, r in enumerate(rings):
            offsets[i + 1] = offsets[i] + len(r)
        if rings:
            vx = np.ascontiguousarray(np.concatenate([r[:, 0] for r in rings]))
            vy = np.ascontiguousarray(np.concatenate([r[:, 1] for r in rings]))
        else:
            vx = np.zeros(0)
            vy = np.zeros(0)
        bboxes = np.zeros((len(rings), 4))
        for i, r in enumerate(rings):
            # inflate by the band so the bbox reject can never skip a band hit
            bboxes[i] = (
                r[:, 0].min() - eps,
                r[:, 1].min() - eps,
                r[:, 0].max() + eps,
                r[:, 1].max() + eps,
            )
        return cls(vx=vx, vy=vy, offsets=offsets, bboxes=bboxes)


def _offset_join(p, n_prev, n_next, offset: float) -> list[np.ndarray]:
    """Join points for the offset polyline at an interior vertex.

    Miter join capped at MITER_LIMIT (ratio of join distance to offset);
    beyond the limit falls back to a bevel.
    """
    m = n_prev + n_next
    norm = math.hypot(m[0], m[1])
    if norm < 1e-12:  # exact fold-back, no miter direction
        return [p + offset * n_prev, p + offset * n_next]
    cos_half = math.sqrt(max(0.0, (1.0 + float(n_prev @ n_next)) / 2.0))
    if cos_half < 1.0 / MITER_LIMIT:
        return [p + offset * n_prev, p + offset * n_next]
    return [p + (offset / cos_half) * (m / norm)]


def buffer_centerline(centerline, width: float, source_lane_ids=()) -> BoundaryPolygon:
    """Offset a centerline by +-width/2 into a drivable envelope polygon.

    Uses miter joins (bevel beyond the miter limit) and flat end caps. The
    interior contains every point at lateral offset strictly below width/2.
    """
    pts = np.asarray(centerline, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise DegenerateCenterlineError("centerline needs at least 2 (x, y) points")
    if not (width > 0.0):
        raise GeometryError(f"width must be positive, got {width}")
    seg = np.diff(pts, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    if np.any(lens <= 1e-9):
        raise DegenerateCenterlineError("centerline has coincident consecutive points")
    dirs = seg / lens[:, None]
    normals = np.stack([-dirs[:, 1], dirs[:, 0]], axis=1)
    half = width / 2.0

    left = [pts[0] + half * normals[0]]
    right = [pts[0] - half * normals[0]]
    for i in range(1, len(pts) - 1):
        left.extend(_offset_join(pts[i], normals[i - 1], normals[i], half))
        right.extend(_offset_join(pts[i], normals[i - 1], normals[i], -half))
    left.append(pts[-1] + half * normals[-1])
    right.append(pts[-1] - half * normals[-1])

    ring = np.vstack([left, right[::-1], [left[0]]])
    keep = np.ones(len(ring), dtype=bool)
    keep[1:] = np.hypot(*(ring[1:] - ring[:-1]).T) > 1e-12
    return BoundaryPolygon(exterior=ring[keep], source_lane_ids=tuple(source_lane_ids))


def _shapely_components(geom) -> list[ShapelyPolygon]:
    if geom.is_empty:
        return []
    if isinstance(geom, ShapelyPolygon):
        return [geom]
    if geom.geom_type == "MultiPolygon":
        return list(geom.geoms)
    if geom.geom_type == "GeometryCollection":
        return [g for g in geom.geoms if isinstance(g, ShapelyPolygon)]
    return []


def _dedupe_ring(ring: np.ndarray) -> np.ndarray:
    keep = np.ones(len(ring), dtype=bool)
    keep[1:] = np.hypot(*(ring[1:] - ring[:-1]).T) > 1e-12
    ring = ring[keep]
    if not np.array_equal(ring[0], ring[-1]):
        ring = np.vstack([ring, ring[:1]])
    return ring


def _drop_collinear(ring: np.ndarray) -> np.ndarray:
    """Remove exactly-collinear straight-through vertices (union artifacts)."""
    body = ring[:-1]
    n = len(body)
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        u = body[i] - body[i - 1]
        v = body[(i + 1) % n] - body[i]
        if u[0] * v[1] - u[1] * v[0] == 0.0 and float(u @ v) > 0.0:
            keep[i] = False
    if keep.all() or keep.sum() < 3:
        return ring
    body = body[keep]
    return np.vstack([body, body[:1]])


def _component_to_boundary(comp: ShapelyPolygon, source_lane_ids) -> BoundaryPolygon:
    if list(comp.interiors):
        raise PolygonHoleError("polygon operation produced a ring with holes")
    ring = _drop_collinear(_dedupe_ring(np.asarray(comp.exterior.coords, dtype=np.float64)))
    return BoundaryPolygon(exterior=canonical_ring(ring), source_lane_ids=tuple(source_lane_ids))


def merge_polygons(polys) -> list[BoundaryPolygon]:
    """Union overlapping envelopes into a minimal set of simple rings.

    Disjoint inputs pass through; overlapping or touching inputs merge.
    Rings are canonicalized and ordered by their first vertex, so the result
    is independent of input order.
    """
    polys = list(polys)
    if not polys:
        return []
    geoms = [ShapelyPolygon(p.exterior) for p in polys]
    union = unary_union(geoms)
    out = []
    for comp in _shapely_components(union):
        ids: set[str] = set()
        prepared = prep(comp)
        for p, g in zip(polys, geoms):
            if prepared.intersects(g.representative_point()):
                ids.update(p.source_lane_ids)
        out.append(_component_to_boundary(comp, sorted(ids)))
    out.sort(key=lambda p: (p.exterior[0, 0], p.exterior[0, 1]))
    return out


def make_local_buffer(center, radius: float, polys) -> list[BoundaryPolygon]:
    """Clip envelopes to a 32-gon around ``center`` circumscribing the radius.

    The clip ring contains the full disc (circumscribed, inradius == radius),
    so containment verdicts for points within radius*(1 - 1e-3) of the center
    are unchanged by clipping.
    """
    if not (radius > 0.0):
        raise GeometryError(f"local buffer radius must be positive, got {radius}")
    k = CIRCLE_SEGMENTS
    ang = 2.0 * np.pi * np.arange(k) / k
    r_out = radius / math.cos(math.pi / k)
    cx, cy = float(center[0]), float(center[1])
    clip = ShapelyPolygon(np.stack([cx + r_out * np.cos(ang), cy + r_out * np.sin(ang)], axis=1))
    out = []
    for p in polys:
        inter = ShapelyPolygon(p.exterior).intersection(clip)
        for comp in _shapely_components(inter):
            if comp.area <= 0.0:
                continue
            out.append(_component_to_boundary(comp, p.source_lane_ids))
    return out


def _min_sq_dist_to_ring(x: float, y: float, ring: np.ndarray) -> float:
    a = ring[:-1]
    d = ring[1:] - a
    r = np.array([x, y]) - a
    t = np.clip((r * d).sum(axis=1) / (d * d).sum(axis=1), 0.0, 1.0)
    e = r - t[:, None] * d
    return float((e * e).sum(axis=1).min())


def point_in_polygon(point, poly: BoundaryPolygon, algo: str = "ray_cast") -> Containment:
    """Ternary containment test against one envelope.

    Plain-Python reference path; the compiled batch kernels in
    :func:`points_in_polygon` share its semantics bit for bit.
    """
    _algo_code(algo)
    x, y = float(point[0]), float(point[1])
    ring = poly.exterior
    if _min_sq_dist_to_ring(x, y, ring) <= BOUNDARY_EPS * BOUNDARY_EPS:
        return Containment.BOUNDARY
    if algo == "ray_cast":
        crossings = 0
        for k in range(len(ring) - 1):
            ax, ay = ring[k]
            bx, by = ring[k + 1]
            if (ay > y) != (by > y):
                xi = ax + (y - ay) * (bx - ax) / (by - ay)
                if x < xi:
                    crossings += 1
        inside = bool(crossings & 1)
    else:
        wn = 0
        for k in range(len(ring) - 1):
            ax, ay = ring[k]
            bx, by = ring[k + 1]
            left = (bx - ax) * (y - ay) - (x - ax) * (by - ay)
            if ay <= y:
                if by > y and left > 0.0:
                    wn += 1
            elif by <= y and left < 0.0:
                wn -= 1
        inside = wn != 0
    return Containment.INSIDE if inside else Containment.OUTSIDE


def points_in_polygon(points, poly: BoundaryPolygon, algo: str = "ray_cast") -> np.ndarray:
    """Vectorized ternary verdicts (int8 Containment codes) for many points."""
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    ring = np.ascontiguousarray(poly.exterior)
    return _kernels.classify_batch(
        np.ascontiguousarray(pts[:, 0]),
        np.ascontiguousarray(pts[:, 1]),
        np.ascontiguousarray(ring[:, 0]),
        np.ascontiguousarray(ring[:, 1]),
        BOUNDARY_EPS,
        _algo_code(algo),
    )


def trajectory_in_region(traj, polys, algo: str = "ray_cast") -> bool:
    """True iff every waypoint is inside-or-boundary of the union of ``polys``.

    Early-exits on the first waypoint outside every envelope.
    """
    wps = np.ascontiguousarray(np.asarray(getattr(traj, "waypoints", traj), dtype=np.float64))
    region = polys if isinstance(polys, PackedRegion) else PackedRegion.from_polygons(polys)
    keep = _kernels.region_prune(
        wps[None, :, :], region.vx, region.vy, region.offsets, region.bboxes,
        BOUNDARY_EPS, _algo_code(algo),
    )
    return bool(keep[0])
