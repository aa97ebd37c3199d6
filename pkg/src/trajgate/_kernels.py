"""Compiled batch kernels for the containment and coverage hot paths.

Polygons are passed as packed, closed rings: concatenated vertex arrays
``vx``/``vy`` plus an ``offsets`` index (one entry per ring, final entry
is the total length) and per-ring bounding boxes pre-inflated by the
boundary band so the bbox reject can never skip a band hit.

Containment verdicts use a shared int8 encoding: 0 outside, 1 inside,
2 boundary (within the band of any edge).
"""

from __future__ import annotations

import numpy as np
from numba import njit

OUTSIDE = 0
INSIDE = 1
BOUNDARY = 2

ALGO_RAY_CAST = 0
ALGO_WINDING = 1


@njit(cache=True, nogil=True, inline="always")
def _classify(x, y, vx, vy, eps2, algo):
    """Classify one point against one closed ring (band, then crossing rule)."""
    acc = 0  # crossing parity or winding number, depending on algo
    for k in range(vx.size - 1):
        ax = vx[k]
        ay = vy[k]
        bx = vx[k + 1]
        by = vy[k + 1]
        dx = bx - ax
        dy = by - ay
        rx = x - ax
        ry = y - ay
        # squared distance to the edge segment; rings have no zero-length edges
        t = (rx * dx + ry * dy) / (dx * dx + dy * dy)
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        ex = rx - t * dx
        ey = ry - t * dy
        if ex * ex + ey * ey <= eps2:
            return BOUNDARY
        if algo == ALGO_RAY_CAST:
            # half-open rule: one endpoint strictly above, the other at-or-below
            if (ay > y) != (by > y):
                xi = ax + (y - ay) * dx / dy
                if x < xi:
                    acc += 1
        else:
            # winding number via signed left-of tests, same half-open convention
            if ay <= y:
                if by > y and dx * ry - rx * dy > 0.0:
                    acc += 1
            elif by <= y and dx * ry - rx * dy < 0.0:
                acc -= 1
    if algo == ALGO_RAY_CAST:
        return INSIDE if acc & 1 else OUTSIDE
    return INSIDE if acc != 0 else OUTSIDE


@njit(cache=True, nogil=True)
def classify_batch(px, py, vx, vy, eps, algo):
    out = np.empty(px.size, dtype=np.int8)
    eps2 = eps * eps
    for i in range(px.size):
        out[i] = _classify(px[i], py[i], vx, vy, eps2, algo)
    return out


@njit(cache=True, nogil=True, inline="always")
def _region_contains(x, y, vx, vy, offsets, bboxes, eps2, algo):
    """True when the point is inside-or-boundary of any packed ring."""
    for p in range(offsets.size - 1):
        if x < bboxes[p, 0] or x > bboxes[p, 2] or y < bboxes[p, 1] or y > bboxes[p, 3]:
            continue
        s = offsets[p]
        e = offsets[p + 1]
        if _classify(x, y, vx[s:e], vy[s:e], eps2, algo) != OUTSIDE:
            return True
    return False


@njit(cache=True, nogil=True)
def region_classify_points(pts, vx, vy, offsets, bboxes, eps, algo):
    out = np.empty(pts.shape[0], dtype=np.bool_)
    eps2 = eps * eps
    for i in range(pts.shape[0]):
        out[i] = _region_contains(pts[i, 0], pts[i, 1], vx, vy, offsets, bboxes, eps2, algo)
    return out


@njit(cache=True, nogil=True)
def region_prune(wps, vx, vy, offsets, bboxes, eps, algo):
    """Keep mask over trajectories: all waypoints inside-or-boundary of the region.

    ``wps`` is (D, T, 2); early-exits per trajectory on the first outside
    waypoint and per waypoint on the first containing ring.
    """
    n = wps.shape[0]
    horizon = wps.shape[1]
    eps2 = eps * eps
    keep = np.ones(n, dtype=np.bool_)
    for d in range(n):
        for t in range(horizon):
            if not _region_contains(
                wps[d, t, 0], wps[d, t, 1], vx, vy, offsets, bboxes, eps2, algo
            ):
                keep[d] = False
                break
    return keep


@njit(cache=True, nogil=True, inline="always")
def _ring_sq_distance(x, y, vx, vy):
    best = np.inf
    for k in range(vx.size - 1):
        ax = vx[k]
        ay = vy[k]
        dx = vx[k + 1] - ax
        dy = vy[k + 1] - ay
        rx = x - ax
        ry = y - ay
        t = (rx * dx + ry * dy) / (dx * dx + dy * dy)
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        ex = rx - t * dx
        ey = ry - t * dy
        d = ex * ex + ey * ey
        if d < best:
            best = d
    return best


@njit(cache=True, nogil=True)
def region_excursion(wps, vx, vy, offsets, bboxes, eps, algo):
    """Per-trajectory sum of waypoint distances to the region (0 when contained)."""
    n = wps.shape[0]
    horizon = wps.shape[1]
    eps2 = eps * eps
    out = np.zeros(n, dtype=np.float64)
    for d in range(n):
        total = 0.0
        for t in range(horizon):
            x = wps[d, t, 0]
            y = wps[d, t, 1]
            if _region_contains(x, y, vx, vy, offsets, bboxes, eps2, algo):
                continue
            best = np.inf
            for p in range(offsets.size - 1):
                s = offsets[p]
                e = offsets[p + 1]
                dist = _ring_sq_distance(x, y, vx[s:e], vy[s:e])
                if dist < best:
                    best = dist
            total += np.sqrt(best)
        out[d] = total
    return out


@njit(cache=True, nogil=True, inline="always")
def _within_sq(a, b, thresh_sq):
    """True when the per-step squared L2 never exceeds thresh_sq (early exit)."""
    for t in range(a.shape[0]):
        dx = a[t, 0] - b[t, 0]
        dy = a[t, 1] - b[t, 1]
        if dx * dx + dy * dy > thresh_sq:
            return False
    return True


@njit(cache=True, nogil=True)
def max_sq_step_dist(a, b):
    m = 0.0
    for t in range(a.shape[0]):
        dx = a[t, 0] - b[t, 0]
        dy = a[t, 1] - b[t, 1]
        d = dx * dx + dy * dy
        if d > m:
            m = d
    return m


@njit(cache=True, nogil=True)
def neighbor_counts(pool, thresh_sq):
    """Per-trajectory count of pool members within the threshold (self included)."""
    n = pool.shape[0]
    counts = np.ones(n, dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            if _within_sq(pool[i], pool[j], thresh_sq):
                counts[i] += 1
                counts[j] += 1
    return counts


@njit(cache=True, nogil=True)
def greedy_cover(pool, order, thresh_sq):
    """Greedy epsilon-net over ``pool`` visited in ``order``.

    A candidate is kept iff it is farther than the threshold from every
    previously kept trajectory. Returns kept indices in acceptance order.
    """
    n = pool.shape[0]
    kept = np.empty(n, dtype=np.int64)
    n_kept = 0
    for oi in range(order.size):
        idx = order[oi]
        covered = False
        for k in range(n_kept):
            if _within_sq(pool[idx], pool[kept[k]], thresh_sq):
                covered = True
                break
        if not covered:
            kept[n_kept] = idx
            n_kept += 1
    return kept[:n_kept].copy()


@njit(cache=True, nogil=True)
def covered_mask(pool, kept, thresh_sq):
    """Per-pool-member flag: some kept trajectory lies within the threshold."""
    n = pool.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        for k in range(kept.shape[0]):
            if _within_sq(pool[i], kept[k], thresh_sq):
                out[i] = True
                break
    return out


@njit(cache=True, nogil=True)
def nn_sq_dist(pool, kept):
    """Per-pool-member squared Chebyshev-over-time L2 distance to the kept set."""
    n = pool.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        best = np.inf
        for k in range(kept.shape[0]):
            m = 0.0
            for t in range(pool.shape[1]):
                dx = pool[i, t, 0] - kept[k, t, 0]
                dy = pool[i, t, 1] - kept[k, t, 1]
                d = dx * dx + dy * dy
                if d > m:
                    m = d
                    if m >= best:
                        break
            if m < best:
                best = m
        out[i] = best
    return out
