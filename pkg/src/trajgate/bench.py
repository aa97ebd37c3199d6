"""Point-in-polygon micro-benchmark harness.

Times the ray casting and winding number kernels over a large random point
workload against lane-buffer envelopes, plus the full trajectory-in-region
check for a working-size trajectory set. A correctness gate (verdict
agreement between the algorithms) runs before any timing.
"""

from __future__ import annotations

import os
import platform
import sys
import time
from dataclasses import dataclass

import numba
import numpy as np

from . import _kernels
from .geometry import BOUNDARY_EPS, PackedRegion, buffer_centerline
from .trajset import stack_waypoints

_ALGOS = {"ray_cast": _kernels.ALGO_RAY_CAST, "winding": _kernels.ALGO_WINDING}


class BenchGateError(RuntimeError):
    """The algorithms disagreed on the benchmark workload; timing aborted."""


@dataclass(frozen=True)
class BenchRow:
    algorithm: str
    n_points: int
    n_polys: int
    total_ns: int
    per_check_ns: float


@dataclass(frozen=True)
class BenchReport:
    rows: list
    environment: dict
    checks_verified: int

    def to_dict(self) -> dict:
        return {
            "rows": [vars(r) for r in self.rows],
            "environment": self.environment,
            "checks_verified": self.checks_verified,
        }


def bench_polygons(n_polys: int = 4, seed: int = 0) -> list:
    """Deterministic lane-buffer envelopes arranged around the origin."""
    rng = np.random.default_rng(seed)
    polys = []
    for i in range(n_polys):
        heading = 2.0 * np.pi * i / n_polys + rng.uniform(-0.2, 0.2)
        curvature = rng.uniform(-0.008, 0.008)
        length = rng.uniform(60.0, 90.0)
        s = np.linspace(0.0, length, 12)
        ang = heading + curvature * s
        centerline = np.stack(
            [np.cumsum(np.cos(ang)) * (length / 12), np.cumsum(np.sin(ang)) * (length / 12)],
            axis=1,
        )
        centerline -= centerline[0]
        polys.append(buffer_centerline(centerline, rng.uniform(3.0, 4.0), (f"B{i}",)))
    return polys


def _environment() -> dict:
    return {
        "python": sys.version.split()[0],
        "platform": platform.platform(),
        "machine": platform.machine(),
        "cpu_count": os.cpu_count(),
        "numpy": np.__version__,
        "numba": numba.__version__,
    }


def run_bench(n_points: int = 1_000_000, n_polys: int = 4, seed: int = 0,
              set_arr: np.ndarray | None = None, repeats: int = 3) -> BenchReport:
    """Gate on verdict agreement, then time each kernel (best of repeats)."""
    polys = bench_polygons(n_polys, seed)
    rings = [(np.ascontiguousarray(p.exterior[:, 0]), np.ascontiguousarray(p.exterior[:, 1]))
             for p in polys]
    bbox = np.array([p.bbox for p in polys])
    lo = bbox[:, :2].min(axis=0) - 10.0
    hi = bbox[:, 2:].max(axis=0) + 10.0
    rng = np.random.default_rng(seed + 1)
    pts = rng.uniform(lo, hi, size=(n_points, 2))
    px = np.ascontiguousarray(pts[:, 0])
    py = np.ascontiguousarray(pts[:, 1])

    # correctness gate precedes all timing (also warms the JIT)
    checks = 0
    for vx, vy in rings:
        ray = _kernels.classify_batch(px, py, vx, vy, BOUNDARY_EPS, _ALGOS["ray_cast"])
        wind = _kernels.classify_batch(px, py, vx, vy, BOUNDARY_EPS, _ALGOS["winding"])
        disagree = int((ray != wind).sum())
        if disagree:
            raise BenchGateError(
                f"{disagree} verdict disagreements between ray_cast and winding"
            )
        checks += n_points

    rows = []
    for name, code in _ALGOS.items():
        best = None
        for _ in range(repeats):
            t0 = time.perf_counter_ns()
            for vx, vy in rings:
                _kernels.classify_batch(px, py, vx, vy, BOUNDARY_EPS, code)
            dt = time.perf_counter_ns() - t0
            best = dt if best is None else min(best, dt)
        total_checks = n_points * n_polys
        rows.append(BenchRow(name, n_points, n_polys, best, best / total_checks))

    if set_arr is None:
        set_arr = _default_bench_set()
    set_arr = np.ascontiguousarray(set_arr)
    region = PackedRegion.from_polygons(polys)
    _kernels.region_prune(set_arr, region.vx, region.vy, region.offsets, region.bboxes,
                          BOUNDARY_EPS, _ALGOS["ray_cast"])  # warm
    best = None
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        _kernels.region_prune(set_arr, region.vx, region.vy, region.offsets, region.bboxes,
                              BOUNDARY_EPS, _ALGOS["ray_cast"])
        dt = time.perf_counter_ns() - t0
        best = dt if best is None else min(best, dt)
    rows.append(BenchRow("trajectory_in_region", set_arr.shape[0], n_polys, best,
                         best / set_arr.shape[0]))
    return BenchReport(rows=rows, environment=_environment(), checks_verified=checks)


def _default_bench_set(size: int = 2800) -> np.ndarray:
    """A working-size candidate set for the region-check timing."""
    from .trajset import KinematicLimits, coverage_reduce, generate_pool

    limits = KinematicLimits()
    pool = generate_pool(limits)
    ts = coverage_reduce(pool, 2.0)
    arr = ts.as_array()
    return arr[:size] if arr.shape[0] >= size else arr


def bench_csv(report: BenchReport) -> str:
    lines = ["algorithm,n_points,n_polys,total_ns,per_check_ns"]
    for r in report.rows:
        lines.append(f"{r.algorithm},{r.n_points},{r.n_polys},{r.total_ns},{r.per_check_ns!r}")
    return "\n".join(lines) + "\n"
