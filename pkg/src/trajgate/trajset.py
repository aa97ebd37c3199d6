"""Candidate trajectory sets: kinematic rollout pool, coverage-epsilon
reduction, feasibility filtering, and the per-step squared-max distance."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels

DT = 0.1
HORIZON_STEPS = 30  # 3 s prediction horizon at 10 Hz
PAST_STEPS = 20  # 2 s observation window at 10 Hz, current state included


class TrajectoryError(ValueError):
    pass


def waypoints_of(traj) -> np.ndarray:
    """Coerce a Trajectory or bare array-like to an (N, 2) float array."""
    wps = np.asarray(getattr(traj, "waypoints", traj), dtype=np.float64)
    if wps.ndim != 2 or wps.shape[1] != 2:
        raise TrajectoryError(f"expected (N, 2) waypoints, got shape {wps.shape}")
    return wps


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Future trajectory: exactly HORIZON_STEPS waypoints at DT spacing."""

    waypoints: np.ndarray
    dt: float = DT

    def __post_init__(self):
        wps = np.asarray(self.waypoints, dtype=np.float64)
        if wps.shape != (HORIZON_STEPS, 2):
            raise TrajectoryError(
                f"trajectory must have exactly {HORIZON_STEPS} waypoints, got shape {wps.shape}"
            )
        if not np.all(np.isfinite(wps)):
            raise TrajectoryError("trajectory has non-finite coordinates")
        object.__setattr__(self, "waypoints", wps)


@dataclass(frozen=True, eq=False)
class PastTrajectory:
    """Observed history, fixed length, with a mask flagging padded steps."""

    waypoints: np.ndarray
    padding_mask: np.ndarray = None  # True where the step is padding

    def __post_init__(self):
        wps = np.asarray(self.waypoints, dtype=np.float64)
        if wps.shape != (PAST_STEPS, 2):
            raise TrajectoryError(
                f"past trajectory must have exactly {PAST_STEPS} steps, got shape {wps.shape}"
            )
        mask = self.padding_mask
        mask = np.zeros(PAST_STEPS, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        if mask.shape != (PAST_STEPS,):
            raise TrajectoryError("padding mask length must match the past trajectory")
        if not np.all(np.isfinite(wps[~mask])):
            raise TrajectoryError("observed steps have non-finite coordinates")
        object.__setattr__(self, "waypoints", wps)
        object.__setattr__(self, "padding_mask", mask)

    @property
    def fully_observed(self) -> bool:
        return not bool(self.padding_mask.any())

    def observed(self) -> np.ndarray:
        return self.waypoints[~self.padding_mask]


@dataclass(frozen=True)
class KinematicLimits:
    max_curvature: float = 0.3  # 1/m
    max_accel: float = 8.0  # m/s^2
    max_speed: float = 25.0  # m/s

    def __post_init__(self):
        for name in ("max_curvature", "max_accel", "max_speed"):
            if not (getattr(self, name) > 0.0):
                raise TrajectoryError(f"{name} must be positive")


@dataclass(frozen=True, eq=False)
class ControlGrid:
    """Constant-control grid (initial speed, acceleration, curvature) for the
    rollout pool."""

    speeds: np.ndarray
    accels: np.ndarray
    curvatures: np.ndarray

    def __post_init__(self):
        for name in ("speeds", "accels", "curvatures"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64))
            if arr.size == 0:
                raise TrajectoryError(f"empty control grid: no {name}")
            object.__setattr__(self, name, arr)

    @property
    def size(self) -> int:
        return self.speeds.size * self.accels.size * self.curvatures.size


def default_control_grid(limits: KinematicLimits | None = None) -> ControlGrid:
    """Default discretization, sized so the epsilon=2 reduction of the pool
    lands near the 2,800-trajectory working set."""
    limits = limits or KinematicLimits()
    return ControlGrid(
        speeds=np.linspace(0.0, limits.max_speed, 26),
        accels=np.linspace(-limits.max_accel, limits.max_accel, 9),
        curvatures=np.linspace(-limits.max_curvature, limits.max_curvature, 41),
    )


@dataclass(eq=False)
class TrajectorySet:
    """Coverage-reduced candidate dictionary, canonical frame by default
    (origin-anchored, heading +x)."""

    trajectories: list
    epsilon: float
    frame: str = "canonical"

    def __post_init__(self):
        if not (self.epsilon > 0.0):
            raise TrajectoryError(f"epsilon must be positive, got {self.epsilon}")

    def __len__(self) -> int:
        return len(self.trajectories)

    def as_array(self) -> np.ndarray:
        return stack_waypoints(self.trajectories)


def stack_waypoints(trajs) -> np.ndarray:
    if len(trajs) == 0:
        return np.zeros((0, HORIZON_STEPS, 2))
    return np.ascontiguousarray(np.stack([waypoints_of(t) for t in trajs]))


def dist(a, b) -> float:
    """Maximum over timesteps of the squared L2 difference (units: m^2).

    The coverage radius epsilon is in meters and compares against sqrt(dist).
    """
    wa, wb = waypoints_of(a), waypoints_of(b)
    if wa.shape != wb.shape:
        raise TrajectoryError(f"length mismatch: {wa.shape} vs {wb.shape}")
    d = wa - wb
    return float((d * d).sum(axis=1).max())


def step_speeds(wps: np.ndarray) -> np.ndarray:
    """Chord speeds between consecutive waypoints, shape (T-1,)."""
    seg = np.diff(wps, axis=-2)
    return np.hypot(seg[..., 0], seg[..., 1]) / DT


def step_accels(wps: np.ndarray) -> np.ndarray:
    return np.diff(step_speeds(wps), axis=-1) / DT


def menger_curvatures(wps: np.ndarray) -> np.ndarray:
    """Menger curvature over consecutive waypoint triples, shape (T-2,).

    Degenerate (near-coincident) triples count as zero curvature.
    """
    a, b, c = wps[..., :-2, :], wps[..., 1:-1, :], wps[..., 2:, :]
    ab = b - a
    bc = c - b
    ac = c - a
    cross = np.abs(ab[..., 0] * ac[..., 1] - ab[..., 1] * ac[..., 0])
    lab = np.hypot(ab[..., 0], ab[..., 1])
    lbc = np.hypot(bc[..., 0], bc[..., 1])
    lac = np.hypot(ac[..., 0], ac[..., 1])
    denom = lab * lbc * lac
    with np.errstate(divide="ignore", invalid="ignore"):
        k = 2.0 * cross / denom
    k[(lab < 1e-9) | (lbc < 1e-9) | (lac < 1e-9)] = 0.0
    return k


def _limits_ok(wps_batch: np.ndarray, limits: KinematicLimits, slack: float = 1e-6) -> np.ndarray:
    speeds = step_speeds(wps_batch)
    accels = np.diff(speeds, axis=-1) / DT
    curv = menger_curvatures(wps_batch)
    return (
        (speeds <= limits.max_speed + slack).all(axis=-1)
        & (np.abs(accels) <= limits.max_accel + slack).all(axis=-1)
        & (curv <= limits.max_curvature + slack).all(axis=-1)
    )


def generate_pool(limits: KinematicLimits, horizon: int = HORIZON_STEPS, controls: ControlGrid | None = None) -> list:
    """Constant-control rollouts from the canonical state (origin, heading +x).

    Each step advances along an exact circular arc of the commanded curvature,
    with trapezoidal arc length from the speed ramp, so constant-control
    rollouts lie exactly on their analytic arc. Speed clips to [0, max_speed].
    """
    controls = controls or default_control_grid(limits)
    if float(np.abs(controls.accels).max()) > limits.max_accel:
        raise TrajectoryError("control grid acceleration exceeds the kinematic limit")
    if float(np.abs(controls.curvatures).max()) > limits.max_curvature:
        raise TrajectoryError("control grid curvature exceeds the kinematic limit")
    if float(controls.speeds.min()) < 0.0 or float(controls.speeds.max()) > limits.max_speed:
        raise TrajectoryError("control grid speeds outside [0, max_speed]")
    v0, acc, kap = (
        g.ravel() for g in np.meshgrid(controls.speeds, controls.accels, controls.curvatures, indexing="ij")
    )
    n = v0.size
    x = np.zeros(n)
    y = np.zeros(n)
    psi = np.zeros(n)
    v = v0.copy()
    wps = np.empty((n, horizon, 2))
    for t in range(horizon):
        v_next = np.clip(v + acc * DT, 0.0, limits.max_speed)
        s = 0.5 * (v + v_next) * DT
        delta = s * kap
        small = np.abs(delta) < 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            lx = np.where(small, s, np.sin(delta) / kap)
            ly = np.where(small, 0.0, (1.0 - np.cos(delta)) / kap)
        cp, sp = np.cos(psi), np.sin(psi)
        x = x + cp * lx - sp * ly
        y = y + sp * lx + cp * ly
        psi = psi + delta
        v = v_next
        wps[:, t, 0] = x
        wps[:, t, 1] = y
    if horizon == HORIZON_STEPS:
        return [Trajectory(wps[i]) for i in range(n)]
    return [wps[i] for i in range(n)]


def kinematic_filter(trajs, limits: KinematicLimits) -> list:
    """Retain trajectories whose per-step speed, acceleration magnitude and
    Menger curvature respect the limits (1e-6 slack). Order preserved."""
    if len(trajs) == 0:
        return []
    ok = _limits_ok(stack_waypoints(trajs), limits)
    return [t for t, keep in zip(trajs, ok) if keep]


def coverage_reduce(pool, epsilon: float) -> TrajectorySet:
    """Greedy epsilon-net over the pool.

    The pool is first canonicalized (lexicographic waypoint order) so the
    result is independent of input order; candidates are then visited by
    descending neighbor count (ties by canonical index) and kept iff farther
    than epsilon (by sqrt of :func:`dist`) from every kept trajectory. Every
    pool member ends within epsilon of some kept trajectory by construction.
    """
    if not (epsilon > 0.0):
        raise TrajectoryError(f"epsilon must be positive, got {epsilon}")
    if len(pool) == 0:
        raise TrajectoryError("coverage_reduce on an empty pool")
    arr = stack_waypoints(pool)
    n = arr.shape[0]
    flat = arr.reshape(n, -1)
    canonical = np.lexsort(flat.T[::-1])
    arr = np.ascontiguousarray(arr[canonical])
    eps_sq = epsilon * epsilon
    counts = _kernels.neighbor_counts(arr, eps_sq)
    order = np.lexsort((np.arange(n), -counts))
    kept = _kernels.greedy_cover(arr, order, eps_sq)
    return TrajectorySet(
        trajectories=[Trajectory(arr[i]) for i in kept],
        epsilon=float(epsilon),
    )


def max_nn_distance(pool, kept) -> float:
    """Largest over the pool of the nearest-kept sqrt(dist); the achieved
    coverage radius."""
    pool_arr = stack_waypoints(pool)
    kept_arr = stack_waypoints(kept)
    return float(np.sqrt(_kernels.nn_sq_dist(pool_arr, kept_arr).max()))


def resample(traj, target_len: int) -> np.ndarray:
    """Arc-length-parameterized linear resampling to exactly target_len points.

    Endpoints are preserved exactly.
    """
    pts = waypoints_of(traj)
    if len(pts) < 2:
        raise TrajectoryError("resample needs at least 2 points")
    if target_len < 2:
        raise TrajectoryError("target_len must be at least 2")
    seg = np.diff(pts, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    keep = lens > 0.0
    if not keep.any():
        raise TrajectoryError("degenerate input: all points coincident")
    pts = np.vstack([pts[:1], pts[1:][keep]])
    lens = lens[keep]
    s = np.concatenate([[0.0], np.cumsum(lens)])
    t = np.linspace(0.0, s[-1], target_len)
    out = np.stack([np.interp(t, s, pts[:, 0]), np.interp(t, s, pts[:, 1])], axis=1)
    out[0] = pts[0]
    out[-1] = pts[-1]
    return out


def set_to_csv(ts: TrajectorySet) -> str:
    """CSV serialization (header traj_id,step,x,y), exact float round-trip."""
    lines = ["traj_id,step,x,y"]
    for i, traj in enumerate(ts.trajectories):
        for step, (x, y) in enumerate(waypoints_of(traj)):
            lines.append(f"{i},{step},{float(x)!r},{float(y)!r}")
    return "\n".join(lines) + "\n"


def set_metadata(ts: TrajectorySet, limits: KinematicLimits | None = None) -> dict:
    limits = limits or KinematicLimits()
    return {
        "epsilon": ts.epsilon,
        "dt": DT,
        "horizon": HORIZON_STEPS,
        "limits": {
            "max_speed": limits.max_speed,
            "max_accel": limits.max_accel,
            "max_curvature": limits.max_curvature,
        },
    }


def save_set(ts: TrajectorySet, csv_path, limits: KinematicLimits | None = None, meta_path=None) -> None:
    """Write the set as CSV (traj_id,step,x,y) plus a JSON metadata sidecar."""
    csv_path = Path(csv_path)
    meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".meta.json")
    csv_path.write_text(set_to_csv(ts), encoding="utf-8")
    meta_path.write_text(
        json.dumps(set_metadata(ts, limits), indent=2, sort_keys=True), encoding="utf-8"
    )


def load_set(csv_path, meta_path=None) -> tuple[TrajectorySet, KinematicLimits]:
    csv_path = Path(csv_path)
    meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".meta.json")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    rows: dict[int, list[tuple[int, float, float]]] = {}
    with csv_path.open(encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(int(rec["traj_id"]), []).append(
                (int(rec["step"]), float(rec["x"]), float(rec["y"]))
            )
    trajectories = []
    for traj_id in sorted(rows):
        steps = sorted(rows[traj_id])
        if [s for s, _, _ in steps] != list(range(len(steps))):
            raise TrajectoryError(f"trajectory {traj_id} has non-contiguous steps")
        trajectories.append(Trajectory(np.array([(x, y) for _, x, y in steps])))
    limits = KinematicLimits(**meta["limits"])
    return TrajectorySet(trajectories=trajectories, epsilon=float(meta["epsilon"])), limits
