"""FastAPI service wrapping the refinement toolkit.

The service is stateless: maps, scenes, and trajectory sets travel inline in
request bodies, so any number of clients can share one instance.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..bench import BenchGateError, bench_csv, run_bench
from ..fixtures import FixtureError, make_fixture, write_fixture
from ..geometry import GeometryError
from ..map_model import MapError, map_from_dict, map_to_dict
from ..pipeline import run_eval, run_gen_set, run_refine
from ..refinement import RefineConfig, RefinementError, Scene, scene_from_dict, scene_to_dict
from ..scoring import ScoringError
from ..trajset import (
    ControlGrid,
    KinematicLimits,
    Trajectory,
    TrajectoryError,
    TrajectorySet,
    default_control_grid,
)
from . import schemas

_DOMAIN_ERRORS = (
    MapError,
    TrajectoryError,
    RefinementError,
    GeometryError,
    ScoringError,
    FixtureError,
    ValueError,
)

app = FastAPI(title="trajgate", version=__version__)


def _domain(call, *args, **kwargs):
    try:
        return call(*args, **kwargs)
    except _DOMAIN_ERRORS as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


def _to_map(payload: schemas.MapPayload):
    return map_from_dict(payload.model_dump())


def _to_scene(payload: schemas.ScenePayload, hdmap) -> Scene:
    return scene_from_dict(payload.model_dump(), hdmap)


def _to_set(payload: schemas.SetPayload) -> tuple[TrajectorySet, KinematicLimits]:
    trajectories = [Trajectory(np.asarray(t, dtype=np.float64)) for t in payload.trajectories]
    limits = KinematicLimits(**payload.limits.model_dump())
    return TrajectorySet(trajectories=trajectories, epsilon=payload.epsilon), limits


def _to_config(options: schemas.RefineOptions) -> RefineConfig:
    return RefineConfig(
        window_radius=options.window_radius,
        algo=options.algo,
        workers=options.workers,
        use_local_buffer=options.use_local_buffer,
        heading_tolerance=options.heading_tolerance,
        goal_radius=options.goal_radius,
        speed_filter=options.speed_filter,
    )


@app.get("/health", response_model=schemas.HealthResponse)
def health() -> schemas.HealthResponse:
    return schemas.HealthResponse(status="ok", version=__version__)


@app.post("/v1/set/generate", response_model=schemas.GenSetResponse)
def generate_set(req: schemas.GenSetRequest) -> schemas.GenSetResponse:
    limits = _domain(KinematicLimits, **req.limits.model_dump())
    grid = default_control_grid(limits)
    if any(v is not None for v in (req.n_speeds, req.n_accels, req.n_curvatures)):
        grid = _domain(
            ControlGrid,
            speeds=np.linspace(0.0, limits.max_speed, req.n_speeds or grid.speeds.size),
            accels=np.linspace(-limits.max_accel, limits.max_accel, req.n_accels or grid.accels.size),
            curvatures=np.linspace(
                -limits.max_curvature, limits.max_curvature, req.n_curvatures or grid.curvatures.size
            ),
        )
    out = _domain(run_gen_set, epsilon=req.epsilon, seed=req.seed, limits=limits, grid=grid)
    return schemas.GenSetResponse(
        csv=out["csv"], metadata=out["metadata"], size=out["size"],
        pool_size=out["pool_size"], max_nn_dist=out["max_nn_dist"],
    )


@app.post("/v1/refine", response_model=schemas.RefineResponse)
def refine_endpoint(req: schemas.RefineRequest) -> schemas.RefineResponse:
    hdmap = _domain(_to_map, req.map)
    scene = _domain(_to_scene, req.scene, hdmap)
    ts, _ = _domain(_to_set, req.set)
    payload, stats = _domain(run_refine, hdmap, scene, ts, _to_config(req.options))
    return schemas.RefineResponse(
        fallback=payload["fallback"],
        frame=schemas.FramePayload(**payload["frame"]),
        survivor_indices=payload["survivor_indices"],
        goal_lanes=schemas.GoalLanesPayload(**payload["goal_lanes"]),
        stats=stats,
    )


@app.post("/v1/eval", response_model=schemas.EvalResponse)
def eval_endpoint(req: schemas.EvalRequest) -> schemas.EvalResponse:
    hdmap = _domain(_to_map, req.map)
    names = req.scene_names or [f"scene{i}" for i in range(len(req.scenes))]
    if len(names) != len(req.scenes):
        raise HTTPException(status_code=400, detail="scene_names length mismatch")
    scenes = [(name, _domain(_to_scene, s, hdmap)) for name, s in zip(names, req.scenes)]
    ts, _ = _domain(_to_set, req.set)
    out = _domain(
        run_eval, hdmap, scenes, ts,
        tau=req.tau, k_top=req.k_top, k_eval=req.k_eval,
        config=_to_config(req.options), stub_seed=req.stub_seed,
    )
    return schemas.EvalResponse(scenes=out["scenes"], aggregate=out["aggregate"])


@app.post("/v1/bench", response_model=schemas.BenchResponse)
def bench_endpoint(req: schemas.BenchRequest) -> schemas.BenchResponse:
    try:
        report = run_bench(
            n_points=req.n_points, n_polys=req.n_polys, seed=req.seed, repeats=req.repeats,
            set_arr=None if req.set_size == 2800 else _sized_set(req.set_size),
        )
    except BenchGateError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return schemas.BenchResponse(
        rows=[vars(r) for r in report.rows],
        environment=report.environment,
        checks_verified=report.checks_verified,
        csv=bench_csv(report),
    )


def _sized_set(size: int) -> np.ndarray:
    from ..bench import _default_bench_set

    return _default_bench_set(size)


@app.post("/v1/fixture", response_model=schemas.FixtureResponse)
def fixture_endpoint(req: schemas.FixtureRequest) -> schemas.FixtureResponse:
    hdmap, scene = _domain(make_fixture, req.spec, req.seed)
    return schemas.FixtureResponse(
        map=map_to_dict(hdmap),
        scene=scene_to_dict(scene, "map.json"),
    )
