"""Pydantic request/response models for the service wire format."""

from __future__ import annotations

import math
from typing import Optional

from pydantic import BaseModel, Field, field_validator


class LanePayload(BaseModel):
    id: str
    width: float
    centerline: list[list[float]]
    successors: list[str] = Field(default_factory=list)
    predecessors: list[str] = Field(default_factory=list)


class MapPayload(BaseModel):
    frame: str
    lanes: list[LanePayload]


class ActorPayload(BaseModel):
    id: str
    observed: list[Optional[list[float]]]


class ScenePayload(BaseModel):
    target: str
    actors: list[ActorPayload]
    ground_truth: Optional[list[list[float]]] = None


class LimitsPayload(BaseModel):
    max_speed: float = 25.0
    max_accel: float = 8.0
    max_curvature: float = 0.3


class SetPayload(BaseModel):
    epsilon: float
    trajectories: list[list[list[float]]]
    limits: LimitsPayload = Field(default_factory=LimitsPayload)


class RefineOptions(BaseModel):
    window_radius: Optional[float] = None
    algo: str = "ray_cast"
    workers: int = 1
    use_local_buffer: bool = True
    heading_tolerance: float = math.pi / 2
    goal_radius: float = 100.0
    speed_filter: Optional[float] = None

    @field_validator("algo")
    @classmethod
    def _check_algo(cls, v: str) -> str:
        if v not in ("ray_cast", "winding"):
            raise ValueError(f"algo must be ray_cast or winding, got {v!r}")
        return v

    @field_validator("workers")
    @classmethod
    def _check_workers(cls, v: int) -> int:
        if v < 1:
            raise ValueError("workers must be at least 1")
        return v


class GenSetRequest(BaseModel):
    epsilon: float = 2.0
    seed: int = 0
    limits: LimitsPayload = Field(default_factory=LimitsPayload)
    n_speeds: Optional[int] = None
    n_accels: Optional[int] = None
    n_curvatures: Optional[int] = None


class GenSetResponse(BaseModel):
    csv: str
    metadata: dict
    size: int
    pool_size: int
    max_nn_dist: float


class RefineRequest(BaseModel):
    map: MapPayload
    scene: ScenePayload
    set: SetPayload
    options: RefineOptions = Field(default_factory=RefineOptions)


class FramePayload(BaseModel):
    origin: list[float]
    theta: float


class GoalLanesPayload(BaseModel):
    lane_ids: list[list[str]]
    points: list[list[list[float]]]


class RefineResponse(BaseModel):
    fallback: bool
    frame: FramePayload
    survivor_indices: list[int]
    goal_lanes: GoalLanesPayload
    stats: dict


class EvalRequest(BaseModel):
    map: MapPayload
    scenes: list[ScenePayload]
    scene_names: Optional[list[str]] = None
    set: SetPayload
    tau: float = 1.0
    k_top: int = 6
    k_eval: int = 6
    stub_seed: int = 0
    options: RefineOptions = Field(default_factory=RefineOptions)


class EvalResponse(BaseModel):
    scenes: list[dict]
    aggregate: dict


class BenchRequest(BaseModel):
    n_points: int = 1_000_000
    n_polys: int = 4
    seed: int = 0
    set_size: int = 2800
    repeats: int = 3


class BenchResponse(BaseModel):
    rows: list[dict]
    environment: dict
    checks_verified: int
    csv: str


class FixtureRequest(BaseModel):
    spec: str
    seed: int = 0


class FixtureResponse(BaseModel):
    map: dict
    scene: dict


class HealthResponse(BaseModel):
    status: str
    version: str
