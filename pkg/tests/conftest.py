import json

import numpy as np
import pytest

from trajgate import trajset
from trajgate.map_model import HdMap, LaneSegment


@pytest.fixture(scope="session")
def small_grid():
    return trajset.ControlGrid(
        speeds=np.linspace(0.0, 25.0, 13),
        accels=np.linspace(-8.0, 8.0, 5),
        curvatures=np.linspace(-0.3, 0.3, 11),
    )


@pytest.fixture(scope="session")
def small_set(small_grid):
    limits = trajset.KinematicLimits()
    pool = trajset.generate_pool(limits, controls=small_grid)
    return trajset.coverage_reduce(pool, 2.0)


@pytest.fixture(scope="session")
def default_set():
    limits = trajset.KinematicLimits()
    pool = trajset.generate_pool(limits)
    pool = trajset.kinematic_filter(pool, limits)
    return trajset.coverage_reduce(pool, 2.0)


def straight_lane_map(width: float = 3.5, lane_id: str = "L1") -> HdMap:
    lane = LaneSegment(
        id=lane_id,
        centerline=np.array([[-80.0, 0.0], [0.0, 0.0], [90.0, 0.0]]),
        width=width,
    )
    return HdMap(lanes={lane_id: lane}, frame="test")


def write_map_json(path, payload: dict) -> None:
    path.write_text(json.dumps(payload), encoding="utf-8")
