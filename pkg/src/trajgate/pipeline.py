"""End-to-end orchestration shared by the service and the CLI: set
generation, per-scene refinement, and batch evaluation with both the
deterministic stub scorer and the ground-truth oracle scorer."""

from __future__ import annotations

import time

import numpy as np

from .geometry import PackedRegion, to_local
from .map_model import HdMap, QueryWindow
from .refinement import RefineConfig, RefineResult, Scene, lower_bound, refine_scene
from .scoring import (
    AttentionBlockSpec,
    AttentionWeights,
    ScoreVector,
    attention_forward,
    metrics,
    select_topk,
    soft_targets,
)
from .trajset import (
    HORIZON_STEPS,
    ControlGrid,
    KinematicLimits,
    TrajectorySet,
    coverage_reduce,
    default_control_grid,
    generate_pool,
    kinematic_filter,
    max_nn_distance,
    set_metadata,
    set_to_csv,
    stack_waypoints,
)


def run_gen_set(epsilon: float = 2.0, seed: int = 0,
                limits: KinematicLimits | None = None,
                grid: ControlGrid | None = None) -> dict:
    """Generate, filter, and coverage-reduce the candidate set.

    The rollout grid is deterministic; the seed is recorded for provenance
    and reserved for future stochastic grids.
    """
    limits = limits or KinematicLimits()
    grid = grid or default_control_grid(limits)
    pool = generate_pool(limits, controls=grid)
    pool = kinematic_filter(pool, limits)
    ts = coverage_reduce(pool, epsilon)
    return {
        "csv": set_to_csv(ts),
        "metadata": set_metadata(ts, limits),
        "size": len(ts),
        "pool_size": len(pool),
        "max_nn_dist": max_nn_distance(pool, ts.trajectories),
        "seed": seed,
    }


def _goal_lanes_payload(goals) -> dict:
    return {
        "lane_ids": [list(chain) for chain in goals.lane_ids],
        "points": goals.lanes.tolist(),
    }


def refine_output(result: RefineResult) -> dict:
    """The refinement output object (spec'd file schema)."""
    frame = result.feasible.frame
    return {
        "fallback": result.feasible.fallback,
        "frame": {"origin": [frame.origin[0], frame.origin[1]], "theta": frame.theta},
        "survivor_indices": result.feasible.source_indices.tolist(),
        "goal_lanes": _goal_lanes_payload(result.goal_lanes),
    }


def run_refine(hdmap: HdMap, scene: Scene, ts: TrajectorySet,
               config: RefineConfig | None = None) -> tuple[dict, dict]:
    """Refine one scene; returns (output payload, run stats)."""
    config = config or RefineConfig()
    t0 = time.perf_counter()
    result = refine_scene(scene, ts, config=config)
    wall_ms = (time.perf_counter() - t0) * 1e3
    stats = {
        "survivors": len(result.feasible),
        "fallback": result.feasible.fallback,
        "goal_lanes": result.goal_lanes.count,
        "wall_time_ms": wall_ms,
    }
    return refine_output(result), stats


def _stub_attention_weights(rng: np.random.Generator, d_model: int) -> AttentionWeights:
    scale = 1.0 / np.sqrt(d_model)
    wq, wk, wv, wo = (rng.standard_normal((d_model, d_model)) * scale for _ in range(4))
    return AttentionWeights(wq=wq, wk=wk, wv=wv, wo=wo)


def stub_scores(feasible_local, goals, seed: int = 0, d_model: int = 128,
                n_heads: int = 8) -> ScoreVector:
    """Deterministic untrained scorer standing in for the learned network.

    Seeded linear featurizers project trajectories and goal lanes to d_model,
    a cross-attention block mixes trajectories with lanes, a self-attention
    block mixes trajectories with each other, and a linear head emits logits.
    """
    rng = np.random.default_rng(seed)
    w_traj = rng.standard_normal((2 * HORIZON_STEPS, d_model)) / np.sqrt(2 * HORIZON_STEPS)
    w_lane = rng.standard_normal((3, d_model)) / np.sqrt(3.0)
    cross = AttentionBlockSpec(d_model=d_model, n_heads=n_heads,
                               weights=_stub_attention_weights(rng, d_model))
    self_attn = AttentionBlockSpec(d_model=d_model, n_heads=n_heads,
                                   weights=_stub_attention_weights(rng, d_model))
    w_head = rng.standard_normal(d_model) / np.sqrt(d_model)

    trajs = stack_waypoints(feasible_local)
    emb = (trajs.reshape(len(trajs), -1) / 100.0) @ w_traj
    if goals is not None and goals.count > 0:
        lane_feats = goals.lanes.copy()
        valid_mask = lane_feats[:, :, 2] == 1.0
        for i in range(lane_feats.shape[0]):  # center valid stations per lane
            lane_feats[i, valid_mask[i], :2] -= lane_feats[i, valid_mask[i], :2].mean(axis=0)
        lane_feats[:, :, :2] /= 100.0
        station_emb = lane_feats @ w_lane
        valid = goals.lanes[:, :, 2]
        denom = np.maximum(valid.sum(axis=1, keepdims=True), 1.0)
        lane_emb = (station_emb * valid[:, :, None]).sum(axis=1) / denom
        emb = attention_forward(emb, lane_emb, cross)
    emb = attention_forward(emb, emb, self_attn)
    return ScoreVector(values=emb @ w_head, kind="logits")


def _eval_scene(result: RefineResult, scene: Scene, tau: float, k_top: int,
                k_eval: int, stub_seed: int, algo: str) -> dict:
    feasible = result.feasible
    frame = feasible.frame
    gt_city = scene.ground_truth
    gt_local = to_local(frame, gt_city.waypoints)
    region = PackedRegion.from_polygons(result.region)

    lb_ade, lb_fde = lower_bound(result.city_survivors, gt_city)
    psi = soft_targets(feasible.trajectories, gt_local, tau=tau, k_top=k_top)
    scorers = {
        "stub": stub_scores(feasible.trajectories, result.goal_lanes, seed=stub_seed),
        "oracle": ScoreVector(values=psi.psi, kind="probabilities"),
    }
    record = {
        "survivors": len(feasible),
        "fallback": feasible.fallback,
        "lower_bound": {"minADE": lb_ade, "minFDE": lb_fde},
    }
    for name, scores in scorers.items():
        per_k = {}
        for k in sorted({1, k_eval}):
            k_used = min(k, len(feasible))
            top = select_topk(scores, list(result.city_survivors), k_used)
            per_k[f"k{k}"] = metrics([t for t, _ in top], gt_city, region, algo=algo)
        record[name] = per_k
    return record


def run_eval(hdmap: HdMap, scenes: list[tuple[str, Scene]], ts: TrajectorySet,
             tau: float = 1.0, k_top: int = 6, k_eval: int = 6,
             config: RefineConfig | None = None, stub_seed: int = 0) -> dict:
    """Refine and score a batch of scenes; per-scene and aggregate metrics.

    Every scene needs ground truth. MR aggregates as the ratio of missed
    scenes; other metrics aggregate as scene means.
    """
    config = config or RefineConfig()
    per_scene = []
    for name, scene in scenes:
        if scene.ground_truth is None:
            raise ValueError(f"scene {name!r} has no ground truth")
        result = refine_scene(scene, ts, config=config)
        record = _eval_scene(result, scene, tau, k_top, k_eval, stub_seed, config.algo)
        record["scene"] = name
        per_scene.append(record)

    def _mean(path_fn) -> float:
        return float(np.mean([path_fn(r) for r in per_scene]))

    aggregate: dict = {
        "scenes": len(per_scene),
        "lower_bound": {
            "minADE": _mean(lambda r: r["lower_bound"]["minADE"]),
            "minFDE": _mean(lambda r: r["lower_bound"]["minFDE"]),
        },
    }
    for scorer in ("stub", "oracle"):
        aggregate[scorer] = {}
        for k in sorted({1, k_eval}):
            key = f"k{k}"
            aggregate[scorer][key] = {
                metric: _mean(lambda r, s=scorer, kk=key, m=metric: r[s][kk][m])
                for metric in ("minADE", "minFDE", "MR", "DAC")
            }
    return {"scenes": per_scene, "aggregate": aggregate}
