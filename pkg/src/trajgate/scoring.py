"""Scoring mathematics: soft target probabilities over feasible trajectories,
cross-entropy against predicted scores, a reference multi-head attention
forward pass, top-k selection, and the evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import PackedRegion, trajectory_in_region
from .trajset import stack_waypoints, waypoints_of

PROB_FLOOR = 1e-12  # floor inside log; affects losses above ~27.6 nats only
MISS_THRESHOLD_M = 2.0


class ScoringError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ScoreVector:
    """Per-trajectory scores, either raw logits or normalized probabilities."""

    values: np.ndarray
    kind: str = "logits"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1:
            raise ScoringError("score vector must be one-dimensional")
        if self.kind not in ("logits", "probabilities"):
            raise ScoringError(f"unknown score kind {self.kind!r}")
        if self.kind == "probabilities":
            if np.any(vals < 0.0) or abs(float(vals.sum()) - 1.0) > 1e-9:
                raise ScoringError("probabilities must be non-negative and sum to 1")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size

    def probabilities(self) -> np.ndarray:
        if self.kind == "probabilities":
            return self.values
        return _softmax(self.values)


@dataclass(frozen=True, eq=False)
class TargetDistribution:
    """Soft targets: temperature softmax of negative distances over the k_top
    support, zero elsewhere."""

    psi: np.ndarray
    tau: float
    k_top: int
    support: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=np.float64)
        support = np.asarray(self.support, dtype=np.int64)
        if not (self.tau > 0.0):
            raise ScoringError(f"temperature must be positive, got {self.tau}")
        if abs(float(psi[support].sum()) - 1.0) > 1e-9:
            raise ScoringError("target distribution must sum to 1 over its support")
        off = np.ones(psi.size, dtype=bool)
        off[support] = False
        if np.any(psi[off] != 0.0):
            raise ScoringError("target distribution must be zero off its support")
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "support", support)


def _softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def trajectory_distances(feasible, gt) -> np.ndarray:
    """Per-trajectory max-over-time squared L2 distance to the ground truth."""
    trajs = stack_waypoints(feasible)
    gt_wps = waypoints_of(gt)
    if trajs.shape[1:] != gt_wps.shape:
        raise ScoringError(f"length mismatch: {trajs.shape[1:]} vs {gt_wps.shape}")
    d = trajs - gt_wps[None]
    return (d * d).sum(axis=2).max(axis=1)


def soft_targets(feasible, gt, tau: float = 1.0, k_top: int = 6) -> TargetDistribution:
    """Ground-truth-derived target probabilities over the feasible set.

    Distances use the squared-max trajectory metric; the k_top closest
    trajectories form the support and the softmax of -dist/tau normalizes
    over that support only.
    """
    if len(feasible) == 0:
        raise ScoringError("soft_targets on an empty feasible set")
    if not (tau > 0.0):
        raise ScoringError(f"temperature must be positive, got {tau}")
    if k_top < 1:
        raise ScoringError(f"k_top must be at least 1, got {k_top}")
    d = trajectory_distances(feasible, gt)
    k = min(k_top, d.size)
    support = np.sort(np.argsort(d, kind="stable")[:k])
    psi = np.zeros(d.size)
    psi[support] = _softmax(-d[support] / tau)
    return TargetDistribution(psi=psi, tau=float(tau), k_top=k, support=support)


def classification_loss(predicted: ScoreVector, targets: TargetDistribution) -> float:
    """Cross-entropy H(psi, gamma) with gamma = softmax of the predicted
    logits restricted to the target support (probability kinds renormalize)."""
    if len(predicted) != targets.psi.size:
        raise ScoringError(
            f"length mismatch: {len(predicted)} scores vs {targets.psi.size} targets"
        )
    support = targets.support
    if predicted.kind == "logits":
        gamma = _softmax(predicted.values[support])
    else:
        sub = predicted.values[support]
        total = float(sub.sum())
        if total <= 0.0:
            raise ScoringError("predicted probabilities vanish on the target support")
        gamma = sub / total
    return float(-(targets.psi[support] * np.log(np.maximum(gamma, PROB_FLOOR))).sum())


@dataclass(frozen=True, eq=False)
class AttentionWeights:
    """Square projection matrices for queries, keys, values and output."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray

    def __post_init__(self):
        mats = {}
        d = None
        for name in ("wq", "wk", "wv", "wo"):
            m = np.asarray(getattr(self, name), dtype=np.float64)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ScoringError(f"{name} must be square, got shape {m.shape}")
            d = d if d is not None else m.shape[0]
            if m.shape[0] != d:
                raise ScoringError("projection matrices must share one dimension")
            mats[name] = m
        for name, m in mats.items():
            object.__setattr__(self, name, m)

    @property
    def d_model(self) -> int:
        return self.wq.shape[0]


@dataclass(frozen=True, eq=False)
class AttentionBlockSpec:
    d_model: int = 128
    n_heads: int = 8
    weights: AttentionWeights | None = None

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ScoringError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if self.weights is not None and self.weights.d_model != self.d_model:
            raise ScoringError("weight matrices do not match d_model")

    @property
    def d_k(self) -> int:
        return self.d_model // self.n_heads


def seeded_attention_weights(d_model: int = 128, seed: int = 0) -> AttentionWeights:
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(d_model)
    wq, wk, wv, wo = (rng.standard_normal((d_model, d_model)) * scale for _ in range(4))
    return AttentionWeights(wq=wq, wk=wk, wv=wv, wo=wo)


def identity_attention_weights(d_model: int = 128) -> AttentionWeights:
    eye = np.eye(d_model)
    return AttentionWeights(wq=eye, wk=eye, wv=eye, wo=eye)


def save_attention_weights(weights: AttentionWeights, path) -> None:
    np.savez(Path(path), wq=weights.wq, wk=weights.wk, wv=weights.wv, wo=weights.wo)


def load_attention_weights(path) -> AttentionWeights:
    with np.load(Path(path)) as data:
        return AttentionWeights(wq=data["wq"], wk=data["wk"], wv=data["wv"], wo=data["wo"])


def attention_forward(queries, memory, spec: AttentionBlockSpec, return_weights: bool = False):
    """Multi-head scaled dot-product attention with keys and values projected
    from ``memory``: per head, softmax(Q K^T / sqrt(d_k)) V, heads concatenated
    and passed through the output projection."""
    if spec.weights is None:
        raise ScoringError("attention weights not loaded")
    q_in = np.asarray(queries, dtype=np.float64)
    m_in = np.asarray(memory, dtype=np.float64)
    if q_in.ndim != 2 or q_in.shape[1] != spec.d_model:
        raise ScoringError(f"queries must be (S_q, {spec.d_model}), got {q_in.shape}")
    if m_in.ndim != 2 or m_in.shape[1] != spec.d_model:
        raise ScoringError(f"memory must be (S_k, {spec.d_model}), got {m_in.shape}")
    w = spec.weights
    d_k = spec.d_k
    out = np.empty((q_in.shape[0], spec.d_model))
    attn_per_head = np.empty((spec.n_heads, q_in.shape[0], m_in.shape[0]))
    for h in range(spec.n_heads):
        cols = slice(h * d_k, (h + 1) * d_k)
        q = q_in @ w.wq[:, cols]
        k = m_in @ w.wk[:, cols]
        v = m_in @ w.wv[:, cols]
        attn = _softmax(q @ k.T / np.sqrt(d_k), axis=-1)
        attn_per_head[h] = attn
        out[:, cols] = attn @ v
    out = out @ w.wo
    if return_weights:
        return out, attn_per_head
    return out


def select_topk(scores: ScoreVector, feasible, k: int) -> list:
    """The k trajectories with highest predicted probability, descending,
    ties broken by ascending index. Returns (trajectory, probability) pairs."""
    n = len(feasible)
    if len(scores) != n:
        raise ScoringError(f"score length {len(scores)} != feasible set size {n}")
    if not (1 <= k <= n):
        raise ScoringError(f"k must be in [1, {n}], got {k}")
    p = scores.probabilities()
    order = np.lexsort((np.arange(n), -p))[:k]
    return [(feasible[i], float(p[i])) for i in order]


def ade(prediction, gt) -> float:
    """Mean per-step Euclidean error (meters)."""
    p, g = waypoints_of(prediction), waypoints_of(gt)
    if p.shape != g.shape:
        raise ScoringError(f"length mismatch: {p.shape} vs {g.shape}")
    d = p - g
    return float(np.hypot(d[:, 0], d[:, 1]).mean())


def fde(prediction, gt) -> float:
    """Final-step Euclidean error (meters)."""
    p, g = waypoints_of(prediction), waypoints_of(gt)
    if p.shape != g.shape:
        raise ScoringError(f"length mismatch: {p.shape} vs {g.shape}")
    return float(np.hypot(p[-1, 0] - g[-1, 0], p[-1, 1] - g[-1, 1]))


def metrics(predictions, gt, map_region, algo: str = "ray_cast") -> dict:
    """Per-scene {minADE, minFDE, MR, DAC} for k predictions.

    MR is the scene indicator (1 when every predicted endpoint misses the
    ground-truth endpoint by more than 2 m); callers average it over scenes.
    DAC counts boundary waypoints as compliant: (a - b)/a with b the number
    of predictions leaving the drivable region.
    """
    if len(predictions) == 0:
        raise ScoringError("metrics on an empty prediction list")
    ades = [ade(p, gt) for p in predictions]
    fdes = [fde(p, gt) for p in predictions]
    region = map_region if isinstance(map_region, PackedRegion) else PackedRegion.from_polygons(map_region)
    off_road = sum(0 if trajectory_in_region(p, region, algo=algo) else 1 for p in predictions)
    a = len(predictions)
    return {
        "minADE": min(ades),
        "minFDE": min(fdes),
        "MR": 1.0 if min(fdes) > MISS_THRESHOLD_M else 0.0,
        "DAC": (a - off_road) / a,
    }
