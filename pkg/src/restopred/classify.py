"""t-SNE embedding of the clustered training set and distance-based routing
of unseen outages onto a learned cluster.

The embedding is the exact algorithm: per-point Gaussian bandwidths calibrated
by bisection to a target perplexity, symmetrized joint probabilities, Student-t
low-dimensional affinities, and KL-divergence gradient descent with momentum
and early exaggeration. Out-of-sample points are placed by kernel-weighted
interpolation over the training map (t-SNE itself has no native transform); a
slow "rerun" mode re-optimizes with the point appended, for verification.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .errors import TsneError

logger = logging.getLogger(__name__)

_TINY = 1e-300


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    n_iter: int = 1000
    learning_rate: float = 200.0
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    seed: int = 0

    def __post_init__(self) -> None:
        if self.perplexity <= 1:
            raise ValueError("perplexity must exceed 1")
        if self.n_iter < 1 or self.learning_rate <= 0:
            raise ValueError("n_iter and learning_rate must be positive")
        if not (0 <= self.momentum_early < 1 and 0 <= self.momentum_late < 1):
            raise ValueError("momenta must lie in [0, 1)")
        if self.early_exaggeration < 1 or self.exaggeration_iters < 0:
            raise ValueError("early_exaggeration must be >= 1 with non-negative duration")


@dataclass
class TsneMap:
    points: np.ndarray        # m x 2
    labels: np.ndarray        # m cluster ids
    kl_trace: np.ndarray      # KL against the true joints, length n_iter + 1
    config: TsneConfig
    high_dim_ref: np.ndarray  # retained standardized feature rows
    bandwidths: np.ndarray    # fitted per-point Gaussian variances


def conditional_bandwidths(
    d2: np.ndarray, perplexity: float, max_steps: int = 64
) -> tuple[np.ndarray, np.ndarray]:
    """Calibrate per-point Gaussian variances so each conditional distribution
    hits the target perplexity.

    Bisection runs on the precision beta = 1 / (2 variance) until the entropy
    matches log(perplexity) within 1e-5 nats (tighter than the 1e-3 perplexity
    budget asserted by fit_tsne), capped at ``max_steps`` halvings.
    Returns (conditional probabilities with zero diagonal, variances).
    """
    m = d2.shape[0]
    target = float(np.log(perplexity))
    P = np.zeros_like(d2)
    variances = np.empty(m)
    off = ~np.eye(m, dtype=bool)
    for i in range(m):
        row = d2[i][off[i]]
        beta, beta_lo, beta_hi = 1.0, 0.0, np.inf
        p = np.empty_like(row)
        for _ in range(max_steps):
            np.exp(-row * beta, out=p)
            total = p.sum()
            if total <= 0:
                # all mass underflowed: beta is far too large
                entropy = -np.inf
            else:
                p /= total
                entropy = float(np.log(total) + beta * (row @ p))
            diff = entropy - target
            if abs(diff) <= 1e-5:
                break
            if diff > 0:
                beta_lo = beta
                beta = beta * 2.0 if not np.isfinite(beta_hi) else 0.5 * (beta + beta_hi)
            else:
                beta_hi = beta
                beta = beta / 2.0 if beta_lo == 0.0 else 0.5 * (beta + beta_lo)
        P[i][off[i]] = p
        variances[i] = 1.0 / (2.0 * beta)
    return P, variances


def joint_probabilities(
    X: np.ndarray, perplexity: float
) -> tuple[np.ndarray, np.ndarray]:
    """Symmetrized joint probabilities P and the fitted per-point variances."""
    d2 = cdist(X, X, "sqeuclidean")
    cond, variances = conditional_bandwidths(d2, perplexity)
    P = (cond + cond.T) / (2.0 * X.shape[0])
    return P, variances


def kl_and_grad(P: np.ndarray, Y: np.ndarray) -> tuple[float, np.ndarray]:
    """KL divergence between the joints P and the Student-t affinities of Y,
    with its gradient 4 * sum_j (P_ij - q_ij)(Y_i - Y_j)(1 + ||Y_i - Y_j||^2)^-1."""
    num = 1.0 / (1.0 + cdist(Y, Y, "sqeuclidean"))
    np.fill_diagonal(num, 0.0)
    Q = num / num.sum()
    mask = P > 0
    kl = float(np.sum(P[mask] * np.log(P[mask] / np.maximum(Q[mask], _TINY))))
    PQ = (P - Q) * num
    grad = 4.0 * (Y * PQ.sum(axis=1)[:, None] - PQ @ Y)
    return kl, grad


def fit_tsne(X: np.ndarray, labels: np.ndarray, cfg: TsneConfig) -> TsneMap:
    """Fit the 2-D map. Raises if any point misses its perplexity target by
    more than 1e-3 or the KL turns non-finite."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    m = X.shape[0]
    if m < 10:
        raise TsneError(f"need at least 10 samples, got {m}")
    if labels.shape[0] != m:
        raise ValueError("labels must align with rows")
    if cfg.perplexity >= m / 3:
        raise TsneError(f"perplexity {cfg.perplexity} infeasible for m={m} (needs < m/3)")

    P, variances = joint_probabilities(X, cfg.perplexity)
    achieved = _achieved_perplexity(cdist(X, X, "sqeuclidean"), variances)
    worst = float(np.abs(achieved - cfg.perplexity).max())
    if worst > 1e-3:
        raise TsneError(f"perplexity calibration off by {worst:g} (> 1e-3)")

    rng = np.random.default_rng(cfg.seed)
    Y = rng.normal(0.0, 1e-4, size=(m, 2))
    vel = np.zeros_like(Y)
    trace = np.empty(cfg.n_iter + 1)
    # KL(P||Q) = sum P log P - sum P log Q; the first term is constant and
    # log Q = -log1p(d^2) - log(sum num), so the trace costs no extra pass
    nz = P > 0
    p_log_p = float(np.sum(P[nz] * np.log(P[nz])))
    for it in range(cfg.n_iter + 1):
        d2 = cdist(Y, Y, "sqeuclidean")
        num = 1.0 / (1.0 + d2)
        np.fill_diagonal(num, 0.0)
        num_sum = num.sum()
        kl = p_log_p + float(np.vdot(P, np.log1p(d2))) + np.log(num_sum)
        if not np.isfinite(kl):
            raise TsneError(f"non-finite KL at iteration {it}")
        trace[it] = kl
        if it == cfg.n_iter:
            break
        exaggerate = it < cfg.exaggeration_iters
        P_eff = P * cfg.early_exaggeration if exaggerate else P
        PQ = (P_eff - num / num_sum) * num
        grad = 4.0 * (Y * PQ.sum(axis=1)[:, None] - PQ @ Y)
        momentum = cfg.momentum_early if exaggerate else cfg.momentum_late
        vel = momentum * vel - cfg.learning_rate * grad
        Y = Y + vel
        Y = Y - Y.mean(axis=0)
    return TsneMap(
        points=Y,
        labels=labels.copy(),
        kl_trace=trace,
        config=cfg,
        high_dim_ref=X.copy(),
        bandwidths=variances,
    )


def _achieved_perplexity(d2: np.ndarray, variances: np.ndarray) -> np.ndarray:
    m = d2.shape[0]
    out = np.empty(m)
    off = ~np.eye(m, dtype=bool)
    for i in range(m):
        row = d2[i][off[i]]
        p = np.exp(-row / (2.0 * variances[i]))
        total = p.sum()
        p /= total
        entropy = float(np.log(total) + (row @ p) / (2.0 * variances[i]))
        out[i] = np.exp(entropy)
    return out


def embed_unseen(tsne_map: TsneMap, x: np.ndarray, method: str = "kernel") -> np.ndarray:
    """Place one standardized feature row on the fitted 2-D map.

    ``kernel``: Gaussian-weighted average of the training map points, with the
    bandwidth borrowed from the nearest training point; the result is a convex
    combination of map points and is fully deterministic. ``rerun``: refit
    t-SNE with the row appended (slow; verification only).
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if x.shape[1] != tsne_map.high_dim_ref.shape[1]:
        raise ValueError("feature width does not match the fitted map")
    if method == "rerun":
        stacked = np.vstack([tsne_map.high_dim_ref, x])
        labels = np.concatenate([tsne_map.labels, [-1]])
        refit = fit_tsne(stacked, labels, tsne_map.config)
        return refit.points[-1]
    if method != "kernel":
        raise ValueError(f"unknown method {method!r}")
    return embed_unseen_many(tsne_map, x)[0]


def embed_unseen_many(tsne_map: TsneMap, X: np.ndarray) -> np.ndarray:
    """Vectorized kernel placement of many rows."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    d2 = cdist(X, tsne_map.high_dim_ref, "sqeuclidean")
    nearest = d2.argmin(axis=1)
    var = tsne_map.bandwidths[nearest]
    w = np.exp(-d2 / (2.0 * var[:, None]))
    sums = w.sum(axis=1)
    dead = sums <= 0
    if dead.any():
        # numerically isolated rows collapse onto their nearest map point
        w[dead] = 0.0
        w[dead, nearest[dead]] = 1.0
        sums[dead] = 1.0
    w /= sums[:, None]
    return w @ tsne_map.points


def route(
    tsne_map: TsneMap, x: np.ndarray, method: str = "kernel"
) -> tuple[int, dict[int, float]]:
    """Route one unseen row: embed it, then measure the edge distance to each
    cluster (minimum distance to any of its map points) and take the argmin.
    Ties go to the cluster with more members, then to the lower id.
    """
    y = embed_unseen(tsne_map, x, method=method)
    return _route_point(tsne_map, y)


def route_many(tsne_map: TsneMap, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batch routing; returns (cluster ids, per-cluster distance matrix whose
    columns follow np.unique(labels) order)."""
    Y = embed_unseen_many(tsne_map, X)
    ids = np.unique(tsne_map.labels)
    dists = np.column_stack(
        [cdist(Y, tsne_map.points[tsne_map.labels == c]).min(axis=1) for c in ids]
    )
    sizes = np.array([(tsne_map.labels == c).sum() for c in ids])
    # evaluate clusters in tie-break preference order (more members, lower id);
    # argmin keeps the first minimum, which is then the preferred one
    pref = sorted(range(ids.size), key=lambda j: (-sizes[j], ids[j]))
    routed = ids[np.array(pref)[dists[:, pref].argmin(axis=1)]]
    return routed, dists


def _route_point(tsne_map: TsneMap, y: np.ndarray) -> tuple[int, dict[int, float]]:
    ids = np.unique(tsne_map.labels)
    distances: dict[int, float] = {}
    for c in ids:
        pts = tsne_map.points[tsne_map.labels == c]
        distances[int(c)] = float(np.linalg.norm(pts - y, axis=1).min())
    best = min(
        ids,
        key=lambda c: (distances[int(c)], -int((tsne_map.labels == c).sum()), int(c)),
    )
    return int(best), distances


def export_plot_data(tsne_map: TsneMap, path: str | Path) -> None:
    """CSV of x, y, label for external figure generation."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "label"])
        for (x, y), label in zip(tsne_map.points, tsne_map.labels):
            writer.writerow([repr(float(x)), repr(float(y)), int(label)])
