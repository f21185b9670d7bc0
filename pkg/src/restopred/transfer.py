"""Similarity-weighted knowledge transfer across per-cluster training tasks.

A trained source task exposes a knowledge matrix (its standardized training
rows, their restoration times, and the flattened model parameters). Each
learning task is filtered against that knowledge, initialized by scaling the
source parameters with the inter-subset similarity, trained, and then becomes
the source for the next task in the chain.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import NeuralError, TransferError
from .neural import LmConfig, MlpArchitecture, RegressorModel, get_params, train_lm

logger = logging.getLogger(__name__)

#: below this similarity a scaled init is worse than a fresh random one
OMEGA_FALLBACK = 0.05


@dataclass
class KnowledgeMatrix:
    source_cluster: int
    features: np.ndarray   # standardized rows of the source training subset
    actual_rt: np.ndarray
    params: np.ndarray     # flattened trained parameters of the source model


@dataclass
class TransferPlan:
    source: int
    order: list[int]
    omega: dict[tuple[int, int], float]
    filter_percentile: float = 2.0

    def get_omega(self, a: int, b: int) -> float:
        if a == b:
            return 1.0
        return self.omega[(min(a, b), max(a, b))]


def similarity(A: np.ndarray, B: np.ndarray) -> float:
    """Similarity of two subsets: exp(-||mu_A - mu_B|| / s), with s the pooled
    mean distance of each subset's points to its own mean. Symmetric, 1 at
    identity, and in (0, 1] for any non-degenerate pair."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.size == 0 or B.size == 0:
        raise ValueError("subsets must be non-empty")
    if A.shape[1] != B.shape[1]:
        raise ValueError("subsets must share a feature space")
    mu_a = A.mean(axis=0)
    mu_b = B.mean(axis=0)
    gap = float(np.linalg.norm(mu_a - mu_b))
    spread = (
        np.linalg.norm(A - mu_a, axis=1).sum() + np.linalg.norm(B - mu_b, axis=1).sum()
    ) / (A.shape[0] + B.shape[0])
    if spread == 0.0:
        # two point masses: identical means similar, otherwise fall back to the gap scale
        if gap == 0.0:
            return 1.0
        logger.info("zero within-subset spread; scaling by the mean gap itself")
        spread = gap
    return float(math.exp(-gap / spread))


def pairwise_omega(subsets: Mapping[int, np.ndarray]) -> dict[tuple[int, int], float]:
    ids = sorted(subsets)
    out: dict[tuple[int, int], float] = {}
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            out[(a, b)] = similarity(subsets[a], subsets[b])
    return out


def choose_source(subsets: Mapping[int, np.ndarray]) -> int:
    """Cluster with the highest mean similarity to all others; ties go to the
    largest subset, then to the lowest id."""
    ids = sorted(subsets)
    if len(ids) < 2:
        raise ValueError("need at least 2 subsets")
    omega = pairwise_omega(subsets)
    best: tuple[float, int, int] | None = None
    for c in ids:
        mean_omega = float(
            np.mean([omega[(min(c, o), max(c, o))] for o in ids if o != c])
        )
        key = (-mean_omega, -len(subsets[c]), c)
        if best is None or key < best:
            best = key
            chosen = c
    return chosen


def transfer_init(
    source: KnowledgeMatrix, omega: float, n_params: int | None = None
) -> np.ndarray | None:
    """Initial parameter vector for a learning task: omega times the source
    parameters. Near-zero omega (< OMEGA_FALLBACK) returns None so the caller
    falls back to a random init; pure scaling that small destroys the signal."""
    if not 0.0 <= omega <= 1.0:
        raise ValueError(f"omega must lie in [0, 1], got {omega}")
    if n_params is not None and source.params.size != n_params:
        raise TransferError(
            f"architecture mismatch: source has {source.params.size} parameters, "
            f"learning task needs {n_params}"
        )
    if omega < OMEGA_FALLBACK:
        logger.info("omega=%.4f below fallback threshold; using random init", omega)
        return None
    return omega * source.params


@dataclass
class FilterResult:
    retained: np.ndarray
    removed: np.ndarray
    kept_idx: np.ndarray
    removed_idx: np.ndarray


def filter_learning_data(
    rows: np.ndarray, knowledge: KnowledgeMatrix, percentile: float
) -> FilterResult:
    """Drop the least source-like learning rows before training.

    Each row scores as the maximum Gaussian similarity to any knowledge row,
    with bandwidth sigma set to the median pairwise distance inside the
    knowledge matrix. Exactly ceil(percentile/100 * len(rows)) lowest-scoring
    rows are removed; score ties break on row content so the result does not
    depend on input order.
    """
    if not 0.0 <= percentile < 100.0:
        raise ValueError("percentile must lie in [0, 100)")
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[0]
    n_remove = math.ceil(percentile / 100.0 * n)
    if n_remove == 0:
        return FilterResult(rows, rows[:0], np.arange(n), np.arange(0))
    sigma = float(np.median(pdist(knowledge.features)))
    if sigma <= 0:
        sigma = 1.0
    min_d2 = cdist(rows, knowledge.features, "sqeuclidean").min(axis=1)
    scores = np.exp(-min_d2 / (2.0 * sigma**2))
    # primary key: score; secondary: row values, so permuted inputs agree
    order = np.lexsort(tuple(rows[:, c] for c in range(rows.shape[1] - 1, -1, -1)) + (scores,))
    removed_idx = np.sort(order[:n_remove])
    kept_idx = np.sort(order[n_remove:])
    return FilterResult(rows[kept_idx], rows[removed_idx], kept_idx, removed_idx)


@dataclass
class ChainResult:
    models: dict[int, RegressorModel]
    knowledge: dict[int, KnowledgeMatrix] = field(default_factory=dict)
    failed_task: int | None = None
    error: str | None = None


def train_chain(
    plan: TransferPlan,
    subsets: Mapping[int, tuple[np.ndarray, np.ndarray]],
    arch: MlpArchitecture,
    cfg: LmConfig,
) -> ChainResult:
    """Train the source from scratch, then every task in plan.order by
    recursive transfer: filter against the current source's knowledge matrix,
    initialize with omega-scaled source parameters, train, and promote the
    task to source. A training failure aborts the chain; the partial model map
    is returned with the failure flagged.
    """
    missing = [c for c in [plan.source, *plan.order] if c not in subsets]
    if missing:
        raise ValueError(f"plan references clusters without data: {missing}")
    X_src, y_src = subsets[plan.source]
    result = ChainResult(models={})
    try:
        source_model = train_lm(arch, X_src, y_src, cfg)
    except NeuralError as exc:
        result.failed_task = plan.source
        result.error = str(exc)
        return result
    result.models[plan.source] = source_model
    knowledge = KnowledgeMatrix(
        source_cluster=plan.source,
        features=np.asarray(X_src, dtype=float),
        actual_rt=np.asarray(y_src, dtype=float),
        params=get_params(source_model),
    )
    result.knowledge[plan.source] = knowledge

    current = plan.source
    for task in plan.order:
        X_task, y_task = subsets[task]
        filtered = filter_learning_data(np.asarray(X_task, dtype=float), knowledge,
                                        plan.filter_percentile)
        y_kept = np.asarray(y_task, dtype=float)[filtered.kept_idx]
        omega = plan.get_omega(current, task)
        init = transfer_init(knowledge, omega, arch.n_params)
        try:
            model = train_lm(
                arch,
                filtered.retained,
                y_kept,
                cfg,
                init=init,
                trained_from="transfer" if init is not None else "scratch",
                source_cluster=current,
            )
        except NeuralError as exc:
            result.failed_task = task
            result.error = str(exc)
            logger.warning("chain aborted at cluster %s: %s", task, exc)
            return result
        result.models[task] = model
        knowledge = KnowledgeMatrix(
            source_cluster=task,
            features=filtered.retained,
            actual_rt=y_kept,
            params=get_params(model),
        )
        result.knowledge[task] = knowledge
        current = task
    return result


def plan_transfer(
    validation_subsets: Mapping[int, np.ndarray],
    filter_percentile: float = 2.0,
) -> TransferPlan:
    """Build a plan from per-cluster validation features: pick the source by
    mean similarity, then order the learning tasks by descending similarity to
    that source (ties to the larger subset, then the lower id)."""
    source = choose_source(validation_subsets)
    omega = pairwise_omega(validation_subsets)
    others = [c for c in sorted(validation_subsets) if c != source]
    others.sort(
        key=lambda c: (
            -omega[(min(source, c), max(source, c))],
            -len(validation_subsets[c]),
            c,
        )
    )
    return TransferPlan(source=source, order=others, omega=omega,
                        filter_percentile=filter_percentile)
