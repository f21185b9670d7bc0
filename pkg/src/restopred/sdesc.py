"""Sparse dictionary-based ensemble spectral clustering.

Stages: a density pass selects dictionary atoms (group centroids), samples are
sparse-coded against the atoms with a Gaussian kernel, and the code matrix
drives a spectral embedding. Two embedding paths exist: ``reference`` builds
the dense self-tuned adjacency over the codes (quadratic, the ground truth),
``landmark`` works through the p x p code Gram matrix (near-linear in m).
A Davies-Bouldin sweep picks the cluster count; k-means finalizes labels.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import SdescError
from .ingest import OutageRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SdescConfig:
    """Knobs for the full fit. ``xi`` is the density radius, ``gamma`` the
    min-neighbor threshold (neighbors exclude the point itself, core means
    strictly more than gamma of them)."""

    xi: float
    gamma: int = 8
    kernel_bandwidth: float | str = "median"  # positive float, "median", or "self-tuning"
    beta: int = 7
    s_nonzeros: int = 5
    k_range: tuple[int, int] = (2, 8)
    norm_bound: float | None = None  # None leaves atom norms untouched
    path: str = "reference"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.xi <= 0:
            raise ValueError("xi must be positive")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if self.s_nonzeros < 2:
            raise ValueError("s_nonzeros must be >= 2")
        if self.k_range[0] < 2 or self.k_range[1] < self.k_range[0]:
            raise ValueError("k_range must satisfy 2 <= min <= max")
        if self.path not in ("reference", "landmark"):
            raise ValueError("path must be 'reference' or 'landmark'")
        if isinstance(self.kernel_bandwidth, str):
            if self.kernel_bandwidth not in ("median", "self-tuning"):
                raise ValueError("kernel_bandwidth must be positive or 'median'/'self-tuning'")
        elif self.kernel_bandwidth <= 0:
            raise ValueError("kernel_bandwidth must be positive")


@dataclass(frozen=True)
class Dictionary:
    atoms: np.ndarray  # p x n, one atom per row
    source: str = "density_centroid"

    @property
    def p(self) -> int:
        return self.atoms.shape[0]


@dataclass(frozen=True)
class SparseCodes:
    codes: np.ndarray  # m x p, rows non-negative and summing to 1


@dataclass
class SdescModel:
    dictionary: Dictionary
    codes: SparseCodes
    embedding: np.ndarray
    k: int
    dbi_curve: list[tuple[int, float]]
    assignments: np.ndarray
    centroids: np.ndarray
    config: SdescConfig


def select_dictionary(
    X: np.ndarray, gamma: int, xi: float, seed: int = 0
) -> Dictionary:
    """Density pass: group density-reachable points, return group centroids as atoms.

    A point is core when strictly more than ``gamma`` other points lie within
    distance ``xi``. Groups grow from core points in input order, so the result
    is deterministic for a fixed row order; ``seed`` is accepted for interface
    symmetry but unused. Noise points contribute no atom.
    """
    X = np.asarray(X, dtype=float)
    m = X.shape[0]
    if m < gamma:
        raise SdescError(f"need at least gamma={gamma} samples, got {m}")
    tree = cKDTree(X)
    n_within = tree.query_ball_point(X, r=xi, return_length=True, workers=-1)
    core = n_within - 1 > gamma
    if not core.any():
        raise SdescError(
            "density pass found no core points; increase xi or decrease gamma"
        )
    labels = np.full(m, -1, dtype=np.int64)
    next_label = 0
    chunk = 1024
    for i in range(m):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = next_label
        frontier = np.array([i], dtype=np.int64)
        while frontier.size:
            new_members: list[np.ndarray] = []
            for lo in range(0, frontier.size, chunk):
                batch = frontier[lo : lo + chunk]
                neighborhoods = tree.query_ball_point(X[batch], r=xi)
                for nbrs in neighborhoods:
                    idx = np.asarray(nbrs, dtype=np.int64)
                    fresh = idx[labels[idx] == -1]
                    if fresh.size:
                        labels[fresh] = next_label
                        new_members.append(fresh)
            if new_members:
                joined = np.unique(np.concatenate(new_members))
                frontier = joined[core[joined]]
            else:
                frontier = np.empty(0, dtype=np.int64)
        next_label += 1
    if next_label > m // 2:
        raise SdescError(
            f"density pass produced {next_label} groups for {m} samples; "
            "increase xi so the dictionary stays small"
        )
    atoms = np.stack([X[labels == c].mean(axis=0) for c in range(next_label)])
    return Dictionary(atoms=atoms)


def bound_atom_norms(dictionary: Dictionary, norm_bound: float | None) -> Dictionary:
    """Rescale any atom whose Euclidean norm exceeds the bound down onto it."""
    if norm_bound is None:
        return dictionary
    if norm_bound <= 0:
        raise ValueError("norm_bound must be positive")
    atoms = dictionary.atoms.copy()
    norms = np.linalg.norm(atoms, axis=1)
    over = norms > norm_bound
    if over.any():
        logger.info("rescaling %d atoms onto the norm bound %g", int(over.sum()), norm_bound)
        atoms[over] *= (norm_bound / norms[over])[:, None]
    return Dictionary(atoms=atoms, source=dictionary.source)


def encode(
    X: np.ndarray,
    dictionary: Dictionary,
    s_nonzeros: int = 5,
    bandwidth: float | str = "median",
    beta: int = 7,
) -> SparseCodes:
    """Sparse-code each sample over the atoms with a Gaussian kernel.

    Per sample: kernel values exp(-d^2 / (2 sigma^2)) to every atom, keep the
    s largest, zero the rest, normalize the row to sum 1. ``bandwidth``:
    a positive number, "median" (median distance from samples to their nearest
    atom), or "self-tuning" (per-sample distance to the beta-th nearest atom).
    Rows whose kept kernel values all underflow to zero fall back to uniform
    weights over the s nearest atoms (logged).
    """
    X = np.asarray(X, dtype=float)
    atoms = dictionary.atoms
    p = atoms.shape[0]
    s = min(s_nonzeros, p)
    if s < s_nonzeros:
        logger.info("s_nonzeros clamped from %d to p=%d", s_nonzeros, p)
    d2 = cdist(X, atoms, "sqeuclidean")

    if bandwidth == "median":
        nearest = np.sqrt(d2.min(axis=1))
        sigma = float(np.median(nearest))
        if sigma <= 0:
            positive = nearest[nearest > 0]
            sigma = float(positive.min()) if positive.size else 1.0
            logger.info("median bandwidth degenerate, using %g", sigma)
        denom = 2.0 * sigma**2
    elif bandwidth == "self-tuning":
        b = min(beta, p) - 1
        alpha = np.sqrt(np.sort(d2, axis=1)[:, b])
        floor = alpha[alpha > 0]
        alpha[alpha <= 0] = float(floor.min()) if floor.size else 1.0
        denom = 2.0 * alpha[:, None] ** 2
    else:
        denom = 2.0 * float(bandwidth) ** 2

    kernel = np.exp(-d2 / denom)
    keep = np.argpartition(d2, s - 1, axis=1)[:, :s] if s < p else np.tile(
        np.arange(p), (X.shape[0], 1)
    )
    codes = np.zeros_like(kernel)
    rows = np.arange(X.shape[0])[:, None]
    kept_vals = kernel[rows, keep]
    sums = kept_vals.sum(axis=1)
    dead = sums == 0.0
    if dead.any():
        logger.info("%d rows had fully underflowed kernels; using uniform weights",
                    int(dead.sum()))
        kept_vals[dead] = 1.0
        sums[dead] = float(s)
    codes[rows, keep] = kept_vals / sums[:, None]
    return SparseCodes(codes=codes)


def adjacency_reference(codes: SparseCodes | np.ndarray, beta: int = 7) -> np.ndarray:
    """Dense self-tuned adjacency over code rows.

    W_ij = exp(-||Z_i - Z_j||^2 / (alpha_i alpha_j)) with alpha_i the distance
    from Z_i to its beta-th nearest neighbor; diagonal zero. Zero alphas
    (duplicate rows) are replaced by the smallest positive alpha (logged).
    """
    Z = codes.codes if isinstance(codes, SparseCodes) else np.asarray(codes, dtype=float)
    m = Z.shape[0]
    if m < beta + 1:
        raise ValueError(f"need at least beta+1={beta + 1} samples, got {m}")
    d2 = cdist(Z, Z, "sqeuclidean")
    # column beta of the row-sorted distances: self sits at column 0
    alpha = np.sqrt(np.sort(d2, axis=1)[:, beta])
    if np.any(alpha == 0.0):
        positive = alpha[alpha > 0]
        sub = float(positive.min()) if positive.size else 1.0
        logger.info("substituting alpha=%g for %d duplicate points",
                    sub, int((alpha == 0.0).sum()))
        alpha[alpha == 0.0] = sub
    W = np.exp(-d2 / np.outer(alpha, alpha))
    np.fill_diagonal(W, 0.0)
    return W


def spectral_embed_reference(W: np.ndarray, k: int, renorm_rows: bool = True) -> np.ndarray:
    """Embed samples with the top-k eigenvectors of D^{-1/2} W D^{-1/2}.

    The cluster structure of this normalized similarity matrix lives in its
    largest eigenvalues (equivalently the smallest of I minus it). Rows are
    renormalized to unit length by default.
    """
    W = np.asarray(W, dtype=float)
    m = W.shape[0]
    if W.shape != (m, m):
        raise ValueError("W must be square")
    if k > m:
        raise SdescError(f"k={k} exceeds m={m}")
    if not np.allclose(W, W.T, atol=1e-12):
        raise ValueError("W must be symmetric")
    if np.any(W < 0):
        raise ValueError("W must be non-negative")
    deg = W.sum(axis=1)
    if np.any(deg <= 0):
        raise SdescError("graph has a zero-degree vertex; adjust bandwidth parameters")
    inv_sqrt = 1.0 / np.sqrt(deg)
    L = W * np.outer(inv_sqrt, inv_sqrt)
    try:
        eigvals, eigvecs = np.linalg.eigh(L)
    except np.linalg.LinAlgError as exc:
        raise SdescError(f"eigendecomposition failed: {exc}") from exc
    E = eigvecs[:, ::-1][:, :k]
    if renorm_rows:
        E = _renorm(E)
    return E


def landmark_factors(codes: SparseCodes | np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-k sample-side singular structure of the degree-normalized code matrix.

    Returns (U, sigma): U is m x k with orthonormal columns (the eigenvectors
    of the implicit similarity Zhat^T Zhat), sigma the singular values. Only a
    p x p eigenproblem and a p x m multiply are formed.
    """
    C = codes.codes if isinstance(codes, SparseCodes) else np.asarray(codes, dtype=float)
    Z = C.T  # p x m, columns are samples
    s = Z.sum(axis=1)
    used = s > 0
    if not used.all():
        logger.info("dropping %d atoms never used by any sample", int((~used).sum()))
        Z = Z[used]
        s = s[used]
    p = Z.shape[0]
    if p < k:
        raise SdescError(f"only {p} usable atoms for k={k}; lower k or grow the dictionary")
    Zh = Z / np.sqrt(s)[:, None]
    A = Zh @ Zh.T
    try:
        eigvals, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise SdescError(f"eigendecomposition failed: {exc}") from exc
    eigvals = eigvals[::-1][:k]
    V = V[:, ::-1][:, :k]
    tiny = max(eigvals[0], 0.0) * 1e-12
    if eigvals.min() <= tiny:
        raise SdescError(
            f"code matrix rank below k={k}; lower k or grow the dictionary"
        )
    sigma = np.sqrt(eigvals)
    U = Zh.T @ (V / sigma)
    return U, sigma


def spectral_embed_landmark(
    codes: SparseCodes | np.ndarray, k: int, renorm_rows: bool = True
) -> np.ndarray:
    """Landmark-path embedding; agrees with the reference path applied to the
    dense implicit similarity up to an orthogonal transform."""
    U, _ = landmark_factors(codes, k)
    return _renorm(U) if renorm_rows else U


def _renorm(E: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(E, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return E / safe


def kmeans_fit(
    points: np.ndarray,
    k: int,
    seed: int = 0,
    n_restarts: int = 20,
    max_iter: int = 300,
    tol: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Lloyd's k-means with k-means++ seeding; best of ``n_restarts`` by inertia.

    Empty clusters are respawned at the point farthest from its centroid, so
    every returned cluster is non-empty. Deterministic given the seed.
    """
    points = np.asarray(points, dtype=float)
    m = points.shape[0]
    if k < 1 or k > m:
        raise ValueError(f"k={k} out of range for m={m}")
    rng = np.random.default_rng(seed)
    best: tuple[np.ndarray, np.ndarray, float] | None = None
    for _ in range(n_restarts):
        centroids = _kmeans_pp(points, k, rng)
        labels = np.zeros(m, dtype=np.int64)
        for _ in range(max_iter):
            d2 = cdist(points, centroids, "sqeuclidean")
            labels = d2.argmin(axis=1)
            _repair_empty(points, labels, k, d2)
            new_centroids = np.stack(
                [points[labels == c].mean(axis=0) for c in range(k)]
            )
            shift = float(np.abs(new_centroids - centroids).max())
            centroids = new_centroids
            if shift <= tol:
                break
        d2 = cdist(points, centroids, "sqeuclidean")
        labels = d2.argmin(axis=1)
        _repair_empty(points, labels, k, d2)
        centroids = np.stack([points[labels == c].mean(axis=0) for c in range(k)])
        inertia = float(
            ((points - centroids[labels]) ** 2).sum()
        )
        if best is None or inertia < best[2]:
            best = (labels, centroids, inertia)
    assert best is not None
    return best


def _repair_empty(points: np.ndarray, labels: np.ndarray, k: int, d2: np.ndarray) -> None:
    """Move the point farthest from its centroid into each empty cluster."""
    m = points.shape[0]
    dist_own = d2[np.arange(m), labels].copy()
    for c in range(k):
        if not (labels == c).any():
            far = int(dist_own.argmax())
            labels[far] = c
            dist_own[far] = -np.inf


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    m = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(m)]
    d2 = cdist(points, centroids[:1], "sqeuclidean")[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[j] = points[rng.integers(m)]
        else:
            centroids[j] = points[rng.choice(m, p=d2 / total)]
        d2 = np.minimum(d2, cdist(points, centroids[j : j + 1], "sqeuclidean")[:, 0])
    return centroids


def davies_bouldin(points: np.ndarray, labels: np.ndarray) -> float:
    """Davies-Bouldin index over the given partition; lower is better."""
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    ids = np.unique(labels)
    k = ids.size
    if k < 2:
        raise ValueError("need at least 2 clusters")
    centroids = np.stack([points[labels == c].mean(axis=0) for c in ids])
    scatter = np.array(
        [np.linalg.norm(points[labels == c] - centroids[i], axis=1).mean()
         for i, c in enumerate(ids)]
    )
    sep = cdist(centroids, centroids)
    with np.errstate(divide="ignore"):
        ratio = (scatter[:, None] + scatter[None, :]) / sep
    np.fill_diagonal(ratio, -np.inf)
    return float(np.max(ratio, axis=1).mean())


def select_k_and_cluster(
    embedding_producer: Callable[[int], np.ndarray],
    k_range: tuple[int, int],
    seed: int,
    *,
    dictionary: Dictionary,
    codes: SparseCodes,
    config: SdescConfig,
) -> SdescModel:
    """Sweep k over ``k_range``, score each embedding with the Davies-Bouldin
    index of its k-means partition, and keep the minimizer (ties -> smaller k).
    Values of k whose embedding fails are skipped with a log entry.
    """
    kmin, kmax = k_range
    curve: list[tuple[int, float]] = []
    best: tuple[float, int, np.ndarray, np.ndarray, np.ndarray] | None = None
    for k in range(kmin, kmax + 1):
        try:
            E = embedding_producer(k)
        except SdescError as exc:
            logger.info("k=%d skipped: %s", k, exc)
            continue
        labels, centroids, _ = kmeans_fit(E, k, seed=seed)
        dbi = davies_bouldin(E, labels)
        curve.append((k, dbi))
        if best is None or dbi < best[0]:
            best = (dbi, k, E, labels, centroids)
    if best is None:
        raise SdescError("no k in the range produced a valid embedding")
    _, k, E, labels, centroids = best
    return SdescModel(
        dictionary=dictionary,
        codes=codes,
        embedding=E,
        k=k,
        dbi_curve=curve,
        assignments=labels,
        centroids=centroids,
        config=config,
    )


def fit(X, config: SdescConfig) -> SdescModel:
    """Run the full chain on a feature matrix (FeatureMatrix or m x n array)."""
    values = getattr(X, "values", X)
    values = np.asarray(values, dtype=float)
    dictionary = select_dictionary(values, config.gamma, config.xi, config.seed)
    dictionary = bound_atom_norms(dictionary, config.norm_bound)
    codes = encode(
        values,
        dictionary,
        s_nonzeros=config.s_nonzeros,
        bandwidth=config.kernel_bandwidth,
        beta=config.beta,
    )
    if config.path == "reference":
        W = adjacency_reference(codes, beta=config.beta)
        producer = lambda k: spectral_embed_reference(W, k)
    else:
        producer = lambda k: spectral_embed_landmark(codes, k)
    return select_k_and_cluster(
        producer,
        config.k_range,
        config.seed,
        dictionary=dictionary,
        codes=codes,
        config=config,
    )


def assign_summary(
    model: SdescModel | np.ndarray, records: Sequence[OutageRecord]
) -> list[dict[str, float]]:
    """Per-cluster statistics table, ordered by descending average restoration time.

    Accepts a fitted model or a plain label vector (which may be single-cluster).
    Columns: cluster, samples, avg_customers_interrupted, avg_restoration_min.
    """
    labels = model.assignments if isinstance(model, SdescModel) else np.asarray(model)
    if len(labels) != len(records):
        raise ValueError("labels and records must align")
    cust = np.array([r.customers_interrupted for r in records], dtype=float)
    rt = np.array([r.restoration_time_min for r in records], dtype=float)
    rows = []
    for c in np.unique(labels):
        mask = labels == c
        rows.append(
            {
                "cluster": int(c),
                "samples": int(mask.sum()),
                "avg_customers_interrupted": float(cust[mask].mean()),
                "avg_restoration_min": float(rt[mask].mean()),
            }
        )
    rows.sort(key=lambda r: -r["avg_restoration_min"])
    return rows
