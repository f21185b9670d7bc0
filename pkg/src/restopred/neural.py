"""Feed-forward regressor with sigmoid hidden layers, trained by damped
Gauss-Newton (Levenberg-Marquardt) least squares on the full batch.

Targets are standardized internally for conditioning and de-standardized at
prediction time. The analytic Jacobian of the network output with respect to
every parameter drives the normal equations (JtJ + lambda I) delta = Jt r.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import NeuralError
from .metrics import mape

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MlpArchitecture:
    input_dim: int
    hidden_sizes: tuple[int, ...]
    output_dim: int = 1

    def __post_init__(self) -> None:
        if self.input_dim < 1 or self.output_dim != 1:
            raise ValueError("input_dim must be >= 1 and output_dim must be 1")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden_sizes must be non-empty positive integers")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_sizes, self.output_dim]
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    @property
    def n_params(self) -> int:
        return sum(n_in * n_out + n_out for n_in, n_out in self.layer_dims)


@dataclass(frozen=True)
class LmConfig:
    lambda0: float = 1e-2
    lambda_up: float = 10.0
    lambda_down: float = 0.1
    max_epochs: int = 200
    sse_tol: float = 1e-9
    grad_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lambda0 <= 0 or self.lambda_up <= 1 or not (0 < self.lambda_down < 1):
            raise ValueError("damping schedule must satisfy lambda0>0, up>1, 0<down<1")
        if self.max_epochs < 0 or self.sse_tol <= 0 or self.grad_tol <= 0:
            raise ValueError("max_epochs, sse_tol, grad_tol must be positive")


@dataclass
class TrainingProvenance:
    trained_from: str = "scratch"  # or "transfer"
    source_cluster: int | None = None
    epochs_run: int = 0
    final_sse: float = float("nan")
    accepted_sse: list[float] = field(default_factory=list)


@dataclass
class RegressorModel:
    architecture: MlpArchitecture
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    target_scale: tuple[float, float]  # (mean, std), std > 0
    provenance: TrainingProvenance


def get_params(model: RegressorModel) -> np.ndarray:
    """Flatten all weights and biases, layer by layer (weights then bias)."""
    chunks = []
    for W, b in zip(model.weights, model.biases):
        chunks.append(W.ravel())
        chunks.append(b.ravel())
    return np.concatenate(chunks)


def _unpack(arch: MlpArchitecture, theta: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    weights, biases = [], []
    pos = 0
    for n_in, n_out in arch.layer_dims:
        weights.append(theta[pos : pos + n_in * n_out].reshape(n_in, n_out))
        pos += n_in * n_out
        biases.append(theta[pos : pos + n_out])
        pos += n_out
    if pos != theta.size:
        raise ValueError(f"parameter vector length {theta.size} does not match architecture")
    return weights, biases


def _forward_std(
    arch: MlpArchitecture, theta: np.ndarray, X: np.ndarray
) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    """Standardized-space forward pass; returns (outputs, activations, pre-activations)."""
    weights, biases = _unpack(arch, theta)
    acts = [X]
    zs = []
    a = X
    for W, b in zip(weights[:-1], biases[:-1]):
        z = a @ W + b
        zs.append(z)
        a = expit(z)
        acts.append(a)
    out = a @ weights[-1] + biases[-1]
    return out[:, 0], acts, zs


def _jacobian_std(arch: MlpArchitecture, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Analytic Jacobian d(output)/d(theta), one row per sample, standardized space."""
    weights, _ = _unpack(arch, theta)
    out, acts, zs = _forward_std(arch, theta, X)
    m = X.shape[0]
    n_layers = len(weights)
    # delta[l]: d(output)/d(pre-activation of layer l), m x width
    deltas: list[np.ndarray] = [np.empty(0)] * n_layers
    deltas[-1] = np.ones((m, 1))
    for l in range(n_layers - 2, -1, -1):
        sig = acts[l + 1]
        deltas[l] = (deltas[l + 1] @ weights[l + 1].T) * sig * (1.0 - sig)
    blocks = []
    for l in range(n_layers):
        a_prev = acts[l]
        d = deltas[l]
        blocks.append((a_prev[:, :, None] * d[:, None, :]).reshape(m, -1))
        blocks.append(d)
    return np.concatenate(blocks, axis=1)


def forward(model: RegressorModel, x: np.ndarray) -> float:
    """Predict restoration minutes for one standardized feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != model.architecture.input_dim:
        raise ValueError(
            f"expected a vector of length {model.architecture.input_dim}, got shape {x.shape}"
        )
    return float(predict_batch(model, x[None, :])[0])


def predict_batch(model: RegressorModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.architecture.input_dim:
        raise ValueError(
            f"expected m x {model.architecture.input_dim} rows, got shape {X.shape}"
        )
    theta = get_params(model)
    out, _, _ = _forward_std(model.architecture, theta, X)
    mean, std = model.target_scale
    return out * std + mean


def random_init(arch: MlpArchitecture, seed: int) -> np.ndarray:
    """Uniform(-0.5/sqrt(fan_in), +0.5/sqrt(fan_in)) per layer, biases included."""
    rng = np.random.default_rng(seed)
    chunks = []
    for n_in, n_out in arch.layer_dims:
        half = 0.5 / np.sqrt(n_in)
        chunks.append(rng.uniform(-half, half, size=n_in * n_out))
        chunks.append(rng.uniform(-half, half, size=n_out))
    return np.concatenate(chunks)


def train_lm(
    arch: MlpArchitecture,
    X: np.ndarray,
    y: np.ndarray,
    cfg: LmConfig,
    init: np.ndarray | None = None,
    trained_from: str = "scratch",
    source_cluster: int | None = None,
) -> RegressorModel:
    """Full-batch Levenberg-Marquardt fit of 0.5 * sum((y - yhat)^2).

    Each epoch solves (JtJ + lambda I) delta = -Jt r once; the step is kept and
    lambda shrinks when the SSE strictly decreases, otherwise the step is
    rejected and lambda grows. Stops on max_epochs, on an accepted SSE
    improvement below sse_tol, or on a gradient norm below grad_tol.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
        raise ValueError("X must be m x n and y length m")
    if X.shape[1] != arch.input_dim:
        raise ValueError(f"architecture expects {arch.input_dim} inputs, X has {X.shape[1]}")
    m = X.shape[0]
    if m < arch.n_params:
        logger.warning("only %d samples for %d parameters; fit may be underdetermined",
                       m, arch.n_params)

    y_mean = float(y.mean())
    y_std = float(y.std())
    if y_std <= 0:
        y_std = 1.0
    ty = (y - y_mean) / y_std

    theta = np.asarray(init, dtype=float).copy() if init is not None else random_init(arch, cfg.seed)
    if theta.size != arch.n_params:
        raise ValueError(f"init has {theta.size} parameters, architecture needs {arch.n_params}")

    lam = cfg.lambda0
    lam_ceiling = 1e12
    out, _, _ = _forward_std(arch, theta, X)
    r = out - ty
    sse = 0.5 * float(r @ r)
    if not np.isfinite(sse):
        raise NeuralError("non-finite loss at initialization")
    accepted: list[float] = [sse]
    epochs_run = 0
    for epoch in range(cfg.max_epochs):
        J = _jacobian_std(arch, theta, X)
        grad = J.T @ r
        if float(np.linalg.norm(grad)) < cfg.grad_tol:
            break
        JtJ = J.T @ J
        if lam > lam_ceiling:
            raise NeuralError(
                f"epoch {epoch}: damping reached {lam:g} without an acceptable step"
            )
        A = JtJ + lam * np.eye(theta.size)
        try:
            delta = np.linalg.solve(A, -grad)
        except np.linalg.LinAlgError as exc:
            raise NeuralError(f"epoch {epoch}: normal equations singular ({exc})") from exc
        candidate = theta + delta
        out, _, _ = _forward_std(arch, candidate, X)
        r_new = out - ty
        sse_new = 0.5 * float(r_new @ r_new)
        if not np.isfinite(sse_new):
            raise NeuralError(f"epoch {epoch}: non-finite loss")
        epochs_run = epoch + 1
        if sse_new < sse:
            improvement = sse - sse_new
            theta, r, sse = candidate, r_new, sse_new
            accepted.append(sse)
            lam *= cfg.lambda_down
            if improvement < cfg.sse_tol:
                break
        else:
            lam *= cfg.lambda_up

    weights, biases = _unpack(arch, theta)
    return RegressorModel(
        architecture=arch,
        weights=[W.copy() for W in weights],
        biases=[b.copy() for b in biases],
        target_scale=(y_mean, y_std),
        provenance=TrainingProvenance(
            trained_from=trained_from,
            source_cluster=source_cluster,
            epochs_run=epochs_run,
            final_sse=sse,
            accepted_sse=accepted,
        ),
    )


@dataclass(frozen=True)
class Trial:
    arch: MlpArchitecture
    cfg: LmConfig
    val_mape: float
    n_params: int


def grid_search(
    arch_grid: Sequence[MlpArchitecture],
    lm_grid: Sequence[LmConfig],
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_val: np.ndarray,
    y_val: np.ndarray,
    seed: int | None = None,
) -> tuple[MlpArchitecture, LmConfig, list[Trial]]:
    """Exhaustive sweep of the architecture/config product, ranked by validation
    MAPE. Ties break to fewer parameters, then to grid order. Returns the best
    pair plus the full leaderboard (one Trial per combination, sorted).
    """
    if not arch_grid or not lm_grid:
        raise ValueError("grids must be non-empty")
    trials: list[tuple[tuple[float, int, int, int], Trial]] = []
    for (ai, arch), (ci, cfg) in itertools.product(enumerate(arch_grid), enumerate(lm_grid)):
        run_cfg = cfg if seed is None else replace(cfg, seed=seed)
        model = train_lm(arch, X_train, y_train, run_cfg)
        score = mape(y_val, predict_batch(model, X_val))
        trials.append(((score, arch.n_params, ai, ci), Trial(arch, cfg, score, arch.n_params)))
    trials.sort(key=lambda item: item[0])
    leaderboard = [t for _, t in trials]
    best = leaderboard[0]
    return best.arch, best.cfg, leaderboard


DEFAULT_ARCH_GRID = ((8,), (16,), (16, 8))
