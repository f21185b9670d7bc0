"""Metrics reporting and the three-way training comparison: one global model,
per-cluster models from scratch, and the transfer-learning chain, all sharing
one 70/15/15 split and evaluated on the same per-cluster test rows."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import NeuralError, RestopredError
from .metrics import adjusted_rand_index, mape, threshold_coverage, zero_actual_count
from .neural import LmConfig, MlpArchitecture, predict_batch, train_lm
from .transfer import plan_transfer, train_chain

__all__ = [
    "mape",
    "threshold_coverage",
    "adjusted_rand_index",
    "split_indices",
    "ClusterMetrics",
    "EvalReport",
    "run_comparison",
    "write_report_text",
    "write_raw_predictions",
    "read_raw_predictions",
]

logger = logging.getLogger(__name__)

COVERAGE_THRESHOLDS = (30.0, 60.0, 90.0)
VARIANTS = ("global", "cluster_scratch", "cluster_transfer")


def split_indices(
    m: int, seed: int, fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic train/validation/test partition of range(m)."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    perm = np.random.default_rng(seed).permutation(m)
    n_train = int(m * fractions[0])
    n_val = int(m * fractions[1])
    return (
        np.sort(perm[:n_train]),
        np.sort(perm[n_train : n_train + n_val]),
        np.sort(perm[n_train + n_val :]),
    )


@dataclass
class ClusterMetrics:
    mape_pct: float
    pred_range_min: float  # mean absolute error in minutes
    pct_within: dict[float, float]
    n: int
    n_zero_excluded: int = 0


@dataclass
class EvalReport:
    per_cluster: dict[int, ClusterMetrics]
    global_metrics: ClusterMetrics
    comparison: dict[str, dict[int, ClusterMetrics]] = field(default_factory=dict)
    variant_errors: dict[str, str] = field(default_factory=dict)
    raw: dict[str, list[tuple[int, int, float, float]]] = field(default_factory=dict)
    split_hashes: dict[str, str] = field(default_factory=dict)

    def improvement(self, base: str, new: str, cluster: int) -> tuple[float, float]:
        """(ratio, difference): (MAPE_base - MAPE_new) / MAPE_new * 100 and the
        plain MAPE difference in points."""
        b = self.comparison[base][cluster].mape_pct
        n = self.comparison[new][cluster].mape_pct
        return ((b - n) / n * 100.0 if n > 0 else float("inf"), b - n)


def cluster_metrics(
    actual: np.ndarray, predicted: np.ndarray, range_mode: str = "mae"
) -> ClusterMetrics:
    """Per-cluster summary. ``pred_range_min`` is the mean absolute error in
    minutes by default; ``range_mode="iqr"`` reports the interquartile range of
    the errors instead (the alternative reading of a prediction range)."""
    err = np.abs(np.asarray(actual, dtype=float) - np.asarray(predicted, dtype=float))
    if range_mode == "mae":
        pred_range = float(err.mean())
    elif range_mode == "iqr":
        q75, q25 = np.percentile(err, [75.0, 25.0])
        pred_range = float(q75 - q25)
    else:
        raise ValueError(f"range_mode must be 'mae' or 'iqr', got {range_mode!r}")
    return ClusterMetrics(
        mape_pct=mape(actual, predicted),
        pred_range_min=pred_range,
        pct_within=threshold_coverage(actual, predicted, list(COVERAGE_THRESHOLDS)),
        n=int(actual.size),
        n_zero_excluded=zero_actual_count(actual),
    )


def run_comparison(
    X: np.ndarray,
    y: np.ndarray,
    assignments: np.ndarray,
    seed: int,
    arch: MlpArchitecture,
    cfg: LmConfig,
    include_transfer: bool = True,
    filter_percentile: float = 2.0,
    fractions: tuple[float, float, float] = (0.70, 0.15, 0.15),
    epoch_grid: tuple[int, ...] | None = None,
) -> EvalReport:
    """Train the three variants on a shared split and score them on the shared
    per-cluster test rows. Training failures are flagged per variant instead of
    aborting the report.

    When ``epoch_grid`` is given, every model is trained once per budget and
    the budget with the best validation MAPE is kept, per cluster (the global
    model selects on the pooled validation rows). This is the grid-search
    protocol applied inside the harness.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    assignments = np.asarray(assignments)
    m = X.shape[0]
    if y.size != m or assignments.size != m:
        raise ValueError("X, y, assignments must align")
    budgets = epoch_grid if epoch_grid else (cfg.max_epochs,)
    train_idx, val_idx, test_idx = split_indices(m, seed, fractions)
    from .artifacts import index_hash

    report = EvalReport(per_cluster={}, global_metrics=None)  # type: ignore[arg-type]
    report.split_hashes = {
        "train": index_hash(train_idx),
        "val": index_hash(val_idx),
        "test": index_hash(test_idx),
    }
    ids = [int(c) for c in np.unique(assignments)]
    test_sets = {
        c: (X[test_idx][assignments[test_idx] == c], y[test_idx][assignments[test_idx] == c])
        for c in ids
    }
    val_sets = {
        c: (X[val_idx][assignments[val_idx] == c], y[val_idx][assignments[val_idx] == c])
        for c in ids
    }

    def pick(candidates, X_val, y_val, tag):
        """Best model by validation MAPE; first candidate when validation is empty."""
        if len(candidates) == 1 or y_val.size == 0:
            if y_val.size == 0:
                logger.warning("%s: no validation rows, keeping the first budget", tag)
            return candidates[0]
        scores = [mape(y_val, predict_batch(model, X_val)) for model in candidates]
        return candidates[int(np.argmin(scores))]

    # global variant
    try:
        fits = [train_lm(arch, X[train_idx], y[train_idx], replace(cfg, max_epochs=b))
                for b in budgets]
        global_model = pick(fits, X[val_idx], y[val_idx], "global")
        _score_variant(report, "global", {c: global_model for c in ids}, test_sets)
        pred_all = predict_batch(global_model, X[test_idx])
        report.global_metrics = cluster_metrics(y[test_idx], pred_all)
    except (NeuralError, ValueError) as exc:
        report.variant_errors["global"] = str(exc)
        logger.warning("global variant failed: %s", exc)

    # per-cluster scratch variant
    scratch_models = {}
    try:
        for c in ids:
            mask = assignments[train_idx] == c
            fits = [train_lm(arch, X[train_idx][mask], y[train_idx][mask],
                             replace(cfg, max_epochs=b)) for b in budgets]
            scratch_models[c] = pick(fits, *val_sets[c], f"scratch cluster {c}")
        _score_variant(report, "cluster_scratch", scratch_models, test_sets)
    except (NeuralError, ValueError) as exc:
        report.variant_errors["cluster_scratch"] = str(exc)
        logger.warning("cluster_scratch variant failed: %s", exc)

    # transfer chain
    if include_transfer:
        try:
            val_subsets = {c: val_sets[c][0] for c in ids}
            if any(len(v) == 0 for v in val_subsets.values()):
                raise RestopredError("a cluster has no validation rows")
            plan = plan_transfer(val_subsets, filter_percentile)
            subsets = {
                c: (
                    X[train_idx][assignments[train_idx] == c],
                    y[train_idx][assignments[train_idx] == c],
                )
                for c in ids
            }
            chains = [train_chain(plan, subsets, arch, replace(cfg, max_epochs=b))
                      for b in budgets]
            failed = next((ch for ch in chains if ch.failed_task is not None), None)
            if failed is not None:
                raise RestopredError(
                    f"chain aborted at cluster {failed.failed_task}: {failed.error}"
                )
            transfer_models = {
                c: pick([ch.models[c] for ch in chains], *val_sets[c],
                        f"transfer cluster {c}")
                for c in ids
            }
            _score_variant(report, "cluster_transfer", transfer_models, test_sets)
        except RestopredError as exc:
            report.variant_errors["cluster_transfer"] = str(exc)
            logger.warning("cluster_transfer variant failed: %s", exc)

    if "cluster_scratch" in report.comparison:
        report.per_cluster = report.comparison["cluster_scratch"]
    return report


def _score_variant(report, name, models, test_sets) -> None:
    per_cluster: dict[int, ClusterMetrics] = {}
    raw: list[tuple[int, int, float, float]] = []
    for c, (Xt, yt) in test_sets.items():
        if yt.size == 0:
            logger.warning("variant %s: cluster %d has no test rows", name, c)
            continue
        pred = predict_batch(models[c], Xt)
        per_cluster[c] = cluster_metrics(yt, pred)
        raw.extend((c, i, float(a), float(p)) for i, (a, p) in enumerate(zip(yt, pred)))
    report.comparison[name] = per_cluster
    report.raw[name] = raw


def write_report_text(report: EvalReport, path: str | Path) -> None:
    lines = []
    for variant in VARIANTS:
        if variant not in report.comparison:
            reason = report.variant_errors.get(variant, "not run")
            lines.append(f"[{variant}] unavailable: {reason}")
            continue
        lines.append(f"[{variant}]")
        lines.append("cluster       n   mape_pct  range_min   <=30min   <=60min   <=90min")
        for c in sorted(report.comparison[variant]):
            met = report.comparison[variant][c]
            lines.append(
                f"{c:>7d} {met.n:>7d} {met.mape_pct:>10.4f} {met.pred_range_min:>10.4f}"
                f" {met.pct_within[30.0]:>9.4f} {met.pct_within[60.0]:>9.4f}"
                f" {met.pct_within[90.0]:>9.4f}"
            )
    if report.global_metrics is not None:
        g = report.global_metrics
        lines.append(
            f"[global over all test rows] n={g.n} mape={g.mape_pct:.4f} "
            f"range_min={g.pred_range_min:.4f}"
        )
    if "global" in report.comparison and "cluster_scratch" in report.comparison:
        lines.append("[improvement: cluster_scratch vs global]")
        for c in sorted(report.comparison["cluster_scratch"]):
            if c in report.comparison["global"]:
                ratio, diff = report.improvement("global", "cluster_scratch", c)
                lines.append(f"cluster {c}: ratio={ratio:.2f}% diff={diff:.2f} points")
    if "cluster_scratch" in report.comparison and "cluster_transfer" in report.comparison:
        lines.append("[improvement: cluster_transfer vs cluster_scratch]")
        for c in sorted(report.comparison["cluster_transfer"]):
            if c in report.comparison["cluster_scratch"]:
                ratio, diff = report.improvement("cluster_scratch", "cluster_transfer", c)
                lines.append(f"cluster {c}: ratio={ratio:.2f}% diff={diff:.2f} points")
    Path(path).write_text("\n".join(lines) + "\n")


def write_raw_predictions(report: EvalReport, path: str | Path) -> None:
    """Raw per-row predictions; metrics recompute from this file bit-identically."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "cluster", "row", "actual", "predicted"])
        for variant in sorted(report.raw):
            for c, i, actual, pred in report.raw[variant]:
                writer.writerow([variant, c, i, repr(actual), repr(pred)])


def read_raw_predictions(path: str | Path) -> dict[str, dict[int, tuple[np.ndarray, np.ndarray]]]:
    out: dict[str, dict[int, list[tuple[float, float]]]] = {}
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["variant"], {}).setdefault(int(row["cluster"]), []).append(
                (float(row["actual"]), float(row["predicted"]))
            )
    return {
        variant: {
            c: (np.array([a for a, _ in pairs]), np.array([p for _, p in pairs]))
            for c, pairs in clusters.items()
        }
        for variant, clusters in out.items()
    }
