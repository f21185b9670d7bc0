"""Feature engineering: coinciding-outage counts via a sweep line, and the
standardized design matrix consumed by clustering and regression."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import WEATHER_CONDITIONS, OutageRecord

logger = logging.getLogger(__name__)

#: feature catalog; build_matrix accepts any subset, in any order
FEATURE_CATALOG = (
    "hour_of_day",
    "day_of_week",
    "month",
    "customers_interrupted",
    "cause_key",
    "equipment_cause_key",
    "temp",
    "precip",
    "wind",
    "weather_condition",
    "c_outages",
    "c_customers",
)

DEFAULT_FEATURES = FEATURE_CATALOG

_CATEGORICAL = ("cause_key", "equipment_cause_key")


def coinciding_counts(records: Sequence[OutageRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Per-record counts of coinciding outages and affected customers.

    For record i the count is the number of outages whose half-open interval
    [start, end) contains start_time(i), including record i itself; the
    customer count sums customers_interrupted over the same set. Computed by
    sorting the 2m boundary timestamps and sweeping; at equal timestamps end
    events are processed before start events, so back-to-back outages do not
    coincide, while outages sharing a start time all count each other.
    """
    m = len(records)
    if m == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    starts = np.fromiter((r.start_time for r in records), dtype=np.int64, count=m)
    ends = np.fromiter((r.end_time for r in records), dtype=np.int64, count=m)
    cust = np.fromiter((r.customers_interrupted for r in records), dtype=np.int64, count=m)
    if np.any(ends <= starts):
        raise ValueError("records must have end_time > start_time")

    times = np.concatenate([ends, starts])
    kinds = np.concatenate([np.zeros(m, dtype=np.int8), np.ones(m, dtype=np.int8)])
    d_out = np.concatenate([-np.ones(m, dtype=np.int64), np.ones(m, dtype=np.int64)])
    d_cust = np.concatenate([-cust, cust])
    rec_idx = np.concatenate([np.full(m, -1, dtype=np.int64), np.arange(m, dtype=np.int64)])

    order = np.lexsort((kinds, times))  # time ascending, ends before starts
    times_s = times[order]
    cum_out = np.cumsum(d_out[order])
    cum_cust = np.cumsum(d_cust[order])
    # counts are read at the last event of each equal-time group, after all
    # simultaneous starts have been applied
    group_end = np.searchsorted(times_s, times_s, side="right") - 1

    c_out = np.zeros(m, dtype=np.int64)
    c_cust = np.zeros(m, dtype=np.int64)
    is_start = kinds[order] == 1
    recs = rec_idx[order][is_start]
    at = group_end[is_start]
    c_out[recs] = cum_out[at]
    c_cust[recs] = cum_cust[at]
    return c_out, c_cust


@dataclass
class Standardization:
    """Fitted per-column scaling, plus the extraction recipe needed to apply it
    to new rows (raw layout, categorical encoding, constant columns dropped)."""

    raw_names: list[str]
    kept: list[str]
    dropped: list[str]
    means: np.ndarray
    stds: np.ndarray
    categorical_mode: str = "ordinal"
    categories: dict[str, list[int]] = field(default_factory=dict)

    def apply(self, raw_values: np.ndarray) -> np.ndarray:
        raw_values = np.asarray(raw_values, dtype=float)
        if raw_values.ndim == 1:
            raw_values = raw_values[None, :]
        if raw_values.shape[1] != len(self.raw_names):
            raise ValueError(
                f"expected {len(self.raw_names)} columns, got {raw_values.shape[1]}"
            )
        keep_idx = [self.raw_names.index(name) for name in self.kept]
        return (raw_values[:, keep_idx] - self.means) / self.stds


@dataclass
class FeatureMatrix:
    """Standardized design matrix with its target vector and column metadata."""

    values: np.ndarray
    feature_names: list[str]
    standardization: Standardization
    target: np.ndarray
    record_ids: np.ndarray


def _raw_feature(records: Sequence[OutageRecord], name: str,
                 counts: tuple[np.ndarray, np.ndarray] | None) -> np.ndarray:
    if name == "hour_of_day":
        return np.array([datetime.fromtimestamp(r.start_time, tz=timezone.utc).hour
                         for r in records], dtype=float)
    if name == "day_of_week":
        return np.array([datetime.fromtimestamp(r.start_time, tz=timezone.utc).weekday()
                         for r in records], dtype=float)
    if name == "month":
        return np.array([datetime.fromtimestamp(r.start_time, tz=timezone.utc).month
                         for r in records], dtype=float)
    if name == "customers_interrupted":
        return np.array([r.customers_interrupted for r in records], dtype=float)
    if name == "cause_key":
        return np.array([r.cause_key for r in records], dtype=float)
    if name == "equipment_cause_key":
        return np.array([r.equipment_cause_key for r in records], dtype=float)
    if name == "temp":
        return np.array([r.weather_temp for r in records], dtype=float)
    if name == "precip":
        return np.array([r.weather_precip for r in records], dtype=float)
    if name == "wind":
        return np.array([r.weather_wind for r in records], dtype=float)
    if name == "weather_condition":
        return np.array([WEATHER_CONDITIONS.index(r.weather_condition) for r in records],
                        dtype=float)
    if name == "c_outages":
        if counts is None:
            raise ValueError("c_outages requested but no counts supplied")
        return counts[0].astype(float)
    if name == "c_customers":
        if counts is None:
            raise ValueError("c_customers requested but no counts supplied")
        return counts[1].astype(float)
    raise ValueError(f"unknown feature name {name!r}")


def extract_raw(
    records: Sequence[OutageRecord],
    feature_spec: Sequence[str] = DEFAULT_FEATURES,
    counts: tuple[np.ndarray, np.ndarray] | None = None,
    categorical: str = "ordinal",
    categories: dict[str, list[int]] | None = None,
) -> tuple[np.ndarray, list[str], dict[str, list[int]]]:
    """Extract the unstandardized columns for ``feature_spec``.

    With ``categorical="onehot"`` the cause-code features expand into one
    indicator column per observed code; ``categories`` pins the code lists so
    apply-time rows expand identically (unseen codes yield all-zero blocks).
    Returns (values, expanded names, categories used).
    """
    if len(records) == 0:
        raise ValueError("empty record list")
    for name in feature_spec:
        if name not in FEATURE_CATALOG:
            raise ValueError(f"unknown feature name {name!r}")
    if categorical not in ("ordinal", "onehot"):
        raise ValueError(f"categorical must be 'ordinal' or 'onehot', got {categorical!r}")
    needs_counts = any(n in ("c_outages", "c_customers") for n in feature_spec)
    if needs_counts and counts is None:
        counts = coinciding_counts(records)

    cats: dict[str, list[int]] = dict(categories or {})
    columns: list[np.ndarray] = []
    names: list[str] = []
    for name in feature_spec:
        col = _raw_feature(records, name, counts)
        if categorical == "onehot" and name in _CATEGORICAL:
            codes = cats.get(name)
            if codes is None:
                codes = sorted(int(v) for v in np.unique(col))
                cats[name] = codes
            for code in codes:
                columns.append((col == code).astype(float))
                names.append(f"{name}={code}")
        else:
            columns.append(col)
            names.append(name)
    return np.column_stack(columns), names, cats


def build_matrix(
    records: Sequence[OutageRecord],
    feature_spec: Sequence[str] = DEFAULT_FEATURES,
    counts: tuple[np.ndarray, np.ndarray] | None = None,
    categorical: str = "ordinal",
) -> FeatureMatrix:
    """Assemble the standardized feature matrix over ``records``.

    Standardization parameters are fitted on the rows given here; reuse them
    on other rows through apply_standardization. Constant columns are dropped
    (recorded in the dropped list), never divided by a zero spread.
    """
    raw, names, cats = extract_raw(records, feature_spec, counts, categorical)
    constant = np.ptp(raw, axis=0) == 0.0
    if constant.any():
        logger.info("dropping constant columns: %s",
                    [n for n, c in zip(names, constant) if c])
    kept_mask = ~constant
    kept_names = [n for n, k in zip(names, kept_mask) if k]
    dropped = [n for n, k in zip(names, kept_mask) if not k]
    kept_vals = raw[:, kept_mask]
    means = kept_vals.mean(axis=0)
    stds = kept_vals.std(axis=0)
    std = Standardization(
        raw_names=names,
        kept=kept_names,
        dropped=dropped,
        means=means,
        stds=stds,
        categorical_mode=categorical,
        categories=cats,
    )
    values = (kept_vals - means) / stds
    target = np.array([r.restoration_time_min for r in records], dtype=float)
    return FeatureMatrix(
        values=values,
        feature_names=kept_names,
        standardization=std,
        target=target,
        record_ids=np.arange(len(records)),
    )


def apply_standardization(raw_values: np.ndarray, standardization: Standardization) -> np.ndarray:
    """Standardize rows with the already-fitted parameters (no refit)."""
    return standardization.apply(raw_values)


def features_for(
    records: Sequence[OutageRecord],
    standardization: Standardization,
    counts: tuple[np.ndarray, np.ndarray] | None = None,
    feature_spec: Sequence[str] | None = None,
) -> np.ndarray:
    """Extract and standardize rows for ``records`` using fitted parameters.

    ``feature_spec`` defaults to the base names recorded at fit time.
    """
    if feature_spec is None:
        feature_spec = _base_names(standardization.raw_names)
    raw, names, _ = extract_raw(
        records,
        feature_spec,
        counts,
        standardization.categorical_mode,
        standardization.categories,
    )
    if names != standardization.raw_names:
        raise ValueError("extracted columns do not match the fitted layout")
    return standardization.apply(raw)


def _base_names(raw_names: Sequence[str]) -> list[str]:
    base: list[str] = []
    for name in raw_names:
        stem = name.split("=", 1)[0]
        if stem not in base:
            base.append(stem)
    return base


def write_feature_matrix(fm: FeatureMatrix, values_path: str | Path, meta_path: str | Path) -> None:
    """Serialize: values CSV (record_id, features..., target) plus a key=value sidecar."""
    with Path(values_path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["record_id", *fm.feature_names, "target"])
        for rid, row, tgt in zip(fm.record_ids, fm.values, fm.target):
            writer.writerow([int(rid), *[repr(float(v)) for v in row], repr(float(tgt))])
    std = fm.standardization
    lines = [
        "raw_names = " + ",".join(std.raw_names),
        "kept = " + ",".join(std.kept),
        "dropped = " + ",".join(std.dropped),
        "means = " + ",".join(repr(float(v)) for v in std.means),
        "stds = " + ",".join(repr(float(v)) for v in std.stds),
        "categorical_mode = " + std.categorical_mode,
    ]
    for name, codes in sorted(std.categories.items()):
        lines.append(f"categories.{name} = " + ",".join(str(c) for c in codes))
    Path(meta_path).write_text("\n".join(lines) + "\n")


def read_standardization(meta_path: str | Path) -> Standardization:
    entries: dict[str, str] = {}
    for raw in Path(meta_path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        entries[key.strip()] = value.strip()

    def split(key: str) -> list[str]:
        text = entries.get(key, "")
        return [t for t in text.split(",") if t]

    categories: dict[str, list[int]] = {}
    for key, value in entries.items():
        if key.startswith("categories."):
            categories[key.split(".", 1)[1]] = [int(t) for t in value.split(",") if t]
    return Standardization(
        raw_names=split("raw_names"),
        kept=split("kept"),
        dropped=split("dropped"),
        means=np.array([float(t) for t in split("means")]),
        stds=np.array([float(t) for t in split("stds")]),
        categorical_mode=entries.get("categorical_mode", "ordinal"),
        categories=categories,
    )
