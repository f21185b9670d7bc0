"""Command-line pipeline: synth, ingest, cluster, train, predict, eval.

Every command writes a line-oriented manifest next to its outputs (config
echo, input hashes, seeds, artifact paths, metric tables) so a run can be
replayed bit-identically. All randomness flows from the --seed flag; stages
meant to share a split must be given the same seed.

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import __version__, artifacts, classify, evaluate, features, ingest, sdesc, synth
from .errors import DataError, NumericalError, RestopredError
from .neural import LmConfig, MlpArchitecture, predict_batch, train_lm
from .transfer import plan_transfer, train_chain

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _read_config_file(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise DataError(f"config file not found: {p}")
    out: dict[str, str] = {}
    for raw in p.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataError(f"config file: expected key=value, got {line!r}")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _resolve(args: argparse.Namespace, config: dict[str, str], name: str, default, cast):
    """Flag wins over config file wins over built-in default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in config:
        return cast(config[name])
    return default


def _parse_k_range(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition("..")
    if not sep:
        raise ValueError(f"expected k-range like 2..8, got {text!r}")
    return int(lo), int(hi)


def _parse_hidden(text: str) -> tuple[int, ...]:
    sizes = tuple(int(t) for t in text.split(",") if t)
    if not sizes:
        raise ValueError(f"expected hidden sizes like 16 or 16,8, got {text!r}")
    return sizes


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="restopred", description=__doc__)
    parser.add_argument("--version", action="version", version=f"restopred {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a calibrated synthetic dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon-days", type=int)
    p.add_argument("--base-rate", type=float)
    p.add_argument("--burst-prob", type=float)
    p.add_argument("--burst-size", type=float)
    p.add_argument("--corrupt-count", type=int)

    p = sub.add_parser("ingest", help="parse, clean, and weather-align outage CSVs")
    p.add_argument("--outages", required=True)
    p.add_argument("--weather", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--schema", help="key=value column mapping file")
    p.add_argument("--ceiling-min", type=float)

    p = sub.add_parser("cluster", help="fit the sparse-dictionary spectral clustering")
    p.add_argument("--cleaned", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--path", choices=("reference", "landmark"))
    p.add_argument("--k-range", help="like 2..8")
    p.add_argument("--gamma", type=int)
    p.add_argument("--xi", type=float, help="density radius; derived from the data when omitted")
    p.add_argument("--beta", type=int)
    p.add_argument("--s-nonzeros", type=int)
    p.add_argument("--bandwidth", help="positive number, 'median', or 'self-tuning'")
    p.add_argument("--features", help="comma list from the feature catalog")

    p = sub.add_parser("train", help="train per-cluster regressors and the routing map")
    p.add_argument("--cleaned", required=True)
    p.add_argument("--cluster-dir", required=True, help="directory written by `cluster`")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--features", help="regression feature list; defaults to the full catalog")
    p.add_argument("--hidden-sizes", help="like 16 or 16,8")
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--no-transfer", action="store_true")
    p.add_argument("--filter-percentile", type=float)
    p.add_argument("--tsne-points", type=int, help="cap on rows used to fit the routing map")
    p.add_argument("--perplexity", type=float)
    p.add_argument("--tsne-iters", type=int)

    p = sub.add_parser("predict", help="route unseen outages and predict restoration minutes")
    p.add_argument("--cleaned", required=True, help="cleaned CSV of unseen outages")
    p.add_argument("--cluster-dir", required=True)
    p.add_argument("--train-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")

    p = sub.add_parser("eval", help="three-variant comparison on a shared split")
    p.add_argument("--cleaned", required=True)
    p.add_argument("--cluster-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--features", help="regression feature list; defaults to the full catalog")
    p.add_argument("--hidden-sizes")
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--epoch-grid", help="comma list, e.g. 30,60,120; budgets "
                   "validated per cluster (overrides --max-epochs)")
    p.add_argument("--no-transfer", action="store_true")
    p.add_argument("--filter-percentile", type=float)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "synth": cmd_synth,
        "ingest": cmd_ingest,
        "cluster": cmd_cluster,
        "train": cmd_train,
        "predict": cmd_predict,
        "eval": cmd_eval,
    }
    try:
        return handlers[args.command](args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (RestopredError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


def cmd_synth(args: argparse.Namespace) -> int:
    config = _read_config_file(args.config)
    seed = _resolve(args, config, "seed", 0, int)
    horizon = _resolve(args, config, "horizon_days", 755, int)
    base_rate = _resolve(args, config, "base_rate", 18.0, float)
    burst_prob = _resolve(args, config, "burst_prob", 0.08, float)
    burst_size = _resolve(args, config, "burst_size", 40.0, float)
    corrupt = _resolve(args, config, "corrupt_count", 0, int)
    spec = replace(
        synth.default_spec(seed=seed, horizon_days=horizon, corrupt_count=corrupt),
        base_rate_per_day=base_rate,
        burst_probability_per_day=burst_prob,
        burst_size_mean=burst_size,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = synth.generate(spec)
    synth.write_outages_csv(result.rows, out / "outages.csv")
    synth.write_weather_csv(result.weather, out / "weather.csv")
    synth.write_labels_csv(result.labels, out / "labels.csv")
    artifacts.write_manifest(
        out / "synth_manifest.txt",
        [
            ("tool_version", __version__),
            ("command", "synth"),
            ("seed", seed),
            ("horizon_days", horizon),
            ("base_rate_per_day", base_rate),
            ("burst_probability_per_day", burst_prob),
            ("burst_size_mean", burst_size),
            ("corrupt_count", corrupt),
            ("rows", len(result.rows)),
            ("outages_sha256", artifacts.file_sha256(out / "outages.csv")),
            ("weather_sha256", artifacts.file_sha256(out / "weather.csv")),
            ("labels_sha256", artifacts.file_sha256(out / "labels.csv")),
        ],
    )
    print(f"wrote {len(result.rows)} rows to {out / 'outages.csv'}")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    config = _read_config_file(args.config)
    ceiling = _resolve(args, config, "ceiling_min", ingest.DEFAULT_CEILING_MIN, float)
    schema = ingest.read_schema_config(args.schema) if args.schema else None
    tz_name = (schema or {}).get("timezone", "UTC")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    parsed = ingest.parse_outage_csv(args.outages, schema)
    weather = ingest.parse_weather_csv(args.weather, tz_name)
    kept, rejections = ingest.clean(parsed.rows, ceiling, parsed.line_numbers)
    records, join_errors = ingest.join_weather(kept, weather)
    for idx, message in join_errors:
        logger.warning("row %d excluded: %s", idx, message)
    ingest.write_cleaned_csv(records, out / "cleaned.csv")
    ingest.write_rejections_csv(rejections, out / "rejections.csv")
    artifacts.write_manifest(
        out / "ingest_manifest.txt",
        [
            ("tool_version", __version__),
            ("command", "ingest"),
            ("outages_sha256", artifacts.file_sha256(args.outages)),
            ("weather_sha256", artifacts.file_sha256(args.weather)),
            ("ceiling_min", ceiling),
            ("rows_in", len(parsed.rows) + len(parsed.diagnostics)),
            ("parse_diagnostics", len(parsed.diagnostics)),
            ("rows_rejected", len(rejections)),
            ("rows_join_excluded", len(join_errors)),
            ("rows_out", len(records)),
            ("cleaned_sha256", artifacts.file_sha256(out / "cleaned.csv")),
        ],
    )
    print(f"kept {len(records)} rows, rejected {len(rejections)}, "
          f"excluded {len(join_errors)} without weather")
    return 0


def _heuristic_xi(X: np.ndarray, gamma: int, seed: int, scale: float = 2.5) -> float:
    """Data-derived density radius: 2.5x the median distance to the gamma-th
    nearest neighbor (measured on a seeded subsample). The median alone tracks
    the densest regions; the 2.5 factor lets sparser regimes still form
    groups without chaining across well-separated ones."""
    m = X.shape[0]
    sample = X
    if m > 1000:
        idx = np.random.default_rng(seed).choice(m, size=1000, replace=False)
        sample = X[np.sort(idx)]
    tree = cKDTree(X)
    dists, _ = tree.query(sample, k=gamma + 1, workers=-1)
    xi = scale * float(np.median(dists[:, gamma]))
    if xi <= 0:
        positive = dists[dists > 0]
        xi = float(positive.min()) if positive.size else 1.0
    return xi


def _prepare_features(records, seed, feature_spec=None):
    """Shared feature preparation: counts over all records, standardization
    fitted on the training split, applied everywhere."""
    spec = feature_spec or features.DEFAULT_FEATURES
    counts = features.coinciding_counts(records)
    train_idx, _, _ = evaluate.split_indices(len(records), seed)
    counts_train = (counts[0][train_idx], counts[1][train_idx])
    fm_train = features.build_matrix(
        [records[i] for i in train_idx], spec, counts=counts_train
    )
    std = fm_train.standardization
    X_all = features.features_for(records, std, counts=counts, feature_spec=spec)
    y_all = np.array([r.restoration_time_min for r in records], dtype=float)
    return X_all, y_all, std, counts


def cmd_cluster(args: argparse.Namespace) -> int:
    config = _read_config_file(args.config)
    seed = _resolve(args, config, "seed", 0, int)
    path_mode = _resolve(args, config, "path", "landmark", str)
    k_range = _parse_k_range(_resolve(args, config, "k_range", "2..8", str))
    gamma = _resolve(args, config, "gamma", 8, int)
    beta = _resolve(args, config, "beta", 7, int)
    s_nonzeros = _resolve(args, config, "s_nonzeros", 5, int)
    bandwidth = _resolve(args, config, "bandwidth", "median", str)
    if bandwidth not in ("median", "self-tuning"):
        bandwidth = float(bandwidth)
    feature_list = _resolve(args, config, "features", None, str)
    spec = tuple(feature_list.split(",")) if feature_list else None

    records = ingest.read_cleaned_csv(args.cleaned)
    if not records:
        raise DataError(f"{args.cleaned}: no records")
    X_all, y_all, std, counts = _prepare_features(records, seed, spec)
    xi = _resolve(args, config, "xi", None, float)
    if xi is None:
        xi = _heuristic_xi(X_all, gamma, seed)
        logger.info("xi not given; using data-derived radius %.6g", xi)

    cfg = sdesc.SdescConfig(
        xi=xi, gamma=gamma, kernel_bandwidth=bandwidth, beta=beta,
        s_nonzeros=s_nonzeros, k_range=k_range, path=path_mode, seed=seed,
    )
    model = sdesc.fit(X_all, cfg)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fm_all = features.FeatureMatrix(
        values=X_all, feature_names=std.kept, standardization=std,
        target=y_all, record_ids=np.arange(len(records)),
    )
    features.write_feature_matrix(fm_all, out / "features.csv", out / "features_meta.txt")
    artifacts.save_sdesc_model(model, out / "sdesc_model.txt")
    summary = sdesc.assign_summary(model, records)
    with (out / "cluster_summary.csv").open("w") as fh:
        fh.write("cluster,samples,avg_customers_interrupted,avg_restoration_min\n")
        for row in summary:
            fh.write(f"{row['cluster']},{row['samples']},"
                     f"{row['avg_customers_interrupted']!r},{row['avg_restoration_min']!r}\n")
    with (out / "dbi_curve.csv").open("w") as fh:
        fh.write("k,dbi\n")
        for k, dbi in model.dbi_curve:
            fh.write(f"{k},{dbi!r}\n")
    train_idx, val_idx, test_idx = evaluate.split_indices(len(records), seed)
    artifacts.write_manifest(
        out / "cluster_manifest.txt",
        [
            ("tool_version", __version__),
            ("command", "cluster"),
            ("cleaned_sha256", artifacts.file_sha256(args.cleaned)),
            ("seed", seed),
            ("path", path_mode),
            ("xi", xi),
            ("gamma", gamma),
            ("beta", beta),
            ("s_nonzeros", s_nonzeros),
            ("kernel_bandwidth", bandwidth),
            ("k_range", f"{k_range[0]}..{k_range[1]}"),
            ("chosen_k", model.k),
            ("dictionary_size", model.dictionary.p),
            ("split_train_sha256", artifacts.index_hash(train_idx)),
            ("split_val_sha256", artifacts.index_hash(val_idx)),
            ("split_test_sha256", artifacts.index_hash(test_idx)),
            ("sdesc_model", "sdesc_model.txt"),
        ],
    )
    print(f"chose k={model.k} with {model.dictionary.p} dictionary atoms; "
          f"artifacts in {out}")
    return 0


def _load_cluster_dir(cluster_dir: str | Path):
    cdir = Path(cluster_dir)
    model = artifacts.load_sdesc_model(cdir / "sdesc_model.txt")
    std = features.read_standardization(cdir / "features_meta.txt")
    return model, std


def cmd_train(args: argparse.Namespace) -> int:
    config = _read_config_file(args.config)
    seed = _resolve(args, config, "seed", 0, int)
    hidden = _parse_hidden(_resolve(args, config, "hidden_sizes", "8", str))
    max_epochs = _resolve(args, config, "max_epochs", 120, int)
    percentile = _resolve(args, config, "filter_percentile", 2.0, float)
    tsne_points = _resolve(args, config, "tsne_points", 2000, int)
    perplexity = _resolve(args, config, "perplexity", 30.0, float)
    tsne_iters = _resolve(args, config, "tsne_iters", 1000, int)
    use_transfer = not args.no_transfer

    records = ingest.read_cleaned_csv(args.cleaned)
    model, std_cluster = _load_cluster_dir(args.cluster_dir)
    if len(model.assignments) != len(records):
        raise DataError("cluster model was fitted on a different dataset")
    counts = features.coinciding_counts(records)
    # routing lives in the clustering feature space; regression gets its own
    X_route = features.features_for(records, std_cluster, counts=counts)
    feature_list = _resolve(args, config, "features", None, str)
    reg_spec = tuple(feature_list.split(",")) if feature_list else features.DEFAULT_FEATURES
    train_idx, val_idx, _ = evaluate.split_indices(len(records), seed)
    fm_reg = features.build_matrix(
        [records[i] for i in train_idx], reg_spec,
        counts=(counts[0][train_idx], counts[1][train_idx]),
    )
    std_reg = fm_reg.standardization
    X_reg = features.features_for(records, std_reg, counts=counts, feature_spec=reg_spec)
    y_all = np.array([r.restoration_time_min for r in records], dtype=float)
    assignments = model.assignments
    ids = [int(c) for c in np.unique(assignments)]

    arch = MlpArchitecture(input_dim=X_reg.shape[1], hidden_sizes=hidden)
    cfg = LmConfig(max_epochs=max_epochs, seed=seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest: list[tuple[str, object]] = [
        ("tool_version", __version__),
        ("command", "train"),
        ("cleaned_sha256", artifacts.file_sha256(args.cleaned)),
        ("seed", seed),
        ("regression_features", ",".join(reg_spec)),
        ("hidden_sizes", ",".join(str(h) for h in hidden)),
        ("max_epochs", max_epochs),
        ("transfer", use_transfer),
        ("filter_percentile", percentile),
    ]

    models = {}
    if use_transfer and len(ids) >= 2:
        val_subsets = {c: X_reg[val_idx][assignments[val_idx] == c] for c in ids}
        if any(len(v) == 0 for v in val_subsets.values()):
            raise DataError("a cluster has no validation rows; use a larger dataset")
        plan = plan_transfer(val_subsets, percentile)
        subsets = {
            c: (X_reg[train_idx][assignments[train_idx] == c],
                y_all[train_idx][assignments[train_idx] == c])
            for c in ids
        }
        chain = train_chain(plan, subsets, arch, cfg)
        if chain.failed_task is not None:
            raise NumericalError(f"chain aborted at cluster {chain.failed_task}: {chain.error}")
        models = chain.models
        manifest.append(("transfer_source", plan.source))
        manifest.append(("transfer_order", ",".join(str(c) for c in plan.order)))
    else:
        for c in ids:
            mask = assignments[train_idx] == c
            models[c] = train_lm(arch, X_reg[train_idx][mask], y_all[train_idx][mask], cfg)

    fm_all_reg = features.FeatureMatrix(
        values=X_reg, feature_names=std_reg.kept, standardization=std_reg,
        target=y_all, record_ids=np.arange(len(records)),
    )
    features.write_feature_matrix(fm_all_reg, out / "regression_features.csv",
                                  out / "regression_meta.txt")
    for c, reg in sorted(models.items()):
        path = out / f"model_cluster_{c}.txt"
        artifacts.save_regressor(reg, path)
        manifest.append((f"model_cluster_{c}", path.name))
        manifest.append((f"provenance_cluster_{c}",
                         f"{reg.provenance.trained_from}"
                         f"(source={reg.provenance.source_cluster},"
                         f"epochs={reg.provenance.epochs_run})"))

    sub_idx = _stratified_subsample(assignments, train_idx, tsne_points, seed)
    tsne_cfg = classify.TsneConfig(perplexity=perplexity, n_iter=tsne_iters, seed=seed)
    tsne_map = classify.fit_tsne(X_route[sub_idx], assignments[sub_idx], tsne_cfg)
    artifacts.save_tsne_map(tsne_map, out / "tsne_map.txt")
    classify.export_plot_data(tsne_map, out / "tsne_points.csv")
    manifest.append(("tsne_map", "tsne_map.txt"))
    manifest.append(("tsne_points_used", len(sub_idx)))
    artifacts.write_manifest(out / "train_manifest.txt", manifest)
    print(f"trained {len(models)} cluster models; artifacts in {out}")
    return 0


def _stratified_subsample(assignments, train_idx, cap, seed) -> np.ndarray:
    """Deterministic per-cluster proportional subsample of the training rows."""
    if len(train_idx) <= cap:
        return np.sort(train_idx)
    rng = np.random.default_rng(seed)
    chosen: list[np.ndarray] = []
    ids = np.unique(assignments[train_idx])
    for c in ids:
        members = train_idx[assignments[train_idx] == c]
        quota = max(2, int(round(cap * len(members) / len(train_idx))))
        quota = min(quota, len(members))
        chosen.append(rng.choice(members, size=quota, replace=False))
    return np.sort(np.concatenate(chosen))


def cmd_predict(args: argparse.Namespace) -> int:
    records = ingest.read_cleaned_csv(args.cleaned)
    if not records:
        raise DataError(f"{args.cleaned}: no records")
    _, std_cluster = _load_cluster_dir(args.cluster_dir)
    tdir = Path(args.train_dir)
    tsne_map = artifacts.load_tsne_map(tdir / "tsne_map.txt")
    std_reg = features.read_standardization(tdir / "regression_meta.txt")
    models = {}
    for path in sorted(tdir.glob("model_cluster_*.txt")):
        c = int(path.stem.rsplit("_", 1)[1])
        models[c] = artifacts.load_regressor(path)
    if not models:
        raise DataError(f"{tdir}: no model_cluster_*.txt artifacts")

    counts = features.coinciding_counts(records)
    X_route = features.features_for(records, std_cluster, counts=counts)
    X_reg = features.features_for(records, std_reg, counts=counts)
    routed, _ = classify.route_many(tsne_map, X_route)
    predictions = np.empty(len(records))
    for c in np.unique(routed):
        if int(c) not in models:
            raise DataError(f"routed to cluster {c} but no model artifact exists")
        mask = routed == c
        predictions[mask] = predict_batch(models[int(c)], X_reg[mask])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w") as fh:
        fh.write("row,routed_cluster,predicted_restoration_min,actual_restoration_min\n")
        for i, (c, pred, rec) in enumerate(zip(routed, predictions, records)):
            fh.write(f"{i},{int(c)},{float(pred)!r},{float(rec.restoration_time_min)!r}\n")
    print(f"wrote {len(records)} predictions to {out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = _read_config_file(args.config)
    seed = _resolve(args, config, "seed", 0, int)
    hidden = _parse_hidden(_resolve(args, config, "hidden_sizes", "8", str))
    max_epochs = _resolve(args, config, "max_epochs", 120, int)
    grid_text = _resolve(args, config, "epoch_grid", "", str)
    epoch_grid = tuple(int(t) for t in grid_text.split(",") if t) or None
    percentile = _resolve(args, config, "filter_percentile", 2.0, float)

    records = ingest.read_cleaned_csv(args.cleaned)
    model, _ = _load_cluster_dir(args.cluster_dir)
    if len(model.assignments) != len(records):
        raise DataError("cluster model was fitted on a different dataset")
    counts = features.coinciding_counts(records)
    reg_text = _resolve(args, config, "features", None, str)
    reg_spec = tuple(reg_text.split(",")) if reg_text else features.DEFAULT_FEATURES
    train_idx, _, _ = evaluate.split_indices(len(records), seed)
    fm_reg = features.build_matrix(
        [records[i] for i in train_idx], reg_spec,
        counts=(counts[0][train_idx], counts[1][train_idx]),
    )
    X_all = features.features_for(records, fm_reg.standardization, counts=counts,
                                  feature_spec=reg_spec)
    y_all = np.array([r.restoration_time_min for r in records], dtype=float)

    arch = MlpArchitecture(input_dim=X_all.shape[1], hidden_sizes=hidden)
    cfg = LmConfig(max_epochs=max_epochs, seed=seed)
    report = evaluate.run_comparison(
        X_all, y_all, model.assignments, seed, arch, cfg,
        include_transfer=not args.no_transfer, filter_percentile=percentile,
        epoch_grid=epoch_grid,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    evaluate.write_report_text(report, out / "eval_report.txt")
    evaluate.write_raw_predictions(report, out / "eval_raw.csv")
    manifest: list[tuple[str, object]] = [
        ("tool_version", __version__),
        ("command", "eval"),
        ("cleaned_sha256", artifacts.file_sha256(args.cleaned)),
        ("seed", seed),
        ("regression_features", ",".join(reg_spec)),
        ("hidden_sizes", ",".join(str(h) for h in hidden)),
        ("max_epochs", max_epochs),
        ("epoch_grid", ",".join(str(b) for b in epoch_grid) if epoch_grid else ""),
        ("transfer", not args.no_transfer),
        ("filter_percentile", percentile),
        ("split_train_sha256", report.split_hashes["train"]),
        ("split_val_sha256", report.split_hashes["val"]),
        ("split_test_sha256", report.split_hashes["test"]),
    ]
    for variant in sorted(report.comparison):
        for c in sorted(report.comparison[variant]):
            met = report.comparison[variant][c]
            manifest.append((f"mape.{variant}.cluster_{c}", met.mape_pct))
            manifest.append((f"range_min.{variant}.cluster_{c}", met.pred_range_min))
    for variant, message in sorted(report.variant_errors.items()):
        manifest.append((f"variant_error.{variant}", message))
    artifacts.write_manifest(out / "eval_manifest.txt", manifest)
    print((out / "eval_report.txt").read_text(), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
