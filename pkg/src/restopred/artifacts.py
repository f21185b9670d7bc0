"""Versioned text artifacts and the experiment manifest.

Every artifact starts with a version line; loaders reject anything else.
Floats are written with repr so values round-trip exactly, which is what makes
manifest-driven replays bit-identical.
"""
from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .classify import TsneConfig, TsneMap
from .errors import ArtifactError
from .neural import MlpArchitecture, RegressorModel, TrainingProvenance
from .sdesc import Dictionary, SdescConfig, SdescModel, SparseCodes

FORMAT_VERSION = 1


def _header(kind: str) -> str:
    return f"restopred-artifact/{FORMAT_VERSION} kind={kind}"


def write_artifact(
    path: str | Path,
    kind: str,
    scalars: Mapping[str, object],
    arrays: Mapping[str, np.ndarray],
) -> None:
    lines = [_header(kind)]
    for key, value in scalars.items():
        if isinstance(value, float):
            lines.append(f"{key} = {value!r}")
        else:
            lines.append(f"{key} = {value}")
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.dtype.kind in "iub":
            dtype, fmt = "i8", lambda v: str(int(v))
        else:
            dtype, fmt = "f8", lambda v: repr(float(v))
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"array {name} {dtype} {arr.ndim} {dims}")
        if arr.ndim == 1:
            lines.append(" ".join(fmt(v) for v in arr))
        elif arr.ndim == 2:
            for row in arr:
                lines.append(" ".join(fmt(v) for v in row))
        else:
            raise ValueError(f"only 1-D and 2-D arrays supported, got shape {arr.shape}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_artifact(
    path: str | Path, expected_kind: str
) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"artifact not found: {path}")
    lines = path.read_text().splitlines()
    if not lines or lines[0] != _header(expected_kind):
        raise ArtifactError(
            f"{path}: expected header {_header(expected_kind)!r}, "
            f"got {(lines[0] if lines else '(empty)')!r}"
        )
    scalars: dict[str, str] = {}
    arrays: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if line.startswith("array "):
            parts = line.split()
            name, dtype, ndim = parts[1], parts[2], int(parts[3])
            shape = tuple(int(d) for d in parts[4 : 4 + ndim])
            np_dtype = np.int64 if dtype == "i8" else np.float64
            n_lines = 1 if ndim == 1 else shape[0]
            data_lines = lines[i + 1 : i + 1 + n_lines]
            if len(data_lines) != n_lines:
                raise ArtifactError(f"{path}: truncated array block {name!r}")
            flat = np.array(
                [v for row in data_lines for v in row.split()], dtype=np_dtype
            )
            expected = int(np.prod(shape)) if shape else 0
            if flat.size != expected:
                raise ArtifactError(f"{path}: array {name!r} has wrong element count")
            arrays[name] = flat.reshape(shape)
            i += 1 + n_lines
        else:
            key, sep, value = line.partition(" = ")
            if not sep:
                raise ArtifactError(f"{path}: malformed line {line!r}")
            scalars[key] = value
            i += 1
    return scalars, arrays


# --- model-specific serializers -------------------------------------------


def save_sdesc_model(model: SdescModel, path: str | Path) -> None:
    cfg = model.config
    scalars = {
        "k": model.k,
        "xi": cfg.xi,
        "gamma": cfg.gamma,
        "kernel_bandwidth": cfg.kernel_bandwidth,
        "beta": cfg.beta,
        "s_nonzeros": cfg.s_nonzeros,
        "k_min": cfg.k_range[0],
        "k_max": cfg.k_range[1],
        "norm_bound": "" if cfg.norm_bound is None else repr(cfg.norm_bound),
        "path": cfg.path,
        "seed": cfg.seed,
    }
    arrays = {
        "atoms": model.dictionary.atoms,
        "codes": model.codes.codes,
        "embedding": model.embedding,
        "centroids": model.centroids,
        "assignments": model.assignments,
        "dbi_curve": np.array(model.dbi_curve, dtype=float),
    }
    write_artifact(path, "sdesc_model", scalars, arrays)


def load_sdesc_model(path: str | Path) -> SdescModel:
    scalars, arrays = read_artifact(path, "sdesc_model")
    bandwidth: float | str = scalars["kernel_bandwidth"]
    if bandwidth not in ("median", "self-tuning"):
        bandwidth = float(bandwidth)
    cfg = SdescConfig(
        xi=float(scalars["xi"]),
        gamma=int(scalars["gamma"]),
        kernel_bandwidth=bandwidth,
        beta=int(scalars["beta"]),
        s_nonzeros=int(scalars["s_nonzeros"]),
        k_range=(int(scalars["k_min"]), int(scalars["k_max"])),
        norm_bound=float(scalars["norm_bound"]) if scalars["norm_bound"] else None,
        path=scalars["path"],
        seed=int(scalars["seed"]),
    )
    return SdescModel(
        dictionary=Dictionary(atoms=arrays["atoms"]),
        codes=SparseCodes(codes=arrays["codes"]),
        embedding=arrays["embedding"],
        k=int(scalars["k"]),
        dbi_curve=[(int(k), float(v)) for k, v in arrays["dbi_curve"]],
        assignments=arrays["assignments"],
        centroids=arrays["centroids"],
        config=cfg,
    )


def save_regressor(model: RegressorModel, path: str | Path) -> None:
    prov = model.provenance
    scalars = {
        "input_dim": model.architecture.input_dim,
        "hidden_sizes": ",".join(str(h) for h in model.architecture.hidden_sizes),
        "target_mean": model.target_scale[0],
        "target_std": model.target_scale[1],
        "trained_from": prov.trained_from,
        "source_cluster": "" if prov.source_cluster is None else prov.source_cluster,
        "epochs_run": prov.epochs_run,
        "final_sse": prov.final_sse,
    }
    arrays: dict[str, np.ndarray] = {"accepted_sse": np.array(prov.accepted_sse, dtype=float)}
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"w{i}"] = W
        arrays[f"b{i}"] = b
    write_artifact(path, "regressor", scalars, arrays)


def load_regressor(path: str | Path) -> RegressorModel:
    scalars, arrays = read_artifact(path, "regressor")
    arch = MlpArchitecture(
        input_dim=int(scalars["input_dim"]),
        hidden_sizes=tuple(int(h) for h in scalars["hidden_sizes"].split(",") if h),
    )
    n_layers = len(arch.hidden_sizes) + 1
    weights = [arrays[f"w{i}"] for i in range(n_layers)]
    biases = [arrays[f"b{i}"] for i in range(n_layers)]
    prov = TrainingProvenance(
        trained_from=scalars["trained_from"],
        source_cluster=int(scalars["source_cluster"]) if scalars["source_cluster"] else None,
        epochs_run=int(scalars["epochs_run"]),
        final_sse=float(scalars["final_sse"]),
        accepted_sse=[float(v) for v in arrays["accepted_sse"]],
    )
    return RegressorModel(
        architecture=arch,
        weights=weights,
        biases=biases,
        target_scale=(float(scalars["target_mean"]), float(scalars["target_std"])),
        provenance=prov,
    )


def save_tsne_map(tsne_map: TsneMap, path: str | Path) -> None:
    cfg = tsne_map.config
    scalars = {
        "perplexity": cfg.perplexity,
        "n_iter": cfg.n_iter,
        "learning_rate": cfg.learning_rate,
        "momentum_early": cfg.momentum_early,
        "momentum_late": cfg.momentum_late,
        "early_exaggeration": cfg.early_exaggeration,
        "exaggeration_iters": cfg.exaggeration_iters,
        "seed": cfg.seed,
    }
    arrays = {
        "points": tsne_map.points,
        "labels": tsne_map.labels.astype(np.int64),
        "kl_trace": tsne_map.kl_trace,
        "high_dim_ref": tsne_map.high_dim_ref,
        "bandwidths": tsne_map.bandwidths,
    }
    write_artifact(path, "tsne_map", scalars, arrays)


def load_tsne_map(path: str | Path) -> TsneMap:
    scalars, arrays = read_artifact(path, "tsne_map")
    cfg = TsneConfig(
        perplexity=float(scalars["perplexity"]),
        n_iter=int(scalars["n_iter"]),
        learning_rate=float(scalars["learning_rate"]),
        momentum_early=float(scalars["momentum_early"]),
        momentum_late=float(scalars["momentum_late"]),
        early_exaggeration=float(scalars["early_exaggeration"]),
        exaggeration_iters=int(scalars["exaggeration_iters"]),
        seed=int(scalars["seed"]),
    )
    return TsneMap(
        points=arrays["points"],
        labels=arrays["labels"],
        kl_trace=arrays["kl_trace"],
        config=cfg,
        high_dim_ref=arrays["high_dim_ref"],
        bandwidths=arrays["bandwidths"],
    )


# --- manifest ---------------------------------------------------------------


def write_manifest(path: str | Path, entries: Iterable[tuple[str, object]]) -> None:
    """Line-oriented, human-diffable key = value manifest."""
    lines = [f"restopred-manifest/{FORMAT_VERSION}"]
    for key, value in entries:
        if isinstance(value, float):
            lines.append(f"{key} = {value!r}")
        else:
            lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"manifest not found: {path}")
    lines = path.read_text().splitlines()
    if not lines or lines[0] != f"restopred-manifest/{FORMAT_VERSION}":
        raise ArtifactError(f"{path}: not a manifest (bad header)")
    out: dict[str, str] = {}
    for line in lines[1:]:
        if not line.strip() or line.startswith("#"):
            continue
        key, sep, value = line.partition(" = ")
        if sep:
            out[key] = value
    return out


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def index_hash(indices: np.ndarray) -> str:
    """Stable hash of an index list, for split reproducibility checks."""
    text = ",".join(str(int(i)) for i in indices)
    return hashlib.sha256(text.encode()).hexdigest()
