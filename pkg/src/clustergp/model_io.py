"""Model JSON and CSV persistence.

The model file is one self-contained JSON artifact (schema ``cgp-model/1``)
embedding the training data, so a loaded model predicts without any side
files.  Numbers pass through ``json`` using Python's shortest round-trip
float representation, which preserves every double bit-for-bit; reloading a
model therefore reproduces predictions bit-identically.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .estimators import ClusteredGP
from .exceptions import CsvFormatError, ModelFormatError
from .gating import GatingModel
from .gp import FittedGp, GpParams
from .linalg import CorrelationSpec, corr_matrix, factorize
from .sem import ClusteredGpModel

__all__ = [
    "MODEL_FORMAT",
    "save_model",
    "load_model",
    "read_xy_csv",
    "read_x_csv",
    "write_trace_csv",
    "write_prediction_csv",
]

MODEL_FORMAT = "cgp-model/1"
_FORMAT_PREFIX = "cgp-model/"


def _float_list(a):
    return [float(v) for v in np.asarray(a).reshape(-1)]


def _float_rows(a):
    return [[float(v) for v in row] for row in np.atleast_2d(a)]


def save_model(path, est: ClusteredGP, x_train: np.ndarray) -> None:
    """Write a fitted clustered-GP estimator as a cgp-model/1 JSON file.

    ``x_train`` is the training design in original units (the fitted model
    itself holds only the normalized copy).
    """
    model = est.model_
    clusters = []
    for j, gp in enumerate(model.gps):
        members = np.flatnonzero(model.assignments == j)
        clusters.append(
            {
                "mu": float(gp.params.mu),
                "sigma2": float(gp.params.sigma2),
                "gamma": _float_list(gp.params.corr.gamma),
                "power": float(gp.params.corr.power),
                "nugget": float(gp.params.corr.nugget),
                "members": [int(i) for i in members],
            }
        )
    doc = {
        "format": MODEL_FORMAT,
        "d": int(x_train.shape[1]),
        "k": int(model.n_clusters),
        "clusters": clusters,
        "gating": {
            "intercepts": _float_list(model.gating.intercepts),
            "slopes": _float_rows(model.gating.slopes),
        },
        "train": {"x": _float_rows(x_train), "y": _float_list(model.y)},
        "normalization": {
            "x_min": _float_list(est.x_min_),
            "x_span": _float_list(est.x_span_),
        },
        "params": {k: v for k, v in est.get_params().items() if k != "threads"},
        "meta": {
            "seed": int(est.seed),
            "iterations": len(est.trace_.rmse) if est.trace_ is not None else 0,
            "best_loocv_rmse": float(est.best_rmse_),
        },
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def _require(doc, key, context="model file"):
    if key not in doc:
        raise ModelFormatError(f"{context} is missing the {key!r} field")
    return doc[key]


def load_model(path) -> ClusteredGP:
    """Rebuild a fitted ClusteredGP estimator from a cgp-model/1 file."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("model file must be a JSON object")
    fmt = _require(doc, "format")
    if not isinstance(fmt, str) or not fmt.startswith(_FORMAT_PREFIX):
        raise ModelFormatError(f"unrecognized format tag {fmt!r}")
    try:
        version = int(fmt[len(_FORMAT_PREFIX):])
    except ValueError as exc:
        raise ModelFormatError(f"unrecognized format tag {fmt!r}") from exc
    if version > 1:
        raise ModelFormatError(
            f"model format version {version} is newer than this package "
            "supports (up to 1)"
        )

    d = int(_require(doc, "d"))
    k = int(_require(doc, "k"))
    train = _require(doc, "train")
    x = np.asarray(_require(train, "x", "train section"), dtype=float)
    y = np.asarray(_require(train, "y", "train section"), dtype=float)
    if x.ndim != 2 or x.shape[1] != d or x.shape[0] != y.shape[0]:
        raise ModelFormatError("training data shape disagrees with d")
    norm = _require(doc, "normalization")
    x_min = np.asarray(_require(norm, "x_min", "normalization"), dtype=float)
    x_span = np.asarray(_require(norm, "x_span", "normalization"), dtype=float)
    if x_min.shape != (d,) or x_span.shape != (d,):
        raise ModelFormatError("normalization ranges disagree with d")
    xn = (x - x_min) / x_span

    clusters = _require(doc, "clusters")
    if len(clusters) != k:
        raise ModelFormatError("cluster count disagrees with k")
    assignments = np.full(x.shape[0], -1, dtype=int)
    gps = []
    for j, spec in enumerate(clusters):
        members = np.asarray(_require(spec, "members", f"cluster {j}"), dtype=int)
        if members.size == 0:
            raise ModelFormatError(f"cluster {j} has no members")
        if np.any(assignments[members] != -1):
            raise ModelFormatError("clusters share member indices")
        assignments[members] = j
        corr = CorrelationSpec(
            gamma=np.asarray(_require(spec, "gamma", f"cluster {j}"), dtype=float),
            power=float(_require(spec, "power", f"cluster {j}")),
            nugget=float(_require(spec, "nugget", f"cluster {j}")),
        )
        params = GpParams(
            mu=float(_require(spec, "mu", f"cluster {j}")),
            sigma2=float(_require(spec, "sigma2", f"cluster {j}")),
            corr=corr,
        )
        fact = factorize(corr_matrix(xn[members], corr))
        weights = fact.inverse @ (y[members] - params.mu)
        gps.append(
            FittedGp(params=params, x=xn[members], y=y[members], fact=fact,
                     weights=weights)
        )
    if np.any(assignments < 0):
        raise ModelFormatError("some training points belong to no cluster")

    gating_doc = _require(doc, "gating")
    gating = GatingModel(
        n_classes=k,
        intercepts=np.asarray(_require(gating_doc, "intercepts", "gating"), dtype=float),
        slopes=np.asarray(_require(gating_doc, "slopes", "gating"), dtype=float),
    )

    est = ClusteredGP(**_require(doc, "params"))
    est.x_min_ = x_min
    est.x_span_ = x_span
    est.k_ = k
    est.k_scores_ = None
    est.trace_ = None
    meta = doc.get("meta", {})
    est.best_rmse_ = float(meta.get("best_loocv_rmse", np.nan))
    est.model_ = ClusteredGpModel(
        n_clusters=k,
        assignments=assignments,
        gps=tuple(gps),
        gating=gating,
        x=xn,
        y=y,
    )
    return est


def _read_rows(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise CsvFormatError(f"{path}: {exc.strerror or exc}") from exc
    except UnicodeDecodeError as exc:
        raise CsvFormatError(f"{path}: not valid UTF-8 ({exc.reason})") from exc
    if not rows:
        raise CsvFormatError(f"{path}: line 1: missing header row")
    header = [h.strip() for h in rows[0]]
    if any(not h for h in header):
        raise CsvFormatError(f"{path}: line 1: empty column name in header")
    data = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise CsvFormatError(
                f"{path}: line {i}: expected {len(header)} fields, got {len(row)}"
            )
        try:
            data[i - 2] = [float(v) for v in row]
        except ValueError:
            bad = next(v for v in row if not _is_float(v))
            raise CsvFormatError(
                f"{path}: line {i}: {bad!r} is not a number"
            ) from None
    return header, data


def _is_float(v):
    try:
        float(v)
        return True
    except ValueError:
        return False


def read_xy_csv(path):
    """Read a training CSV: feature columns, then a final column named y."""
    header, data = _read_rows(path)
    if len(header) < 2:
        raise CsvFormatError(
            f"{path}: line 1: need at least one feature column and a y column"
        )
    if header[-1] != "y":
        raise CsvFormatError(
            f"{path}: line 1: last column must be named 'y', got {header[-1]!r}"
        )
    if data.shape[0] == 0:
        raise CsvFormatError(f"{path}: line 2: no data rows")
    return data[:, :-1], data[:, -1], header[:-1]


def read_x_csv(path):
    """Read a prediction-input CSV; a trailing y column, if present, is
    returned separately so the caller can re-score against it."""
    header, data = _read_rows(path)
    if data.shape[0] == 0:
        raise CsvFormatError(f"{path}: line 2: no data rows")
    if header[-1] == "y":
        return data[:, :-1], data[:, -1], header[:-1]
    return data, None, header


def write_trace_csv(path, trace) -> None:
    """Per-iteration fit trace: iter, LOOCV RMSE, assignment switches."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "loocv_rmse", "switches"])
        for t, (rmse, switches) in enumerate(zip(trace.rmse, trace.switches), start=1):
            writer.writerow([t, repr(float(rmse)), int(switches)])
    os.replace(tmp, path)


def write_prediction_csv(path, feature_names, x, mean, variance, quantiles,
                         levels) -> None:
    """Prediction table: input columns, mean, variance, one q_* per level."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        qnames = [f"q_{level:g}" for level in levels]
        writer.writerow(list(feature_names) + ["mean", "variance"] + qnames)
        for i in range(x.shape[0]):
            row = [repr(float(v)) for v in x[i]]
            row.append(repr(float(mean[i])))
            row.append(repr(float(variance[i])))
            row.extend(repr(float(q)) for q in quantiles[i])
            writer.writerow(row)
    os.replace(tmp, path)
