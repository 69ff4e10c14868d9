"""Synthetic test functions, maximin designs and the RMSE benchmark harness.

The harness fits the clustered model and a single stationary GP on the same
design and scores both on a held-out test set.  Reports carry wall-clock
timings, but only the RMSE values are contractual; timings are
hardware-dependent and never asserted anywhere.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .estimators import ClusteredGP, StationaryGP
from .sem import SemConfig

__all__ = [
    "TestFunction",
    "TEST_FUNCTIONS",
    "BenchReport",
    "maximin_lhd",
    "jittered_grid_1d",
    "default_k_for",
    "run_benchmark",
    "write_report",
    "write_predictions",
]

_SWAP_ATTEMPTS = 1000
_RESTARTS = 8
_REFINED_RESTARTS = 4
METHOD_NAMES = ("stationary_gp", "clustered_gp")


@dataclass(frozen=True)
class TestFunction:
    """Deterministic scalar response over a box domain."""

    name: str
    dim: int
    bounds: np.ndarray
    evaluate: callable
    default_k: object
    default_n: int


def _gramacy1d(x):
    t = np.asarray(x)[:, 0]
    return np.where(
        t < 10.0,
        np.sin(0.2 * np.pi * t) + 0.2 * np.cos(0.8 * np.pi * t),
        0.1 * t - 1.0,
    )


def _xiong(x):
    t = np.asarray(x)[:, 0]
    return np.sin(30.0 * (t - 0.9) ** 4) * np.cos(2.0 * (t - 0.9)) + (t - 0.9) / 2.0


def _montagna(x):
    t = np.asarray(x)[:, 0]
    return np.sin(t) + 2.0 * np.exp(-30.0 * t**2)


def _wavy(x):
    x = np.asarray(x)
    return np.sin(1.0 / (x[:, 0] * x[:, 1]))


def _borehole(x):
    """Water flow rate through a borehole, the classic 8-input benchmark."""
    x = np.asarray(x)
    r_w, r, t_u, h_u, t_l, h_l, length, k_w = (x[:, j] for j in range(8))
    log_rr = np.log(r / r_w)
    numer = 2.0 * np.pi * t_u * (h_u - h_l)
    denom = log_rr * (1.0 + 2.0 * length * t_u / (log_rr * r_w**2 * k_w) + t_u / t_l)
    return numer / denom


TEST_FUNCTIONS = {
    "gramacy1d": TestFunction(
        name="gramacy1d",
        dim=1,
        bounds=np.array([[0.0, 20.0]]),
        evaluate=_gramacy1d,
        default_k=2,
        default_n=11,
    ),
    "xiong": TestFunction(
        name="xiong",
        dim=1,
        bounds=np.array([[0.0, 1.0]]),
        evaluate=_xiong,
        default_k=2,
        default_n=17,
    ),
    "montagna": TestFunction(
        name="montagna",
        dim=1,
        bounds=np.array([[-2.0, 2.0]]),
        evaluate=_montagna,
        default_k=3,
        default_n=15,
    ),
    "wavy": TestFunction(
        name="wavy",
        dim=2,
        bounds=np.array([[0.3, 1.0], [0.3, 1.0]]),
        evaluate=_wavy,
        default_k=3,
        default_n=40,
    ),
    "borehole": TestFunction(
        name="borehole",
        dim=8,
        bounds=np.array(
            [
                [0.05, 0.15],
                [100.0, 50000.0],
                [63070.0, 115600.0],
                [990.0, 1110.0],
                [63.1, 116.0],
                [700.0, 820.0],
                [1120.0, 1680.0],
                [9855.0, 12045.0],
            ]
        ),
        evaluate=_borehole,
        default_k=lambda n: max(2, n // 200),
        default_n=1000,
    ),
}


def default_k_for(fn: TestFunction, n: int) -> int:
    return fn.default_k(n) if callable(fn.default_k) else int(fn.default_k)


def jittered_grid_1d(n: int, lo: float, hi: float, seed: int = 0) -> np.ndarray:
    """Sorted 1-D design with one uniform draw per stratum."""
    rng = np.random.default_rng(seed)
    u = np.sort((np.arange(n) + rng.random(n)) / n)
    return lo + (hi - lo) * u


def _min_dist(pts):
    return float(pdist(pts).min())


def maximin_lhd(n: int, d: int, seed: int = 0, swaps: int = _SWAP_ATTEMPTS) -> np.ndarray:
    """Latin hypercube in [0,1]^d improved toward maximin distance.

    Seeded random restarts build jittered hypercubes; the most promising
    restarts are then refined by pairwise swaps that improve the minimum
    interpoint distance, splitting the swap-attempt budget across them, and
    the best refined design wins.  Each swap attempt targets the current
    closest pair and executes the single best-improving swap between one of
    its endpoints and any other row, in any column; refinement stops early
    once no improving swap exists.  Swaps exchange values within one column,
    so every column keeps exactly one point per stratum.  Deterministic
    given the seed.
    """
    if n < 2:
        raise ValueError("a maximin design needs n >= 2")
    rng = np.random.default_rng(seed)

    def candidate():
        cols = [rng.permutation((np.arange(n) + rng.random(n)) / n) for _ in range(d)]
        return np.column_stack(cols)

    starts = [candidate() for _ in range(_RESTARTS)]
    starts.sort(key=_min_dist, reverse=True)
    n_refine = min(_REFINED_RESTARTS, len(starts))
    budget = swaps // n_refine if n_refine else 0

    best, best_score = starts[0], _min_dist(starts[0])
    for x in starts[:n_refine]:
        x = _improve_swaps(x, budget)
        score = _min_dist(x)
        if score > best_score:
            best, best_score = x, score
    return best


def _improve_swaps(x, attempts):
    """Greedy closest-pair swap refinement of a design, in place."""
    n, d = x.shape
    dm = squareform(pdist(x))
    np.fill_diagonal(dm, np.inf)
    for _ in range(attempts):
        i, j = np.unravel_index(np.argmin(dm), dm.shape)
        move = None
        move_score = dm.min()
        for e in (int(i), int(j)):
            for r in range(n):
                if r == e:
                    continue
                for c in range(d):
                    x[e, c], x[r, c] = x[r, c], x[e, c]
                    de = cdist(x[[e]], x)[0]
                    dr = cdist(x[[r]], x)[0]
                    de[e] = dr[r] = np.inf
                    trial = dm.copy()
                    trial[e, :] = trial[:, e] = de
                    trial[r, :] = trial[:, r] = dr
                    trial[e, r] = trial[r, e] = de[r]
                    score = trial.min()
                    if score > move_score:
                        move, move_score = (e, r, c), score
                    x[e, c], x[r, c] = x[r, c], x[e, c]
        if move is None:
            break
        e, r, c = move
        x[e, c], x[r, c] = x[r, c], x[e, c]
        dm = squareform(pdist(x))
        np.fill_diagonal(dm, np.inf)
    return x


@dataclass(frozen=True)
class BenchReport:
    """One method's result on one benchmark run."""

    method: str
    n: int
    seed: int
    fit_sec: float
    pred_sec: float
    rmse: float
    config: SemConfig


def _train_design(fn, n, rng, seed):
    lo, hi = fn.bounds[:, 0], fn.bounds[:, 1]
    if fn.dim == 1:
        return jittered_grid_1d(n, lo[0], hi[0], seed=seed)[:, None]
    if fn.dim == 2:
        return lo + (hi - lo) * maximin_lhd(n, 2, seed=seed)
    return rng.uniform(lo, hi, (n, fn.dim))


def _test_design(fn, n_test, rng):
    lo, hi = fn.bounds[:, 0], fn.bounds[:, 1]
    if fn.dim == 1:
        return np.linspace(lo[0], hi[0], n_test)[:, None]
    if fn.dim == 2:
        side = math.isqrt(n_test)
        if side * side == n_test:
            g0 = np.linspace(lo[0], hi[0], side)
            g1 = np.linspace(lo[1], hi[1], side)
            a, b = np.meshgrid(g0, g1, indexing="ij")
            return np.column_stack([a.ravel(), b.ravel()])
    return rng.uniform(lo, hi, (n_test, fn.dim))


def _fit_method(method, x, y, k, config):
    if method == "stationary_gp":
        est = StationaryGP(
            nugget=config.nugget,
            power=config.power,
            n_starts=config.n_starts,
            maxfev=config.maxfev,
            threads=config.threads,
        )
    else:
        est = ClusteredGP(
            k=k,
            max_iter=config.max_iter,
            patience=config.patience,
            seed=config.seed,
            nugget=config.nugget,
            power=config.power,
            ridge=config.ridge,
            n_starts=config.n_starts,
            warm_starts=config.warm_starts,
            refit_every=config.refit_every,
            n_max=config.n_max,
            threads=config.threads,
            maxfev=config.maxfev,
        )
    return est.fit(x, y)


def run_benchmark(
    fn,
    n: int,
    n_test: int,
    methods=METHOD_NAMES,
    config: SemConfig | None = None,
    seed: int = 0,
    k: int | None = None,
    out: str | Path | None = None,
) -> list[BenchReport]:
    """Fit each method on a fresh design and score RMSE on held-out points.

    ``out``, when given, is the report CSV path; per-method predictions and
    the train/test data land next to it so every number in the report can be
    recomputed from the persisted files.
    """
    if isinstance(fn, str):
        if fn not in TEST_FUNCTIONS:
            raise ValueError(f"unknown test function {fn!r}")
        fn = TEST_FUNCTIONS[fn]
    unknown = set(methods) - set(METHOD_NAMES)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    if n_test < 1:
        raise ValueError("n_test must be positive")
    config = config or SemConfig(seed=seed)
    k = default_k_for(fn, n) if k is None else int(k)

    rng = np.random.default_rng(seed)
    x_train = _train_design(fn, n, rng, seed)
    y_train = fn.evaluate(x_train)
    x_test = _test_design(fn, n_test, rng)
    y_test = fn.evaluate(x_test)

    out = Path(out) if out is not None else None
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_xy(out.with_name(out.stem + "_train.csv"), x_train, y_train)
        _write_xy(out.with_name(out.stem + "_test.csv"), x_test, y_test)

    reports = []
    for method in methods:
        t0 = time.perf_counter()
        est = _fit_method(method, x_train, y_train, k, config)
        fit_sec = time.perf_counter() - t0
        t0 = time.perf_counter()
        mean, var = est.predict(x_test, return_var=True)
        quants = est.predict_quantiles(x_test, (0.025, 0.975))
        pred_sec = time.perf_counter() - t0
        rmse = float(np.sqrt(np.mean((y_test - mean) ** 2)))
        reports.append(
            BenchReport(
                method=method,
                n=n,
                seed=seed,
                fit_sec=fit_sec,
                pred_sec=pred_sec,
                rmse=rmse,
                config=config,
            )
        )
        if out is not None:
            write_predictions(
                out.with_name(f"{out.stem}_{method}_pred.csv"),
                x_test,
                y_test,
                mean,
                var,
                quants[:, 0],
                quants[:, 1],
            )
    if out is not None:
        write_report(reports, out)
    return reports


def _write_xy(path, x, y):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j + 1}" for j in range(x.shape[1])] + ["y"])
        for row, resp in zip(x, y):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(resp))])


def write_report(reports, path):
    """Write BenchReport rows as CSV (method,n,seed,fit_sec,pred_sec,rmse)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "n", "seed", "fit_sec", "pred_sec", "rmse"])
        for r in reports:
            writer.writerow(
                [r.method, r.n, r.seed, repr(r.fit_sec), repr(r.pred_sec), repr(r.rmse)]
            )


def write_predictions(path, x, y_true, y_pred, y_var, lo95, hi95):
    """Per-point predictions CSV (x...,y_true,y_pred,y_var,lo95,hi95)."""
    x = np.atleast_2d(x)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = [f"x{j + 1}" for j in range(x.shape[1])]
        writer.writerow(header + ["y_true", "y_pred", "y_var", "lo95", "hi95"])
        for i in range(x.shape[0]):
            row = [repr(float(v)) for v in x[i]]
            row += [
                repr(float(y_true[i])),
                repr(float(y_pred[i])),
                repr(float(y_var[i])),
                repr(float(lo95[i])),
                repr(float(hi95[i])),
            ]
            writer.writerow(row)
