"""Seeded experiment drivers: iteration regression, convergence traces,
predicted cost sweeps and a wallclock check of the time model.

Trial ``t`` at size ``n`` always draws from ``SeedSequence([seed, n, t])``,
so results do not depend on execution order or on the number of workers.
"""
from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cost_model import (ALGORITHMS, DEFAULT_FITS, MODELS, CostTables, analytic_counts,
                         predict_expected_cost, time_cost)
from .svd_algorithms import grk_svd, qr_svd

DEFAULT_SEED = 20240917

HEADERS = {
    "iterations": ("size", "trial", "iterations", "converged"),
    "trace": ("trial", "iteration", "error"),
    "costs": ("n", "algorithm", "mode", "time_seconds", "energy_pj"),
    "selfcheck": ("n", "predicted_units", "measured_seconds", "ratio"),
}


def trial_seed(master: int, size: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), int(size), int(trial)])


def random_matrix(m: int, n: int, seed) -> np.ndarray:
    """i.i.d. standard normal entries from PCG64; ``seed`` is an int or SeedSequence."""
    if m < 1 or n < 1:
        raise ValueError("matrix dimensions must be positive")
    return np.random.Generator(np.random.PCG64(seed)).standard_normal((m, n))


def run_svd(algorithm: str, A, mode: str = "dsc", delta: float = 1e-6, **kw):
    if algorithm == "qr-svd":
        return qr_svd(A, delta=delta, engine=mode, **kw)
    if algorithm == "grk-svd":
        return grk_svd(A, mode=mode, delta=delta, **kw)
    raise ValueError(f"algorithm must be one of {ALGORITHMS}")


@dataclass
class ExperimentSpec:
    algorithm: str = "grk-svd"
    mode: str = "dsc"
    sizes: list[int] = field(default_factory=lambda: list(range(5, 41)))
    trials_per_size: int = 250
    delta: float = 1e-6
    seed: int = DEFAULT_SEED
    output: str | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.mode not in MODELS:
            raise ValueError(f"mode must be one of {MODELS}")
        self.sizes = [int(s) for s in self.sizes]
        if not self.sizes or min(self.sizes) < 3:
            raise ValueError("sizes must be non-empty and at least 3")
        if self.trials_per_size < 1:
            raise ValueError("need at least one trial per size")
        if not self.delta > 0:
            raise ValueError("delta must be positive")


@dataclass
class RegressionFit:
    slope: float
    intercept: float
    sizes: list[int]
    medians: list[float]
    residuals: list[float]
    excluded: int = 0


def fit_line(sizes, values):
    """Least-squares line through (size, value) pairs; returns (slope, intercept, residuals)."""
    x = np.asarray(sizes, dtype=float)
    y = np.asarray(values, dtype=float)
    if np.unique(x).size < 2:
        raise ValueError("need at least two distinct sizes")
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept), (y - (slope * x + intercept)).tolist()


def _regression_trial(job):
    algorithm, mode, delta, seed, size, t = job
    A = random_matrix(size, size, trial_seed(seed, size, t))
    res = run_svd(algorithm, A, mode, delta, vectors=False)
    return size, t, res.iterations, res.converged


def _map(fn, jobs, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs, chunksize=16))
    return [fn(j) for j in jobs]


def iteration_regression(spec: ExperimentSpec, workers: int = 1):
    """Median iteration count per size and a linear fit through the medians.

    Returns ``(fit, rows)`` with one ``(size, trial, iterations, converged)``
    row per trial.  Non-converged trials stay in ``rows`` but not in the medians.
    """
    if len(set(spec.sizes)) < 2:
        raise ValueError("need at least two distinct sizes")
    jobs = [(spec.algorithm, spec.mode, spec.delta, spec.seed, s, t)
            for s in spec.sizes for t in range(spec.trials_per_size)]
    rows = sorted(_map(_regression_trial, jobs, workers))
    sizes, medians = [], []
    excluded = 0
    for s in sorted(set(spec.sizes)):
        its = [it for size, _, it, ok in rows if size == s and ok]
        excluded += sum(1 for size, _, _, ok in rows if size == s and not ok)
        if its:
            sizes.append(s)
            medians.append(float(np.median(its)))
    slope, intercept, resid = fit_line(sizes, medians)
    fit = RegressionFit(slope, intercept, sizes, medians, resid, excluded)
    if spec.output:
        write_csv(spec.output, HEADERS["iterations"], rows)
    return fit, rows


def _trace_trial(job):
    algorithm, mode, delta, seed, m, n, t = job
    A = random_matrix(m, n, trial_seed(seed, n, t))
    res = run_svd(algorithm, A, mode, delta, vectors=False, trace=True)
    return t, res.trace


def convergence_trace(algorithm: str, m: int, n: int, trials: int = 200, seed: int = DEFAULT_SEED,
                      mode: str = "dsc", delta: float = 1e-6, workers: int = 1):
    """Rows ``(trial, iteration, error)``: the off-diagonal maximum after every sweep."""
    if trials < 1:
        raise ValueError("need at least one trial")
    jobs = [(algorithm, mode, delta, seed, m, n, t) for t in range(trials)]
    rows = []
    for t, errors in sorted(_map(_trace_trial, jobs, workers)):
        rows.extend((t, k, float(e)) for k, e in enumerate(errors))
    return rows


def traces_by_trial(rows) -> dict[int, list[float]]:
    out: dict[int, list[float]] = {}
    for t, _, e in sorted(rows):
        out.setdefault(t, []).append(e)
    return out


def tail_reduction_fraction(traces, sweeps: int = 3, factor: float = 10.0) -> float:
    """Share of traces whose last ``sweeps`` steps each cut the error by ``factor``."""
    ok = 0
    for tr in traces:
        if len(tr) < sweeps + 1:
            continue
        tail = tr[-(sweeps + 1):]
        ok += all(b * factor <= a for a, b in zip(tail, tail[1:]))
    return ok / len(traces)


def doubling_fraction(traces, k0: int = 10) -> float:
    """Share of traces with error[2k] <= error[k] for every k >= k0 inside the trace."""
    ok = 0
    for tr in traces:
        ok += all(tr[2 * k] <= tr[k] for k in range(k0, (len(tr) - 1) // 2 + 1))
    return ok / len(traces)


def cost_sweep(n_values, algorithms=ALGORITHMS, modes=MODELS, fits=None, tables: CostTables | None = None):
    """Predicted ``(n, algorithm, mode, seconds, pJ)`` for every combination."""
    fits = {**DEFAULT_FITS, **(fits or {})}
    rows = []
    for n in n_values:
        for alg in algorithms:
            for mode in modes:
                sec, pj = predict_expected_cost(alg, mode, int(n), fits[alg], tables)
                rows.append((int(n), alg, mode, sec, pj))
    return rows


def wallclock_selfcheck(algorithm: str = "grk-svd", n_values=(16, 32, 64, 128), trials: int = 3,
                        repeats: int = 3, seed: int = DEFAULT_SEED, tables: CostTables | None = None):
    """Measured D-SC wallclock against the time model at the measured sweep count.

    The model prices one time unit at 0.25 ns, i.e. one counted operation per
    cycle of a 4 GHz core.  Rows are ``(n, predicted_units, measured_seconds,
    ratio)`` summed over ``trials`` matrices, each timed as the median of
    ``repeats`` runs.
    """
    tables = tables or CostTables()
    run_svd(algorithm, random_matrix(4, 4, 0))  # compile outside the timed region
    rows = []
    for n in n_values:
        units = measured = 0.0
        for t in range(trials):
            A = random_matrix(n, n, trial_seed(seed, n, t))
            times = []
            for _ in range(repeats):
                start = time.perf_counter()
                res = run_svd(algorithm, A, "dsc")
                times.append(time.perf_counter() - start)
            measured += float(np.median(times))
            u, _ = time_cost(analytic_counts(algorithm, "dsc", n, n, max(1, res.iterations)), tables, "dsc")
            units += u
        rows.append((int(n), units, measured, measured / (units * tables.unit_duration)))
    return rows


def _fmt(x):
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> None:
    d = os.path.dirname(os.fspath(path))
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
