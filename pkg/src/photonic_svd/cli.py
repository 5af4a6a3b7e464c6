"""Command-line front end: ``photonic-svd {decompose,count,cost,experiment}``.

Exit codes: 0 on success (or convergence), 2 when a decomposition did not
converge, 1 on usage, input or output errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .cost_model import (ALGORITHMS, DEFAULT_FITS, MODELS, PHASES, TABLES_ENV, CostTables,
                         analytic_counts, energy_cost, expected_iterations, time_cost)
from .experiments import (DEFAULT_SEED, HEADERS, ExperimentSpec, convergence_trace, cost_sweep,
                          iteration_regression, random_matrix, run_svd, wallclock_selfcheck, write_csv)
from .linalg_core import KINDS

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


class CliError(Exception):
    pass


# ------------------------------------------------------------------ parsing


def read_matrix(path) -> np.ndarray:
    """Comma-separated rows with an optional ``# m n`` header line."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None
    shape = None
    rows = []
    for lineno, line in enumerate(lines, 1):
        text = line.strip()
        if not text:
            continue
        if text.startswith("#"):
            if shape is None and not rows:
                parts = text[1:].split()
                if len(parts) == 2 and all(p.isdigit() for p in parts):
                    shape = (int(parts[0]), int(parts[1]))
            continue
        try:
            row = [float(x) for x in text.split(",")]
        except ValueError:
            raise CliError(f"{path}:{lineno}: not a comma-separated list of numbers") from None
        if not all(np.isfinite(row)):
            raise CliError(f"{path}:{lineno}: non-finite entry")
        if rows and len(row) != len(rows[0]):
            raise CliError(f"{path}:{lineno}: expected {len(rows[0])} entries, found {len(row)}")
        rows.append(row)
    if not rows:
        raise CliError(f"{path}: no matrix rows")
    A = np.array(rows)
    if shape is not None and A.shape != shape:
        raise CliError(f"{path}: header says {shape[0]}x{shape[1]}, data is {A.shape[0]}x{A.shape[1]}")
    return A


def int_list(text: str) -> list[int]:
    """``a:b`` (inclusive), ``a:b:step`` or a comma list."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) not in (2, 3) or (len(parts) == 3 and parts[2] < 1):
                raise ValueError
            step = parts[2] if len(parts) == 3 else 1
            return list(range(parts[0], parts[1] + 1, step))
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


def fit_pair(text: str) -> tuple[float, float]:
    try:
        slope, intercept = (float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'slope,intercept', got {text!r}") from None
    return slope, intercept


def load_tables(path) -> CostTables:
    try:
        return CostTables.from_file(path) if path else CostTables.default()
    except OSError as exc:
        raise CliError(f"cannot read tables {exc.filename}: {exc.strerror}") from None
    except ValueError as exc:
        raise CliError(str(exc)) from None


def write_matrix(path, M) -> None:
    """Same comma-separated layout that :func:`read_matrix` accepts, shortest round-trip floats."""
    rows = (",".join(repr(float(x)) for x in row) for row in np.atleast_2d(M))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {M.shape[0]} {M.shape[1]}\n")
        fh.writelines(r + "\n" for r in rows)


def write_text(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        d = os.path.dirname(os.fspath(path))
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}") from None


# ------------------------------------------------------------------ commands


def result_document(algorithm, mode, A, res, tables, seed=None) -> dict:
    """Key/value summary of one decomposition, serialized as JSON."""
    m, n = A.shape
    counters = res.counters
    units, seconds = time_cost(counters, tables, mode)
    return {
        "tool": "photonic-svd",
        "version": __version__,
        "algorithm": algorithm,
        "mode": mode,
        "m": m,
        "n": n,
        "seed": seed,
        "iterations": res.iterations,
        "converged": res.converged,
        "residual": res.residual_offdiag,
        "reconstruction_error": float(np.max(np.abs(res.reconstruct() - A))),
        "sigma": [float(s) for s in res.sigma],
        "counters": counters.as_dict(),
        "time_units": units,
        "seconds": seconds,
        "energy_pj": energy_cost(counters, tables, mode, chip_size=max(m, n)),
    }


def cmd_decompose(args) -> int:
    if not args.tol > 0:
        raise CliError("--tol must be positive")
    if args.max_iters is not None and args.max_iters < 1:
        raise CliError("--max-iters must be at least 1")
    tables = load_tables(args.tables)
    if args.input:
        A, seed = read_matrix(args.input), None
    else:
        if args.m is None or args.n is None:
            raise CliError("give --input FILE or --m and --n for a random matrix")
        A, seed = random_matrix(args.m, args.n, args.seed), args.seed
    kw = {"max_iters": args.max_iters} if args.alg == "qr-svd" else {"max_sweeps": args.max_iters}
    try:
        res = run_svd(args.alg, A, args.mode, args.tol, **kw)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    doc = result_document(args.alg, args.mode, A, res, tables, seed)
    write_text(args.out, json.dumps(doc, indent=2) + "\n")
    if args.emit_factors:
        d = args.emit_factors
        try:
            os.makedirs(d, exist_ok=True)
            for name, M in (("U", res.U), ("sigma", res.sigma[None, :]), ("V", res.V)):
                write_matrix(os.path.join(d, f"{name}.csv"), M)
        except OSError as exc:
            raise CliError(f"cannot write factors to {d}: {exc.strerror}") from None
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_count(args) -> int:
    m, n = args.m, args.n
    if not m >= n >= 2:
        raise CliError(f"need m >= n >= 2, got m={m}, n={n}")
    if args.instrumented:
        A = random_matrix(m, n, args.seed)
        res = run_svd(args.alg, A, args.mode, args.tol)
        doc = {"source": "instrumented", "seed": args.seed, "iterations": res.iterations,
               "converged": res.converged, "counters": res.counters.as_dict()}
    else:
        if args.iters < 1:
            raise CliError("--iters must be at least 1")
        try:
            cnt = analytic_counts(args.alg, args.mode, m, n, args.iters, args.phase)
        except ValueError as exc:
            raise CliError(str(exc)) from None
        doc = {"source": "analytic", "phase": args.phase, "iterations": args.iters,
               "counters": cnt.as_dict()}
    doc = {"algorithm": args.alg, "mode": args.mode, "m": m, "n": n, **doc}
    write_text(args.out, json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def cost_report(counts, tables: CostTables, mode: str, n: int) -> str:
    """Per-kind unit prices and counts followed by the totals."""
    lines = [f"{'kind':<12} {'count':>16} {'ns/op':>12} {'pJ/op':>12}"]
    for k in KINDS:
        ns = tables.relative_time[k] * tables.unit_duration * 1e9
        if k in ("add", "mul", "div", "sqrt"):
            pj = f"{tables.relative_time[k] * tables.cpu_energy_per_unit:g}"
        elif k == "chip_config":
            pj = f"{tables.chip_config_energy(n):g}"
        elif k == "chip_op":
            pj = f"{tables.chip_op_energy(n):g}"
        else:
            pj = "-"
        lines.append(f"{k:<12} {getattr(counts, k):>16} {ns:>12g} {pj:>12}")
    if counts.gpu_work:
        lines.append(f"{'gpu_work':<12} {counts.gpu_work:>16} {'-':>12} {tables.gpu_energy_per_op:>12g}")
    units, seconds = time_cost(counts, tables, mode)
    lines.append(f"time_units = {units!r}")
    lines.append(f"seconds = {seconds!r}")
    lines.append(f"energy_pj = {energy_cost(counts, tables, mode, chip_size=n)!r}")
    return "\n".join(lines) + "\n"


def cmd_cost(args) -> int:
    if args.n < 3:
        raise CliError("--n must be at least 3")
    tables = load_tables(args.tables)
    if args.iters is not None:
        if args.iters < 1:
            raise CliError("--iters must be at least 1")
        C = args.iters
    else:
        C = expected_iterations(args.n, args.fit or DEFAULT_FITS[args.alg])
    counts = analytic_counts(args.alg, args.mode, args.n, args.n, C)
    header = f"algorithm = {args.alg}\nmode = {args.mode}\nn = {args.n}\niterations = {C}\n"
    write_text(args.out, header + cost_report(counts, tables, args.mode, args.n))
    return EXIT_OK


def _out_path(args, name):
    return os.path.join(args.out, name)


def cmd_experiment(args) -> int:
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create {args.out}: {exc.strerror}") from None
    if not os.access(args.out, os.W_OK):
        raise CliError(f"output directory {args.out} is not writable")
    try:
        if args.kind == "iterations":
            spec = ExperimentSpec(args.alg, args.mode, args.sizes, args.trials, args.tol, args.seed,
                                  _out_path(args, "iterations.csv"))
            fit, _ = iteration_regression(spec, workers=args.workers)
            print(f"slope = {fit.slope!r}")
            print(f"intercept = {fit.intercept!r}")
            print(f"excluded = {fit.excluded}")
            for s, med in zip(fit.sizes, fit.medians):
                print(f"median[{s}] = {med!r}")
        elif args.kind == "trace":
            rows = convergence_trace(args.alg, args.size, args.size, args.trials, args.seed,
                                     args.mode, args.tol, workers=args.workers)
            write_csv(_out_path(args, "trace.csv"), HEADERS["trace"], rows)
        elif args.kind == "sweep":
            tables = load_tables(args.tables)
            fits = {}
            if args.fit_qr:
                fits["qr-svd"] = args.fit_qr
            if args.fit_grk:
                fits["grk-svd"] = args.fit_grk
            rows = cost_sweep(args.sizes, fits=fits, tables=tables)
            write_csv(_out_path(args, "costs.csv"), HEADERS["costs"], rows)
        else:
            tables = load_tables(args.tables)
            rows = wallclock_selfcheck(args.alg, args.sizes, args.trials, seed=args.seed, tables=tables)
            write_csv(_out_path(args, "selfcheck.csv"), HEADERS["selfcheck"], rows)
            for n, _, _, ratio in rows:
                print(f"ratio[{n}] = {ratio!r}")
    except OSError as exc:
        raise CliError(f"cannot write to {args.out}: {exc.strerror}") from None
    except ValueError as exc:
        raise CliError(str(exc)) from None
    return EXIT_OK


# ------------------------------------------------------------------ parser

_EXPERIMENT_DEFAULTS = {
    "iterations": {"sizes": "5:40", "trials": 250},
    "trace": {"sizes": "", "trials": 200},
    "sweep": {"sizes": "8:256", "trials": 1},
    "selfcheck": {"sizes": "16,32,64,128", "trials": 3},
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="photonic-svd", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, tables=True):
        sp.add_argument("--alg", choices=ALGORITHMS, default="grk-svd")
        sp.add_argument("--mode", choices=MODELS, default="dsc")
        if tables:
            sp.add_argument("--tables", help=f"cost-table override file (default: ${TABLES_ENV})")

    d = sub.add_parser("decompose", help="decompose a matrix and report counts and costs")
    common(d)
    d.add_argument("--input", help="comma-separated matrix file")
    d.add_argument("--m", type=int, help="rows of a random matrix (without --input)")
    d.add_argument("--n", type=int, help="columns of a random matrix (without --input)")
    d.add_argument("--seed", type=int, default=DEFAULT_SEED)
    d.add_argument("--tol", type=float, default=1e-6)
    d.add_argument("--max-iters", type=int)
    d.add_argument("--emit-factors", metavar="DIR")
    d.add_argument("--out", default="-", help="result document path (default: stdout)")
    d.set_defaults(func=cmd_decompose)

    c = sub.add_parser("count", help="operation counts, analytic or measured")
    common(c, tables=False)
    c.add_argument("--m", type=int, required=True)
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--iters", type=int, default=1)
    c.add_argument("--phase", choices=PHASES, default="whole")
    g = c.add_mutually_exclusive_group()
    g.add_argument("--analytic", action="store_true", help="evaluate the count polynomials (default)")
    g.add_argument("--instrumented", action="store_true", help="run on a seeded random matrix")
    c.add_argument("--seed", type=int, default=DEFAULT_SEED)
    c.add_argument("--tol", type=float, default=1e-6)
    c.add_argument("--out", default="-")
    c.set_defaults(func=cmd_count)

    k = sub.add_parser("cost", help="predicted seconds and picojoules for an n x n run")
    common(k)
    k.add_argument("--n", type=int, required=True)
    grp = k.add_mutually_exclusive_group()
    grp.add_argument("--iters", type=int)
    grp.add_argument("--fit", type=fit_pair, metavar="SLOPE,INTERCEPT")
    k.add_argument("--out", default="-")
    k.set_defaults(func=cmd_cost)

    e = sub.add_parser("experiment", help="seeded experiments writing CSV files")
    e.add_argument("kind", choices=tuple(_EXPERIMENT_DEFAULTS))
    common(e)
    e.add_argument("--sizes", type=int_list, help="a:b, a:b:step or a,b,c")
    e.add_argument("--size", type=int, default=15, help="matrix size for trace")
    e.add_argument("--trials", type=int)
    e.add_argument("--tol", type=float, default=1e-6)
    e.add_argument("--seed", type=int, default=DEFAULT_SEED)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--fit-qr", type=fit_pair, metavar="SLOPE,INTERCEPT")
    e.add_argument("--fit-grk", type=fit_pair, metavar="SLOPE,INTERCEPT")
    e.add_argument("--out", required=True, metavar="DIR")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    if args.command == "experiment":
        defaults = _EXPERIMENT_DEFAULTS[args.kind]
        if args.sizes is None:
            args.sizes = int_list(defaults["sizes"]) if defaults["sizes"] else []
        if args.trials is None:
            args.trials = defaults["trials"]
    try:
        return args.func(args)
    except CliError as exc:
        print(f"photonic-svd: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
