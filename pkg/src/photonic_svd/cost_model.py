"""Runtime and energy estimates from operation counts.

Counts come either from an instrumented run (:class:`OpCounter`) or from the
closed-form polynomials in ``data/count_tables.json``, which are evaluated in
exact rational arithmetic.
"""
from __future__ import annotations

import ast
import json
import math
import operator
import os
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from functools import lru_cache
from importlib import resources

from .linalg_core import KINDS, OpCounter

ALGORITHMS = ("qr-svd", "grk-svd")
MODELS = ("dsc", "dmc", "hybrid")
PHASES = ("whole", "bidiag", "qr-iter")
TABLES_ENV = "PHOTONIC_SVD_TABLES"

# least-squares fits of median iteration counts against n
DEFAULT_FITS = {"qr-svd": (13.88, -78.61), "grk-svd": (1.47, 0.83)}

DEFAULT_TIME = {
    "add": 1.0, "mul": 1.0, "div": 20.0, "sqrt": 15.0,
    "add_gpu": 4.0, "mul_gpu": 4.0, "chip_config": 10000.0, "chip_op": 50.0,
}


@dataclass(frozen=True)
class CostTables:
    relative_time: dict = field(default_factory=lambda: dict(DEFAULT_TIME))
    unit_duration: float = 0.25e-9
    cpu_energy_per_unit: float = 375.0
    gpu_energy_per_op: float = 32.24
    chip_config_energy_coeff: float = 640.0
    chip_op_energy_coeff: float = 320.0

    def __post_init__(self):
        missing = set(KINDS) - set(self.relative_time)
        if missing:
            raise ValueError(f"relative_time lacks {sorted(missing)}")
        for k, v in self.relative_time.items():
            _check_positive(k, v)
        for f in fields(self):
            if f.name != "relative_time":
                _check_positive(f.name, getattr(self, f.name))

    def chip_config_energy(self, n: int) -> float:
        return self.chip_config_energy_coeff * n * (n - 1)

    def chip_op_energy(self, n: int) -> float:
        return self.chip_op_energy_coeff * n

    def with_overrides(self, overrides: dict) -> "CostTables":
        times = dict(self.relative_time)
        params = {}
        scalar = {f.name for f in fields(self)} - {"relative_time"}
        for key, value in overrides.items():
            if key in times:
                times[key] = float(value)
            elif key in scalar:
                params[key] = float(value)
            else:
                raise ValueError(f"unknown cost-table key {key!r}")
        return replace(self, relative_time=times, **params)

    @classmethod
    def from_file(cls, path) -> "CostTables":
        """Defaults overridden by a ``key = value`` file (``#`` starts a comment)."""
        overrides = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, value = (part.strip() for part in line.partition("="))
                if not sep or not key:
                    raise ValueError(f"{path}:{lineno}: expected 'key = value'")
                try:
                    overrides[key] = float(value)
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: bad value for {key!r}: {value!r}") from None
        return cls().with_overrides(overrides)

    @classmethod
    def default(cls) -> "CostTables":
        """Defaults, or the file named by the environment variable if set."""
        path = os.environ.get(TABLES_ENV)
        return cls.from_file(path) if path else cls()


def _check_positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ValueError(f"cost-table entry {name!r} must be positive and finite, got {value!r}")


# ------------------------------------------------------------- polynomials

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}


def _eval(node, env):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.Constant) and isinstance(node.value, int):
        return Fraction(node.value)
    if isinstance(node, ast.Name) and node.id in env:
        return Fraction(env[node.id])
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        return -_eval(node.operand, env)
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    raise ValueError(f"unsupported expression element {ast.dump(node)}")


def evaluate_polynomial(expr: str, m: int, n: int, C: int) -> Fraction:
    return _eval(ast.parse(expr, mode="eval"), {"m": m, "n": n, "C": C})


@lru_cache(maxsize=1)
def count_polynomials() -> dict:
    text = resources.files("photonic_svd").joinpath("data/count_tables.json").read_text()
    return json.loads(text)


def _round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def _phases(algorithm: str, phase: str) -> list[str]:
    if algorithm == "qr-svd":
        if phase != "whole":
            raise ValueError("qr-svd has only the 'whole' phase")
        return ["whole"]
    if phase == "whole":
        return ["bidiag", "qr-iter"]
    if phase not in ("bidiag", "qr-iter"):
        raise ValueError(f"phase must be one of {PHASES}")
    return [phase]


def analytic_counts(algorithm: str, mode: str, m: int, n: int, C: int, phase: str = "whole") -> OpCounter:
    """Closed-form operation counts; ``gpu_work`` carries the actual GPU flops for D-MC."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}")
    if mode not in MODELS:
        raise ValueError(f"mode must be one of {MODELS}")
    if not (int(m) == m and int(n) == n and int(C) == C):
        raise ValueError("m, n and C must be integers")
    if not (m >= n >= 2 and C >= 1):
        raise ValueError(f"need m >= n >= 2 and C >= 1, got m={m}, n={n}, C={C}")
    tables = count_polynomials()[algorithm]
    totals = {k: Fraction(0) for k in KINDS}
    gpu = Fraction(0)
    for ph in _phases(algorithm, phase):
        for kind, expr in tables[mode][ph].items():
            totals[kind] += evaluate_polynomial(expr, m, n, C)
        if mode == "dmc":
            for expr in tables["gpu_actual"][ph].values():
                gpu += evaluate_polynomial(expr, m, n, C)
    out = OpCounter(**{k: _round_half_up(v) for k, v in totals.items()}, gpu_work=_round_half_up(gpu))
    out.gpu = mode == "dmc"
    return out


# ----------------------------------------------------------------- pricing

_CPU = ("add", "mul", "div", "sqrt")


def _check_model(counter: OpCounter, model: str) -> None:
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}")
    gpu = counter.add_gpu or counter.mul_gpu or counter.gpu_work
    chip = counter.chip_config or counter.chip_op
    if model == "dsc" and (gpu or chip):
        raise ValueError("a dsc estimate cannot contain GPU or chip counts")
    if model == "dmc" and chip:
        raise ValueError("a dmc estimate cannot contain chip counts")
    if model == "hybrid" and gpu:
        raise ValueError("a hybrid estimate cannot contain GPU counts")


def time_cost(counter: OpCounter, tables: CostTables | None = None, model: str = "dsc"):
    """Weighted operation total; returns ``(time_units, seconds)``."""
    tables = tables or CostTables()
    _check_model(counter, model)
    units = sum(tables.relative_time[k] * getattr(counter, k) for k in KINDS)
    return units, units * tables.unit_duration


def energy_cost(counter: OpCounter, tables: CostTables | None = None, model: str = "dsc",
                chip_size: int | None = None) -> float:
    """Energy in pJ: CPU time units, actual GPU flops and chip actions each priced separately."""
    tables = tables or CostTables()
    _check_model(counter, model)
    cpu_units = sum(tables.relative_time[k] * getattr(counter, k) for k in _CPU)
    energy = cpu_units * tables.cpu_energy_per_unit
    energy += counter.gpu_work * tables.gpu_energy_per_op
    if counter.chip_config or counter.chip_op:
        if chip_size is None or chip_size < 1:
            raise ValueError("chip energy needs the chip size")
        energy += counter.chip_config * tables.chip_config_energy(chip_size)
        energy += counter.chip_op * tables.chip_op_energy(chip_size)
    return energy


def expected_iterations(n: int, fit: tuple[float, float]) -> int:
    slope, intercept = fit
    return max(1, math.floor(slope * n + intercept + 0.5))


def predict_expected_cost(algorithm: str, mode: str, n: int, fit: tuple[float, float] | None = None,
                          tables: CostTables | None = None):
    """Seconds and pJ for a square n x n run at the fitted iteration count."""
    if n < 3:
        raise ValueError("n must be at least 3")
    fit = DEFAULT_FITS[algorithm] if fit is None else fit
    C = expected_iterations(n, fit)
    counts = analytic_counts(algorithm, mode, n, n, C)
    _, seconds = time_cost(counts, tables, mode)
    return seconds, energy_cost(counts, tables, mode, chip_size=n)
