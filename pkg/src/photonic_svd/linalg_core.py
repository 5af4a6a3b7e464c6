"""Dense real linear algebra with operation counting.

Matrices are plain ``float64`` numpy arrays.  Every routine that does
arithmetic takes an optional :class:`OpCounter` and charges the work it
performs to it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import _kernels

KINDS = ("add", "mul", "div", "sqrt", "add_gpu", "mul_gpu", "chip_config", "chip_op")


@dataclass
class OpCounter:
    """Integer tallies per operation kind.

    ``gpu_work`` counts the elementary flops hidden inside GPU steps and is
    what the D-MC energy model bills.  With ``gpu`` set, vector-level work is
    charged as parallel GPU steps instead of serial adds/muls.
    """

    add: int = 0
    mul: int = 0
    div: int = 0
    sqrt: int = 0
    add_gpu: int = 0
    mul_gpu: int = 0
    chip_config: int = 0
    chip_op: int = 0
    gpu_work: int = 0
    gpu: bool = field(default=False, compare=False, repr=False)

    def vector(self, length: int, adds: int = 0, muls: int = 0) -> None:
        """Charge ``adds`` and ``muls`` elementwise passes over ``length`` entries."""
        if length <= 0:
            return
        if self.gpu:
            self.add_gpu += adds
            self.mul_gpu += muls
            self.gpu_work += (adds + muls) * length
        else:
            self.add += adds * length
            self.mul += muls * length

    def matmul(self, rows: int, inner: int, cols: int) -> None:
        """Charge a dense (rows x inner) @ (inner x cols) product."""
        if rows <= 0 or inner <= 0 or cols <= 0:
            return
        muls = rows * inner * cols
        adds = rows * (inner - 1) * cols
        if self.gpu:
            self.mul_gpu += 1
            self.add_gpu += 1 if inner > 1 else 0
            self.gpu_work += muls + adds
        else:
            self.mul += muls
            self.add += adds

    def absorb(self, raw) -> None:
        """Fold a raw tally array from the compiled kernels into this counter."""
        add, mul, div, sqrt, vadd, vmul, vadd_p, vmul_p = (int(x) for x in raw)
        self.add += add
        self.mul += mul
        self.div += div
        self.sqrt += sqrt
        if self.gpu:
            self.add_gpu += vadd_p
            self.mul_gpu += vmul_p
            self.gpu_work += vadd + vmul
        else:
            self.add += vadd
            self.mul += vmul

    def as_dict(self) -> dict[str, int]:
        out = {k: getattr(self, k) for k in KINDS}
        out["gpu_work"] = self.gpu_work
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "OpCounter":
        names = {f.name for f in fields(cls)} - {"gpu"}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown counter kinds: {sorted(unknown)}")
        return cls(**{k: int(v) for k, v in d.items()})

    def copy(self) -> "OpCounter":
        out = OpCounter(**self.as_dict())
        out.gpu = self.gpu
        return out

    def __add__(self, other: "OpCounter") -> "OpCounter":
        a, b = self.as_dict(), other.as_dict()
        out = OpCounter(**{k: a[k] + b[k] for k in a})
        out.gpu = self.gpu
        return out

    def __iadd__(self, other: "OpCounter") -> "OpCounter":
        for k, v in other.as_dict().items():
            setattr(self, k, getattr(self, k) + v)
        return self

    def __sub__(self, other: "OpCounter") -> "OpCounter":
        a, b = self.as_dict(), other.as_dict()
        out = OpCounter(**{k: a[k] - b[k] for k in a})
        out.gpu = self.gpu
        return out


def _counter(counter: OpCounter | None) -> OpCounter:
    return counter if counter is not None else OpCounter()


def as_matrix(A, name: str = "matrix") -> np.ndarray:
    """Validate and copy into a C-contiguous 2-D float64 array with finite entries."""
    M = np.array(A, dtype=np.float64, order="C", copy=True)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    return M


@dataclass(frozen=True)
class GivensRotation:
    """Rotation in the (i, j) plane acting on column vectors as
    ``x_i <- c x_i - s x_j``, ``x_j <- s x_i + c x_j``."""

    i: int
    j: int
    c: float
    s: float

    def __post_init__(self):
        if not (0 <= self.i < self.j):
            raise ValueError(f"need 0 <= i < j, got ({self.i}, {self.j})")

    @property
    def r(self) -> float:
        if self.c == 0.0:
            return math.copysign(math.inf, self.s)
        return self.s / self.c

    @property
    def T(self) -> "GivensRotation":
        return GivensRotation(self.i, self.j, self.c, -self.s)

    @property
    def is_identity(self) -> bool:
        return self.c == 1.0 and self.s == 0.0

    @classmethod
    def identity(cls, i: int, j: int) -> "GivensRotation":
        return cls(i, j, 1.0, 0.0)

    def matrix(self, n: int) -> np.ndarray:
        if self.j >= n:
            raise ValueError(f"plane ({self.i}, {self.j}) outside dimension {n}")
        G = np.eye(n)
        G[self.i, self.i] = G[self.j, self.j] = self.c
        G[self.i, self.j] = -self.s
        G[self.j, self.i] = self.s
        return G


def givens_from_ratio(i: int, j: int, r: float, counter: OpCounter | None = None) -> GivensRotation:
    """Rotation with tangent ``r``: c = 1/sqrt(1+r^2), s = r c."""
    r = float(r)
    if not math.isfinite(r):
        raise ValueError(f"ratio must be finite, got {r}")
    cnt = _counter(counter)
    # hypot avoids overflow of r*r for huge ratios
    c = 1.0 / math.hypot(1.0, r)
    # r*r, 1+r^2, root, reciprocal, r*c and the sign of the off-diagonal entry
    cnt.mul += 2
    cnt.add += 2
    cnt.sqrt += 1
    cnt.div += 1
    return GivensRotation(i, j, c, r * c)


def _check_plane(G: GivensRotation, size: int) -> None:
    if G.j >= size:
        raise ValueError(f"rotation plane ({G.i}, {G.j}) outside dimension {size}")


def apply_givens_left(M: np.ndarray, G: GivensRotation, counter: OpCounter | None = None) -> np.ndarray:
    """In-place ``M <- G M``."""
    _check_plane(G, M.shape[0])
    xi = M[G.i].copy()
    xj = M[G.j].copy()
    M[G.i] = G.c * xi - G.s * xj
    M[G.j] = G.s * xi + G.c * xj
    _counter(counter).vector(M.shape[1], adds=2, muls=4)
    return M


def apply_givens_right(M: np.ndarray, G: GivensRotation, counter: OpCounter | None = None) -> np.ndarray:
    """In-place ``M <- M G``."""
    _check_plane(G, M.shape[1])
    xi = M[:, G.i].copy()
    xj = M[:, G.j].copy()
    M[:, G.i] = G.c * xi + G.s * xj
    M[:, G.j] = -G.s * xi + G.c * xj
    _counter(counter).vector(M.shape[0], adds=2, muls=4)
    return M


def annihilation_sequence(a, counter: OpCounter | None = None, offset: int = 0):
    """Adjacent-plane rotations mapping ``a`` onto ``+||a|| e_0``.

    Returns ``(rotations, norm)`` with rotations ordered as applied: planes
    (d-2, d-1) first and (0, 1) last, shifted by ``offset``.  The ratios come
    from a running scalar so generating them is O(d).
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    d = a.size
    if d < 1:
        raise ValueError("need a non-empty vector")
    cnt = _counter(counter)
    rots: list[GivensRotation] = []
    run = float(a[-1])
    for l in range(d - 1, 0, -1):
        x = float(a[l - 1])
        i, j = offset + l - 1, offset + l
        r = -run / x if x != 0.0 else math.inf
        if math.isfinite(r):
            cnt.div += 1
            cnt.add += 1
            G = givens_from_ratio(i, j, r, cnt)
            run = (x - r * run) / math.hypot(1.0, r)
            cnt.mul += 2
            cnt.add += 2
            cnt.sqrt += 1
            cnt.div += 1
        elif run != 0.0:
            # quarter turn moves the whole mass into coordinate i
            G = GivensRotation(i, j, 0.0, -math.copysign(1.0, run))
            run = abs(run)
            cnt.add += 1
        else:
            G = GivensRotation.identity(i, j)
        rots.append(G)
    if run < 0.0 and rots:
        last = rots[-1]
        rots[-1] = GivensRotation(last.i, last.j, -last.c, -last.s)
        run = -run
        cnt.add += 1
    return rots, run


def compose(rotations, n: int) -> np.ndarray:
    """Dense product of rotations in application order (last applied is leftmost)."""
    W = np.eye(n)
    for G in rotations:
        apply_givens_left(W, G)
    return W


@dataclass(frozen=True)
class HouseholderReflector:
    """``I - beta v v^T`` acting on coordinates ``offset .. offset+len(v)-1``."""

    offset: int
    v: np.ndarray
    beta: float

    @classmethod
    def from_vector(cls, a, offset: int = 0, counter: OpCounter | None = None):
        """Reflector mapping ``a`` onto ``+||a|| e_0``; None if ``a`` is already there."""
        a = np.asarray(a, dtype=np.float64).ravel()
        d = a.size
        cnt = _counter(counter)
        tail = float(a[1:] @ a[1:])
        cnt.matmul(1, d - 1, 1)
        a0 = float(a[0])
        if tail == 0.0 and a0 >= 0.0:
            return None
        nrm = math.sqrt(a0 * a0 + tail)
        cnt.mul += 1
        cnt.add += 1
        cnt.sqrt += 1
        v = a.copy()
        if a0 > 0.0:
            v[0] = -tail / (a0 + nrm)
            cnt.add += 2
            cnt.div += 1
        else:
            v[0] = a0 - nrm
            cnt.add += 1
        v *= 1.0 / np.max(np.abs(v))
        cnt.div += 1
        cnt.vector(d, muls=1)
        vv = float(v @ v)
        cnt.matmul(1, d, 1)
        cnt.div += 1
        return cls(offset, v, 2.0 / vv)

    def dense(self, counter: OpCounter | None = None) -> np.ndarray:
        """The explicit d x d block."""
        d = self.v.size
        H = np.eye(d) - self.beta * np.outer(self.v, self.v)
        cnt = _counter(counter)
        cnt.vector(d, muls=1)
        cnt.vector(d * d, adds=1, muls=1)
        return H

    def apply(self, x) -> np.ndarray:
        x = np.array(x, dtype=np.float64)
        seg = x[self.offset:self.offset + self.v.size]
        seg -= self.beta * (self.v @ seg) * self.v
        return x


def qr_decompose(A, counter: OpCounter | None = None):
    """Householder QR: returns (Q m x m, R m x n) with ``A = Q R`` and R[k,k] >= 0."""
    R = as_matrix(A)
    Q = np.eye(R.shape[0])
    raw = np.zeros(8, dtype=np.int64)
    _kernels.householder_qr(R, Q, raw)
    _counter(counter).absorb(raw)
    return Q, R


def offdiag_max(M) -> float:
    """Largest absolute off-diagonal entry."""
    M = np.ascontiguousarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError("need a 2-D array")
    return float(_kernels.offdiag_max(M))
