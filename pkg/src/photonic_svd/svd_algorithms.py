"""SVD pipelines: alternating QR/LQ (QR-SVD) and bidiagonalization plus
shifted chasing (GRK-SVD), each in a purely digital and a hybrid variant.

Every pipeline returns ``A = U diag(sigma) V^T``.  Hybrid variants send all
orthogonal updates of full matrices through simulated meshes and keep only
ratio generation and the O(1)-per-rotation band work digital.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .linalg_core import (
    GivensRotation,
    HouseholderReflector,
    OpCounter,
    annihilation_sequence,
    apply_givens_left,
    apply_givens_right,
    as_matrix,
    givens_from_ratio,
    offdiag_max,
)
from .photonic_chip import FLIPPED, STANDARD, PhotonicMesh

EPS = np.finfo(np.float64).eps
MODES = ("dsc", "dmc", "hybrid")


def _mode(mode: str) -> str:
    mode = {"digital": "dsc"}.get(mode, mode)
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES} or 'digital', got {mode!r}")
    return mode


def _new_counter(mode: str, counter: OpCounter | None) -> OpCounter:
    cnt = counter if counter is not None else OpCounter()
    cnt.gpu = mode == "dmc"
    return cnt


@dataclass
class SvdResult:
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    iterations: int
    residual_offdiag: float
    converged: bool
    counters: OpCounter
    trace: list[float] = field(default_factory=list)

    def reconstruct(self) -> np.ndarray:
        k = self.sigma.size
        return (self.U[:, :k] * self.sigma) @ self.V[:, :k].T


def _finalize(U, S, V, iterations, err, delta, cnt, trace) -> SvdResult:
    """Read sigma off the diagonal, move signs into U and sort descending."""
    k = min(S.shape)
    sigma = np.diag(S)[:k].copy()
    neg = sigma < 0
    U = U.copy()
    V = V.copy()
    U[:, :k][:, neg] *= -1.0
    sigma[neg] *= -1.0
    cnt.add += k
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    U[:, :k] = U[:, :k][:, order]
    V[:, :k] = V[:, :k][:, order]
    return SvdResult(U, sigma, V, iterations, err, bool(err <= delta), cnt, trace)


# --------------------------------------------------------------------- QR-SVD


def _photonic_triangularize(A, mesh: PhotonicMesh, carry, cnt: OpCounter):
    """Reduce A to upper triangular by column-wise annihilation on the mesh.

    Each step programs one diagonal and passes both A and ``carry``, so on
    return ``R = Omega A`` and ``carry <- Omega carry``.
    """
    rows, cols = A.shape
    if mesh.size != rows:
        raise ValueError(f"mesh has {mesh.size} channels, matrix has {rows} rows")
    mesh.set_orientation(STANDARD)
    R = A
    for k in range(min(rows, cols)):
        rots, nrm = annihilation_sequence(R[k:, k], cnt, offset=k)
        mesh.reset()
        mesh.program_sequence(g for g in rots if not g.is_identity)
        R = mesh.pass_matrix_columns(R)
        carry = mesh.pass_matrix_columns(carry)
        R[k, k] = nrm
        R[k + 1:, k] = 0.0
    return R, carry


def photonic_qr(A, mesh: PhotonicMesh | None = None, counter: OpCounter | None = None):
    """QR decomposition with every orthogonal update executed on the mesh."""
    R = as_matrix(A)
    cnt = counter if counter is not None else (mesh.counter if mesh is not None else OpCounter())
    if mesh is None:
        mesh = PhotonicMesh(R.shape[0], cnt)
    R, QT = _photonic_triangularize(R, mesh, np.eye(R.shape[0]), cnt)
    return QT.T.copy(), R


def qr_svd(A, delta: float = 1e-6, engine: str = "digital", max_iters: int | None = None,
           counter: OpCounter | None = None, vectors: bool = True, trace: bool = False) -> SvdResult:
    """Alternate LQ and QR factorizations until the off-diagonal part drops below ``delta``.

    ``engine`` is 'digital'/'dsc', 'dmc' or 'hybrid'.  With ``vectors=False``
    the digital engine skips accumulating U and V (singular values only).
    """
    S = as_matrix(A)
    if not delta > 0:
        raise ValueError("delta must be positive")
    m, n = S.shape
    mode = _mode(engine)
    max_iters = 100 * max(m, n) if max_iters is None else int(max_iters)
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    cnt = _new_counter(mode, counter)
    hybrid = mode == "hybrid"
    if hybrid:
        mesh_n = PhotonicMesh(n, cnt)
        mesh_m = PhotonicMesh(m, cnt)
        W = np.eye(n)   # V^T
        UT = np.eye(m)  # U^T
    else:
        V = np.eye(n) if vectors else np.empty((0, n))
        U = np.eye(m) if vectors else np.empty((0, m))
    raw = np.zeros(8, dtype=np.int64)

    err = offdiag_max(S)
    errors = [err] if trace else []
    it = 0
    while err > delta and it < max_iters:
        if hybrid:
            T, W = _photonic_triangularize(np.ascontiguousarray(S.T), mesh_n, W, cnt)
            S, UT = _photonic_triangularize(np.ascontiguousarray(T.T), mesh_m, UT, cnt)
        else:
            # LQ of S is QR of S^T; the factor lands in V from the right
            T = np.ascontiguousarray(S.T)
            _kernels.householder_qr(T, V, raw)
            S = np.ascontiguousarray(T.T)
            _kernels.householder_qr(S, U, raw)
        it += 1
        err = offdiag_max(S)
        if trace:
            errors.append(err)
    cnt.absorb(raw)
    if hybrid:
        U, V = UT.T, W.T
    elif not vectors:
        U, V = np.eye(m), np.eye(n)
    return _finalize(U, S, V, it, err, delta, cnt, errors)


# -------------------------------------------------------- bidiagonalization


def grk_bidiagonalize(A, counter: OpCounter | None = None):
    """Two-sided Householder reduction ``A = P B Q`` with B upper bidiagonal (m >= n)."""
    B = as_matrix(A)
    m, n = B.shape
    if m < n:
        raise ValueError(f"need rows >= cols, got {m}x{n}; transpose first")
    cnt = counter if counter is not None else OpCounter()
    P = np.eye(m)
    Q = np.eye(n)
    for k in range(n):
        H = HouseholderReflector.from_vector(B[k:, k], k, cnt)
        if H is not None:
            Hd = H.dense(cnt)
            d = m - k
            B[k:, :] = Hd @ B[k:, :]
            P[:, k:] = P[:, k:] @ Hd
            cnt.matmul(d, d, n)
            cnt.matmul(m, d, d)
            B[k + 1:, k] = 0.0
        if k < n - 2:
            H = HouseholderReflector.from_vector(B[k, k + 1:], k + 1, cnt)
            if H is not None:
                Hd = H.dense(cnt)
                d = n - k - 1
                B[:, k + 1:] = B[:, k + 1:] @ Hd
                Q[k + 1:, :] = Hd @ Q[k + 1:, :]
                cnt.matmul(m, d, d)
                cnt.matmul(d, d, n)
                B[k, k + 2:] = 0.0
    return P, B, Q


def photonic_bidiagonalize(A, col_mesh: PhotonicMesh | None = None, row_mesh: PhotonicMesh | None = None,
                           counter: OpCounter | None = None):
    """Bidiagonalize by alternating column and row annihilations on two meshes.

    The column mesh (m channels) updates B and P^T, the row mesh (n channels)
    updates B^T and Q.  Every step reconfigures even when nothing is left to
    annihilate, so the chip tallies are 2n configs and 2mn + 2n^2 passes.
    """
    B = as_matrix(A)
    m, n = B.shape
    if m < n:
        raise ValueError(f"need rows >= cols, got {m}x{n}; transpose first")
    cnt = counter
    if cnt is None:
        cnt = col_mesh.counter if col_mesh is not None else OpCounter()
    col_mesh = col_mesh if col_mesh is not None else PhotonicMesh(m, cnt)
    row_mesh = row_mesh if row_mesh is not None else PhotonicMesh(n, cnt)
    if col_mesh.size != m or row_mesh.size != n:
        raise ValueError("mesh sizes must match the matrix shape")
    col_mesh.set_orientation(STANDARD)
    row_mesh.set_orientation(STANDARD)
    PT = np.eye(m)
    Q = np.eye(n)
    for k in range(n):
        rots, nrm = annihilation_sequence(B[k:, k], cnt, offset=k)
        col_mesh.reset()
        col_mesh.program_sequence(g for g in rots if not g.is_identity)
        B = col_mesh.pass_matrix_columns(B)
        PT = col_mesh.pass_matrix_columns(PT)
        B[k, k] = nrm
        B[k + 1:, k] = 0.0

        row_mesh.reset()
        if k + 1 < n:
            rots, nrm = annihilation_sequence(B[k, k + 1:], cnt, offset=k + 1)
            row_mesh.program_sequence(g for g in rots if not g.is_identity)
        BT = row_mesh.pass_matrix_columns(np.ascontiguousarray(B.T))
        B = np.ascontiguousarray(BT.T)
        Q = row_mesh.pass_matrix_columns(Q)
        if k + 1 < n:
            B[k, k + 1] = nrm
            B[k, k + 2:] = 0.0
    return PT.T.copy(), B, Q


# ------------------------------------------------------------------ chasing


def wilkinson_shift(B, active: tuple[int, int] | None = None) -> float:
    """Larger eigenvalue of the trailing 2x2 block of B^T B over ``active = (lo, hi)``."""
    B = np.asarray(B, dtype=np.float64)
    lo, hi = (0, min(B.shape) - 1) if active is None else active
    if hi - lo < 1:
        raise ValueError("active block needs at least two rows")
    d1, d2 = B[hi - 1, hi - 1], B[hi, hi]
    e1 = B[hi - 1, hi]
    e0 = B[hi - 2, hi - 1] if hi - 2 >= lo else 0.0
    t11 = d1 * d1 + e0 * e0
    t22 = d2 * d2 + e1 * e1
    t12 = d1 * e1
    half = 0.5 * (t11 - t22)
    return float(0.5 * (t11 + t22) + math.hypot(half, t12))


def _rotation(i: int, j: int, num: float, den: float, cnt: OpCounter, negate: bool) -> GivensRotation:
    """Rotation with tangent ``(-)num/den``; a zero denominator becomes a quarter turn."""
    if den != 0.0:
        r = num / den
        cnt.div += 1
        if negate:
            r = -r
            cnt.add += 1
        if math.isfinite(r):
            return givens_from_ratio(i, j, r, cnt)
    if num == 0.0:
        return GivensRotation.identity(i, j)
    s = math.copysign(1.0, num)
    return GivensRotation(i, j, 0.0, -s if negate else s)


def _rot_rows(B, G: GivensRotation, c0: int, c1: int, cnt: OpCounter) -> None:
    # left rotation restricted to columns c0:c1
    xi = B[G.i, c0:c1].copy()
    xj = B[G.j, c0:c1]
    B[G.i, c0:c1] = G.c * xi - G.s * xj
    B[G.j, c0:c1] = G.s * xi + G.c * xj
    cnt.mul += 4 * (c1 - c0)
    cnt.add += 2 * (c1 - c0)


def _rot_cols(B, G: GivensRotation, r0: int, r1: int, cnt: OpCounter) -> None:
    xi = B[r0:r1, G.i].copy()
    xj = B[r0:r1, G.j]
    B[r0:r1, G.i] = G.c * xi + G.s * xj
    B[r0:r1, G.j] = -G.s * xi + G.c * xj
    cnt.mul += 4 * (r1 - r0)
    cnt.add += 2 * (r1 - r0)


class DigitalAccumulator:
    """Applies each rotation to P and Q immediately."""

    def __init__(self, P, Q, cnt: OpCounter):
        self.P, self.Q, self.cnt = P, Q, cnt

    def left(self, F: GivensRotation) -> None:
        # B <- F B  means  P <- P F^T
        apply_givens_right(self.P, F.T, self.cnt)

    def right(self, G: GivensRotation) -> None:
        # B <- B G  means  Q <- G^T Q
        apply_givens_left(self.Q, G.T, self.cnt)

    left_direct, right_direct = left, right

    def end_sweep(self) -> None:
        pass

    def factors(self):
        return self.P, self.Q.T.copy()


class DeferredAccumulator(DigitalAccumulator):
    """Buffers one sweep of rotations and applies them when the sweep closes."""

    def __init__(self, P, Q, cnt: OpCounter):
        super().__init__(P, Q, cnt)
        self.lefts: list[GivensRotation] = []
        self.rights: list[GivensRotation] = []

    def left(self, F):
        self.lefts.append(F)

    def right(self, G):
        self.rights.append(G)

    def end_sweep(self):
        for F in self.lefts:
            DigitalAccumulator.left(self, F)
        for G in self.rights:
            DigitalAccumulator.right(self, G)
        self.lefts.clear()
        self.rights.clear()


class NullAccumulator:
    """Singular values only."""

    def left(self, F):
        pass

    right = left_direct = right_direct = left

    def end_sweep(self):
        pass


class HybridAccumulator:
    """Buffers one sweep and applies it as two flipped-mesh programs.

    P is held transposed for the whole run, since the mesh returns exactly
    the orientation it consumes on the next pass.
    """

    def __init__(self, PT, Q, p_mesh: PhotonicMesh, q_mesh: PhotonicMesh, cnt: OpCounter):
        self.PT, self.Q = PT, Q
        self.p_mesh, self.q_mesh, self.cnt = p_mesh, q_mesh, cnt
        p_mesh.set_orientation(FLIPPED)
        q_mesh.set_orientation(FLIPPED)
        self.lefts: list[GivensRotation] = []
        self.rights: list[GivensRotation] = []

    def left(self, F):
        self.lefts.append(F)

    def right(self, G):
        self.rights.append(G)

    def left_direct(self, F):
        # non-adjacent planes have no mesh slot; these stay on the controller
        apply_givens_left(self.PT, F, self.cnt)

    def right_direct(self, G):
        apply_givens_left(self.Q, G.T, self.cnt)

    def end_sweep(self):
        self.q_mesh.reset()
        self.q_mesh.program_sequence(G.T for G in self.rights if not G.is_identity)
        self.Q = self.q_mesh.pass_matrix_columns(self.Q)
        self.p_mesh.reset()
        self.p_mesh.program_sequence(F for F in self.lefts if not F.is_identity)
        self.PT = self.p_mesh.pass_matrix_columns(self.PT)
        self.lefts.clear()
        self.rights.clear()

    def factors(self):
        return self.PT.T.copy(), self.Q.T.copy()


@dataclass
class ChasingState:
    B: np.ndarray
    delta: float
    shift: float = 0.0
    left: list[GivensRotation] = field(default_factory=list)
    right: list[GivensRotation] = field(default_factory=list)


def chase_sweep(state: ChasingState, active: tuple[int, int], accumulate=None,
                counter: OpCounter | None = None) -> ChasingState:
    """One shifted bulge-chasing sweep over the block ``active = (lo, hi)``.

    Requires nonzero superdiagonal and diagonal entries inside the block.
    Rotations are recorded on the state and forwarded to ``accumulate``.
    """
    B = state.B
    lo, hi = active
    cnt = counter if counter is not None else OpCounter()
    acc = accumulate if accumulate is not None else NullAccumulator()
    size = B.shape[1]
    s = wilkinson_shift(B, active)
    state.shift = s
    state.left.clear()
    state.right.clear()
    cnt.mul += 8
    cnt.add += 6
    cnt.sqrt += 1

    d0 = B[lo, lo]
    y = d0 * d0 - s
    z = d0 * B[lo, lo + 1]
    cnt.mul += 2
    cnt.add += 1
    for k in range(lo, hi):
        if k > lo:
            y, z = B[k - 1, k], B[k - 1, k + 1]
        G = _rotation(k, k + 1, z, y, cnt, negate=False)
        _rot_cols(B, G, max(k - 1, lo), min(k + 2, hi + 1), cnt)
        if k > lo:
            B[k - 1, k + 1] = 0.0
        state.right.append(G)
        acc.right(G)

        F = _rotation(k, k + 1, B[k + 1, k], B[k, k], cnt, negate=True)
        _rot_rows(B, F, k, min(k + 3, hi + 1, size), cnt)
        B[k + 1, k] = 0.0
        state.left.append(F)
        acc.left(F)
    acc.end_sweep()
    return state


def _zero_diagonal(B, k: int, lo: int, hi: int, acc, cnt: OpCounter) -> None:
    """Eliminate the superdiagonal next to a vanished diagonal entry B[k, k]."""
    B[k, k] = 0.0
    if k < hi:
        # walk the entry of row k to the right with rotations on rows (k, j)
        for j in range(k + 1, hi + 1):
            x = B[k, j]
            if x == 0.0:
                break
            G = _rotation(k, j, x, B[j, j], cnt, negate=False)
            apply_givens_left(B, G, cnt)
            B[k, j] = 0.0
            acc.left_direct(G)
    else:
        # walk the entry of column hi upwards with rotations on columns (j, hi)
        for j in range(hi - 1, lo - 1, -1):
            x = B[j, hi]
            if x == 0.0:
                break
            G = _rotation(j, hi, x, B[j, j], cnt, negate=False)
            apply_givens_right(B, G, cnt)
            B[j, hi] = 0.0
            acc.right_direct(G)


def _split(B, n: int, delta: float) -> None:
    """Zero superdiagonal entries that are negligible in absolute or relative terms."""
    d = np.abs(np.diagonal(B)[:n])
    e = np.abs(np.diagonal(B, 1)[: n - 1])
    small = (e <= delta) | (e <= EPS * (d[:-1] + d[1:]))
    idx = np.flatnonzero(small & (e != 0.0))
    B[idx, idx + 1] = 0.0


def _iterate(B, acc, cnt: OpCounter, delta: float, max_sweeps: int):
    """Reference driver: split, fix zero diagonals, chase.  Returns (sweeps, err, trace)."""
    n = B.shape[0]
    bnorm = float(np.max(np.abs(B))) if B.size else 0.0
    state = ChasingState(B, delta)
    sweeps = 0
    errors = []
    while True:
        if n > 1:
            _split(B, n, delta)
        err = offdiag_max(B)
        if err <= delta or sweeps >= max_sweeps:
            errors.append(err)
            return sweeps, err, errors
        e = np.diagonal(B, 1)
        hi = int(np.flatnonzero(e)[-1]) + 1
        lo = hi - 1
        while lo > 0 and e[lo - 1] != 0.0:
            lo -= 1
        tiny = np.flatnonzero(np.abs(np.diagonal(B)[lo:hi + 1]) <= EPS * bnorm)
        if tiny.size:
            _zero_diagonal(B, lo + int(tiny[0]), lo, hi, acc, cnt)
            continue
        errors.append(err)
        chase_sweep(state, (lo, hi), acc, cnt)
        sweeps += 1


def grk_svd(A, mode: str = "digital", delta: float | str = 1e-6, max_sweeps: int | None = None,
            counter: OpCounter | None = None, vectors: bool = True, trace: bool = False,
            compiled: bool = True) -> SvdResult:
    """Bidiagonalize, then chase with a shift until the superdiagonal vanishes.

    ``delta`` is a threshold or ``'machine'`` for eps times the infinity norm
    of the bidiagonal matrix.  ``mode`` is 'digital'/'dsc', 'dmc' or 'hybrid'.
    Digital modes run compiled kernels unless ``compiled=False``, which
    selects the step-by-step reference implementation.
    """
    A = as_matrix(A)
    m, n = A.shape
    if m < n:
        res = grk_svd(A.T, mode, delta, max_sweeps, counter, vectors, trace, compiled)
        res.U, res.V = res.V, res.U
        return res
    mode = _mode(mode)
    cnt = _new_counter(mode, counter)
    max_sweeps = 10 * n if max_sweeps is None else int(max_sweeps)
    if max_sweeps < 0:
        raise ValueError("max_sweeps must be non-negative")
    if not (isinstance(delta, str) or delta > 0):
        raise ValueError("delta must be positive")
    fast = compiled and mode != "hybrid"

    raw = np.zeros(8, dtype=np.int64)
    if fast:
        Bfull = A.copy()
        P = np.eye(m) if vectors else np.empty((0, 0))
        Q = np.eye(n) if vectors else np.empty((0, 0))
        _kernels.grk_bidiag(Bfull, P, Q, raw)
    elif mode == "hybrid":
        p_mesh, q_mesh = PhotonicMesh(m, cnt), PhotonicMesh(n, cnt)
        P, Bfull, Q = photonic_bidiagonalize(A, p_mesh, q_mesh, cnt)
        acc = HybridAccumulator(P.T.copy(), Q, p_mesh, q_mesh, cnt) if vectors else NullAccumulator()
    else:
        P, Bfull, Q = grk_bidiagonalize(A, cnt)
        acc = DigitalAccumulator(P, Q, cnt) if vectors else NullAccumulator()
    B = np.triu(np.tril(Bfull[:n, :n], 1))

    if isinstance(delta, str):
        if delta != "machine":
            raise ValueError("delta must be a positive float or 'machine'")
        delta = EPS * float(np.max(np.sum(np.abs(B), axis=1)))
    delta = float(delta)

    if fast:
        buf = np.empty(max_sweeps + 1)
        sweeps, err, nt = _kernels.grk_iterate(B, P, Q, delta, max_sweeps, raw, buf)
        errors = buf[:nt].tolist()
        cnt.absorb(raw)
        U, V = (P, Q.T.copy()) if vectors else (np.eye(m), np.eye(n))
    else:
        sweeps, err, errors = _iterate(B, acc, cnt, delta, max_sweeps)
        U, V = acc.factors() if vectors else (np.eye(m), np.eye(n))
    S = np.zeros((m, n))
    S[:n, :n] = B
    return _finalize(U, S, V, sweeps, float(err), delta, cnt, errors if trace else [])
