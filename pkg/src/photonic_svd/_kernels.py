"""Compiled inner loops for the hot paths of the digital QR-SVD.

Each kernel tallies its own arithmetic into an int64 array laid out as
``RAW_FIELDS``; :meth:`OpCounter.absorb` folds that into a counter.
"""
import numpy as np
from numba import njit

RAW_FIELDS = ("add", "mul", "div", "sqrt", "vadd", "vmul", "vadd_prims", "vmul_prims")
ADD, MUL, DIV, SQRT, VADD, VMUL, VADD_P, VMUL_P = range(8)


@njit(cache=True)
def _dot_cost(raw, length, times):
    # `times` dot products of the given length
    raw[VMUL] += length * times
    raw[VMUL_P] += 1
    if length > 1:
        raw[VADD] += (length - 1) * times
        raw[VADD_P] += 1


@njit(cache=True)
def householder_qr(R, acc, raw):
    """Triangularize ``R`` in place with Householder reflectors of decreasing size.

    ``acc`` (p x m, p may be 0) is right-multiplied by every reflector, so
    passing the identity yields Q.  Reflectors map each column tail ``a`` onto
    ``+||a|| e1``; a column already of that form is skipped.
    """
    m, n = R.shape
    p = acc.shape[0]
    v = np.empty(m)
    w = np.empty(n)
    y = np.empty(p)
    for k in range(min(m, n)):
        d = m - k
        a0 = R[k, k]
        tail = 0.0
        for i in range(k + 1, m):
            tail += R[i, k] * R[i, k]
        if d > 1:
            _dot_cost(raw, d - 1, 1)
        if tail == 0.0 and a0 >= 0.0:
            continue
        nrm = np.sqrt(a0 * a0 + tail)
        raw[MUL] += 1
        raw[ADD] += 1
        raw[SQRT] += 1
        if a0 > 0.0:
            v[0] = -tail / (a0 + nrm)
            raw[ADD] += 2
            raw[DIV] += 1
        else:
            v[0] = a0 - nrm
            raw[ADD] += 1
        big = abs(v[0])
        for i in range(1, d):
            v[i] = R[k + i, k]
            if abs(v[i]) > big:
                big = abs(v[i])
        # rescaling keeps v.v away from underflow once tails reach 1e-160
        scale = 1.0 / big
        raw[DIV] += 1
        vv = 0.0
        for i in range(d):
            v[i] *= scale
            vv += v[i] * v[i]
        raw[VMUL] += d
        raw[VMUL_P] += 1
        _dot_cost(raw, d, 1)
        beta = 2.0 / vv
        raw[DIV] += 1

        c = n - k - 1
        if c > 0:
            for j in range(k + 1, n):
                s = 0.0
                for i in range(d):
                    s += v[i] * R[k + i, j]
                w[j] = beta * s
            for j in range(k + 1, n):
                for i in range(d):
                    R[k + i, j] -= v[i] * w[j]
            _dot_cost(raw, d, c)
            raw[VMUL] += c + d * c
            raw[VADD] += d * c
            raw[VMUL_P] += 2
            raw[VADD_P] += 1
        R[k, k] = nrm
        for i in range(k + 1, m):
            R[i, k] = 0.0

        if p > 0:
            for r in range(p):
                s = 0.0
                for i in range(d):
                    s += acc[r, k + i] * v[i]
                y[r] = beta * s
            for r in range(p):
                for i in range(d):
                    acc[r, k + i] -= y[r] * v[i]
            _dot_cost(raw, d, p)
            raw[VMUL] += p + p * d
            raw[VADD] += p * d
            raw[VMUL_P] += 2
            raw[VADD_P] += 1


@njit(cache=True)
def offdiag_max(M):
    rows, cols = M.shape
    out = 0.0
    for i in range(rows):
        for j in range(cols):
            if i != j:
                a = abs(M[i, j])
                if a > out:
                    out = a
    return out


# ---------------------------------------------------------------- GRK-SVD
# Mirrors the reference path in svd_algorithms, including its tallies.

EPS = np.finfo(np.float64).eps


@njit(cache=True)
def _vec(raw, length, adds, muls):
    if length <= 0:
        return
    raw[VADD] += adds * length
    raw[VMUL] += muls * length
    raw[VADD_P] += adds
    raw[VMUL_P] += muls


@njit(cache=True)
def _mm(raw, a, d, b):
    if a <= 0 or d <= 0 or b <= 0:
        return
    raw[VMUL] += a * d * b
    raw[VADD] += a * (d - 1) * b
    raw[VMUL_P] += 1
    if d > 1:
        raw[VADD_P] += 1


@njit(cache=True)
def _reflector(x, v, raw):
    """Scaled Householder vector for x into v; returns beta, or 0 when x = |x| e1."""
    d = x.shape[0]
    tail = 0.0
    for i in range(1, d):
        tail += x[i] * x[i]
    _mm(raw, 1, d - 1, 1)
    a0 = x[0]
    if tail == 0.0 and a0 >= 0.0:
        return 0.0
    nrm = np.sqrt(a0 * a0 + tail)
    raw[MUL] += 1
    raw[ADD] += 1
    raw[SQRT] += 1
    if a0 > 0.0:
        v[0] = -tail / (a0 + nrm)
        raw[ADD] += 2
        raw[DIV] += 1
    else:
        v[0] = a0 - nrm
        raw[ADD] += 1
    big = abs(v[0])
    for i in range(1, d):
        v[i] = x[i]
        if abs(v[i]) > big:
            big = abs(v[i])
    scale = 1.0 / big
    raw[DIV] += 1
    vv = 0.0
    for i in range(d):
        v[i] *= scale
        vv += v[i] * v[i]
    _vec(raw, d, 0, 1)
    _mm(raw, 1, d, 1)
    raw[DIV] += 1
    return 2.0 / vv


@njit(cache=True)
def _dense(H, v, d, beta, raw):
    for i in range(d):
        for j in range(d):
            H[i, j] = -beta * (v[i] * v[j])
        H[i, i] += 1.0
    _vec(raw, d, 0, 1)
    _vec(raw, d * d, 1, 1)


@njit(cache=True)
def _gemm(X, Y, out, a, d, b):
    # sequential dot products: one scalar add chain per entry, as a single core runs it
    for i in range(a):
        for j in range(b):
            acc = 0.0
            for l in range(d):
                acc += X[i, l] * Y[l, j]
            out[i, j] = acc


@njit(cache=True)
def grk_bidiag(B, P, Q, raw):
    """Two-sided reduction with explicit reflector blocks; P, Q may be 0 x 0."""
    m, n = B.shape
    acc = P.shape[0] > 0
    N = max(m, n)
    H = np.empty((N, N))
    T = np.empty((N, N))
    v = np.empty(N)
    for k in range(n):
        d = m - k
        beta = _reflector(B[k:, k], v, raw)
        if beta > 0.0:
            _dense(H, v, d, beta, raw)
            _gemm(H, B[k:, :], T, d, d, n)
            B[k:, :] = T[:d, :n]
            _mm(raw, d, d, n)
            if acc:
                _gemm(P[:, k:], H, T, m, d, d)
                P[:, k:] = T[:m, :d]
                _mm(raw, m, d, d)
            for i in range(k + 1, m):
                B[i, k] = 0.0
        if k < n - 2:
            d = n - k - 1
            beta = _reflector(B[k, k + 1:], v, raw)
            if beta > 0.0:
                _dense(H, v, d, beta, raw)
                _gemm(B[:, k + 1:], H, T, m, d, d)
                B[:, k + 1:] = T[:m, :d]
                _mm(raw, m, d, d)
                if acc:
                    _gemm(H, Q[k + 1:, :], T, d, d, n)
                    Q[k + 1:, :] = T[:d, :n]
                    _mm(raw, d, d, n)
                for j in range(k + 2, n):
                    B[k, j] = 0.0


@njit(cache=True)
def _rot(num, den, negate, raw):
    if den != 0.0:
        r = num / den
        raw[DIV] += 1
        if negate:
            r = -r
            raw[ADD] += 1
        if np.isfinite(r):
            c = 1.0 / np.hypot(1.0, r)
            raw[MUL] += 2
            raw[ADD] += 2
            raw[SQRT] += 1
            raw[DIV] += 1
            return c, r * c
    if num == 0.0:
        return 1.0, 0.0
    s = 1.0 if num > 0.0 else -1.0
    return 0.0, (-s if negate else s)


@njit(cache=True)
def _rows(M, i, j, c, s, c0, c1):
    for t in range(c0, c1):
        xi = M[i, t]
        xj = M[j, t]
        M[i, t] = c * xi - s * xj
        M[j, t] = s * xi + c * xj


@njit(cache=True)
def _cols(M, i, j, c, s, r0, r1):
    for t in range(r0, r1):
        xi = M[t, i]
        xj = M[t, j]
        M[t, i] = c * xi + s * xj
        M[t, j] = -s * xi + c * xj


@njit(cache=True)
def _chase(B, P, Q, lo, hi, raw):
    n = B.shape[0]
    acc = P.shape[0] > 0
    m = P.shape[0]
    d1 = B[hi - 1, hi - 1]
    d2 = B[hi, hi]
    e1 = B[hi - 1, hi]
    e0 = B[hi - 2, hi - 1] if hi - 2 >= lo else 0.0
    t11 = d1 * d1 + e0 * e0
    t22 = d2 * d2 + e1 * e1
    t12 = d1 * e1
    half = 0.5 * (t11 - t22)
    shift = 0.5 * (t11 + t22) + np.hypot(half, t12)
    raw[MUL] += 8
    raw[ADD] += 6
    raw[SQRT] += 1
    d0 = B[lo, lo]
    y = d0 * d0 - shift
    z = d0 * B[lo, lo + 1]
    raw[MUL] += 2
    raw[ADD] += 1
    for k in range(lo, hi):
        if k > lo:
            y = B[k - 1, k]
            z = B[k - 1, k + 1]
        c, s = _rot(z, y, False, raw)
        r0 = max(k - 1, lo)
        r1 = min(k + 2, hi + 1)
        _cols(B, k, k + 1, c, s, r0, r1)
        raw[MUL] += 4 * (r1 - r0)
        raw[ADD] += 2 * (r1 - r0)
        if k > lo:
            B[k - 1, k + 1] = 0.0
        if acc:
            _rows(Q, k, k + 1, c, -s, 0, n)
            _vec(raw, n, 2, 4)
        c, s = _rot(B[k + 1, k], B[k, k], True, raw)
        c1 = min(k + 3, hi + 1, n)
        _rows(B, k, k + 1, c, s, k, c1)
        raw[MUL] += 4 * (c1 - k)
        raw[ADD] += 2 * (c1 - k)
        B[k + 1, k] = 0.0
        if acc:
            _cols(P, k, k + 1, c, -s, 0, m)
            _vec(raw, m, 2, 4)


@njit(cache=True)
def _zero_diagonal(B, P, Q, k, lo, hi, raw):
    n = B.shape[0]
    acc = P.shape[0] > 0
    m = P.shape[0]
    B[k, k] = 0.0
    if k < hi:
        for j in range(k + 1, hi + 1):
            x = B[k, j]
            if x == 0.0:
                break
            c, s = _rot(x, B[j, j], False, raw)
            _rows(B, k, j, c, s, 0, n)
            _vec(raw, n, 2, 4)
            B[k, j] = 0.0
            if acc:
                _cols(P, k, j, c, -s, 0, m)
                _vec(raw, m, 2, 4)
    else:
        for j in range(hi - 1, lo - 1, -1):
            x = B[j, hi]
            if x == 0.0:
                break
            c, s = _rot(x, B[j, j], False, raw)
            _cols(B, j, hi, c, s, 0, n)
            _vec(raw, n, 2, 4)
            B[j, hi] = 0.0
            if acc:
                _rows(Q, j, hi, c, -s, 0, n)
                _vec(raw, n, 2, 4)


@njit(cache=True)
def grk_iterate(B, P, Q, delta, max_sweeps, raw, trace):
    """Split, fix zero diagonals and chase until the superdiagonal is below delta.

    Returns (sweeps, final error, trace length); trace holds the error before
    every sweep and after the last one.
    """
    n = B.shape[0]
    bnorm = 0.0
    for i in range(n):
        for j in range(n):
            if abs(B[i, j]) > bnorm:
                bnorm = abs(B[i, j])
    sweeps = 0
    nt = 0
    err = 0.0
    done = False
    while not done:
        for i in range(n - 1):
            e = abs(B[i, i + 1])
            if e != 0.0 and (e <= delta or e <= EPS * (abs(B[i, i]) + abs(B[i + 1, i + 1]))):
                B[i, i + 1] = 0.0
        err = offdiag_max(B)
        trace[nt] = err
        if err <= delta or sweeps >= max_sweeps:
            nt += 1
            done = True
            continue
        hi = 0
        for i in range(n - 1):
            if B[i, i + 1] != 0.0:
                hi = i + 1
        lo = hi - 1
        while lo > 0 and B[lo - 1, lo] != 0.0:
            lo -= 1
        tiny = -1
        for i in range(lo, hi + 1):
            if abs(B[i, i]) <= EPS * bnorm:
                tiny = i
                break
        if tiny >= 0:
            _zero_diagonal(B, P, Q, tiny, lo, hi, raw)
        else:
            nt += 1
            _chase(B, P, Q, lo, hi, raw)
            sweeps += 1
    return sweeps, err, nt
