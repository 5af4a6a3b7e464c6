import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from photonic_svd.linalg_core import (
    KINDS,
    GivensRotation,
    HouseholderReflector,
    OpCounter,
    annihilation_sequence,
    apply_givens_left,
    apply_givens_right,
    as_matrix,
    compose,
    givens_from_ratio,
    offdiag_max,
    qr_decompose,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


def rng(seed=0):
    return np.random.default_rng(seed)


# --- counters

def test_counter_add_and_dict_roundtrip():
    a = OpCounter(add=1, mul=2, chip_op=3)
    b = OpCounter(add=4, sqrt=5, gpu_work=6)
    c = a + b
    assert (c.add, c.mul, c.sqrt, c.chip_op, c.gpu_work) == (5, 2, 5, 3, 6)
    assert OpCounter.from_dict(c.as_dict()) == c
    assert c - b == a
    a += b
    assert a == c


def test_counter_from_dict_rejects_unknown():
    with pytest.raises(ValueError):
        OpCounter.from_dict({"flops": 1})


def test_counter_vector_and_matmul_modes():
    cpu = OpCounter()
    cpu.vector(10, adds=2, muls=4)
    cpu.matmul(3, 4, 5)
    assert cpu.mul == 40 + 60 and cpu.add == 20 + 45
    gpu = OpCounter(gpu=True)
    gpu.vector(10, adds=2, muls=4)
    gpu.matmul(3, 4, 5)
    assert (gpu.add, gpu.mul) == (0, 0)
    # one step per elementwise pass, one add step and one mul step per product
    assert gpu.add_gpu == 2 + 1 and gpu.mul_gpu == 4 + 1
    assert gpu.gpu_work == cpu.add + cpu.mul


def test_same_operation_twice_doubles_delta():
    A = rng(1).standard_normal((6, 4))
    once = OpCounter()
    qr_decompose(A, once)
    twice = OpCounter()
    qr_decompose(A, twice)
    qr_decompose(A, twice)
    assert twice.as_dict() == {k: 2 * v for k, v in once.as_dict().items()}


# --- matrices

def test_as_matrix_validation():
    assert as_matrix([1.0, 2.0]).shape == (2, 1)
    with pytest.raises(ValueError):
        as_matrix(np.empty((0, 3)))
    with pytest.raises(ValueError):
        as_matrix([[1.0, np.nan]])


# --- givens

def test_ratio_zero_is_identity():
    G = givens_from_ratio(0, 1, 0.0)
    assert (G.c, G.s) == (1.0, 0.0) and G.is_identity


def test_ratio_one():
    G = givens_from_ratio(0, 1, 1.0)
    assert G.c == pytest.approx(0.7071067811865476, abs=1e-15)
    assert G.s == pytest.approx(0.7071067811865476, abs=1e-15)


def test_ratio_minus_four_thirds_maps_3_4_to_5_0():
    G = givens_from_ratio(0, 1, -4 / 3)
    x = np.array([[3.0], [4.0]])
    apply_givens_left(x, G)
    np.testing.assert_allclose(x.ravel(), [5.0, 0.0], atol=1e-14)


def test_ratio_rejects_nonfinite():
    for r in (math.inf, -math.inf, math.nan):
        with pytest.raises(ValueError):
            givens_from_ratio(0, 1, r)


def test_rotation_plane_validation():
    with pytest.raises(ValueError):
        GivensRotation(1, 1, 1.0, 0.0)
    with pytest.raises(ValueError):
        apply_givens_left(np.eye(2), GivensRotation(1, 2, 1.0, 0.0))
    with pytest.raises(ValueError):
        apply_givens_right(np.eye(3), GivensRotation(0, 3, 1.0, 0.0))


def test_ratio_build_count():
    cnt = OpCounter()
    givens_from_ratio(0, 1, 0.3, cnt)
    assert (cnt.add, cnt.mul, cnt.div, cnt.sqrt) == (2, 2, 1, 1)


@given(finite)
def test_ratio_form(r):
    G = givens_from_ratio(2, 5, r)
    assert abs(G.c ** 2 + G.s ** 2 - 1) <= 1e-14
    assert abs(G.c - 1 / math.sqrt(1 + r * r)) <= 1e-14
    assert abs(G.s - r * G.c) <= 1e-14 * max(1.0, abs(r))


def test_left_matches_dense_and_inverse_is_transpose():
    M = rng(2).standard_normal((5, 3))
    G = givens_from_ratio(1, 3, 0.7)
    out = apply_givens_left(M.copy(), G)
    np.testing.assert_allclose(out, G.matrix(5) @ M, atol=1e-15)
    apply_givens_left(out, G.T)
    np.testing.assert_allclose(out, M, atol=1e-13)


def test_identity_rotation_leaves_matrix():
    M = rng(3).standard_normal((4, 4))
    G = GivensRotation.identity(0, 3)
    np.testing.assert_array_equal(apply_givens_left(M.copy(), G), M)
    np.testing.assert_array_equal(apply_givens_right(M.copy(), G), M)


def test_right_is_transpose_of_left():
    M = rng(4).standard_normal((3, 5))
    G = givens_from_ratio(0, 4, -2.5)
    right = apply_givens_right(M.copy(), G)
    left = apply_givens_left(M.T.copy(), G.T)
    np.testing.assert_allclose(right.T, left, atol=1e-15)


def test_right_on_small_bidiagonal():
    B = np.array([[1.0, 1.0], [0.0, 1.0]])
    G = givens_from_ratio(0, 1, 1.0)
    np.testing.assert_allclose(apply_givens_right(B.copy(), G), B @ G.matrix(2), atol=1e-15)


def test_apply_counts_per_entry():
    cnt = OpCounter()
    apply_givens_left(np.ones((4, 7)), givens_from_ratio(0, 1, 2.0), cnt)
    assert (cnt.mul, cnt.add) == (28, 14)


# --- annihilation

def test_annihilate_unit_vector():
    rots, nrm = annihilation_sequence([1.0, 0.0, 0.0])
    assert len(rots) == 2 and all(G.is_identity for G in rots)
    assert nrm == 1.0


def test_annihilate_3_4():
    rots, nrm = annihilation_sequence([3.0, 4.0])
    assert len(rots) == 1
    assert rots[0].r == pytest.approx(-4 / 3, rel=1e-15)
    assert nrm == pytest.approx(5.0, rel=1e-15)


def test_annihilate_zero_pivot_uses_quarter_turn():
    rots, nrm = annihilation_sequence([0.0, -2.0])
    assert rots[0].c == 0.0
    x = compose(rots, 2) @ np.array([0.0, -2.0])
    np.testing.assert_allclose(x, [2.0, 0.0], atol=1e-15)
    assert nrm == 2.0


def test_annihilate_zero_vector_is_identity():
    rots, nrm = annihilation_sequence(np.zeros(4))
    assert nrm == 0.0 and all(G.is_identity for G in rots)


def test_annihilate_offset_planes_in_application_order():
    rots, _ = annihilation_sequence(rng(5).standard_normal(4), offset=3)
    assert [(G.i, G.j) for G in rots] == [(5, 6), (4, 5), (3, 4)]


@settings(max_examples=200)
@given(arrays(np.float64, st.integers(1, 12), elements=finite))
def test_annihilation_property(a):
    rots, nrm = annihilation_sequence(a)
    W = compose(rots, a.size)
    assert np.max(np.abs(W.T @ W - np.eye(a.size))) <= 1e-12
    scale = max(1.0, np.linalg.norm(a))
    y = W @ a
    assert abs(y[0] - nrm) <= 1e-12 * scale
    assert np.max(np.abs(y[1:]), initial=0.0) <= 1e-12 * scale
    if a.size == 1:
        assert not rots and nrm == a[0]  # nothing to rotate, so no sign fold
    else:
        assert nrm >= 0 and abs(nrm - np.linalg.norm(a)) <= 1e-12 * scale


def test_annihilation_counts_match_rotation_table():
    # per generic rotation: 5 add, 4 mul, 3 div, 2 sqrt; plus a possible sign fold
    cnt = OpCounter()
    a = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    annihilation_sequence(a, cnt)
    assert (cnt.mul, cnt.div, cnt.sqrt) == (16, 12, 8)
    assert cnt.add == 20


# --- householder

def test_reflector_is_involution():
    a = rng(6).standard_normal(7)
    H = HouseholderReflector.from_vector(a)
    x = rng(7).standard_normal(7)
    np.testing.assert_allclose(H.apply(H.apply(x)), x, atol=1e-12 * np.linalg.norm(x))
    y = H.apply(a)
    assert y[0] == pytest.approx(np.linalg.norm(a), rel=1e-14)
    assert np.max(np.abs(y[1:])) <= 1e-14 * np.linalg.norm(a)


def test_reflector_degenerate_skipped():
    cnt = OpCounter()
    assert HouseholderReflector.from_vector([2.0, 0.0, 0.0], counter=cnt) is None
    # only the tail norm that detects the case is charged
    assert (cnt.mul, cnt.add, cnt.sqrt, cnt.div) == (2, 1, 0, 0)


def test_reflector_negative_pivot():
    H = HouseholderReflector.from_vector([-3.0, 0.0])
    np.testing.assert_allclose(H.apply([-3.0, 0.0]), [3.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(H.dense() @ H.dense(), np.eye(2), atol=1e-15)


# --- QR

def test_qr_identity():
    Q, R = qr_decompose(np.eye(3))
    np.testing.assert_array_equal(Q, np.eye(3))
    np.testing.assert_array_equal(R, np.eye(3))


def test_qr_permutation():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    Q, R = qr_decompose(A)
    np.testing.assert_allclose(Q @ R, A, atol=1e-15)
    np.testing.assert_allclose(np.abs(R), np.eye(2), atol=1e-15)


@pytest.mark.parametrize("shape", [(5, 3), (3, 5), (1, 1), (64, 64), (20, 7)])
def test_qr_properties(shape):
    A = rng(sum(shape)).standard_normal(shape)
    Q, R = qr_decompose(A)
    scale = np.max(np.abs(A))
    assert np.max(np.abs(Q @ R - A)) <= 1e-11 * scale
    assert np.max(np.abs(Q.T @ Q - np.eye(shape[0]))) <= 1e-12
    assert np.all(np.tril(R, -1) == 0)
    assert np.all(np.diagonal(R) >= 0)


def test_qr_agrees_with_givens_triangularization():
    A = rng(8).standard_normal((6, 4))
    _, R1 = qr_decompose(A)
    R2 = A.copy()
    for k in range(4):
        rots, _ = annihilation_sequence(R2[k:, k], offset=k)
        for G in rots:
            apply_givens_left(R2, G)
    np.testing.assert_allclose(np.abs(R1), np.abs(R2), atol=1e-10)


# --- offdiag

def test_offdiag_max_examples():
    assert offdiag_max(np.diag([1.0, 2.0, 3.0])) == 0.0
    assert offdiag_max(np.array([[1.0, 5.0], [-7.0, 2.0]])) == 7.0
    B = np.diag([1.0, 2.0, 3.0]) + np.diag([1e-7, 3e-6], 1)
    assert offdiag_max(B) == 3e-6
    assert offdiag_max(rng(9).standard_normal((4, 2))) > 0


def test_kinds_are_counter_fields():
    assert set(KINDS) <= set(OpCounter().as_dict())
