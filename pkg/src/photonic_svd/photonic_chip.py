"""Simulated Reck-triangle mesh of 2x2 rotation blocks.

Diagonal ``d`` (1-based) holds ``n - d`` blocks; block ``(d, p)`` couples
physical channels ``n-d-p`` and ``n-d-p+1``.  Light passes the diagonals in
order and, inside a diagonal, the positions in increasing order, so on
diagonal 1 the bottom channel pair is hit first.

In the flipped orientation the channel order is reversed with respect to the
coordinates of the vectors fed in, so the first block of a diagonal acts on
coordinates (0, 1) instead.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .linalg_core import GivensRotation, OpCounter

STANDARD = "standard"
FLIPPED = "flipped"


@dataclass(frozen=True)
class MeshBlock:
    diag: int
    pos: int
    c: float
    s: float

    @property
    def identity_flag(self) -> bool:
        return self.c == 1.0 and self.s == 0.0

    @property
    def block(self) -> np.ndarray:
        return np.array([[self.c, -self.s], [self.s, self.c]])


class PhotonicMesh:
    """Noiseless mesh on ``size`` channels with config/op counters."""

    def __init__(self, size: int, counter: OpCounter | None = None, orientation: str = STANDARD):
        if size < 1:
            raise ValueError("mesh needs at least one channel")
        self.size = int(size)
        self.counter = counter if counter is not None else OpCounter()
        self._c = np.ones((max(size - 1, 1), max(size - 1, 1)))
        self._s = np.zeros_like(self._c)
        self._active = np.zeros(self._c.shape, dtype=bool)
        self.orientation = STANDARD
        self.set_orientation(orientation)

    # addressing

    @property
    def n_blocks(self) -> int:
        return self.size * (self.size - 1) // 2

    def _check_address(self, diag: int, pos: int) -> None:
        if not (1 <= diag <= self.size - 1 and 1 <= pos <= self.size - diag):
            raise ValueError(f"no block at (diag={diag}, pos={pos}) on a {self.size}-channel mesh")

    def channels(self, diag: int, pos: int) -> tuple[int, int]:
        self._check_address(diag, pos)
        lo = self.size - diag - pos
        return lo, lo + 1

    def coordinates(self, diag: int, pos: int) -> tuple[int, int]:
        """Coordinate plane (i < j) the block acts on under the current orientation."""
        a, b = self.channels(diag, pos)
        if self.orientation == FLIPPED:
            a, b = self.size - 1 - b, self.size - 1 - a
        return a, b

    def slot_for(self, i: int, j: int, diag: int = 1) -> int:
        """Position on ``diag`` whose block acts on coordinates (i, j)."""
        if j != i + 1:
            raise ValueError(f"mesh blocks couple adjacent coordinates, got ({i}, {j})")
        lo = i if self.orientation == STANDARD else self.size - 2 - i
        pos = self.size - diag - lo
        self._check_address(diag, pos)
        return pos

    def block(self, diag: int, pos: int) -> MeshBlock:
        self._check_address(diag, pos)
        return MeshBlock(diag, pos, float(self._c[diag - 1, pos - 1]), float(self._s[diag - 1, pos - 1]))

    def blocks(self) -> list[MeshBlock]:
        return [self.block(d, p) for d in range(1, self.size) for p in range(1, self.size - d + 1)]

    # programming

    def reset(self) -> None:
        """All blocks to identity; one reconfiguration."""
        self._c.fill(1.0)
        self._s.fill(0.0)
        self._active.fill(False)
        self.counter.chip_config += 1

    def set_orientation(self, orientation: str) -> None:
        if orientation not in (STANDARD, FLIPPED):
            raise ValueError(f"orientation must be {STANDARD!r} or {FLIPPED!r}")
        self.orientation = orientation

    def flip(self) -> None:
        self.set_orientation(FLIPPED if self.orientation == STANDARD else STANDARD)

    def program_block(self, diag: int, pos: int, G: GivensRotation) -> None:
        i, j = self.coordinates(diag, pos)
        if (G.i, G.j) != (i, j):
            raise ValueError(f"block ({diag}, {pos}) acts on planes ({i}, {j}), rotation on ({G.i}, {G.j})")
        # in flipped mode the coordinate pair reaches the block in swapped channel order
        s = G.s if self.orientation == STANDARD else -G.s
        self._c[diag - 1, pos - 1] = G.c
        self._s[diag - 1, pos - 1] = s
        self._active[diag - 1, pos - 1] = not (G.c == 1.0 and s == 0.0)

    def program_sequence(self, rotations: Iterable[GivensRotation], diag: int = 1) -> None:
        """Place adjacent-plane rotations on one diagonal; they must arrive in streaming order."""
        last = 0
        for G in rotations:
            pos = self.slot_for(G.i, G.j, diag)
            if pos <= last:
                raise ValueError("rotations are not in the mesh's streaming order")
            self.program_block(diag, pos, G)
            last = pos

    # passing light

    def _stream(self, X: np.ndarray) -> np.ndarray:
        # X holds one column per pass, rows indexed by physical channel
        n = self.size
        for d in range(1, n):
            for p in np.flatnonzero(self._active[d - 1, : n - d]) + 1:
                lo = n - d - p
                c = self._c[d - 1, p - 1]
                s = self._s[d - 1, p - 1]
                top = X[lo].copy()
                X[lo] = c * top - s * X[lo + 1]
                X[lo + 1] = s * top + c * X[lo + 1]
        return X

    def pass_matrix_columns(self, M) -> np.ndarray:
        """Mesh @ M, one chip operation per column."""
        M = np.asarray(M, dtype=np.float64)
        if M.ndim != 2 or M.shape[0] != self.size:
            raise ValueError(f"need {self.size} rows, got shape {M.shape}")
        X = M[::-1].copy() if self.orientation == FLIPPED else M.copy()
        self._stream(X)
        self.counter.chip_op += M.shape[1]
        return X[::-1].copy() if self.orientation == FLIPPED else X

    def pass_vector(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 1 or z.size != self.size:
            raise ValueError(f"need a vector of length {self.size}")
        return self.pass_matrix_columns(z.reshape(-1, 1))[:, 0]

    def realization(self) -> np.ndarray:
        """Dense matrix of the mesh in coordinates; not billed."""
        X = np.eye(self.size)
        self._stream(X)
        if self.orientation == FLIPPED:
            X = X[::-1, ::-1].copy()
        return X
