"""Digital and hybrid photonic SVD algorithms with an instrumented cost model."""
from .linalg_core import (
    GivensRotation,
    HouseholderReflector,
    OpCounter,
    annihilation_sequence,
    apply_givens_left,
    apply_givens_right,
    givens_from_ratio,
    offdiag_max,
    qr_decompose,
)

__version__ = "0.1.0"
