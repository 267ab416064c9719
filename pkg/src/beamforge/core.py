"""Complex linear-algebra primitives and the seeded random-stream contract."""

from __future__ import annotations

import numpy as np

PIVOT_TOL = 1e-12
_MASK64 = 2**64 - 1


class FormatError(ValueError):
    """Malformed checkpoint or dataset file."""


class SingularMatrixError(ValueError):
    """Raised when a Gram matrix cannot be inverted (degenerate beam selection)."""


def hermitian_apply(A, x):
    """Return ``A^H x`` for a complex matrix ``A`` (rows == len(x))."""
    A = np.asarray(A, dtype=np.complex128)
    x = np.asarray(x, dtype=np.complex128)
    if A.ndim != 2 or x.ndim != 1 or A.shape[0] != x.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, x is {x.shape}")
    return A.conj().T @ x


def small_inverse(A):
    """Invert a small square complex matrix by Gauss-Jordan with partial pivoting.

    Raises SingularMatrixError when a pivot falls below ``PIVOT_TOL`` relative
    to the largest entry of ``A``.
    """
    A = np.array(A, dtype=np.complex128)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"square matrix required, got shape {A.shape}")
    n = A.shape[0]
    if n > 16:
        raise ValueError(f"small_inverse supports dimension <= 16, got {n}")
    scale = np.abs(A).max() if A.size else 0.0
    if scale == 0.0:
        raise SingularMatrixError("zero matrix is singular")
    aug = np.concatenate([A, np.eye(n, dtype=np.complex128)], axis=1)
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[piv, col]) < PIVOT_TOL * scale:
            raise SingularMatrixError(f"pivot {col} below tolerance; selection is degenerate")
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        for row in range(n):
            if row != col and aug[row, col] != 0:
                aug[row] -= aug[row, col] * aug[col]
    return aug[:, n:]


def derive_stream(master_seed, index):
    """Random stream for record/trial ``index`` under ``master_seed``.

    Streams are keyed by hashing ``(master_seed, index)`` through numpy's
    SeedSequence, so any index can be materialised independently of the
    others and in any order. ``index`` may also be a tuple of integers for
    nested keys such as (trial, snr_point).
    """
    key = tuple(index) if isinstance(index, (tuple, list)) else (index,)
    ss = np.random.SeedSequence(entropy=int(master_seed) & _MASK64,
                                spawn_key=tuple(int(k) & _MASK64 for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def complex_normal(rng, var, size=None):
    """Draw CN(0, var): ``sqrt(var/2) * (g1 + j g2)`` with independent standard normals."""
    shape = () if size is None else tuple(np.atleast_1d(size))
    g = rng.standard_normal(size=(2,) + shape)
    z = np.sqrt(var / 2.0) * (g[0] + 1j * g[1])
    return complex(z) if size is None else z
