"""Proximal operators for the three penalties.

The sorted-l1 prox reduces, on the sorted absolute values, to a projection
onto the nonincreasing nonnegative cone.  That projection is the one
sequential hot loop in the package and lives in a compiled kernel with a
pure-Python fallback (see ``KERNEL_BACKEND``).
"""

from __future__ import annotations

import os

import numpy as np

if os.environ.get("SMALLBALL_PURE_PYTHON"):
    from ._stack_prox_py import pool_nonincreasing

    KERNEL_BACKEND = "python"
else:
    try:
        from ._stack_prox import pool_nonincreasing

        KERNEL_BACKEND = "cython"
    except ImportError:  # extension not built
        from ._stack_prox_py import pool_nonincreasing

        KERNEL_BACKEND = "python"


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    """Entrywise sign(v) * max(|v| - t, 0); prox of t * ||.||_1."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def prox_sorted_l1(v: np.ndarray, tbeta: np.ndarray) -> np.ndarray:
    """Prox of the sorted weighted l1 norm: argmin_x 0.5||x-v||^2 + sum tbeta_i x_i#.

    ``tbeta`` must be nonincreasing and nonnegative.  Sort |v|, run the stack
    kernel on |v|# - tbeta, then undo the sort and restore signs.
    """
    v = np.asarray(v, dtype=float).ravel()
    tbeta = np.asarray(tbeta, dtype=float).ravel()
    if tbeta.size != v.size:
        raise ValueError("weights must match the input length")
    if np.any(tbeta < 0) or np.any(np.diff(tbeta) > 0):
        raise ValueError("weights must be nonincreasing and nonnegative")
    order = np.argsort(-np.abs(v), kind="stable")
    z = np.abs(v)[order] - tbeta
    mags = np.empty_like(z)
    pool_nonincreasing(z, mags)
    out = np.empty_like(v)
    out[order] = mags
    return np.sign(v) * out


def prox_nuclear(A: np.ndarray, t: float) -> np.ndarray:
    """Prox of t * (trace norm): soft-threshold the singular values.

    Never increases rank; requires finite entries (SVD would fail otherwise).
    """
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise ValueError("non-finite entries")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    s = np.maximum(s - t, 0.0)
    return (U * s) @ Vt
