"""Regularization norms: l1, sorted weighted l1 (SLOPE) and trace norm.

Every norm is described by a :class:`RegNorm` carrying its kind, ambient
shape and, for the sorted norm, the nonincreasing weight vector.  All
evaluations are pure functions of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

L1 = "l1"
SLOPE = "slope"
TRACE = "trace"
KINDS = (L1, SLOPE, TRACE)


def decreasing_rearrangement(x: np.ndarray) -> np.ndarray:
    """Absolute values of ``x`` sorted in nonincreasing order.

    Ties keep their original relative order (stable sort), which does not
    change the value but keeps downstream code deterministic.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty input")
    order = np.argsort(-np.abs(x), kind="stable")
    return np.abs(x)[order]


def slope_weights(d: int, C: float) -> np.ndarray:
    """Weight vector beta_i = C * sqrt(log(e*d/i)), i = 1..d.

    Nonincreasing and positive, with beta_d = C.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if C <= 0:
        raise ValueError("C must be positive")
    i = np.arange(1, d + 1, dtype=float)
    return C * np.sqrt(np.log(np.e * d / i))


def sparsity_weight(beta: np.ndarray, s: int) -> float:
    """Aggregate weight of an s-sparse support: sum_{i<=s} beta_i / sqrt(i).

    This is the quantity driving the sorted-norm recovery conditions.
    """
    beta = np.asarray(beta, dtype=float)
    if not 1 <= s <= beta.size:
        raise ValueError(f"s must be in [1, {beta.size}], got {s}")
    i = np.arange(1, s + 1, dtype=float)
    return float(np.sum(beta[:s] / np.sqrt(i)))


def lp_interpolation(e1: float, e2: float, p: float) -> float:
    """Upper bound on an l_p error from the l_1 and l_2 errors.

    Uses ||x||_p <= ||x||_1^(2/p - 1) * ||x||_2^(2 - 2/p) for p in [1, 2],
    which also holds for Schatten norms.
    """
    if not 1.0 <= p <= 2.0:
        raise ValueError(f"p must be in [1, 2], got {p}")
    if e1 < 0 or e2 < 0:
        raise ValueError("errors must be nonnegative")
    a = 2.0 / p - 1.0
    # 0**0 conventions: p=1 -> e1, p=2 -> e2
    if a == 1.0:
        return float(e1)
    if a == 0.0:
        return float(e2)
    return float(e1**a * e2 ** (2.0 - 2.0 / p))


@dataclass(frozen=True)
class RegNorm:
    """One of the three penalties, with its shape and (for SLOPE) weights."""

    kind: str
    shape: object  # d for vectors, (m, T) for matrices
    weights: np.ndarray | None = field(default=None, repr=False)
    weight_constant: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.kind == TRACE:
            m, T = self.shape
            if m < 1 or T < 1:
                raise ValueError("matrix shape must be positive")
        else:
            if int(self.shape) < 1:
                raise ValueError("dimension must be positive")
        if self.kind == SLOPE:
            beta = np.asarray(self.weights, dtype=float)
            if beta.ndim != 1 or beta.size != self.shape:
                raise ValueError("weights must be a length-d vector")
            if beta[-1] <= 0 or np.any(np.diff(beta) > 0):
                raise ValueError("weights must be nonincreasing and positive")
            object.__setattr__(self, "weights", beta)

    @classmethod
    def l1(cls, d: int) -> "RegNorm":
        return cls(L1, int(d))

    @classmethod
    def slope(cls, weights=None, d: int | None = None, C: float = 1.0) -> "RegNorm":
        if weights is None:
            weights = slope_weights(d, C)
            return cls(SLOPE, int(d), weights, float(C))
        weights = np.asarray(weights, dtype=float)
        return cls(SLOPE, weights.size, weights, None)

    @classmethod
    def trace(cls, m: int, T: int) -> "RegNorm":
        return cls(TRACE, (int(m), int(T)))

    @property
    def dim(self) -> int:
        """Ambient dimension: d for vectors, m*T for matrices."""
        if self.kind == TRACE:
            return self.shape[0] * self.shape[1]
        return int(self.shape)

    def effective_weight_constant(self) -> float:
        """Smallest C with beta_i <= C * sqrt(log(e*d/i)) for all i.

        Equals ``weight_constant`` when the weights were generated from it.
        """
        if self.kind == L1:
            return 1.0
        if self.kind != SLOPE:
            raise ValueError("weight constant only defined for l1/slope")
        if self.weight_constant is not None:
            return float(self.weight_constant)
        d = self.dim
        i = np.arange(1, d + 1, dtype=float)
        return float(np.max(self.weights / np.sqrt(np.log(np.e * d / i))))

    def as_matrix(self, x: np.ndarray) -> np.ndarray:
        """Reshape a flattened matrix argument back to (m, T) (row-major)."""
        m, T = self.shape
        x = np.asarray(x, dtype=float)
        if x.shape == (m, T):
            return x
        if x.size == m * T:
            return x.reshape(m, T)
        raise ValueError(f"expected shape {(m, T)} or {m * T}, got {x.shape}")

    def _check_vector(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.shape:
            raise ValueError(f"expected length {self.shape}, got {x.size}")
        return x

    def value(self, x: np.ndarray) -> float:
        """Evaluate the norm at ``x``."""
        if self.kind == L1:
            return float(np.sum(np.abs(self._check_vector(x))))
        if self.kind == SLOPE:
            xs = decreasing_rearrangement(self._check_vector(x))
            return float(np.dot(self.weights, xs))
        sv = np.linalg.svd(self.as_matrix(x), compute_uv=False)
        return float(np.sum(sv))

    def dual_value(self, g: np.ndarray) -> float:
        """Evaluate the dual norm at ``g``; <g, x> <= dual_value(g) * value(x)."""
        if self.kind == L1:
            return float(np.max(np.abs(self._check_vector(g))))
        if self.kind == SLOPE:
            gs = decreasing_rearrangement(self._check_vector(g))
            ratio = np.cumsum(gs) / np.cumsum(self.weights)
            return float(np.max(ratio))
        sv = np.linalg.svd(self.as_matrix(g), compute_uv=False)
        return float(sv[0])

    def inner(self, g: np.ndarray, x: np.ndarray) -> float:
        """Pairing <g, x> (trace inner product in the matrix case)."""
        return float(np.dot(np.asarray(g, float).ravel(), np.asarray(x, float).ravel()))
