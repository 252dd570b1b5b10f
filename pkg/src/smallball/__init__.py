"""Sparsity-driven regularized least squares with small-ball rate machinery."""

__version__ = "0.1.0"
