# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled stack kernel: projection onto the nonincreasing nonnegative cone.

This is the hot inner loop of the sorted-l1 proximal operator; it runs once
per solver iteration and cannot be vectorised because each pooled block
depends on the previous one.
"""

import numpy as np


def pool_nonincreasing(double[::1] z, double[::1] out):
    """Overwrite ``out`` with argmin_x 0.5*||x - z||^2 over x1 >= ... >= xn >= 0.

    Pool-adjacent-violators on a block stack; the nonnegativity clamp is
    applied blockwise at write-out, which is exact for this cone.
    """
    cdef Py_ssize_t n = z.shape[0]
    if n == 0:
        return
    cdef long[::1] length = np.empty(n, dtype=np.int_)
    cdef double[::1] total = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t top = -1
    cdef Py_ssize_t i, j, pos
    cdef double v

    for i in range(n):
        top += 1
        length[top] = 1
        total[top] = z[i]
        while top > 0 and total[top - 1] * length[top] <= total[top] * length[top - 1]:
            total[top - 1] += total[top]
            length[top - 1] += length[top]
            top -= 1

    pos = 0
    for i in range(top + 1):
        v = total[i] / length[i]
        if v < 0.0:
            v = 0.0
        for j in range(length[i]):
            out[pos] = v
            pos += 1
