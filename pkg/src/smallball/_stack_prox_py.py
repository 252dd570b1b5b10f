"""Pure-Python fallback for the stack prox kernel.

Same pool-adjacent-violators recursion as the compiled version; used when the
extension module is not built (or when SMALLBALL_PURE_PYTHON is set).
"""

import numpy as np


def pool_nonincreasing(z, out):
    """Overwrite ``out`` with argmin_x 0.5*||x - z||^2 over x1 >= ... >= xn >= 0."""
    n = z.shape[0]
    if n == 0:
        return
    length = np.empty(n, dtype=np.int_)
    total = np.empty(n, dtype=np.float64)
    top = -1
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
        out[pos : pos + length[i]] = v
        pos += length[i]
