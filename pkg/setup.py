import sys

from setuptools import setup

# The compiled stack kernel is optional: the package falls back to the pure
# Python implementation when the extension is unavailable.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/smallball/_stack_prox.pyx",
        language_level="3",
    )
except Exception as exc:  # pragma: no cover
    print(f"building without compiled kernels: {exc}", file=sys.stderr)
    ext_modules = []

setup(ext_modules=ext_modules)
