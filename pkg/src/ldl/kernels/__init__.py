"""Banded linear-algebra kernels with a compiled fast path.

Every implicit sweep in the solvers reduces to factoring one small banded
matrix and back-substituting against many right-hand sides, so these three
primitives are the hot loop of the whole package.  A Cython extension
(`ldl.kernels._native`) implements them without pivoting; a LAPACK-backed
fallback is selected at import time when the extension is missing or when
``LDL_FORCE_FALLBACK=1`` is set.  ``benchmarks/bench_kernels.py`` compares the
two implementations.

Band storage convention (same as ``scipy.linalg.solve_banded``)::

    ab[u + i - j, j] = A[i, j]   for -l <= i - j <= u
"""

import os

import numpy as np

from . import _fallback

HAVE_NATIVE = False
_impl = _fallback
if os.environ.get("LDL_FORCE_FALLBACK", "0") != "1":
    try:
        from . import _native as _impl  # type: ignore[no-redef]

        HAVE_NATIVE = True
    except ImportError:
        pass

BACKEND = "native" if HAVE_NATIVE else "fallback"

__all__ = ["BandedLU", "solve_banded", "banded_matvec", "HAVE_NATIVE", "BACKEND"]


class BandedLU:
    """LU factorization of a banded matrix, reusable across many solves.

    Parameters
    ----------
    l, u : lower/upper bandwidth
    ab : (l + u + 1, n) band array
    """

    def __init__(self, l, u, ab):
        ab = np.asarray(ab, dtype=np.float64)
        if ab.shape[0] != l + u + 1:
            raise ValueError("band array must have l + u + 1 rows")
        self.l = l
        self.u = u
        self.n = ab.shape[1]
        self._fac = _impl.factor(l, u, ab)

    def solve(self, b):
        """Solve A x = b for b of shape (n,) or (n, k)."""
        return _impl.solve_factored(self._fac, b)


def solve_banded(l, u, ab, b):
    """One-shot banded solve (factor + back-substitute)."""
    return BandedLU(l, u, ab).solve(b)


def banded_matvec(l, u, ab, b):
    """Return A @ b for banded A and b of shape (n,) or (n, k)."""
    return _impl.matvec(l, u, np.asarray(ab, dtype=np.float64), b)
