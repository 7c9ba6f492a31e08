"""Pure-Python banded kernels backed by scipy's LAPACK wrappers.

Same call surface as the Cython module ``_native``: band storage follows the
``scipy.linalg.solve_banded`` convention, ``ab[u + i - j, j] == A[i, j]`` for
``-l <= i - j <= u``.
"""

import numpy as np
from scipy.linalg import lapack

from ..errors import SingularOperatorError

_PIVOT_TINY = 1e-300


def factor(l, u, ab):
    """LU-factor a banded matrix; returns an opaque handle for `solve_factored`."""
    ab = np.asarray(ab, dtype=np.float64)
    n = ab.shape[1]
    # LAPACK gbtrf wants l extra rows on top for fill-in
    lab = np.zeros((2 * l + u + 1, n), dtype=np.float64, order="F")
    lab[l:, :] = ab
    lu, ipiv, info = lapack.dgbtrf(lab, kl=l, ku=u)
    if info > 0:
        raise SingularOperatorError(f"banded factorization hit zero pivot at row {info - 1}")
    if info < 0:
        raise ValueError(f"illegal argument {-info} to dgbtrf")
    if np.min(np.abs(lu[l + u, :])) < _PIVOT_TINY:
        raise SingularOperatorError("banded factorization produced a vanishing pivot")
    return (lu, ipiv, l, u)


def solve_factored(fac, b):
    lu, ipiv, l, u = fac
    b = np.asarray(b, dtype=np.float64)
    squeeze = b.ndim == 1
    rhs = np.asfortranarray(b.reshape(b.shape[0], -1))
    x, info = lapack.dgbtrs(lu, l, u, rhs, ipiv)
    if info != 0:
        raise SingularOperatorError("banded back-substitution failed")
    x = np.ascontiguousarray(x)
    return x[:, 0] if squeeze else x


def matvec(l, u, ab, b):
    """y = A @ b for banded A and b of shape (n,) or (n, k)."""
    ab = np.asarray(ab, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = ab.shape[1]
    y = np.zeros_like(b, dtype=np.float64)
    for d in range(-l, u + 1):
        # diagonal d holds A[i, i + d] at ab[u - d, i + d]
        if d >= 0:
            diag = ab[u - d, d:n]
            y[: n - d] += diag[:, None] * b[d:n] if b.ndim == 2 else diag * b[d:n]
        else:
            diag = ab[u - d, : n + d]
            y[-d:n] += diag[:, None] * b[: n + d] if b.ndim == 2 else diag * b[: n + d]
    return y
