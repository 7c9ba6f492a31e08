# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled banded kernels: no-pivot LU factor/solve and banded matvec.

Band storage matches scipy.linalg.solve_banded: ab[u + i - j, j] = A[i, j].
Factorization is Doolittle without pivoting, specialised for the small
bandwidths (l, u <= 2) used by the discrete operators; a vanishing pivot
raises instead of permuting.
"""

import numpy as np

cimport numpy as cnp

from ..errors import SingularOperatorError

cnp.import_array()

DEF PIVOT_TINY = 1e-300


def factor(int l, int u, ab):
    """Return (lu, l, u) where lu holds U in rows 0..u and multipliers below."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] lu = np.array(ab, dtype=np.float64, order="C")
    cdef int n = lu.shape[1]
    cdef int k, i, j, imax, jmax
    cdef double piv, m
    if lu.shape[0] != l + u + 1:
        raise ValueError("band array must have l + u + 1 rows")
    cdef double[:, ::1] a = lu
    for k in range(n):
        piv = a[u, k]
        if piv < PIVOT_TINY and piv > -PIVOT_TINY:
            raise SingularOperatorError(
                f"zero pivot at row {k} in no-pivot banded factorization")
        imax = l if k + l < n else n - 1 - k
        jmax = u if k + u < n else n - 1 - k
        for i in range(1, imax + 1):
            # eliminate A[k+i, k]; multiplier stored in place
            m = a[u + i, k] / piv
            a[u + i, k] = m
            for j in range(1, jmax + 1):
                a[u + i - j, k + j] -= m * a[u - j, k + j]
    return (lu, l, u)


def solve_factored(fac, b):
    lu, l, u = fac
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = lu
    b = np.asarray(b, dtype=np.float64)
    squeeze = b.ndim == 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] x = np.array(
        b.reshape(b.shape[0], -1), dtype=np.float64, order="C", copy=True)
    cdef int n = a.shape[1]
    cdef int nrhs = x.shape[1]
    cdef int li = <int> l
    cdef int ui = <int> u
    cdef int k, i, r, imax
    cdef double m
    cdef double[:, ::1] av = a
    cdef double[:, ::1] xv = x
    with nogil:
        # forward: apply stored multipliers
        for k in range(n):
            imax = li if k + li < n else n - 1 - k
            for i in range(1, imax + 1):
                m = av[ui + i, k]
                if m != 0.0:
                    for r in range(nrhs):
                        xv[k + i, r] -= m * xv[k, r]
        # backward: solve U x = y
        for k in range(n - 1, -1, -1):
            imax = ui if k + ui < n else n - 1 - k
            for i in range(1, imax + 1):
                m = av[ui - i, k + i]
                if m != 0.0:
                    for r in range(nrhs):
                        xv[k, r] -= m * xv[k + i, r]
            m = av[ui, k]
            for r in range(nrhs):
                xv[k, r] /= m
    return x[:, 0] if squeeze else x


def matvec(int l, int u, ab, b):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = np.ascontiguousarray(ab, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    squeeze = b.ndim == 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] xb = np.ascontiguousarray(
        b.reshape(b.shape[0], -1))
    cdef int n = a.shape[1]
    cdef int nrhs = xb.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] y = np.zeros((n, nrhs), dtype=np.float64)
    cdef int i, j, r, jlo, jhi
    cdef double acc
    cdef double[:, ::1] av = a
    cdef double[:, ::1] bv = xb
    cdef double[:, ::1] yv = y
    with nogil:
        for i in range(n):
            jlo = i - l if i - l > 0 else 0
            jhi = i + u if i + u < n - 1 else n - 1
            for r in range(nrhs):
                acc = 0.0
                for j in range(jlo, jhi + 1):
                    acc += av[u + i - j, j] * bv[j, r]
                yv[i, r] = acc
    return y[:, 0] if squeeze else y
