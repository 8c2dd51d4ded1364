"""Row-gather comparison kernels used by the batch scorer.

Each kernel scores ``rows[ia[k]]`` against ``rows[ib[k]]`` and accumulates
sequentially over the vector, so a pair's score never depends on how the
pair list was split across workers. Numba is used when importable; the
numpy fallback keeps the same per-row semantics at lower throughput.
"""

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None

CHI2_EPS = 1e-10


def chi2_rows_numpy(mat, ia, ib, eps=CHI2_EPS):
    a = mat[ia]
    b = mat[ib]
    d = a - b
    return np.sum(d * d / np.maximum(a + b, eps), axis=1)


def dot_rows_numpy(mat, ia, ib):
    return np.einsum("ij,ij->i", mat[ia], mat[ib])


if njit is None:  # pragma: no cover
    chi2_rows = chi2_rows_numpy
    dot_rows = dot_rows_numpy
else:

    @njit(nogil=True, cache=True)
    def _chi2_rows(mat, ia, ib, eps, out):
        d = mat.shape[1]
        for k in range(ia.shape[0]):
            a = mat[ia[k]]
            b = mat[ib[k]]
            acc = 0.0
            for j in range(d):
                x = a[j]
                y = b[j]
                t = x - y
                den = x + y
                if den < eps:
                    den = eps
                acc += t * t / den
            out[k] = acc

    @njit(nogil=True, cache=True)
    def _dot_rows(mat, ia, ib, out):
        d = mat.shape[1]
        for k in range(ia.shape[0]):
            a = mat[ia[k]]
            b = mat[ib[k]]
            acc = 0.0
            for j in range(d):
                acc += a[j] * b[j]
            out[k] = acc

    def chi2_rows(mat, ia, ib, eps=CHI2_EPS):
        out = np.empty(len(ia))
        _chi2_rows(mat, np.ascontiguousarray(ia, dtype=np.int64),
                   np.ascontiguousarray(ib, dtype=np.int64), eps, out)
        return out

    def dot_rows(mat, ia, ib):
        out = np.empty(len(ia))
        _dot_rows(mat, np.ascontiguousarray(ia, dtype=np.int64),
                  np.ascontiguousarray(ib, dtype=np.int64), out)
        return out
