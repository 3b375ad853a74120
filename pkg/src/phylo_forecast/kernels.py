"""Hot numeric kernels with numba and pure-numpy implementations.

Two operations dominate runtime at full dataset scale: pairwise Jaccard
weights between adjacent generations (~10^6 product pairs) and the
sparse-Laplacian times dense-feature products inside every Chebyshev
convolution (forward and backward, every epoch).  Each has a numba
``@njit`` kernel and a numpy/scipy fallback; `backend.active_backend`
picks the path.

Bit-equality notes:
  * Jaccard: both paths divide the same exact integer intersection and
    union counts, so the float64 weights are identical bit for bit.
  * spmm: the numba loop accumulates over a row's stored indices in
    order, which is the same order scipy's csr_matvecs uses, so the two
    paths agree exactly as well.
"""

import numpy as np
import scipy.sparse as sp

from .backend import active_backend, numba_available

if numba_available():
    from numba import njit, prange
else:  # pragma: no cover - exercised only on numba-free installs
    prange = range

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True, parallel=True)
def _jaccard_block_nb(indptr, indices, rows_a, rows_b, ncols, out):
    # Bucket the b rows by genotype column first so intersection counting
    # only touches actual matches (work ~ matches, not pairs x genome).
    nb = rows_b.shape[0]
    col_ptr = np.zeros(ncols + 1, dtype=np.int64)
    for ib in range(nb):
        r = rows_b[ib]
        for jj in range(indptr[r], indptr[r + 1]):
            col_ptr[indices[jj] + 1] += 1
    for c in range(ncols):
        col_ptr[c + 1] += col_ptr[c]
    col_rows = np.empty(col_ptr[ncols], dtype=np.int64)
    fill = col_ptr[:-1].copy()
    for ib in range(nb):
        r = rows_b[ib]
        for jj in range(indptr[r], indptr[r + 1]):
            c = indices[jj]
            col_rows[fill[c]] = ib
            fill[c] += 1
    # cells are independent, so the parallel split cannot change results
    for ia in prange(rows_a.shape[0]):
        ra = rows_a[ia]
        na = indptr[ra + 1] - indptr[ra]
        inter = np.zeros(nb, dtype=np.int64)
        for jj in range(indptr[ra], indptr[ra + 1]):
            c = indices[jj]
            for t in range(col_ptr[c], col_ptr[c + 1]):
                inter[col_rows[t]] += 1
        for ib in range(nb):
            rb = rows_b[ib]
            union = na + (indptr[rb + 1] - indptr[rb]) - inter[ib]
            out[ia, ib] = inter[ib] / union if union > 0 else 0.0


def _jaccard_block_np(matrix, rows_a, rows_b):
    a = matrix[rows_a].astype(np.int64)
    b = matrix[rows_b].astype(np.int64)
    inter = np.asarray((a @ b.T).todense())
    ca = np.diff(matrix.indptr)[rows_a].astype(np.int64)
    cb = np.diff(matrix.indptr)[rows_b].astype(np.int64)
    union = ca[:, None] + cb[None, :] - inter
    out = np.zeros(inter.shape, dtype=np.float64)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def jaccard_block(matrix: sp.csr_matrix, rows_a, rows_b) -> np.ndarray:
    """Jaccard weights between every row of ``rows_a`` and of ``rows_b``.

    ``matrix`` is a binary CSR incidence matrix; rows index its products.
    Returns a dense ``(len(rows_a), len(rows_b))`` float64 block.  Two
    empty rows score 0 by convention.
    """
    if not matrix.has_sorted_indices:
        matrix.sort_indices()
    rows_a = np.asarray(rows_a, dtype=np.int64)
    rows_b = np.asarray(rows_b, dtype=np.int64)
    if active_backend() == "numba":
        out = np.empty((rows_a.shape[0], rows_b.shape[0]), dtype=np.float64)
        _jaccard_block_nb(
            matrix.indptr,
            matrix.indices,
            rows_a,
            rows_b,
            matrix.shape[1],
            out,
        )
        return out
    return _jaccard_block_np(matrix, rows_a, rows_b)


@njit(cache=True, parallel=True)
def _spmm_nb(indptr, indices, data, x, out):
    # rows are independent; within a row the jj accumulation order is kept
    n = indptr.shape[0] - 1
    for i in prange(n):
        for jj in range(indptr[i], indptr[i + 1]):
            a = data[jj]
            col = indices[jj]
            for k in range(x.shape[1]):
                out[i, k] += a * x[col, k]


def spmm(matrix: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
    """CSR @ dense product, float64.

    Accepts a 1-D or 2-D right-hand side and matches its rank on output.
    """
    squeeze = x.ndim == 1
    xm = np.ascontiguousarray(x.reshape(x.shape[0], -1), dtype=np.float64)
    if active_backend() == "numba":
        out = np.zeros((matrix.shape[0], xm.shape[1]), dtype=np.float64)
        _spmm_nb(
            matrix.indptr,
            matrix.indices,
            np.asarray(matrix.data, dtype=np.float64),
            xm,
            out,
        )
    else:
        out = np.asarray(matrix @ xm, dtype=np.float64)
    return out[:, 0] if squeeze else out
