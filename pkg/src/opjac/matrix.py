"""Dense and sparse operator matrices and the structural operations on them.

Operators are plain ``numpy.ndarray`` (dense) or ``scipy.sparse`` CSR/CSC
matrices; grid functions are 1D float arrays. Index subsets are 0-based
ordered sequences of distinct grid positions.

Grid flattening is lexicographic with the *last* axis varying fastest, so on
an ``n_outer x n_inner`` tensor grid the inner-axis derivative is
``kron(I_outer, D_inner)`` and the outer-axis derivative is
``kron(D_outer, I_inner)``.
"""

from __future__ import annotations

import logging
import warnings
from collections.abc import Sequence
from typing import Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

logger = logging.getLogger(__name__)

Operator = Union[np.ndarray, sp.spmatrix, sp.sparray]

# Relative backward-error bound used by solve_linear's post-check, scaled by
# the problem dimension.
SOLVE_RTOL = 1e3 * np.finfo(float).eps
# Sparse systems denser than this (and not too large) are solved with dense
# LU: their factors fill in almost completely, so sparse LU only adds overhead.
DENSE_FILL_THRESHOLD = 0.02
DENSE_MAX_SIZE = 6000


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a linear solve hits a zero (or numerically zero) pivot."""

    def __init__(self, message: str, location: int | None = None):
        super().__init__(message)
        self.location = location


class MatrixProductWarning(UserWarning):
    """Emitted when a general matrix-matrix product is formed."""


def is_sparse(a) -> bool:
    return sp.issparse(a)


def _check_index_subset(subset: Sequence[int], n: int) -> np.ndarray:
    idx = np.asarray(subset, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        bad = idx[(idx < 0) | (idx >= n)][0]
        raise IndexError(f"index {bad} out of range for grid of size {n}")
    if np.unique(idx).size != idx.size:
        raise ValueError("index subset contains duplicates")
    return idx


def identity(n: int, sparse: bool = True) -> Operator:
    return sp.identity(n, format="csr") if sparse else np.eye(n)


def kron(a: Operator, b: Operator) -> Operator:
    """Kronecker product ``a ⊗ b``.

    Block ``(i, j)`` of the result is ``a[i, j] * b``. The result is sparse
    (CSR) if either factor is sparse, dense otherwise.
    """
    rows = int(a.shape[0]) * int(b.shape[0])
    cols = int(a.shape[1]) * int(b.shape[1])
    if rows > np.iinfo(np.int64).max // max(cols, 1):
        raise OverflowError(f"kron result of shape {rows}x{cols} is too large")
    if is_sparse(a) or is_sparse(b):
        out = sp.kron(sp.csr_matrix(a), sp.csr_matrix(b), format="csr")
        out.sum_duplicates()
        out.sort_indices()
        return out
    return np.kron(a, b)


def diag(v) -> sp.csr_matrix:
    """Sparse ``N x N`` diagonal matrix with ``v`` on the diagonal."""
    v = np.asarray(v, dtype=float).ravel()
    return sp.diags(v, 0, shape=(v.size, v.size), format="csr")


def restriction(subset: Sequence[int], n: int) -> sp.csr_matrix:
    """Zeroth-order restriction matrix picking ``subset`` out of ``n`` points.

    Row ``k`` has a single one in column ``subset[k]``. The matching
    prolongation matrix is the transpose.
    """
    idx = _check_index_subset(subset, n)
    m = idx.size
    return sp.csr_matrix(
        (np.ones(m), (np.arange(m), idx)), shape=(m, n)
    )


def prolongation(subset: Sequence[int], n: int) -> sp.csr_matrix:
    return restriction(subset, n).T.tocsr()


def restrict_operator(d: Operator, source: Sequence[int], target: Sequence[int]) -> Operator:
    """Block of ``d`` that reads from ``source`` points and writes to ``target`` points.

    Equal to ``R_target @ d @ R_source.T``; computed by index selection, which
    gives the same entries without forming the products.
    """
    if d.shape[0] != d.shape[1]:
        raise ValueError(f"operator must be square over the full grid, got {d.shape}")
    n = d.shape[0]
    src = _check_index_subset(source, n)
    tgt = _check_index_subset(target, n)
    if is_sparse(d):
        out = sp.csr_matrix(d)[tgt][:, src]
        out.sort_indices()
        return out
    return np.asarray(d)[np.ix_(tgt, src)]


def scale_rows(v, a: Operator) -> Operator:
    """``diag(v) @ a`` computed in O(nnz)."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size != a.shape[0]:
        raise ValueError(f"row scale of length {v.size} for {a.shape[0]} rows")
    if is_sparse(a):
        return sp.csr_matrix(sp.diags(v) @ a)
    return v[:, None] * np.asarray(a)


def scale_cols(a: Operator, v) -> Operator:
    """``a @ diag(v)`` computed in O(nnz)."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size != a.shape[1]:
        raise ValueError(f"column scale of length {v.size} for {a.shape[1]} columns")
    if is_sparse(a):
        return sp.csr_matrix(a @ sp.diags(v))
    return np.asarray(a) * v[None, :]


def outer(u, v) -> np.ndarray:
    """Rank-one matrix ``u v^T`` (the ``kron(column, row)`` form)."""
    return np.multiply.outer(np.asarray(u, dtype=float), np.asarray(v, dtype=float))


def matmul(a: Operator, b: Operator, *, warn: bool = False) -> Operator:
    """General matrix-matrix product.

    Jacobian builders should prefer :func:`scale_rows`, :func:`scale_cols`
    and :func:`outer`; pass ``warn=True`` to surface products formed in hot
    paths.
    """
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply {a.shape} by {b.shape}")
    if warn:
        warnings.warn(
            f"forming matrix-matrix product {a.shape} @ {b.shape}",
            MatrixProductWarning,
            stacklevel=2,
        )
    out = a @ b
    if is_sparse(out):
        return sp.csr_matrix(out)
    return np.asarray(out)


def to_dense(a: Operator) -> np.ndarray:
    return a.toarray() if is_sparse(a) else np.asarray(a)


def solve_linear(a: Operator, b) -> np.ndarray:
    """Solve ``a x = b`` by pivoted LU (dense) or a direct sparse solve.

    ``b`` may be a vector or a matrix of right-hand sides; the factorization
    is computed once either way. Sparse input whose density exceeds
    ``DENSE_FILL_THRESHOLD`` takes the dense path.

    Raises:
        SingularMatrixError: if the factorization meets a zero pivot or the
            solution is not finite. ``location`` carries the offending
            pivot index when LAPACK reports one.
    """
    b = np.asarray(b, dtype=float)
    n, m = a.shape
    if n != m:
        raise ValueError(f"matrix must be square, got {a.shape}")
    if b.shape[0] != n:
        raise ValueError(f"right-hand side of length {b.shape[0]} for {n}x{n} system")
    if is_sparse(a) and a.nnz > DENSE_FILL_THRESHOLD * n * n and n <= DENSE_MAX_SIZE:
        a = a.toarray()
    if is_sparse(a):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", spla.MatrixRankWarning)
                lu = spla.splu(sp.csc_matrix(a))
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            raise SingularMatrixError(f"sparse LU failed: {exc}") from exc
        diag_u = np.abs(lu.U.diagonal())
        zero = np.flatnonzero(diag_u <= np.finfo(float).eps * diag_u.max(initial=0.0))
        if zero.size:
            raise SingularMatrixError(
                f"zero pivot in sparse LU at position {zero[0]}", location=int(zero[0])
            )
        x = lu.solve(b)
    else:
        a = np.asarray(a, dtype=float)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
        d = np.abs(np.diag(lu))
        # pivots at or below eps * largest pivot are singular to working precision
        tiny = np.flatnonzero(d <= np.finfo(float).eps * d.max(initial=0.0))
        if tiny.size:
            raise SingularMatrixError(
                f"zero pivot in LU at position {tiny[0]}", location=int(tiny[0])
            )
        x = scipy.linalg.lu_solve((lu, piv), b)
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("solution of linear system is not finite")
    return x


def residual_ok(a: Operator, x, b, rtol: float | None = None) -> bool:
    """Normwise backward-error check for a computed solution.

    Accepts ``x`` when ``|a x - b|_inf <= rtol * n * (|a|_inf |x|_inf + |b|_inf)``,
    the bound pivoted LU delivers in practice.
    """
    n = a.shape[0]
    rtol = SOLVE_RTOL if rtol is None else rtol
    r = a @ x - b
    anorm = spla.norm(a, np.inf) if is_sparse(a) else np.linalg.norm(a, np.inf)
    scale = anorm * np.linalg.norm(x, np.inf) + np.linalg.norm(b, np.inf)
    return bool(np.linalg.norm(r, np.inf) <= rtol * n * scale)


def dump_coo(a: Operator, path) -> None:
    """Write ``a`` as ``row col value`` lines with 1-based indices (debug aid)."""
    coo = sp.coo_matrix(a)
    with open(path, "w") as fh:
        fh.write(f"% {a.shape[0]} {a.shape[1]} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")
