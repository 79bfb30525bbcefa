"""Linear-algebra substrate: symmetric sparse storage, SPD solves, Gram-Schmidt.

Dense matrices are plain ``numpy.ndarray`` objects throughout the package;
only the symmetric sparse matrices (mass and stiffness) get a wrapper so that
callers never depend on the storage layout.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionMismatch, NotPositiveDefinite

#: relative residual target for SPD solves on well-conditioned problems
EPS_LIN = 1e-10
#: Gram-Schmidt deflation threshold (relative to the incoming vector norm)
EPS_DEF = 1e-12


class SparseSymMatrix:
    """Symmetric sparse matrix stored as its upper triangle.

    The canonical form is a set of ``(row, col, value)`` triplets with
    ``row <= col`` and no duplicates. Products and the ``csr`` view treat the
    matrix as full symmetric.
    """

    __array_ufunc__ = None  # let ``ndarray @ S`` reach __rmatmul__

    def __init__(self, dim, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        if not (rows.shape == cols.shape == vals.shape):
            raise DimensionMismatch("triplet arrays must have equal length")
        if rows.size and (rows.min() < 0 or cols.max() >= dim or cols.min() < 0 or rows.max() >= dim):
            raise DimensionMismatch(f"triplet index out of range for dim={dim}")
        # fold the lower triangle onto the upper one, then sum duplicates
        lo = rows > cols
        r = np.where(lo, cols, rows)
        c = np.where(lo, rows, cols)
        upper = sp.coo_matrix((vals, (r, c)), shape=(dim, dim)).tocsr()
        upper.sum_duplicates()
        upper.eliminate_zeros()
        upper = upper.tocoo()
        self.dim = int(dim)
        self.rows = upper.row.astype(np.int64)
        self.cols = upper.col.astype(np.int64)
        self.vals = upper.data.copy()
        for a in (self.rows, self.cols, self.vals):
            a.setflags(write=False)

    @classmethod
    def from_scipy(cls, A, sym_tol=1e-12):
        """Wrap a full symmetric scipy/numpy matrix, keeping its upper triangle."""
        A = sp.csr_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"matrix is not square: {A.shape}")
        asym = abs(A - A.T)
        scale = max(abs(A).max(), 1.0) if A.nnz else 1.0
        if asym.nnz and asym.max() > sym_tol * scale:
            raise ValueError("matrix is not symmetric")
        U = sp.triu(A).tocoo()
        return cls(A.shape[0], U.row, U.col, U.data)

    @classmethod
    def from_dense(cls, A):
        return cls.from_scipy(np.atleast_2d(np.asarray(A, dtype=float)))

    @property
    def shape(self):
        return (self.dim, self.dim)

    @property
    def nnz(self):
        return self.vals.size

    @cached_property
    def csr(self) -> sp.csr_matrix:
        """Full symmetric CSR view (both triangles)."""
        U = sp.coo_matrix((self.vals, (self.rows, self.cols)), shape=self.shape).tocsr()
        strict = sp.triu(U, k=1)
        full = (U + strict.T).tocsr()
        full.sort_indices()
        return full

    def toarray(self):
        return self.csr.toarray()

    def diagonal(self):
        return self.csr.diagonal()

    def submatrix(self, rows, cols) -> sp.csr_matrix:
        return self.csr[np.asarray(rows)][:, np.asarray(cols)]

    def __matmul__(self, other):
        return self.csr @ other

    def __rmatmul__(self, other):
        return other @ self.csr

    def write_matrix_market(self, path, comment=""):
        scipy.io.mmwrite(str(path), self.csr.tocoo(), comment=comment, symmetry="symmetric")

    def __repr__(self):
        return f"SparseSymMatrix(dim={self.dim}, nnz_upper={self.nnz})"


class SpdFactorization:
    """Factorization of an SPD matrix, reusable for many right-hand sides.

    Sparse inputs go through SuperLU with a symmetric ordering and diagonal
    pivoting, so the pivots are the LDL^T diagonal and their signs certify
    definiteness. Dense inputs use a Cholesky factorization.
    """

    def __init__(self, A):
        if isinstance(A, SparseSymMatrix):
            A = A.csr
        if sp.issparse(A):
            self._init_sparse(sp.csc_matrix(A))
        else:
            self._init_dense(np.atleast_2d(np.asarray(A, dtype=float)))

    def _init_sparse(self, A):
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"matrix is not square: {A.shape}")
        self.dim = n
        diag = A.diagonal()
        if n and diag.min() <= 0.0:
            raise NotPositiveDefinite("non-positive diagonal entry")
        try:
            lu = spla.splu(
                A,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            raise NotPositiveDefinite(str(exc)) from exc
        pivots = lu.U.diagonal()
        if not np.array_equal(lu.perm_r, lu.perm_c) or pivots.min() <= 1e-14 * diag.max():
            raise NotPositiveDefinite(
                f"factorization pivot {pivots.min():.3e} signals a singular or indefinite matrix"
            )
        self._lu = lu
        self._chol = None

    def _init_dense(self, A):
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"matrix is not square: {A.shape}")
        self.dim = n
        try:
            self._chol = scipy.linalg.cho_factor(A, lower=True, check_finite=True)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(str(exc)) from exc
        self._lu = None

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.dim:
            raise DimensionMismatch(f"rhs has {rhs.shape[0]} rows, expected {self.dim}")
        if self._lu is not None:
            return self._lu.solve(rhs)
        return scipy.linalg.cho_solve(self._chol, rhs, check_finite=False)


def spd_factorize(A) -> SpdFactorization:
    """Factorize a symmetric positive definite matrix (sparse or dense)."""
    return SpdFactorization(A)


def orthonormalize_append(basis, v, eps=EPS_DEF):
    """Append ``v`` to an orthonormal column basis.

    Two passes of modified Gram-Schmidt are applied. Returns the extended
    basis, or ``None`` if the remainder of ``v`` falls below ``eps`` times its
    original norm (the Krylov sequence has deflated).
    """
    w = np.array(v, dtype=float).ravel()
    if basis is None:
        basis = np.zeros((w.size, 0))
    basis = np.asarray(basis, dtype=float)
    if basis.shape[0] != w.size:
        raise DimensionMismatch(f"vector length {w.size} != basis rows {basis.shape[0]}")
    ref = np.linalg.norm(w)
    if ref == 0.0 or not np.isfinite(ref):
        return None
    for _ in range(2):
        for j in range(basis.shape[1]):
            w -= (basis[:, j] @ w) * basis[:, j]
    nrm = np.linalg.norm(w)
    if nrm < eps * ref:
        return None
    return np.column_stack([basis, w / nrm])
