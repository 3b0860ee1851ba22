"""Sparse symmetric linear algebra kernels.

Everything here works on :class:`SparseSym`, an immutable symmetric matrix
stored as upper-triangular triplets, and exposes two operations used by every
discrete solver in the package:

* :func:`solve_spd` -- symmetric positive definite solve (sparse LDL^T with a
  fill-reducing ordering, conjugate gradients for very large systems);
* :func:`smallest_generalized_eigenpair` -- lowest eigenpair of the pencil
  ``A x = lam M x`` by shift-invert inverse iteration.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    NotPositiveDefinite,
    ShiftNotBelowSpectrum,
)

__all__ = [
    "SparseSym",
    "EigenPair",
    "SolverConfig",
    "EigenConfig",
    "ldl_factor",
    "solve_spd",
    "smallest_generalized_eigenpair",
]


@dataclass(frozen=True, eq=False)
class SparseSym:
    """Symmetric ``n x n`` matrix stored once per unordered index pair.

    ``rows[i] <= cols[i]`` for every stored triplet and no pair repeats.
    Use the ``from_*`` constructors rather than building one by hand.
    """

    n: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        if self.n < 1:
            raise DimensionMismatch("SparseSym needs n >= 1")
        for name in ("rows", "cols", "vals"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @classmethod
    def from_triplets(cls, n, rows, cols, vals, sym_tol=1e-12):
        """Build from full-matrix triplets; duplicates are summed.

        The accumulated matrix must be symmetric up to ``sym_tol`` relative to
        its largest entry.
        """
        full = sp.coo_matrix(
            (np.asarray(vals, float), (np.asarray(rows), np.asarray(cols))),
            shape=(n, n),
        ).tocsr()
        return cls.from_scipy(full, sym_tol=sym_tol)

    @classmethod
    def from_scipy(cls, mat, sym_tol=1e-12):
        mat = sp.csr_matrix(mat, dtype=float)
        if mat.shape[0] != mat.shape[1]:
            raise DimensionMismatch(f"matrix is not square: {mat.shape}")
        mat.sum_duplicates()
        asym = abs(mat - mat.T)
        scale = abs(mat).max() if mat.nnz else 0.0
        if asym.nnz and asym.max() > sym_tol * max(scale, 1.0):
            raise ValueError("matrix is not symmetric")
        # symmetrize the stored half so tiny assembly asymmetries vanish
        sym = sp.triu(0.5 * (mat + mat.T), format="coo")
        sym.eliminate_zeros()
        return cls(mat.shape[0], sym.row.astype(np.int64), sym.col.astype(np.int64), sym.data.copy())

    @classmethod
    def from_dense(cls, arr, sym_tol=1e-12):
        return cls.from_scipy(sp.csr_matrix(np.asarray(arr, float)), sym_tol=sym_tol)

    @classmethod
    def identity(cls, n):
        idx = np.arange(n)
        return cls(n, idx.copy(), idx.copy(), np.ones(n))

    @classmethod
    def diag(cls, values):
        values = np.asarray(values, float)
        idx = np.arange(values.size)
        return cls(values.size, idx.copy(), idx.copy(), values.copy())

    @cached_property
    def csr(self) -> sp.csr_matrix:
        """Full symmetric matrix in CSR form."""
        off = self.rows != self.cols
        r = np.concatenate([self.rows, self.cols[off]])
        c = np.concatenate([self.cols, self.rows[off]])
        v = np.concatenate([self.vals, self.vals[off]])
        return sp.csr_matrix((v, (r, c)), shape=(self.n, self.n))

    def matvec(self, x):
        return self.csr @ np.asarray(x, float)

    def quad(self, x):
        x = np.asarray(x, float)
        return float(x @ (self.csr @ x))

    def toarray(self):
        return self.csr.toarray()

    def __add__(self, other):
        if not isinstance(other, SparseSym):
            return NotImplemented
        _check_same(self, other)
        return SparseSym.from_scipy(self.csr + other.csr)

    def __sub__(self, other):
        if not isinstance(other, SparseSym):
            return NotImplemented
        _check_same(self, other)
        return SparseSym.from_scipy(self.csr - other.csr)

    def scaled(self, alpha):
        return SparseSym(self.n, self.rows.copy(), self.cols.copy(), alpha * self.vals)


def _check_same(a: SparseSym, b: SparseSym):
    if a.n != b.n:
        raise DimensionMismatch(f"dimension mismatch: {a.n} vs {b.n}")


@dataclass(frozen=True)
class EigenPair:
    value: float
    coords: np.ndarray
    residual: float = 0.0
    iterations: int = 0


@dataclass(frozen=True)
class SolverConfig:
    rtol: float = 1e-10
    # above this size the direct factorization is replaced by CG
    direct_max_n: int = 400_000
    cg_maxiter: int = 20_000


@dataclass(frozen=True)
class EigenConfig:
    tol: float = 1e-9
    max_iter: int = 20_000
    stagnation_rel: float = 1e-14
    stagnation_count: int = 5
    max_restarts: int = 3
    seed: int = 12345


class LDLFactor:
    """Symmetric-mode sparse LU whose pivots are the LDL^T diagonal.

    SuperLU is run without partial pivoting and with a symmetric column
    ordering, so ``U = D L^T`` and the signs of ``diag(U)`` are the signs of
    ``D`` (Sylvester's law of inertia).
    """

    def __init__(self, mat: sp.spmatrix):
        mat = sp.csc_matrix(mat)
        try:
            self._lu = spla.splu(
                mat,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:  # exactly singular pivot
            raise NotPositiveDefinite(f"factorization failed: {exc}") from exc
        self.pivots = np.asarray(self._lu.U.diagonal())
        self.n = mat.shape[0]

    @property
    def min_pivot(self) -> float:
        return float(self.pivots.min())

    @property
    def positive_definite(self) -> bool:
        return bool(np.all(self.pivots > 0.0))

    def solve(self, b):
        return self._lu.solve(np.asarray(b, float))


def ldl_factor(A, require_pd=True) -> LDLFactor:
    mat = A.csr if isinstance(A, SparseSym) else sp.csr_matrix(A)
    fac = LDLFactor(mat)
    if require_pd and not fac.positive_definite:
        raise NotPositiveDefinite(f"non-positive pivot {fac.min_pivot:.3e}")
    return fac


def solve_spd(A: SparseSym, b, config: SolverConfig = SolverConfig()) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    Raises
    ------
    DimensionMismatch
        If ``b`` does not have length ``A.n``.
    NotPositiveDefinite
        If a pivot of the factorization is not positive, or CG breaks down.
    """
    b = np.asarray(b, float)
    if b.shape != (A.n,):
        raise DimensionMismatch(f"rhs has shape {b.shape}, expected ({A.n},)")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(A.n)
    if A.n <= config.direct_max_n:
        x = ldl_factor(A).solve(b)
        res = np.linalg.norm(A.matvec(x) - b)
        if res > config.rtol * bnorm:
            # one step of iterative refinement
            fac = ldl_factor(A)
            x = x + fac.solve(b - A.matvec(x))
        return x
    return _cg(A, b, config)


def _cg(A: SparseSym, b, config: SolverConfig):
    mat = A.csr
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = r @ r
    bnorm = np.sqrt(b @ b)
    for _ in range(config.cg_maxiter):
        Ap = mat @ p
        pAp = p @ Ap
        if pAp <= 0.0:
            raise NotPositiveDefinite("conjugate gradients met a non-positive curvature direction")
        alpha = rr / pAp
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        if np.sqrt(rr_new) <= config.rtol * bnorm:
            return x
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise NotPositiveDefinite("conjugate gradients diverged or stalled")


def smallest_generalized_eigenpair(
    A: SparseSym,
    M: SparseSym,
    shift: float,
    config: EigenConfig = EigenConfig(),
    x0=None,
) -> EigenPair:
    """Lowest eigenpair of ``A x = lam M x`` by shift-invert inverse iteration.

    ``shift`` must lie strictly below the spectrum; this is checked through the
    inertia of ``A - shift M``.  The returned vector has unit ``M``-norm and its
    largest-magnitude entry is positive.
    """
    if A.n != M.n:
        raise DimensionMismatch(f"pencil dimensions differ: {A.n} vs {M.n}")
    n = A.n
    Mm = M.csr
    Am = A.csr
    fac = LDLFactor(Am - shift * Mm)
    if not fac.positive_definite:
        raise ShiftNotBelowSpectrum(
            f"A - {shift:g} M is indefinite (min pivot {fac.min_pivot:.3e})"
        )
    if n == 1:
        val = float(Am[0, 0] / Mm[0, 0])
        return EigenPair(val, np.array([1.0 / np.sqrt(Mm[0, 0])]), 0.0, 0)

    normA = float(abs(Am).sum(axis=1).max())
    normM = float(abs(Mm).sum(axis=1).max())
    rng = np.random.default_rng(config.seed)
    x = rng.standard_normal(n) + 1.0 if x0 is None else np.asarray(x0, float).copy()
    x /= np.sqrt(x @ (Mm @ x))
    prev = None
    stagnant = 0
    restarts = 0
    for it in range(1, config.max_iter + 1):
        y = fac.solve(Mm @ x)
        My = Mm @ y
        nrm = np.sqrt(y @ My)
        y /= nrm
        My /= nrm
        Ay = Am @ y
        lam = float(y @ Ay)
        r = Ay - lam * My
        # normwise backward error, invariant under scaling of the pencil
        res = np.max(np.abs(r)) / ((normA + abs(lam) * normM) * np.max(np.abs(y)))
        if prev is not None and prev @ (Mm @ y) < 0.0:
            y = -y
        change = np.linalg.norm(y - x) / max(np.linalg.norm(y), 1e-300)
        x = y
        if res <= config.tol:
            return _finish(lam, x, res, it)
        if change < config.stagnation_rel:
            stagnant += 1
            if stagnant >= config.stagnation_count:
                if restarts >= config.max_restarts:
                    break
                restarts += 1
                stagnant = 0
                z = rng.standard_normal(n)
                z -= (z @ (Mm @ x)) * x
                x = x + z / np.sqrt(z @ (Mm @ z))
                x /= np.sqrt(x @ (Mm @ x))
        else:
            stagnant = 0
        prev = x
    raise ConvergenceFailure(
        f"inverse iteration did not reach tol={config.tol:g} (last residual {res:.3e})"
    )


def _finish(lam, x, res, it):
    if x[np.argmax(np.abs(x))] < 0:
        x = -x
    x.setflags(write=False)
    return EigenPair(float(lam), x, float(res), it)
