"""Polar-grid solvers on the unit disk.

The disk is split into ``n_r`` rings of cells centred at ``r_i = (i - 1/2)/n_r``
and ``m`` uniform angular sectors.  The discrete Laplacian is the conservative
five-point polar stencil

    -[rho_i (u_{i+1} - u_i) - rho_{i-1} (u_i - u_{i-1})] dth/dr
    - dr/(r_i dth) (u_{j+1} - 2 u_j + u_{j-1})  =  r_i dr dth f_ij,

with face radii ``rho_i = i/n_r`` and zero flux through ``rho_0 = 0``.  The
boundary value is eliminated through a half-cell ghost, which keeps every
operator symmetric with respect to the cell areas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded

from .errors import ConvergenceFailure, PotentialTooLarge, SingularMode, SurfaceOperatorSingular
from .linalg_core import EigenConfig, SparseSym, smallest_generalized_eigenpair, solve_spd
from .symmetrization import (
    CircleField,
    ComparisonReport,
    PolarField,
    cap_symmetrize_circle,
    cap_symmetrize_disk,
    compare_concentration,
    decreasing_cap_symmetrize_circle,
)

__all__ = [
    "DiskGrid",
    "CoupledSolveResult",
    "TalentiResult",
    "solve_robin_poisson",
    "solve_dirichlet_poisson",
    "solve_coupled_poisson",
    "robin_potential_eigenvalue",
    "talenti_verify",
    "lambda_disk_general",
    "polar_operator",
    "stencil_residual",
    "orbit_distance",
]

SMALL_POTENTIAL_TOL = 1e-8
SURFACE_MIN_M2 = 1e-8


@dataclass(frozen=True)
class DiskGrid:
    n_r: int
    m: int

    def __post_init__(self):
        if self.n_r < 32:
            raise ValueError("n_r must be >= 32")
        if self.m < 32 or self.m % 2:
            raise ValueError("m must be even and >= 32")

    @classmethod
    def of(cls, field: PolarField) -> "DiskGrid":
        grid = cls(field.n_rings, field.m)
        if not np.allclose(field.radii, grid.r, rtol=0, atol=1e-12):
            raise ValueError("field is not sampled on the cell-centred disk grid")
        return grid

    @property
    def dr(self) -> float:
        return 1.0 / self.n_r

    @property
    def dth(self) -> float:
        return 2.0 * math.pi / self.m

    @property
    def r(self) -> np.ndarray:
        return (np.arange(1, self.n_r + 1) - 0.5) / self.n_r

    @property
    def theta(self) -> np.ndarray:
        return self.dth * np.arange(self.m)

    @property
    def cell_area(self) -> np.ndarray:
        """Area of each cell of ring i (length n_r)."""
        return self.r * self.dr * self.dth

    def field(self, values) -> PolarField:
        values = np.broadcast_to(np.asarray(values, float), (self.n_r, self.m))
        return PolarField(self.r, values)

    def circle(self, values) -> CircleField:
        return CircleField(np.broadcast_to(np.asarray(values, float), (self.m,)), 1.0)

    def mesh(self):
        """Cartesian coordinates ``(x, y)`` of the cell centres."""
        R, T = np.meshgrid(self.r, self.theta, indexing="ij")
        return R * np.cos(T), R * np.sin(T)

    def lp_norm(self, values, p) -> float:
        w = self.cell_area[:, None]
        return float(np.sum(w * np.abs(values) ** p) ** (1.0 / p))

    def integral(self, values) -> float:
        return float(np.sum(self.cell_area[:, None] * values))


# boundary closures: (diagonal coefficient, datum coefficient) for the outer face
def _closure(grid: DiskGrid, kind: str, robin_beta: float = 0.0):
    a = 2.0 / grid.dr
    if kind == "robin":
        return a * robin_beta / (a + robin_beta), a / (a + robin_beta)
    if kind == "dirichlet":
        return a, a
    if kind == "neumann":
        return 0.0, 1.0
    raise ValueError(kind)


def _angular_symbol(grid: DiskGrid, modes):
    return (2.0 - 2.0 * np.cos(grid.dth * modes)) / grid.dth**2


def _modal_solve(grid: DiskGrid, rhs, kappa, m1_radial=None):
    """Solve the stencil with outer-face coefficient ``kappa``; rhs is area-weighted.

    A radial potential keeps the Fourier modes uncoupled and is allowed here.
    """
    n = grid.n_r
    dr, dth = grid.dr, grid.dth
    r = grid.r
    g = np.arange(1, n) * dth  # rho_i dth / dr with rho_i = i dr
    hat = np.fft.rfft(rhs, axis=1)
    sym = _angular_symbol(grid, np.arange(hat.shape[1]))
    base = np.zeros(n)
    base[:-1] += g
    base[1:] += g
    base[-1] += dth * kappa
    if m1_radial is not None:
        base -= grid.cell_area * np.asarray(m1_radial, float)
    if kappa == 0.0 and m1_radial is None:
        raise SingularMode("mode 0 is singular without a Robin or Dirichlet closure")
    ab = np.zeros((3, n))
    ab[0, 1:] = -g
    ab[2, :-1] = -g
    out = np.empty_like(hat)
    for q, s in enumerate(sym):
        ab[1] = base + dr * dth * s / r
        out[:, q] = solve_banded((1, 1), ab, hat[:, q])
    return np.fft.irfft(out, n=grid.m, axis=1)


def polar_operator(grid: DiskGrid, kappa: float, potential=None) -> sp.csr_matrix:
    """Monolithic sparse matrix of the stencil (area-weighted, symmetric).

    ``potential`` (shape ``(n_r, m)``) subtracts ``area * potential`` on the
    diagonal, i.e. discretizes ``-Laplacian - potential``.
    """
    n, m = grid.n_r, grid.m
    dr, dth = grid.dr, grid.dth
    r = grid.r
    idx = np.arange(n * m).reshape(n, m)
    rows, cols, vals = [], [], []

    def add(a, b, v):
        rows.append(a.ravel())
        cols.append(b.ravel())
        vals.append(np.broadcast_to(v, a.shape).ravel())

    # radial faces between ring i and i+1
    g = (np.arange(1, n) * dth)[:, None] * np.ones((1, m))
    a, b = idx[:-1], idx[1:]
    add(a, a, g)
    add(b, b, g)
    add(a, b, -g)
    add(b, a, -g)
    # angular faces between sector j and j+1
    ga = (dr / (r * dth))[:, None] * np.ones((1, m))
    a, b = idx, np.roll(idx, -1, axis=1)
    add(a, a, ga)
    add(b, b, ga)
    add(a, b, -ga)
    add(b, a, -ga)
    # outer face
    add(idx[-1], idx[-1], np.full(m, dth * kappa))
    if potential is not None:
        add(idx, idx, -grid.cell_area[:, None] * np.asarray(potential, float))
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n * m, n * m)
    )
    return mat.tocsr()


def _rhs(grid: DiskGrid, f, datum, kappa_w):
    rhs = grid.cell_area[:, None] * np.asarray(f, float)
    rhs = np.array(rhs)
    rhs[-1] += grid.dth * kappa_w * np.asarray(datum, float)
    return rhs


def stencil_residual(grid: DiskGrid, u, f, datum, kind="robin", robin_beta=0.0, potential=None):
    """Componentwise backward error of the stencil equations.

    ``max_i |A u - b|_i / (|A| |u| + |b|)_i``; scale-free, so the tiny inner
    cells do not amplify rounding.
    """
    kappa, kappa_w = _closure(grid, kind, robin_beta)
    A = polar_operator(grid, kappa, potential)
    b = _rhs(grid, f, datum, kappa_w).ravel()
    x = np.asarray(u, float).ravel()
    denom = abs(A) @ np.abs(x) + np.abs(b)
    res = np.abs(A @ x - b)
    return float(np.max(res / np.where(denom > 0, denom, 1.0)))


def _values(x):
    return x.values if hasattr(x, "values") else np.asarray(x, float)


def solve_robin_poisson(f: PolarField, w: CircleField, robin_beta: float) -> PolarField:
    """``-Lap u = f`` in the disk with ``du/dn + beta u = w``, by Fourier modes."""
    if robin_beta <= 0:
        raise SingularMode("robin_beta must be positive")
    grid = DiskGrid.of(f)
    kappa, kappa_w = _closure(grid, "robin", robin_beta)
    u = _modal_solve(grid, _rhs(grid, f.values, _values(w), kappa_w), kappa)
    return grid.field(u)


def solve_dirichlet_poisson(f: PolarField, w: CircleField) -> PolarField:
    grid = DiskGrid.of(f)
    kappa, kappa_w = _closure(grid, "dirichlet")
    u = _modal_solve(grid, _rhs(grid, f.values, _values(w), kappa_w), kappa)
    return grid.field(u)


def _circle_operator(m: int, m2) -> sp.csr_matrix:
    """Periodic three-point ``-d^2/dtheta^2 + m2`` on the unit circle."""
    dth = 2.0 * math.pi / m
    main = np.full(m, 2.0 / dth**2) + np.asarray(m2, float)
    off = np.full(m, -1.0 / dth**2)
    mat = sp.diags([main, off[:-1], off[:-1]], [0, 1, -1], shape=(m, m), format="lil")
    mat[0, m - 1] = -1.0 / dth**2
    mat[m - 1, 0] = -1.0 / dth**2
    return mat.tocsr()


def robin_potential_eigenvalue(grid: DiskGrid, m1, robin_beta: float) -> float:
    """Lowest eigenvalue of ``-Lap - m1`` with Robin closure on the grid."""
    kappa, _ = _closure(grid, "robin", robin_beta)
    A = SparseSym.from_scipy(polar_operator(grid, kappa, m1))
    M = SparseSym.diag(np.repeat(grid.cell_area, grid.m))
    shift = -float(np.max(m1)) - 1.0
    return smallest_generalized_eigenpair(A, M, shift).value


@dataclass(frozen=True, eq=False)
class CoupledSolveResult:
    u: PolarField
    boundary: CircleField
    residual: float
    lambda1: float = math.nan


def solve_coupled_poisson(
    f: PolarField,
    g: CircleField,
    m1: PolarField,
    m2: CircleField,
    robin_beta: float,
    tol: float = 1e-8,
) -> CoupledSolveResult:
    """Surface problem ``-w'' + m2 w = g`` then ``-Lap u - m1 u = f``, ``du/dn + beta u = w``."""
    grid = DiskGrid.of(f)
    m1v = np.asarray(m1.values, float)
    m2v = np.asarray(m2.values, float)
    if np.any(m1v < 0) or np.any(m2v < 0):
        raise ValueError("potentials must be nonnegative")
    if m2v.min() <= SURFACE_MIN_M2:
        raise SurfaceOperatorSingular(f"min(m2) = {m2v.min():.3e} is not above {SURFACE_MIN_M2:g}")
    wg = solve_spd(SparseSym.from_scipy(_circle_operator(grid.m, m2v)), g.values)
    kappa, kappa_w = _closure(grid, "robin", robin_beta)
    radial = np.allclose(m1v, m1v[:, :1])
    lam1 = robin_potential_eigenvalue(grid, m1v, robin_beta)
    if lam1 <= SMALL_POTENTIAL_TOL:
        raise PotentialTooLarge(f"lowest Robin eigenvalue with potential is {lam1:.3e}")
    rhs = _rhs(grid, f.values, wg, kappa_w)
    if radial:
        u = _modal_solve(grid, rhs, kappa, m1v[:, 0])
    else:
        A = SparseSym.from_scipy(polar_operator(grid, kappa, m1v))
        u = solve_spd(A, rhs.ravel()).reshape(grid.n_r, grid.m)
    res = stencil_residual(grid, u, f.values, wg, "robin", robin_beta, m1v)
    if res > tol:
        raise ConvergenceFailure(f"coupled solve residual {res:.3e} above {tol:g}")
    return CoupledSolveResult(grid.field(u), grid.circle(wg), res, lam1)


@dataclass(frozen=True, eq=False)
class TalentiResult:
    kind: str
    report: ComparisonReport
    norms: list
    u: PolarField
    v: PolarField
    integral_u: float
    integral_v: float
    asymmetry: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def integral_equal(self) -> bool:
        return abs(self.integral_u - self.integral_v) <= 1e-8 * max(1.0, abs(self.integral_u))


def talenti_verify(kind: str, f: PolarField, boundary: CircleField, robin_beta: float = 1.0,
                   m1: PolarField | None = None, m2: CircleField | None = None,
                   tol: float = 1e-8) -> TalentiResult:
    """Solve the original and the symmetrized problem and compare them.

    ``kind`` is ``"robin"`` (``boundary`` is the Robin datum w), ``"dirichlet"``
    (``boundary`` is the trace) or ``"coupled"`` (``boundary`` is the surface
    source g, potentials ``m1`` and ``m2`` required).
    """
    grid = DiskGrid.of(f)
    fs = cap_symmetrize_disk(f)
    bs = cap_symmetrize_circle(boundary)
    extras = {}
    if kind == "robin":
        u = solve_robin_poisson(f, boundary, robin_beta)
        v = solve_robin_poisson(fs, bs, robin_beta)
    elif kind == "dirichlet":
        u = solve_dirichlet_poisson(f, boundary)
        v = solve_dirichlet_poisson(fs, bs)
    elif kind == "coupled":
        if m1 is None or m2 is None:
            raise ValueError("coupled comparison needs m1 and m2")
        ru = solve_coupled_poisson(f, boundary, m1, m2, robin_beta)
        rv = solve_coupled_poisson(fs, bs, cap_symmetrize_disk(m1),
                                   decreasing_cap_symmetrize_circle(m2), robin_beta)
        u, v = ru.u, rv.u
        extras["lambda1"] = (ru.lambda1, rv.lambda1)
        extras["residual"] = max(ru.residual, rv.residual)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    # tiny negative round-off must not trip the nonnegativity guard
    uu = grid.field(np.maximum(u.values, 0.0))
    vv = grid.field(np.maximum(v.values, 0.0))
    report = compare_concentration(uu, vv, tol)
    norms = [
        {"p": p, "norm_u": grid.lp_norm(u.values, p), "norm_v": grid.lp_norm(v.values, p)}
        for p in (1, 2, 4)
    ]
    extras["asymmetry_fixed_pole"] = math.sqrt(grid.integral((f.values - fs.values) ** 2))
    asym = orbit_distance(grid, f.values, fs.values)
    return TalentiResult(kind, report, norms, u, v, grid.integral(u.values),
                         grid.integral(v.values), asym, extras)


def orbit_distance(grid: DiskGrid, a, b) -> float:
    """L2 distance from ``a`` to the nearest rotation or reflection of ``b``.

    Only the symmetries of the angular grid are considered; this is the
    distance that matters for rigidity, since a rotated copy of a symmetric
    datum yields a rotated copy of the symmetric solution.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    w = grid.cell_area[:, None]
    best = math.inf
    for cand in (b, b[:, ::-1]):
        # sum_ij w (a - roll(cand, s))^2 for every shift s at once
        cross = np.fft.irfft(np.conj(np.fft.rfft(cand, axis=1)) * np.fft.rfft(a, axis=1),
                             n=grid.m, axis=1)
        total = np.sum(w * a * a) + np.sum(w * cand * cand) - 2.0 * np.sum(w * cross, axis=0)
        best = min(best, float(total.min()))
    return math.sqrt(max(best, 0.0))


def _coupled_form(grid: DiskGrid, f, g):
    n, m = grid.n_r, grid.m
    nb = n * m
    dth = grid.dth
    # half cell to the boundary in series with the unit exchange conductance
    a = 2.0 / grid.dr
    kex = a / (a + 1.0)
    K = polar_operator(grid, 0.0, f).tocoo()
    C = _circle_operator(m, -np.asarray(g, float)).tocoo()
    rows = [K.row, nb + C.row]
    cols = [K.col, nb + C.col]
    vals = [K.data, C.data * dth]
    outer = np.arange((n - 1) * m, n * m)
    surf = nb + np.arange(m)
    w = np.full(m, dth * kex)
    rows += [outer, surf, outer, surf]
    cols += [outer, surf, surf, outer]
    vals += [w, w, -w, -w]
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nb + m, nb + m)).tocsr()
    M = np.concatenate([np.repeat(grid.cell_area, m), np.full(m, dth)])
    return A, M


def lambda_disk_general(f: PolarField, g: CircleField, config: EigenConfig = EigenConfig()) -> float:
    """Principal eigenvalue of the coupled quadratic form with potentials f and g.

    Bulk unknowns live on the polar cells, surface unknowns on the boundary
    circle; the exchange term couples the outer ring to the surface through a
    half-cell ghost eliminated in series with the unit exchange rate.
    """
    return lambda_disk_general_pair(f, g, config)[0]


def lambda_disk_general_pair(f: PolarField, g: CircleField, config: EigenConfig = EigenConfig()):
    grid = DiskGrid.of(f)
    fv = np.asarray(f.values, float)
    gv = np.asarray(g.values, float)
    A, M = _coupled_form(grid, fv, gv)
    shift = -max(float(fv.max()), float(gv.max()), 0.0) - 1.0
    ep = smallest_generalized_eigenpair(SparseSym.from_scipy(A), SparseSym.diag(M), shift, config)
    nb = grid.n_r * grid.m
    return ep.value, grid.field(ep.coords[:nb].reshape(grid.n_r, grid.m)), grid.circle(ep.coords[nb:])
