"""Principal eigencouple of the bulk-surface system on a ball, by radial shooting.

On the ball of radius ``R`` the principal eigenfunction ``u`` is radial and the
surface density ``v`` is constant.  Writing ``lam_bar = lam - c_i`` and
``lam_tilde = lam + c_b - 1``, the system reduces to

    u'' + (d-1)/r u' + lam_bar u = 0,     u regular at 0,
    u'(R) + u(R) = v,    0 = lam_tilde v + u(R),

so the eigenvalue is a root of the shooting residual
``lam_tilde (u'(R) + u(R)) + u(R)``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from . import _radial_kernels as rk
from .errors import (
    AssertionBreach,
    BracketFailure,
    NoRootInBracket,
    PositivityViolated,
)

log = logging.getLogger(__name__)

__all__ = [
    "BallEigen",
    "sphere_area",
    "ball_volume",
    "solve_principal_ball",
    "robin_eigenvalue",
    "limit_gap_scan",
    "rayleigh_quotient_radial",
]

RESIDUAL_TOL = 1e-12


def sphere_area(d: int, R: float = 1.0) -> float:
    """Surface measure of the sphere of radius R in R^d."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2) * R ** (d - 1)


def ball_volume(d: int, R: float = 1.0) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * R**d


@dataclass(frozen=True, eq=False)
class BallEigen:
    """Normalized principal eigencouple on the ball of radius ``R``.

    ``r``, ``u`` and ``du`` sample the radial profile on ``r_j = j R / n``;
    ``v`` is the constant surface value.
    """

    d: int
    R: float
    c_i: float
    c_b: float
    lam: float
    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    v: float
    residual: float = 0.0

    @property
    def lambda_bar(self) -> float:
        return self.lam - self.c_i

    @property
    def lambda_tilde(self) -> float:
        return self.lam + self.c_b - 1.0

    @property
    def u_at_R(self) -> float:
        return float(self.u[-1])

    @property
    def du_at_R(self) -> float:
        return float(self.du[-1])

    @property
    def d2u_at_R(self) -> float:
        return -(self.d - 1) / self.R * self.du_at_R - self.lambda_bar * self.u_at_R

    @property
    def H(self) -> float:
        return (self.d - 1) / self.R

    @property
    def grid_n(self) -> int:
        return self.r.size - 1

    def bulk_mass(self) -> float:
        return sphere_area(self.d) * simpson(self.u**2 * self.r ** (self.d - 1), x=self.r)

    def surface_mass(self) -> float:
        return sphere_area(self.d, self.R) * self.v**2


def _residual(lam, d, R, c_i, c_b, n):
    """Shooting residual normalized by the boundary amplitude."""
    lam_bar = lam - c_i
    lam_tilde = lam + c_b - 1.0
    y, dy = rk.shoot(lam_bar, d - 1.0, R, n)
    return (lam_tilde * (dy + y) + y) / (abs(y) + abs(dy))


def _scan_points(lo, hi, c_i, R):
    """Increasing sample points in (lo, hi) dense enough to separate roots.

    Roots of the residual are spaced by about pi/R in sqrt(lam_bar) where
    lam_bar > 0, so the oscillatory part is sampled uniformly in that variable.
    """
    pts = list(np.linspace(lo, hi, 65)[1:-1])
    top = hi - c_i
    if top > 0.0:
        s_lo = math.sqrt(max(lo - c_i, 0.0))
        s_hi = math.sqrt(top)
        m = max(int(math.ceil((s_hi - s_lo) * R / 0.05)), 8)
        s = np.linspace(s_lo, s_hi, m + 1)[1:-1]
        pts.extend(c_i + s * s)
    pts = np.unique(np.asarray(pts))
    return pts[(pts > lo) & (pts < hi)]


def _bisect_secant(f, a, fa, b, fb, xtol=1e-15, polish=3):
    """Bisection on a sign bracket followed by a few guarded secant steps."""
    for _ in range(200):
        if abs(b - a) <= xtol * max(1.0, abs(a), abs(b)):
            break
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0:
            return m, 0.0
        if (fm < 0) == (fa < 0):
            a, fa = m, fm
        else:
            b, fb = m, fm
    x, fx = (a, fa) if abs(fa) < abs(fb) else (b, fb)
    x0, f0 = (b, fb) if x == a else (a, fa)
    lo, hi = min(a, b), max(a, b)
    for _ in range(polish):
        if fx == f0:
            break
        x1 = x - fx * (x - x0) / (fx - f0)
        if not lo - 1e-12 <= x1 <= hi + 1e-12:
            break
        f1 = f(x1)
        if abs(f1) > abs(fx):
            break
        x0, f0, x, fx = x, fx, x1, f1
    return x, fx


def solve_principal_ball(
    d: int,
    R: float = 1.0,
    c_i: float = 0.0,
    c_b: float = 0.0,
    grid_n: int = 4096,
) -> BallEigen:
    """Principal eigencouple of the coupled system on the ball of radius R.

    The eigenvalue is searched in the open interval
    ``(min(c_i, -c_b), min(max(c_i, -c_b), 1 - c_b))``; the first sign change of
    the shooting residual whose eigenfunction stays positive is refined by
    bisection plus secant polish.

    Raises
    ------
    NoRootInBracket
        No admissible sign change exists in the interval.
    AssertionBreach
        The normalized couple fails ``lam_tilde < 0`` or ``v > 0``.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    if R <= 0:
        raise ValueError("R must be positive")
    if grid_n < 64:
        raise ValueError("grid_n must be >= 64")
    d = int(d)
    c_i = float(c_i)
    c_b = float(c_b)

    if c_i == -c_b:
        # constants: lam = c_i, u = v on the boundary
        return _normalize(d, R, c_i, c_b, c_i, grid_n, residual=0.0)

    lo = min(c_i, -c_b)
    hi = min(max(c_i, -c_b), 1.0 - c_b)

    def f(lam):
        return _residual(lam, d, R, c_i, c_b, grid_n)

    f_lo = f(lo)
    f_hi = f(hi)
    prev_x, prev_f = lo, f_lo
    rejected = 0
    for x in list(_scan_points(lo, hi, c_i, R)) + [hi]:
        fx = f_hi if x == hi else f(x)
        if prev_f == 0.0 or (fx < 0) != (prev_f < 0):
            if prev_f == 0.0:
                lam = prev_x
            else:
                lam, _ = _bisect_secant(f, prev_x, prev_f, x, fx)
            try:
                eig = _normalize(d, R, c_i, c_b, lam, grid_n)
            except PositivityViolated:
                rejected += 1
                log.debug("root %.15g rejected: eigenfunction changes sign", lam)
                prev_x, prev_f = x, fx
                continue
            if eig.residual > RESIDUAL_TOL:
                log.warning("shooting residual %.3e above %.0e", eig.residual, RESIDUAL_TOL)
            return eig
        prev_x, prev_f = x, fx
    raise NoRootInBracket(
        f"no admissible root in ({lo:g}, {hi:g}) for d={d}, c_i={c_i:g}, c_b={c_b:g}"
        f" ({rejected} sign-changing roots rejected)",
        endpoints=((lo, f_lo), (hi, f_hi)),
    )


def _normalize(d, R, c_i, c_b, lam, n, residual=None):
    lam_bar = lam - c_i
    lam_tilde = lam + c_b - 1.0
    ys, dys = rk.profile(lam_bar, d - 1.0, R, n)
    r = np.linspace(0.0, R, n + 1)
    if np.any(ys <= 0.0):
        raise PositivityViolated(f"u changes sign for lam={lam:.15g}")
    if lam_tilde >= 0.0:
        raise AssertionBreach(f"lam_tilde = {lam_tilde:.3e} is not negative")
    v = -ys[-1] / lam_tilde
    mass = sphere_area(d) * simpson(ys**2 * r ** (d - 1), x=r) + sphere_area(d, R) * v**2
    scale = 1.0 / math.sqrt(mass)
    u = ys * scale
    du = dys * scale
    v *= scale
    if residual is None:
        residual = abs(lam_tilde * (du[-1] + u[-1]) + u[-1])
    for arr in (r, u, du):
        arr.setflags(write=False)
    return BallEigen(d, float(R), c_i, c_b, float(lam), r, u, du, float(v), float(residual))


def rayleigh_quotient_radial(eig: BallEigen) -> float:
    """Coupled Rayleigh quotient of ``(u, v)`` evaluated by radial quadrature.

    Tangential gradients vanish since u is radial and v is constant.
    """
    d, r = eig.d, eig.r
    w = r ** (d - 1)
    grad = sphere_area(d) * simpson(eig.du**2 * w, x=r)
    bulk = sphere_area(d) * simpson(eig.u**2 * w, x=r)
    surf = sphere_area(d, eig.R)
    num = (
        grad
        + eig.c_i * bulk
        + surf * (eig.u_at_R - eig.v) ** 2
        - eig.c_b * surf * eig.v**2
    )
    return num / (bulk + surf * eig.v**2)


def robin_eigenvalue(d: int, robin_beta: float, grid_n: int = 4096) -> float:
    """Lowest eigenvalue of -Laplacian on the unit ball with u' + beta u = 0."""
    if robin_beta < 0:
        raise ValueError("robin_beta must be >= 0")
    if robin_beta == 0:
        return 0.0

    def f(lam):
        y, dy = rk.shoot(lam, d - 1.0, 1.0, grid_n)
        return (dy + robin_beta * y) / (abs(y) + abs(dy))

    lo, f_lo = 0.0, float(robin_beta)
    upper = 1.0
    for _ in range(60):
        s = np.arange(math.sqrt(lo) + 0.05, math.sqrt(upper), 0.05)
        for x in list(s * s) + [upper]:
            fx = f(x)
            if (fx < 0) != (f_lo < 0):
                lam, _ = _bisect_secant(f, lo, f_lo, x, fx)
                return float(lam)
            lo, f_lo = x, fx
        upper *= 2.0
    raise BracketFailure(f"no sign change of the Robin residual below {upper:g}")


def _threads() -> int:
    import os

    n = int(os.environ.get("BULKSURF_THREADS", "0") or 0)
    return n if n > 0 else (os.cpu_count() or 1)


def limit_gap_scan(d: int, c_i_list, grid_n: int = 4096):
    """``(c_i, lam_{c_i,0} - c_i)`` for each ``c_i`` of a strictly decreasing list <= -1.

    As c_i decreases, the gap increases towards the Robin eigenvalue with
    coefficient 1.  Output order follows input order.
    """
    c_i_list = [float(c) for c in c_i_list]
    if any(c > -1.0 for c in c_i_list):
        raise ValueError("all c_i must be <= -1")
    if any(b >= a for a, b in zip(c_i_list, c_i_list[1:])):
        raise ValueError("c_i_list must be strictly decreasing")

    def one(c):
        eig = solve_principal_ball(d, 1.0, c, 0.0, grid_n)
        return c, eig.lam - c

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        return list(pool.map(one, c_i_list))
