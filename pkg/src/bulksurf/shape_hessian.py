"""Second-order shape analysis of the principal eigenvalue at the unit ball.

The Hessian of the volume-constrained Lagrangian ``lam - mu Vol`` at the ball
is diagonal in spherical harmonics.  The coefficient of degree k is

    a_k = beta (sigma_k - H) + (gamma / (sigma_k - lam_tilde) + delta) (p_k(1) + du)

where ``sigma_k = k (k + d - 2)``, ``du`` is the normal derivative of ``u`` on
the sphere and ``p_k`` solves a degree-k radial boundary-value problem.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _radial_kernels as rk
from .ball_radial import BallEigen, ball_volume, solve_principal_ball, _threads
from .errors import ResonantBoundary

__all__ = [
    "BallCoefficients",
    "HessianRow",
    "PkSolution",
    "RegimeScan",
    "sigma",
    "ball_coefficients",
    "solve_pk",
    "hessian_row",
    "regime_scan",
    "mu_dilation_fd",
]

NEGATIVE = "negative_direction_found"
COERCIVE = "coercive_up_to_kmax"


def sigma(k: int, d: int) -> int:
    """Laplace-Beltrami eigenvalue of degree-k spherical harmonics on S^{d-1}."""
    return k * (k + d - 2)


@dataclass(frozen=True)
class BallCoefficients:
    coeff_alpha: float
    coeff_beta: float
    coeff_gamma: float
    coeff_delta: float
    mu: float


@dataclass(frozen=True)
class HessianRow:
    k: int
    sigma_k: float
    d_k: float
    p_k1: float
    q_k: float
    a_k: float


class PkSolution(NamedTuple):
    p_k1: float
    q_k: float
    r: np.ndarray | None = None
    p: np.ndarray | None = None


def _require_unit(eig: BallEigen):
    if eig.R != 1.0:
        raise ValueError("second-order data are defined at the unit ball (R = 1)")


def ball_coefficients(eig: BallEigen) -> BallCoefficients:
    """Coefficients of the second shape derivative and the Lagrange multiplier."""
    _require_unit(eig)
    u1 = eig.u_at_R
    du = eig.du_at_R
    v = eig.v
    H = eig.H
    lb = eig.lambda_bar
    lt = eig.lambda_tilde
    alpha = du * (-2.0 * (H - 1.0) * du + u1 * (H - 2.0 * lb))
    beta = -u1 * du
    gamma = -2.0 * du
    delta = -2.0 * ((H - 1.0) * du + lb * u1)
    mu = -du * du - lb * u1 * u1 + H * (u1 * u1 - 2.0 * u1 * v - lt * v * v)
    return BallCoefficients(alpha, beta, gamma, delta, mu)


def solve_pk(k: int, eig: BallEigen, grid_n: int | None = None, profile: bool = False) -> PkSolution:
    """Boundary value ``p_k(1)`` of the degree-k radial problem, and ``q_k``.

    The regular solution behaves like ``r^k`` at the origin; it is shot in the
    variable ``w = p / r^k``, which solves the radial equation with effective
    damping ``2k + d - 1`` and is therefore free of the ``r^k`` dynamic range.
    The shot is then scaled to satisfy ``p'(1) + d_k p(1) = -d_k du - d2u``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    _require_unit(eig)
    n = eig.grid_n if grid_n is None else int(grid_n)
    d = eig.d
    sk = sigma(k, d)
    gap = sk - eig.lambda_tilde
    if abs(gap) < 1e-10:
        raise ResonantBoundary(f"sigma_k - lam_tilde = {gap:.3e} for k={k}")
    d_k = 1.0 - 1.0 / gap
    c = 2.0 * k + d - 1.0
    if profile:
        ws, dws = rk.profile(eig.lambda_bar, c, 1.0, n)
        w1, dw1 = ws[-1], dws[-1]
    else:
        w1, dw1 = rk.shoot(eig.lambda_bar, c, 1.0, n)
    phi1 = w1
    dphi1 = k * w1 + dw1
    denom = dphi1 + d_k * phi1
    # w is positive and increasing-free near 0; max |phi| on [0,1] is attained near r=1
    phi_norm = max(abs(phi1), 1.0 if profile is False else float(np.max(np.abs(ws))))
    if abs(denom) < 1e-12 * phi_norm:
        raise ResonantBoundary(f"degree-{k} boundary problem is numerically singular")
    target = -d_k * eig.du_at_R - eig.d2u_at_R
    scale = target / denom
    p_k1 = scale * phi1
    q_k = (p_k1 + eig.du_at_R) / gap
    if not profile:
        return PkSolution(float(p_k1), float(q_k))
    r = np.linspace(0.0, 1.0, n + 1)
    p = scale * r**k * ws
    return PkSolution(float(p_k1), float(q_k), r, p)


def hessian_row(k: int, eig: BallEigen, coeffs: BallCoefficients | None = None,
                grid_n: int | None = None) -> HessianRow:
    coeffs = ball_coefficients(eig) if coeffs is None else coeffs
    sol = solve_pk(k, eig, grid_n)
    sk = sigma(k, eig.d)
    gap = sk - eig.lambda_tilde
    a_k = coeffs.coeff_beta * (sk - eig.H) + (coeffs.coeff_gamma / gap + coeffs.coeff_delta) * (
        sol.p_k1 + eig.du_at_R
    )
    return HessianRow(k, float(sk), 1.0 - 1.0 / gap, sol.p_k1, sol.q_k, float(a_k))


@dataclass(frozen=True)
class RegimeScan:
    d: int
    c_i: float
    c_b: float
    k_max: int
    min_ratio: float
    argmin_k: int
    verdict: str
    tail: str
    proven_regime: bool
    coefficients: BallCoefficients
    rows: tuple = field(repr=False, default=())

    @property
    def note(self) -> str:
        return "" if self.proven_regime else "outside proven regime"


def regime_scan(d: int, c_i: float, c_b: float, k_max: int, grid_n: int = 4096,
                eig: BallEigen | None = None) -> RegimeScan:
    """Classify the sign pattern of ``a_k / (1 + sigma_k)`` for ``2 <= k <= k_max``.

    ``1 + sigma_k`` is the squared W^{1,2} norm of a unit spherical harmonic of
    degree k, so the minimum ratio is the diagonal coercivity constant.
    """
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    if eig is None:
        eig = solve_principal_ball(d, 1.0, c_i, c_b, grid_n)
    coeffs = ball_coefficients(eig)

    def one(k):
        return hessian_row(k, eig, coeffs)

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        rows = tuple(pool.map(one, range(1, k_max + 1)))
    ratios = np.array([row.a_k / (1.0 + row.sigma_k) for row in rows[1:]])
    i = int(np.argmin(ratios))
    min_ratio = float(ratios[i])
    verdict = NEGATIVE if min_ratio < 0.0 else COERCIVE

    last = rows[-1]
    if coeffs.coeff_beta > 0.0 and abs(last.a_k / (coeffs.coeff_beta * last.sigma_k) - 1.0) < 0.05:
        tail = "asymptotic"
    else:
        tail = "unchecked"
    if verdict == NEGATIVE:
        proven = c_i > -c_b
    else:
        proven = 2 <= d <= 5 and c_i + c_b < 0
    return RegimeScan(d, float(c_i), float(c_b), int(k_max), min_ratio, i + 2, verdict, tail,
                      bool(proven), coeffs, rows)


def mu_dilation_fd(d: int, c_i: float, c_b: float, dr: float = 1e-3, grid_n: int = 4096) -> float:
    """Lagrange multiplier estimated by dilating the ball: d lam / d Vol."""
    lp = solve_principal_ball(d, 1.0 + dr, c_i, c_b, grid_n).lam
    lm = solve_principal_ball(d, 1.0 - dr, c_i, c_b, grid_n).lam
    return (lp - lm) / (ball_volume(d, 1.0 + dr) - ball_volume(d, 1.0 - dr))
