"""Compiled kernels for regular solutions of ``y'' + (c/r) y' + a y = 0``.

With ``c = d - 1`` this is the radial Laplace eigen-equation in dimension d;
with ``c = 2k + d - 1`` it is the equation satisfied by ``w = p / r^k`` when
``p`` solves the degree-k radial equation.
"""

import math

import numpy as np
from numba import njit

# RK4 is stable on the decaying mode r^(1-c) once h*c/r < 2.78
_STABLE_HC = 2.5


@njit(cache=True)
def series(a, c, r):
    """Regular solution with y(0) = 1 and its derivative, by power series."""
    term = 1.0
    y = 1.0
    dy = 0.0
    x = r * r
    for j in range(1, 400):
        term *= -a * x / ((2.0 * j) * (2.0 * j + c - 1.0))
        y += term
        dy += 2.0 * j * term / r
        if abs(term) < 1e-18 * abs(y) and j > 2:
            break
    return y, dy


@njit(cache=True)
def start_index(c, n):
    j0 = int(math.ceil(c / _STABLE_HC))
    if j0 < 1:
        j0 = 1
    return j0


@njit(cache=True)
def _rhs(r, y, dy, a, c):
    return dy, -c / r * dy - a * y


@njit(cache=True)
def shoot(a, c, R, n):
    """Return ``(y(R), y'(R))`` for the regular solution with y(0) = 1."""
    h = R / n
    j0 = start_index(c, n)
    if j0 >= n:
        return series(a, c, R)
    r = j0 * h
    y, dy = series(a, c, r)
    for _ in range(j0, n):
        k1y, k1d = _rhs(r, y, dy, a, c)
        k2y, k2d = _rhs(r + 0.5 * h, y + 0.5 * h * k1y, dy + 0.5 * h * k1d, a, c)
        k3y, k3d = _rhs(r + 0.5 * h, y + 0.5 * h * k2y, dy + 0.5 * h * k2d, a, c)
        k4y, k4d = _rhs(r + h, y + h * k3y, dy + h * k3d, a, c)
        y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        dy += h / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
        r += h
    return y, dy


@njit(cache=True)
def profile(a, c, R, n):
    """Samples of the regular solution and its derivative on ``r_j = j R / n``."""
    h = R / n
    ys = np.empty(n + 1)
    dys = np.empty(n + 1)
    ys[0] = 1.0
    dys[0] = 0.0
    j0 = start_index(c, n)
    if j0 > n:
        j0 = n
    for j in range(1, j0 + 1):
        ys[j], dys[j] = series(a, c, j * h)
    y = ys[j0]
    dy = dys[j0]
    r = j0 * h
    for j in range(j0, n):
        k1y, k1d = _rhs(r, y, dy, a, c)
        k2y, k2d = _rhs(r + 0.5 * h, y + 0.5 * h * k1y, dy + 0.5 * h * k1d, a, c)
        k3y, k3d = _rhs(r + 0.5 * h, y + 0.5 * h * k2y, dy + 0.5 * h * k2d, a, c)
        k4y, k4d = _rhs(r + h, y + h * k3y, dy + h * k3d, a, c)
        y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        dy += h / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
        r += h
        ys[j + 1] = y
        dys[j + 1] = dy
    return ys, dys
