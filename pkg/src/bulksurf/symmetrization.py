"""Cap symmetrization on circles and on the polar-sampled disk.

Discrete layout: for ``m`` uniform samples on a circle, the values sorted in
decreasing order are written to angle indices ``0, +1, -1, +2, -2, ...`` with
the ``+`` side filled first, so the result is non-increasing in ``|theta|``.
This is one deterministic choice among the null-set-equivalent rearrangements.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GridMismatch, NegativeInput

__all__ = [
    "CircleField",
    "PolarField",
    "ComparisonReport",
    "cap_order",
    "cap_arrange",
    "cap_symmetrize_circle",
    "decreasing_cap_symmetrize_circle",
    "cap_symmetrize_disk",
    "decreasing_cap_symmetrize_disk",
    "compare_concentration",
    "rearrangement_checks",
    "circle_dirichlet_energy",
    "circle_difference_energy",
    "write_polar_csv",
    "read_polar_csv",
]


@dataclass(frozen=True, eq=False)
class CircleField:
    values: np.ndarray
    radius: float = 1.0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError("CircleField values must be one-dimensional")
        if vals.size < 8 or vals.size % 2:
            raise ValueError(f"m must be even and >= 8, got {vals.size}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("CircleField values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def m(self) -> int:
        return self.values.size

    @property
    def theta(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.m) / self.m

    def with_values(self, values) -> "CircleField":
        return CircleField(values, self.radius)


@dataclass(frozen=True, eq=False)
class PolarField:
    """Samples ``values[i, j]`` at radius ``radii[i]`` and angle ``2 pi j / m``."""

    radii: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        radii = np.array(self.radii, dtype=float)
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] != radii.size:
            raise ValueError("values must have shape (len(radii), m)")
        if np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
            raise ValueError("radii must be positive and strictly increasing")
        m = vals.shape[1]
        if m < 8 or m % 2:
            raise ValueError(f"m must be even and >= 8, got {m}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("PolarField values must be finite")
        radii.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "values", vals)

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def n_rings(self) -> int:
        return self.radii.size

    def ring(self, i) -> CircleField:
        return CircleField(self.values[i], float(self.radii[i]))

    @property
    def rings(self):
        return [(float(r), self.ring(i)) for i, r in enumerate(self.radii)]

    def with_values(self, values) -> "PolarField":
        return PolarField(self.radii, values)


@dataclass(frozen=True)
class ComparisonReport:
    holds: bool
    worst_deficit: float
    worst_ring: int
    worst_cap: int
    tol: float = 1e-9


def cap_order(m: int) -> np.ndarray:
    """Angle indices ordered by distance to the pole, ``+`` side first."""
    order = [0]
    for j in range(1, m // 2):
        order += [j, m - j]
    order.append(m // 2)
    return np.asarray(order)


def _check_nonneg(vals):
    if np.any(vals < 0):
        raise NegativeInput("cap symmetrization is defined for nonnegative data")


def cap_arrange(vals, descending: bool = True) -> np.ndarray:
    """Cap layout of raw samples along the last axis (any even length)."""
    return _arrange(vals, descending)


def _arrange(vals, descending):
    vals = np.asarray(vals, float)
    if vals.shape[-1] % 2:
        raise ValueError("the number of angle samples must be even")
    m = vals.shape[-1]
    s = np.sort(vals, axis=-1)
    if descending:
        s = s[..., ::-1]
    out = np.empty_like(vals)
    out[..., cap_order(m)] = s
    return out


def cap_symmetrize_circle(f: CircleField) -> CircleField:
    _check_nonneg(f.values)
    return f.with_values(_arrange(f.values, True))


def decreasing_cap_symmetrize_circle(f: CircleField) -> CircleField:
    _check_nonneg(f.values)
    return f.with_values(_arrange(f.values, False))


def cap_symmetrize_disk(f: PolarField) -> PolarField:
    _check_nonneg(f.values)
    return f.with_values(_arrange(f.values, True))


def decreasing_cap_symmetrize_disk(f: PolarField) -> PolarField:
    _check_nonneg(f.values)
    return f.with_values(_arrange(f.values, False))


def compare_concentration(u1: PolarField, u2: PolarField, tol: float = 1e-9) -> ComparisonReport:
    """Check ``u1 <= u2`` in the sense of top-sample sums on every ring.

    For each ring and each ``m0`` in ``1..m`` the sum of the ``m0`` largest
    samples of ``u1`` must not exceed that of ``u2`` by more than ``tol``.
    The reported cap index is ``m0``.
    """
    if u1.values.shape != u2.values.shape or not np.array_equal(u1.radii, u2.radii):
        raise GridMismatch("fields live on different grids")
    _check_nonneg(u1.values)
    _check_nonneg(u2.values)
    top1 = np.cumsum(np.sort(u1.values, axis=1)[:, ::-1], axis=1)
    top2 = np.cumsum(np.sort(u2.values, axis=1)[:, ::-1], axis=1)
    deficit = top2 - top1
    i, j = np.unravel_index(np.argmin(deficit), deficit.shape)
    worst = float(deficit[i, j])
    return ComparisonReport(worst >= -tol, worst, int(i), int(j) + 1, tol)


def circle_dirichlet_energy(f: CircleField) -> float:
    """``int |f'|^2 dtheta`` of the trigonometric interpolant of the samples."""
    m = f.m
    c = np.fft.rfft(f.values) / m
    k = np.arange(c.size, dtype=float)
    w = np.full(c.size, 2.0)
    w[0] = 0.0
    # the Nyquist mode interpolates as cos(m theta / 2): counted once
    w[-1] = 1.0
    return float(2.0 * np.pi * np.sum(w * k**2 * np.abs(c) ** 2)) / f.radius


def circle_difference_energy(f: CircleField) -> float:
    """``sum (f_{j+1} - f_j)^2 / dtheta`` over the periodic sample cycle."""
    dth = 2.0 * np.pi / f.m
    return float(np.sum((np.roll(f.values, -1) - f.values) ** 2) / (dth * f.radius))


def rearrangement_checks(f: CircleField, g: CircleField) -> dict:
    """Slacks of the classical rearrangement inequalities on one circle.

    Every ``*_slack`` entry is ``rhs - lhs`` of an inequality (or the absolute
    defect of an identity for the ``lp_*`` entries) and should be nonnegative
    up to rounding.  ``polya_szego_slack`` uses the trigonometric interpolant;
    ``polya_szego_fd_slack`` uses the difference energy of the sample cycle,
    for which the inequality is exact on every grid.  The interpolant version
    can fail on very coarse circles (m <= 16) and is not part of ``holds``
    there.
    """
    if f.m != g.m:
        raise GridMismatch("fields have different sample counts")
    fs = cap_symmetrize_circle(f).values
    gs = cap_symmetrize_circle(g).values
    fv, gv = f.values, g.values
    out = {}
    for p in (1, 2, 3):
        a = np.sum(np.abs(fv) ** p)
        b = np.sum(np.abs(fs) ** p)
        out[f"lp_{p}_defect"] = float(abs(a - b) / max(a, 1e-300))
    out["hardy_littlewood_slack"] = float(np.sum(fs * gs) - np.sum(fv * gv))
    out["contraction_slack"] = float(np.sum((fv - gv) ** 2) - np.sum((fs - gs) ** 2))
    out["polya_szego_slack"] = circle_dirichlet_energy(f) - circle_dirichlet_energy(f.with_values(fs))
    out["polya_szego_fd_slack"] = circle_difference_energy(f) - circle_difference_energy(
        f.with_values(fs)
    )
    out["holds"] = bool(
        all(out[f"lp_{p}_defect"] <= 1e-12 for p in (1, 2, 3))
        and out["hardy_littlewood_slack"] >= -1e-9
        and out["contraction_slack"] >= -1e-9
        and out["polya_szego_fd_slack"] >= -1e-9
        and (f.m <= 16 or out["polya_szego_slack"] >= -1e-9)
    )
    return out


def write_polar_csv(path, field: PolarField):
    """CSV with header ``ring_index,r,theta_index,value``; floats in repr form."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ring_index", "r", "theta_index", "value"])
        for i, r in enumerate(field.radii):
            for j, val in enumerate(field.values[i]):
                w.writerow([i, repr(float(r)), j, repr(float(val))])


def read_polar_csv(path) -> PolarField:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} holds no samples")
    n = 1 + max(int(r["ring_index"]) for r in rows)
    m = 1 + max(int(r["theta_index"]) for r in rows)
    radii = np.full(n, math.nan)
    vals = np.full((n, m), math.nan)
    for r in rows:
        i, j = int(r["ring_index"]), int(r["theta_index"])
        radii[i] = float(r["r"])
        vals[i, j] = float(r["value"])
    if np.isnan(vals).any():
        raise ValueError(f"{path} does not cover a full polar grid")
    return PolarField(radii, vals)
