"""Randomized trial generators shared by the command line and the test suites.

Every trial draws from its own generator, spawned from one seed, so results do
not depend on the order or the thread in which trials run.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .ball_radial import _threads
from .disk_poisson import DiskGrid, lambda_disk_general, talenti_verify
from .symmetrization import (
    CircleField,
    cap_symmetrize_circle,
    cap_symmetrize_disk,
    rearrangement_checks,
)

__all__ = [
    "trial_rngs",
    "random_disk_source",
    "random_circle_source",
    "talenti_suite",
    "fk_suite",
    "symmetrization_suite",
]


def trial_rngs(seed: int, trials: int):
    """One independent generator per trial, split from a single 64-bit seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]


def random_disk_source(grid: DiskGrid, rng, scale: float = 1.0) -> np.ndarray:
    """Nonnegative, generally nonsymmetric samples on the polar grid.

    Three families: iid noise, a few off-centre Gaussian bumps, and a random
    low-order Fourier profile clipped at zero.
    """
    x, y = grid.mesh()
    family = rng.integers(3)
    if family == 0:
        vals = rng.random((grid.n_r, grid.m)) ** rng.uniform(0.5, 3.0)
    elif family == 1:
        vals = np.zeros_like(x)
        for _ in range(rng.integers(1, 5)):
            rho, phi = np.sqrt(rng.random()), rng.uniform(0, 2 * np.pi)
            width = rng.uniform(0.1, 0.4)
            d2 = (x - rho * np.cos(phi)) ** 2 + (y - rho * np.sin(phi)) ** 2
            vals += rng.uniform(0.5, 2.0) * np.exp(-d2 / (2 * width**2))
    else:
        theta = grid.theta[None, :]
        r = grid.r[:, None]
        vals = np.ones_like(x)
        for k in range(1, 5):
            vals += rng.normal() * r**k * np.cos(k * theta + rng.uniform(0, 2 * np.pi))
        vals = np.maximum(vals, 0.0)
    return scale * vals


def random_circle_source(m: int, rng, scale: float = 1.0) -> np.ndarray:
    theta = 2 * np.pi * np.arange(m) / m
    if rng.random() < 0.5:
        vals = rng.random(m)
    else:
        vals = np.ones(m)
        for k in range(1, 4):
            vals += rng.normal() * np.cos(k * theta + rng.uniform(0, 2 * np.pi))
        vals = np.maximum(vals, 0.0)
    return scale * vals


def _talenti_trial(kind, grid, rng, robin_beta, tol):
    f = grid.field(random_disk_source(grid, rng))
    extra = {}
    if kind == "robin":
        w_zero = bool(rng.random() < 0.5)
        bnd = np.zeros(grid.m) if w_zero else random_circle_source(grid.m, rng)
        res = talenti_verify("robin", f, grid.circle(bnd), robin_beta, tol=tol)
        extra["w_zero"] = w_zero
    elif kind == "dirichlet":
        res = talenti_verify("dirichlet", f, grid.circle(random_circle_source(grid.m, rng)), tol=tol)
    else:
        g = grid.circle(random_circle_source(grid.m, rng))
        m1 = grid.field(rng.uniform(0.0, 0.6) * rng.random((grid.n_r, grid.m)))
        m2 = grid.circle(0.1 + rng.random(grid.m))
        res = talenti_verify("coupled", f, g, robin_beta, m1, m2, tol=tol)
        extra["lambda1"] = min(res.extras["lambda1"])
    row = {
        "holds": res.report.holds,
        "worst_deficit": res.report.worst_deficit,
        "worst_ring": res.report.worst_ring,
        "worst_cap": res.report.worst_cap,
        "asymmetry": res.asymmetry,
        "integral_u": res.integral_u,
        "integral_v": res.integral_v,
    }
    for rec in res.norms:
        row[f"norm_u_{rec['p']}"] = rec["norm_u"]
        row[f"norm_v_{rec['p']}"] = rec["norm_v"]
    row.update(extra)
    return row


def talenti_suite(kind: str = "robin", trials: int = 50, seed: int = 0, n_r: int = 96,
                  m: int = 128, robin_beta: float = 1.0, tol: float = 1e-8) -> list:
    """Rows of per-trial comparison results, in trial order."""
    grid = DiskGrid(n_r, m)
    rngs = trial_rngs(seed, trials)
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        rows = list(pool.map(lambda r: _talenti_trial(kind, grid, r, robin_beta, tol), rngs))
    return [{"trial": i, **row} for i, row in enumerate(rows)]


def fk_suite(trials: int = 20, seed: int = 0, n_r: int = 128, m: int = 128,
             f_max: float = 5.0, g_max: float = 5.0) -> list:
    """``Lambda(f, g)`` against ``Lambda(f#, g#)`` for random nonnegative potentials."""
    grid = DiskGrid(n_r, m)

    def one(rng):
        fv = random_disk_source(grid, rng)
        gv = random_circle_source(m, rng)
        f = grid.field(f_max * fv / max(fv.max(), 1e-300))
        g = grid.circle(g_max * gv / max(gv.max(), 1e-300))
        lam = lambda_disk_general(f, g)
        lam_s = lambda_disk_general(cap_symmetrize_disk(f), cap_symmetrize_circle(g))
        return {"lam": lam, "lam_sym": lam_s, "slack": lam - lam_s}

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        rows = list(pool.map(one, trial_rngs(seed, trials)))
    return [{"trial": i, **row} for i, row in enumerate(rows)]


def symmetrization_suite(trials: int = 200, seed: int = 0, m: int = 128) -> list:
    rows = []
    for i, rng in enumerate(trial_rngs(seed, trials)):
        f = CircleField(random_circle_source(m, rng))
        g = CircleField(random_circle_source(m, rng))
        fs = cap_symmetrize_circle(f)
        row = rearrangement_checks(f, g)
        row["equimeasurable"] = bool(np.array_equal(np.sort(fs.values), np.sort(f.values)))
        row["idempotent"] = bool(np.array_equal(cap_symmetrize_circle(fs).values, fs.values))
        rows.append({"trial": i, **row})
    return rows
