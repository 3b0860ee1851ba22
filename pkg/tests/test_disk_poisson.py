import math

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from bulksurf.ball_radial import solve_principal_ball
from bulksurf.errors import PotentialTooLarge, SingularMode, SurfaceOperatorSingular
from bulksurf.disk_poisson import (
    DiskGrid,
    lambda_disk_general,
    lambda_disk_general_pair,
    orbit_distance,
    robin_potential_eigenvalue,
    solve_coupled_poisson,
    solve_dirichlet_poisson,
    solve_robin_poisson,
    stencil_residual,
    talenti_verify,
)
from bulksurf.suites import fk_suite, random_disk_source
from bulksurf.symmetrization import cap_symmetrize_circle, cap_symmetrize_disk


def oracle_solve(grid, f, w, beta=None, m1=None):
    """Loop-assembled polar stencil in divided form; beta=None means Dirichlet."""
    n, m = grid.n_r, grid.m
    dr, dth, r = grid.dr, grid.dth, grid.r
    A = sp.lil_matrix((n * m, n * m))
    b = np.zeros(n * m)
    for i in range(n):
        for j in range(m):
            k = i * m + j
            b[k] = f[i, j]
            if m1 is not None:
                A[k, k] -= m1[i, j]
            if i > 0:
                c = (i * dr) / (r[i] * dr**2)
                A[k, k] += c
                A[k, k - m] -= c
            if i < n - 1:
                c = ((i + 1) * dr) / (r[i] * dr**2)
                A[k, k] += c
                A[k, k + m] -= c
            else:
                # ghost value u_b from (u_b - u)/(dr/2) + beta u_b = w or u_b = w
                if beta is None:
                    ub_u, ub_w = 0.0, 1.0
                else:
                    ub_u, ub_w = (2 / dr) / (2 / dr + beta), 1.0 / (2 / dr + beta)
                c = 1.0 / (r[i] * dr) * (2 / dr)
                A[k, k] += c * (1 - ub_u)
                b[k] += c * ub_w * w[j]
            c = 1.0 / (r[i] ** 2 * dth**2)
            for jj in ((j + 1) % m, (j - 1) % m):
                A[k, k] += c
                A[k, i * m + jj] -= c
    return spla.spsolve(A.tocsc(), b).reshape(n, m)


def smooth_field(grid, rng):
    x, y = grid.mesh()
    a = rng.normal(size=4)
    return a[0] + a[1] * x + a[2] * np.sin(3 * y) + a[3] * np.exp(-((x - 0.3) ** 2 + y**2) * 5)


def test_grid_invariants():
    with pytest.raises(ValueError):
        DiskGrid(16, 64)
    with pytest.raises(ValueError):
        DiskGrid(32, 33)
    g = DiskGrid(32, 32)
    assert abs(g.cell_area.sum() * g.m - math.pi) < 1e-12


@pytest.mark.parametrize("kind", ["robin", "dirichlet"])
def test_closed_form_second_order(kind):
    errs = []
    for n in (32, 64, 128):
        g = DiskGrid(n, n)
        r = g.r[:, None]
        if kind == "robin":
            u = solve_robin_poisson(g.field(1.0), g.circle(0.0), 1.0).values
            exact = (1 - r**2) / 4 + 0.5
        else:
            u = solve_dirichlet_poisson(g.field(1.0), g.circle(0.0)).values
            exact = (1 - r**2) / 4
        errs.append(np.abs(u - exact).max())
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 1.8
    assert errs[-1] < 1e-5


def test_constant_data():
    g = DiskGrid(32, 32)
    u = solve_robin_poisson(g.field(0.0), g.circle(3.0), 2.0).values
    np.testing.assert_allclose(u, 1.5, rtol=1e-12)
    u = solve_dirichlet_poisson(g.field(0.0), g.circle(3.0)).values
    np.testing.assert_allclose(u, 3.0, rtol=1e-12)


def test_robin_requires_positive_beta():
    g = DiskGrid(32, 32)
    with pytest.raises(SingularMode):
        solve_robin_poisson(g.field(1.0), g.circle(0.0), 0.0)


@pytest.mark.parametrize("beta", [None, 0.7, 5.0])
def test_matches_loop_oracle(beta):
    rng = np.random.default_rng(4)
    g = DiskGrid(32, 32)
    f = smooth_field(g, rng)
    w = np.cos(2 * g.theta) + rng.random(g.m)
    if beta is None:
        u = solve_dirichlet_poisson(g.field(f), g.circle(w)).values
    else:
        u = solve_robin_poisson(g.field(f), g.circle(w), beta).values
    ref = oracle_solve(g, f, w, beta)
    assert np.abs(u - ref).max() <= 1e-7 * max(1.0, np.abs(ref).max())
    kind = "dirichlet" if beta is None else "robin"
    assert stencil_residual(g, u, f, w, kind, beta or 0.0) < 1e-12


def test_max_principle_and_linearity():
    rng = np.random.default_rng(5)
    g = DiskGrid(48, 64)
    for _ in range(10):
        f1, f2 = random_disk_source(g, rng), random_disk_source(g, rng)
        w1, w2 = rng.random(g.m), np.zeros(g.m)
        u1 = solve_robin_poisson(g.field(f1), g.circle(w1), 1.0).values
        u2 = solve_robin_poisson(g.field(f2), g.circle(w2), 1.0).values
        u12 = solve_robin_poisson(g.field(f1 + f2), g.circle(w1 + w2), 1.0).values
        assert u1.min() >= -1e-10 and u2.min() >= -1e-10
        assert np.abs(u12 - u1 - u2).max() <= 1e-12 * np.abs(u12).max()


def test_coupled_constants():
    g = DiskGrid(32, 32)
    res = solve_coupled_poisson(g.field(0.0), g.circle(1.0), g.field(0.0), g.circle(1.0), 1.0)
    np.testing.assert_allclose(res.boundary.values, 1.0, rtol=1e-12)
    np.testing.assert_allclose(res.u.values, 1.0, rtol=1e-10)
    assert res.residual <= 1e-8 and res.lambda1 > 0


@pytest.mark.parametrize("radial", [True, False])
def test_coupled_matches_oracle(radial):
    rng = np.random.default_rng(6)
    g = DiskGrid(32, 32)
    f = np.abs(smooth_field(g, rng))
    gg = 1 + np.cos(g.theta)
    m1 = 0.4 * (np.outer(g.r, np.ones(g.m)) if radial else rng.random((g.n_r, g.m)))
    m2 = 0.5 + rng.random(g.m)
    res = solve_coupled_poisson(g.field(f), g.circle(gg), g.field(m1), g.circle(m2), 1.0)
    # periodic surface problem, dense
    L = np.diag(np.full(g.m, 2.0)) - np.roll(np.eye(g.m), 1, 1) - np.roll(np.eye(g.m), -1, 1)
    wg = np.linalg.solve(L / g.dth**2 + np.diag(m2), gg)
    np.testing.assert_allclose(res.boundary.values, wg, atol=1e-10)
    ref = oracle_solve(g, f, wg, 1.0, m1)
    assert np.abs(res.u.values - ref).max() <= 1e-6 * np.abs(ref).max()


def test_coupled_guards():
    g = DiskGrid(32, 32)
    with pytest.raises(SurfaceOperatorSingular):
        solve_coupled_poisson(g.field(1.0), g.circle(1.0), g.field(0.0), g.circle(0.0), 1.0)
    # constant m1 above the Robin eigenvalue (about 1.58 for beta = 1)
    with pytest.raises(PotentialTooLarge):
        solve_coupled_poisson(g.field(1.0), g.circle(1.0), g.field(3.0), g.circle(1.0), 1.0)
    with pytest.raises(ValueError):
        solve_coupled_poisson(g.field(1.0), g.circle(1.0), g.field(-0.1), g.circle(1.0), 1.0)


def test_robin_potential_eigenvalue_shift():
    g = DiskGrid(32, 32)
    lam0 = robin_potential_eigenvalue(g, np.zeros((32, 32)), 1.0)
    lam1 = robin_potential_eigenvalue(g, np.full((32, 32), 0.5), 1.0)
    assert abs(lam0 - lam1 - 0.5) < 1e-9


def test_equality_case():
    rng = np.random.default_rng(7)
    g = DiskGrid(32, 64)
    fs = cap_symmetrize_disk(g.field(random_disk_source(g, rng)))
    ws = cap_symmetrize_circle(g.circle(rng.random(g.m)))
    res = talenti_verify("robin", fs, ws)
    np.testing.assert_array_equal(res.u.values, res.v.values)
    # the FFT distance is the square root of a cancelled sum, so ~sqrt(eps)
    assert res.report.holds and res.asymmetry < 1e-6
    assert res.extras["asymmetry_fixed_pole"] == 0.0


def test_robin_w0_integral_identity_and_strict_l2():
    rng = np.random.default_rng(8)
    g = DiskGrid(48, 64)
    x, y = g.mesh()
    f = g.field(np.exp(-((x - 0.4) ** 2 + (y + 0.2) ** 2) * 8) + 0.3 * rng.random(x.shape))
    res = talenti_verify("robin", f, g.circle(0.0))
    assert res.report.holds and res.integral_equal
    n2 = next(rec for rec in res.norms if rec["p"] == 2)
    assert n2["norm_u"] < n2["norm_v"]
    assert [rec["p"] for rec in res.norms] == [1, 2, 4]


def test_rigidity_margin_grows_with_asymmetry():
    rng = np.random.default_rng(9)
    g = DiskGrid(48, 64)
    base = cap_symmetrize_disk(g.field(random_disk_source(g, rng))).values
    noise = rng.random(base.shape)
    rows = []
    for eps in (0.1, 0.2, 0.4, 0.8):
        f = g.field((1 - eps) * base + eps * noise)
        res = talenti_verify("robin", f, g.circle(0.0))
        n2 = res.norms[1]
        rows.append((res.asymmetry, n2["norm_v"] - n2["norm_u"]))
    deltas, margins = zip(*rows)
    assert all(np.diff(deltas) > 0)
    assert all(np.diff(margins) > 0) and margins[0] > 0


def test_orbit_distance_invariance():
    rng = np.random.default_rng(10)
    g = DiskGrid(32, 32)
    b = rng.random((32, 32))
    assert orbit_distance(g, np.roll(b, 5, axis=1), b) < 1e-10
    assert orbit_distance(g, b[:, ::-1], b) < 1e-10
    direct = math.sqrt(g.integral(b**2))
    assert orbit_distance(g, np.zeros_like(b), b) == pytest.approx(direct)


def test_lambda_zero_potentials():
    g = DiskGrid(32, 32)
    lam, u, v = lambda_disk_general_pair(g.field(0.0), g.circle(0.0))
    assert abs(lam) < 1e-10
    vals = np.concatenate([u.values.ravel(), v.values])
    assert np.ptp(vals / vals[0]) < 1e-6


@pytest.mark.parametrize("c_i,c_b", [(1.0, 0.0), (-3.0, 0.5)])
def test_lambda_constants_match_radial(c_i, c_b):
    g = DiskGrid(128, 128)
    lam = lambda_disk_general(g.field(-c_i), g.circle(c_b))
    assert abs(lam - solve_principal_ball(2, 1.0, c_i, c_b).lam) < 1e-3


def test_lambda_shift_by_constant():
    rng = np.random.default_rng(11)
    g = DiskGrid(32, 32)
    f = rng.random((32, 32))
    gg = rng.random(32)
    a = lambda_disk_general(g.field(f), g.circle(gg))
    b = lambda_disk_general(g.field(f + 0.7), g.circle(gg + 0.7))
    assert abs(a - b - 0.7) < 1e-8


def test_fk_small_suite():
    rows = fk_suite(trials=3, seed=1, n_r=32, m=32)
    assert all(r["slack"] >= -1e-6 for r in rows)


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1))
def test_talenti_property(seed):
    rng = np.random.default_rng(seed)
    g = DiskGrid(32, 32)
    f = g.field(random_disk_source(g, rng))
    res = talenti_verify("robin", f, g.circle(rng.random(g.m)))
    assert res.report.holds
    res = talenti_verify("dirichlet", f, g.circle(rng.random(g.m)))
    assert res.report.holds
