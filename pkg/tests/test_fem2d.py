import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bulksurf.ball_radial import solve_principal_ball
from bulksurf.errors import MeshFormatError, MeshQualityFailure
from bulksurf.fem2d import (
    Mesh,
    assemble,
    cutoff,
    hessian_fd,
    lambda_fem,
    make_disk_mesh,
    make_perturbed_disk_mesh,
    make_rectangle_mesh,
    nonexistence_scan,
    read_mesh,
    write_mesh,
)
from bulksurf.shape_hessian import ball_coefficients, hessian_row


def form_oracle(mesh, c_i, c_b, u, v):
    """Element-by-element integration of the coupled quadratic form."""
    total = 0.0
    for tri in mesh.triangles:
        P = mesh.vertices[tri]
        J = np.array([P[1] - P[0], P[2] - P[0]]).T
        area = abs(np.linalg.det(J)) / 2
        grad = np.linalg.solve(J.T, [u[tri[1]] - u[tri[0]], u[tri[2]] - u[tri[0]]])
        # edge-midpoint rule is exact for quadratics
        mids = [(u[tri[a]] + u[tri[b]]) / 2 for a, b in ((0, 1), (1, 2), (2, 0))]
        total += area * grad @ grad + c_i * area * np.mean(np.square(mids))
    loop = mesh.boundary_loop
    nb = len(loop)
    for q in range(nb):
        a, b = q, (q + 1) % nb
        ell = np.linalg.norm(mesh.vertices[loop[b]] - mesh.vertices[loop[a]])
        # Simpson is exact for quadratics on an edge
        def simpson(fa, fb):
            fm = (fa + fb) / 2
            return ell * (fa**2 + 4 * fm**2 + fb**2) / 6
        total += (v[b] - v[a]) ** 2 / ell - c_b * simpson(v[a], v[b])
        total += simpson(u[loop[a]] - v[a], u[loop[b]] - v[b])
    return total


def small_disk():
    return make_disk_mesh(0.25)


def test_rectangle_mesh_structure():
    m = make_rectangle_mesh(1.0, 1.0, 0.1)
    assert m.n_vertices == 121
    np.testing.assert_allclose(m.areas, 0.005, rtol=1e-12)
    assert abs(m.perimeter - 4.0) < 1e-12
    assert m.min_angle() == pytest.approx(45.0)


def test_disk_area_converges_second_order():
    errs = [math.pi - make_disk_mesh(h).area for h in (0.1, 0.05, 0.025)]
    assert all(e > 0 for e in errs)
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) > 1.9
    assert make_disk_mesh(0.02).min_angle() >= 29.9


def test_perturbed_area_is_even_in_t():
    ref = make_disk_mesh(0.05)
    base = ref.area
    plus = make_perturbed_disk_mesh(2, 0.01, 0.05, reference=ref).area
    minus = make_perturbed_disk_mesh(2, -0.01, 0.05, reference=ref).area
    # first-order term vanishes because Y_2 has zero mean
    assert abs(plus - minus) < 1e-10
    # continuous second-order term: t^2/2 * int Y_2^2 = t^2/2
    assert abs((plus - base) / 1e-4 - 0.5) < 0.01


def test_perturbed_mesh_resolution_guard():
    with pytest.raises(ValueError):
        make_perturbed_disk_mesh(20, 0.01, 0.5)


def test_cutoff_profiles():
    rho = np.linspace(0, 1, 401)
    for prof in ("quintic", "smooth"):
        c = cutoff(rho, prof)
        assert np.all(c[rho < 0.25] == 0) and np.all(c[rho > 0.5] == 1)
        assert np.all(np.diff(c) >= 0)
    with pytest.raises(ValueError):
        cutoff(rho, "cubic")


def test_constants_quadratic_form_and_mass_split():
    for mesh in (small_disk(), make_rectangle_mesh(2.0, 1.0, 0.25)):
        op = assemble(mesh, 1.7, -0.6)
        one = np.ones(op.A.n)
        expect = 1.7 * mesh.area + 0.6 * mesh.perimeter
        assert abs(op.A.quad(one) - expect) < 1e-12 * max(1.0, abs(expect))
        Mx = op.M.matvec(one)
        assert abs(Mx[: op.n_bulk].sum() - mesh.area) < 1e-12
        assert abs(Mx[op.n_bulk:].sum() - mesh.perimeter) < 1e-12


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1), st.floats(-5, 5), st.floats(-5, 5))
def test_random_form_matches_oracle(seed, c_i, c_b):
    rng = np.random.default_rng(seed)
    mesh = small_disk()
    op = assemble(mesh, c_i, c_b)
    x = rng.standard_normal(op.A.n)
    u, v = x[: op.n_bulk], x[op.n_bulk:]
    ref = form_oracle(mesh, c_i, c_b, u, v)
    assert abs(op.A.quad(x) - ref) <= 1e-10 * max(1.0, abs(ref))


def test_zero_coefficients_give_zero():
    for mesh in (small_disk(), make_rectangle_mesh(1.0, 1.0, 0.2)):
        lam, x = lambda_fem(mesh, 0.0, 0.0)
        assert abs(lam) < 1e-10
        assert np.ptp(x / x[0]) < 1e-6


@pytest.mark.parametrize("c", [-2.0, 0.5, 3.0])
def test_balanced_constants_exact(c):
    lam, x = lambda_fem(make_disk_mesh(0.1), c, -c)
    assert abs(lam - c) < 1e-10
    assert np.ptp(x / x[0]) < 1e-6


def test_eigenvector_positive():
    _, x = lambda_fem(make_disk_mesh(0.1), -3.0, 0.5)
    x = x * np.sign(x.sum())
    assert np.all(x > 0)


def test_disk_cross_check_and_conformity():
    # (-3, 0.5): c_i < -c_b, inscribed polygons and conformity both push lambda_h upward
    ref = solve_principal_ball(2, 1.0, -3.0, 0.5).lam
    errs = []
    for h in (0.08, 0.04, 0.02):
        lam, _ = lambda_fem(make_disk_mesh(h), -3.0, 0.5)
        assert lam >= ref - 1e-9
        errs.append(lam - ref)
    assert errs[-1] <= 1e-2
    assert math.log2(errs[1] / errs[2]) >= 1.8


def test_disk_cross_check_first_regime():
    # (1, 0): the polygon has a larger perimeter-to-area ratio, so lambda_h can undershoot
    # by a geometric O(h^2) amount
    ref = solve_principal_ball(2, 1.0, 1.0, 0.0).lam
    errs = [lambda_fem(make_disk_mesh(h), 1.0, 0.0)[0] - ref for h in (0.08, 0.04, 0.02)]
    assert abs(errs[-1]) <= 1e-2
    assert math.log2(abs(errs[1]) / abs(errs[2])) >= 1.8


def test_refinement_monotone_on_nested_rectangles():
    lams = [lambda_fem(make_rectangle_mesh(2.0, 1.0, h), 1.0, 0.0)[0] for h in (0.25, 0.125, 0.0625)]
    assert lams[0] > lams[1] > lams[2]
    lams = [lambda_fem(make_rectangle_mesh(2.0, 1.0, h), -3.0, 0.5)[0] for h in (0.25, 0.125, 0.0625)]
    assert lams[0] > lams[1] > lams[2]


def test_square_vs_disk_bounds():
    # unit area: square side 1, disk radius 1/sqrt(pi)
    sq = make_rectangle_mesh(1.0, 1.0, 0.025)
    dk = make_disk_mesh(0.025 / math.sqrt(math.pi) * 1.0, radius=1 / math.sqrt(math.pi))
    vals = {}
    for name, mesh in (("square", sq), ("disk", dk)):
        lam, _ = lambda_fem(mesh, -3.0, 0.0)
        assert -3.0 < lam < 0.0
        assert lam <= -3.0 * mesh.area / (mesh.area + mesh.perimeter) + 1e-12
        vals[name] = lam
    assert abs(vals["square"] - vals["disk"]) > 1e-3


def test_nonexistence_scan_shape():
    rows = nonexistence_scan(1.0, 0.0, [4, 1], h=0.1)
    assert [r.aspect for r in rows] == [1.0, 4.0]
    for r in rows:
        assert abs(r.area - math.pi) < 1e-12
        assert 0 < r.lam_h <= r.upper_bound + 1e-2
    assert rows[1].lam_h < rows[0].lam_h
    with pytest.raises(ValueError):
        nonexistence_scan(-3.0, 0.0, [1])


def test_mesh_round_trip(tmp_path):
    mesh = make_perturbed_disk_mesh(3, 0.02, 0.1)
    write_mesh(tmp_path / "m.txt", mesh)
    back = read_mesh(tmp_path / "m.txt")
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.triangles, mesh.triangles)
    np.testing.assert_array_equal(back.boundary_loop, mesh.boundary_loop)
    write_mesh(tmp_path / "m2.txt", back)
    assert (tmp_path / "m.txt").read_text() == (tmp_path / "m2.txt").read_text()


def test_mesh_errors(tmp_path):
    V = np.array([[0, 0], [1, 0], [0.5, 0.01]], float)
    with pytest.raises(MeshQualityFailure):
        Mesh(V, np.array([[0, 1, 2]]), np.array([0, 1, 2])).check_quality()
    with pytest.raises(MeshFormatError):
        Mesh(V, np.array([[0, 2, 1]]), np.array([0, 1, 2]))
    with pytest.raises(MeshFormatError):
        Mesh(np.array([[0, 0], [1, 0], [0, 1]], float), np.array([[0, 1, 2]]), np.array([0, 1]))
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2\nVERTICES\n")
    with pytest.raises(MeshFormatError):
        read_mesh(bad)
    bad.write_text("VERTICES\n0 0\n1 0\n0 1\nTRIANGLES\n0 1 x\nBOUNDARY\n0\n1\n2\n")
    with pytest.raises(MeshFormatError):
        read_mesh(bad)


def test_hessian_fd_degree_one_and_profile_swap():
    c_i, c_b = -40.0, 0.0
    eig = solve_principal_ball(2, 1.0, c_i, c_b)
    co = ball_coefficients(eig)
    a2 = hessian_row(2, eig, co).a_k
    ref = make_disk_mesh(0.04)
    fd1 = hessian_fd(1, c_i, c_b, h=0.04, mu=co.mu, reference=ref)
    assert abs(fd1) <= 0.05 * abs(a2)
    q = hessian_fd(2, c_i, c_b, h=0.04, mu=co.mu, reference=ref)
    s = hessian_fd(2, c_i, c_b, h=0.04, mu=co.mu, profile="smooth", reference=ref)
    assert abs(q - a2) <= 0.05 * abs(a2)
    assert abs(q - s) <= 2 * abs(q - a2)
