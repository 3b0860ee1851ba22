"""Conforming P1 finite elements for the coupled bulk-surface eigenproblem in 2-D.

Bulk unknowns ``u`` live at every mesh vertex; independent surface unknowns
``v`` live at the boundary vertices and are coupled to the bulk trace only
through the exchange term.  The pencil is

    A = [[K + c_i M + B,   -B         ],
         [-B,              S + B - c_b B]],    Mass = M (+) B,

with K, M the bulk stiffness and mass, S and B the 1-D stiffness and mass of
the boundary polyline.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .ball_radial import _threads, solve_principal_ball
from .errors import MeshFormatError, MeshQualityFailure
from .linalg_core import EigenConfig, SparseSym, smallest_generalized_eigenpair
from .shape_hessian import ball_coefficients

__all__ = [
    "Mesh",
    "CoupledOperator",
    "make_rectangle_mesh",
    "make_disk_mesh",
    "make_perturbed_disk_mesh",
    "cutoff",
    "assemble",
    "lambda_fem",
    "nonexistence_scan",
    "NonexistenceRow",
    "hessian_fd",
    "write_mesh",
    "read_mesh",
]

MIN_ANGLE_DEG = 15.0


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_loop: np.ndarray
    edge_lengths: np.ndarray | None = None

    def __post_init__(self):
        V = np.array(self.vertices, float)
        T = np.array(self.triangles, dtype=np.int64)
        L = np.array(self.boundary_loop, dtype=np.int64)
        if V.ndim != 2 or V.shape[1] != 2:
            raise MeshFormatError("vertices must be an (N, 2) array")
        if T.ndim != 2 or T.shape[1] != 3:
            raise MeshFormatError("triangles must be a (T, 3) array")
        if T.min() < 0 or T.max() >= len(V) or L.min() < 0 or L.max() >= len(V):
            raise MeshFormatError("vertex index out of range")
        for arr in (V, T, L):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "triangles", T)
        object.__setattr__(self, "boundary_loop", L)
        if self.edge_lengths is None:
            lengths = self.chord_lengths
        else:
            lengths = np.array(self.edge_lengths, float)
            if lengths.shape != L.shape or np.any(lengths <= 0):
                raise MeshFormatError("edge_lengths must be positive, one per boundary edge")
        lengths.setflags(write=False)
        object.__setattr__(self, "edge_lengths", lengths)
        self._validate()

    def _validate(self):
        if np.any(self.areas <= 0):
            raise MeshFormatError("triangles must be positively oriented with positive area")
        T = self.triangles
        e = np.sort(np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]]), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise MeshFormatError("an edge is shared by more than two triangles")
        bnd = uniq[counts == 1]
        L = self.boundary_loop
        if len(np.unique(L)) != len(L):
            raise MeshFormatError("boundary loop visits a vertex twice")
        loop_edges = np.sort(np.stack([L, np.roll(L, -1)], axis=1), axis=1)
        loop_set = {tuple(x) for x in loop_edges}
        if loop_set != {tuple(x) for x in bnd}:
            raise MeshFormatError(
                "boundary loop does not match the boundary edges (hanging vertex or holes)"
            )

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def areas(self) -> np.ndarray:
        P = self.vertices[self.triangles]
        d1 = P[:, 1] - P[:, 0]
        d2 = P[:, 2] - P[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def area(self) -> float:
        return float(np.sum(self.areas))

    @property
    def chord_lengths(self) -> np.ndarray:
        L = self.boundary_loop
        return np.linalg.norm(self.vertices[np.roll(L, -1)] - self.vertices[L], axis=1)

    @property
    def perimeter(self) -> float:
        return float(np.sum(self.edge_lengths))

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in degrees."""
        P = self.vertices[self.triangles]
        out = math.inf
        for a in range(3):
            u = P[:, (a + 1) % 3] - P[:, a]
            w = P[:, (a + 2) % 3] - P[:, a]
            c = np.sum(u * w, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1))
            out = min(out, float(np.degrees(np.arccos(np.clip(c, -1, 1))).min()))
        return out

    def check_quality(self, min_angle: float = MIN_ANGLE_DEG) -> "Mesh":
        got = self.min_angle()
        if got < min_angle:
            raise MeshQualityFailure(f"minimum angle {got:.2f} deg is below {min_angle:g} deg")
        return self

    def mapped(self, new_vertices, edge_lengths=None) -> "Mesh":
        """Same connectivity with moved vertices."""
        return Mesh(new_vertices, self.triangles, self.boundary_loop, edge_lengths)


# ---------------------------------------------------------------- generators


def make_rectangle_mesh(a: float, b: float, h: float) -> Mesh:
    """Structured mesh of ``[0, a] x [0, b]``; every cell split along the same diagonal.

    Halving ``h`` (when ``a/h`` and ``b/h`` are integers) gives nested meshes.
    """
    if a <= 0 or b <= 0 or h <= 0:
        raise ValueError("a, b and h must be positive")
    nx = max(1, int(round(a / h)))
    ny = max(1, int(round(b / h)))
    x = np.linspace(0.0, a, nx + 1)
    y = np.linspace(0.0, b, ny + 1)
    X, Y = np.meshgrid(x, y, indexing="xy")
    V = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    p00 = idx[:-1, :-1].ravel()
    p10 = idx[:-1, 1:].ravel()
    p01 = idx[1:, :-1].ravel()
    p11 = idx[1:, 1:].ravel()
    T = np.concatenate([np.column_stack([p00, p10, p11]), np.column_stack([p00, p11, p01])])
    loop = np.concatenate([idx[0, :-1], idx[:-1, -1], idx[-1, :0:-1], idx[:0:-1, 0]])
    return Mesh(V, T, loop).check_quality()


def _ring(i, n_per):
    return 2.0 * math.pi * np.arange(n_per) / n_per


def make_disk_mesh(h: float, radius: float = 1.0) -> Mesh:
    """Unit-disk mesh of concentric rings with ``6 i`` vertices on ring ``i``.

    Ring ``i`` has radius ``i / n`` with ``n = round(radius / h)``; consecutive
    rings are stitched by merging their vertex angles.  The boundary is the
    inscribed polygon on the outer ring.
    """
    n = max(2, int(round(radius / h)))
    verts = [np.zeros((1, 2))]
    starts = [0]
    count = 1
    for i in range(1, n + 1):
        th = _ring(i, 6 * i)
        rr = radius * i / n
        verts.append(np.column_stack([rr * np.cos(th), rr * np.sin(th)]))
        starts.append(count)
        count += 6 * i
    V = np.concatenate(verts)
    tris = []
    # centre fan
    for j in range(6):
        tris.append((0, 1 + j, 1 + (j + 1) % 6))
    for i in range(2, n + 1):
        inner_n, outer_n = 6 * (i - 1), 6 * i
        s_in, s_out = starts[i - 1], starts[i]
        a = b = 0
        # walk both rings counterclockwise, advancing the vertex with the smaller next angle
        while a < inner_n or b < outer_n:
            ta = (a + 1) / inner_n
            tb = (b + 1) / outer_n
            ia, ib = s_in + a % inner_n, s_out + b % outer_n
            if b < outer_n and (a >= inner_n or tb <= ta):
                tris.append((ia, ib, s_out + (b + 1) % outer_n))
                b += 1
            else:
                tris.append((ia, ib, s_in + (a + 1) % inner_n))
                a += 1
    T = np.asarray(tris, dtype=np.int64)
    loop = np.arange(starts[n], starts[n] + 6 * n)
    return Mesh(V, T, loop).check_quality()


def cutoff(rho, profile: str = "quintic"):
    """Monotone radial cutoff: 0 for rho < 0.25, 1 for rho > 0.5."""
    x = np.clip((np.asarray(rho, float) - 0.25) / 0.25, 0.0, 1.0)
    if profile == "quintic":
        return x**3 * (10.0 - 15.0 * x + 6.0 * x * x)
    if profile == "smooth":
        with np.errstate(divide="ignore", over="ignore"):
            a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
            b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
        return a / (a + b)
    raise ValueError(f"unknown cutoff profile {profile!r}")


def _harmonic(k: int, theta):
    return np.cos(k * theta) / math.sqrt(math.pi)


def make_perturbed_disk_mesh(k: int, t: float, h: float, profile: str = "quintic",
                             reference: Mesh | None = None) -> Mesh:
    """Disk mesh moved by ``x -> x + t chi(|x|) Y_k(theta) x/|x|``.

    On the unit circle this is the boundary ``r(theta) = 1 + t Y_k(theta)``.
    Passing the same ``reference`` for several ``t`` keeps the topology fixed.
    """
    ref = make_disk_mesh(h) if reference is None else reference
    nb = len(ref.boundary_loop)
    if k > 0 and nb < 8 * k:
        raise ValueError(f"{nb} boundary vertices resolve fewer than 8 per oscillation of Y_{k}")
    V = ref.vertices
    rho = np.hypot(V[:, 0], V[:, 1])
    theta = np.arctan2(V[:, 1], V[:, 0])
    s = t * cutoff(rho, profile) * _harmonic(k, theta)
    scale = np.where(rho > 0, (rho + s) / np.where(rho > 0, rho, 1.0), 1.0)
    mesh = ref.mapped(V * scale[:, None])
    return mesh.check_quality()


# ---------------------------------------------------------------- assembly


@dataclass(frozen=True, eq=False)
class CoupledOperator:
    A: SparseSym
    M: SparseSym
    dof_map: dict = field(repr=False)
    n_bulk: int = 0
    n_surface: int = 0


def _p1_bulk(mesh: Mesh):
    V, T = mesh.vertices, mesh.triangles
    P = V[T]
    area = mesh.areas
    # gradients of barycentric coordinates
    e = np.stack([P[:, 2] - P[:, 1], P[:, 0] - P[:, 2], P[:, 1] - P[:, 0]], axis=1)
    g = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2.0 * area)[:, None, None]
    Kloc = np.einsum("tad,tbd->tab", g, g) * area[:, None, None]
    Mref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    Mloc = area[:, None, None] * Mref
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    n = mesh.n_vertices
    K = sp.coo_matrix((Kloc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((Mloc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return K, M


def _p1_loop(mesh: Mesh):
    """1-D stiffness and mass on the boundary loop, indexed by loop position."""
    nb = len(mesh.boundary_loop)
    ell = mesh.edge_lengths
    a = np.arange(nb)
    b = np.roll(a, -1)
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    S = sp.coo_matrix((np.concatenate([1 / ell, 1 / ell, -1 / ell, -1 / ell]), (rows, cols)),
                      shape=(nb, nb)).tocsr()
    B = sp.coo_matrix((np.concatenate([ell / 3, ell / 3, ell / 6, ell / 6]), (rows, cols)),
                      shape=(nb, nb)).tocsr()
    return S, B


def assemble(mesh: Mesh, c_i: float, c_b: float) -> CoupledOperator:
    """P1 pencil of the coupled Rayleigh quotient; all terms integrated exactly."""
    n = mesh.n_vertices
    nb = len(mesh.boundary_loop)
    K, M = _p1_bulk(mesh)
    S, B = _p1_loop(mesh)
    # E maps loop position -> bulk vertex
    E = sp.csr_matrix((np.ones(nb), (mesh.boundary_loop, np.arange(nb))), shape=(n, nb))
    EB = E @ B
    A = sp.bmat(
        [[K + c_i * M + EB @ E.T, -EB], [-EB.T, S + (1.0 - c_b) * B]], format="csr"
    )
    Mass = sp.bmat([[M, None], [None, B]], format="csr")
    dof_map = {"bulk": np.arange(n), "surface": n + np.arange(nb), "surface_vertex": mesh.boundary_loop}
    return CoupledOperator(SparseSym.from_scipy(A), SparseSym.from_scipy(Mass), dof_map, n, nb)


def lambda_fem(mesh: Mesh, c_i: float, c_b: float, config: EigenConfig = EigenConfig()):
    """Smallest eigenvalue and M-normalized eigenvector of the P1 pencil.

    The shift ``min(c_i, -c_b) - 1`` sits below the spectrum: the continuous
    eigenvalue exceeds ``min(c_i, -c_b)`` and a conforming discretization can
    only raise it.  The inertia check in the eigensolver guards this.
    """
    op = assemble(mesh, c_i, c_b)
    shift = min(c_i, -c_b) - 1.0
    # constants are a good start: exact when c_i + c_b = 0
    x0 = np.ones(op.A.n)
    ep = smallest_generalized_eigenpair(op.A, op.M, shift, config, x0=x0)
    return ep.value, ep.coords


# ---------------------------------------------------------------- experiments


@dataclass(frozen=True)
class NonexistenceRow:
    aspect: float
    area: float
    perimeter: float
    lam_h: float
    upper_bound: float


def nonexistence_scan(c_i: float, c_b: float, aspect_list, h: float = 0.05,
                      cells_across: int = 16) -> list:
    """``lambda_h`` on rectangles of area pi and growing aspect ratio.

    The mesh size is ``min(h, b / cells_across)`` with ``b`` the short side.
    ``upper_bound`` is the constant-test-function bound
    ``(c_i |Omega| - c_b P) / (|Omega| + P)``.
    """
    if not -c_b < c_i:
        raise ValueError("the scan is meant for the regime -c_b < c_i")

    def one(aspect):
        a = math.sqrt(math.pi * aspect)
        b = math.pi / a
        mesh = make_rectangle_mesh(a, b, min(h, b / cells_across))
        lam, _ = lambda_fem(mesh, c_i, c_b)
        area, per = mesh.area, mesh.perimeter
        ub = (c_i * area - c_b * per) / (area + per)
        return NonexistenceRow(float(aspect), area, per, float(lam), ub)

    aspects = [float(a) for a in aspect_list]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        rows = list(pool.map(one, aspects))
    return sorted(rows, key=lambda r: r.aspect)


def hessian_fd(k: int, c_i: float, c_b: float, t: float = 1e-2, h: float = 0.02,
               mu: float | None = None, profile: str = "quintic",
               reference: Mesh | None = None) -> float:
    """Second difference of ``L(Omega) = lambda_h(Omega) - mu |Omega|`` along ``Y_k``.

    The three domains ``Omega_{-t}, B, Omega_t`` are images of one reference
    disk mesh, so their discretization errors largely cancel.
    """
    if mu is None:
        mu = ball_coefficients(solve_principal_ball(2, 1.0, c_i, c_b)).mu
    ref = make_disk_mesh(h) if reference is None else reference

    def L(s):
        mesh = make_perturbed_disk_mesh(k, s, h, profile, reference=ref)
        lam, _ = lambda_fem(mesh, c_i, c_b)
        return lam - mu * mesh.area

    vals = [L(s) for s in (t, -t, 0.0)]
    return (vals[0] + vals[1] - 2.0 * vals[2]) / (t * t)


# ---------------------------------------------------------------- text format


def write_mesh(path, mesh: Mesh):
    """Plain-text mesh: VERTICES, TRIANGLES and BOUNDARY sections."""
    lines = ["VERTICES"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines.append("TRIANGLES")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    lines.append("BOUNDARY")
    lines += [str(i) for i in mesh.boundary_loop]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    sections = {"VERTICES": [], "TRIANGLES": [], "BOUNDARY": []}
    current = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line in sections:
            current = line
            continue
        if current is None:
            raise MeshFormatError(f"line {lineno}: data before any section header")
        sections[current].append(line.split())
    try:
        V = np.array([[float(a) for a in row] for row in sections["VERTICES"]], float)
        T = np.array([[int(a) for a in row] for row in sections["TRIANGLES"]], dtype=np.int64)
        L = np.array([int(row[0]) for row in sections["BOUNDARY"]], dtype=np.int64)
    except ValueError as exc:
        raise MeshFormatError(str(exc)) from exc
    if V.size == 0 or T.size == 0 or L.size == 0:
        raise MeshFormatError("mesh file is missing a section")
    return Mesh(V.reshape(-1, 2), T.reshape(-1, 3), L)
