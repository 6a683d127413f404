"""Control meshes, constraints and material data for the standard examples.

Each generator returns a :class:`Benchmark` with a control mesh whose
analysis faces carry at most one extraordinary vertex, the single-DOF
constraints, the material and the reference pressure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .basis import eval_patch_basis
from .mesh import (ControlMesh, catmull_clark_subdivide, limit_position_operator, needs_presubdivision,
                   patch_stencil)
from .shell_core import MaterialParams

__all__ = [
    "BENCHMARKS",
    "Benchmark",
    "generate_benchmark_mesh",
    "plate",
    "sphere",
    "sphere_octant",
    "torus",
    "airbag",
    "balloon_pressure",
    "torus_symmetry_maps",
    "asymmetry_norm",
    "airbag_diagonal_profile",
    "count_sign_changes",
    "BALLOON_MU",
]

BALLOON_MU = 4.225e5
BALLOON_CASES = {1: (0.5, 0.0), 2: (0.4375, 0.0625)}
BENCHMARKS = ("plate", "sphere_octant", "torus", "airbag")


@dataclass
class Benchmark:
    name: str
    mesh: ControlMesh
    fixes: list  # (point, component)
    material: MaterialParams
    p_ref: float = 1.0
    meta: dict = field(default_factory=dict)


def _quad_grid(nx, ny):
    """Faces of an ``(nx+1) x (ny+1)`` vertex grid, row-major ``i + (nx+1) j``."""
    faces = []
    for j in range(ny):
        for i in range(nx):
            a = i + (nx + 1) * j
            faces.append([a, a + 1, a + nx + 2, a + nx + 1])
    return np.array(faces, dtype=np.int64)


def _refine(mesh: ControlMesh, levels: int) -> ControlMesh:
    for _ in range(levels):
        mesh = catmull_clark_subdivide(mesh)
    return mesh


def _boundary_fixes(mesh: ControlMesh, comps=(0, 1, 2)):
    return [(v, c) for v in range(mesh.n_vertices) if mesh.is_boundary[v] for c in comps]


# ---------------------------------------------------------------------
# Circular plate
# ---------------------------------------------------------------------
def plate_control_mesh(radius: float = 7.5, n_sectors: int = 10, n_rings: int = 4) -> ControlMesh:
    """Polar disk: a fan of ``n_sectors`` quads round the centre plus rings.

    The rim control polygon is scaled so that the limit boundary curve
    passes through ``radius`` at the rim vertices.
    """
    m = 2 * n_sectors
    rim = radius * 3.0 / (2.0 + math.cos(2.0 * math.pi / m))
    verts = [[0.0, 0.0, 0.0]]
    for k in range(1, n_rings + 2):
        r = rim * k / (n_rings + 1)
        for i in range(m):
            t = 2.0 * math.pi * i / m
            verts.append([r * math.cos(t), r * math.sin(t), 0.0])

    def ring(k, i):
        return 1 + (k - 1) * m + i % m

    faces = [[0, ring(1, 2 * s), ring(1, 2 * s + 1), ring(1, 2 * s + 2)] for s in range(n_sectors)]
    for k in range(1, n_rings + 1):
        for i in range(m):
            faces.append([ring(k, i), ring(k + 1, i), ring(k + 1, i + 1), ring(k, i + 1)])
    return ControlMesh(np.array(verts), np.array(faces, dtype=np.int64))


def plate(refine: int = 0, c1: float = 80.0, c2: float = 20.0, thickness: float = 0.5,
          radius: float = 7.5) -> Benchmark:
    """Simply supported Mooney-Rivlin plate under follower pressure (``mu = 1``)."""
    base = plate_control_mesh(radius)
    mesh = _refine(base, refine)
    meta = {"refine": refine, "base_faces": base.n_faces, "radius": radius}
    if needs_presubdivision(mesh):
        meta["analysis_refine"] = refine + 1
        mesh = catmull_clark_subdivide(mesh)
    mat = MaterialParams("mooney_rivlin", thickness, c1=c1, c2=c2)
    return Benchmark("plate", mesh, _boundary_fixes(mesh), mat, 1.0, meta)


# ---------------------------------------------------------------------
# Sphere (cube-sphere with limit positions on the sphere)
# ---------------------------------------------------------------------
def _cube_sphere(n: int):
    """Closed quad mesh of the cube ``[-1, 1]^3`` with ``n x n`` faces per side."""
    index: dict = {}
    verts: list = []
    faces: list = []

    def vid(p):
        key = tuple(int(round(c)) for c in p)
        if key not in index:
            index[key] = len(verts)
            verts.append(key)
        return index[key]

    # integer lattice coordinates in [-n, n], step 2
    for axis in range(3):
        for sign in (-1, 1):
            a1, a2 = (axis + 1) % 3, (axis + 2) % 3
            if sign < 0:
                a1, a2 = a2, a1
            for j in range(n):
                for i in range(n):
                    quad = []
                    for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        p = [0, 0, 0]
                        p[axis] = sign * n
                        p[a1] = -n + 2 * (i + di)
                        p[a2] = -n + 2 * (j + dj)
                        quad.append(vid(p))
                    faces.append(quad)
    return np.array(verts, dtype=float) / n, np.array(faces, dtype=np.int64)


def _fit_limit_to_sphere(mesh: ControlMesh, radius: float, iters: int = 60) -> np.ndarray:
    """Control points whose vertex limit positions lie on the sphere."""
    L = limit_position_operator(mesh)
    P = mesh.vertices * (radius / np.linalg.norm(mesh.vertices, axis=1))[:, None]
    for _ in range(iters):
        lim = L @ P
        target = radius * lim / np.linalg.norm(lim, axis=1)[:, None]
        corr = target - lim
        P = P + corr
        if np.max(np.abs(corr)) < 1e-13 * radius:
            break
    return P


def sphere(refine: int = 0, radius: float = 10.0, thickness: float = 0.1, case: int = 1,
           n0: int = 4, fit: bool = True) -> Benchmark:
    """Full closed sphere with ``6 (n0 2^refine)^2`` faces."""
    n = n0 * 2**refine
    v, f = _cube_sphere(n)
    mesh = ControlMesh(v * radius / np.linalg.norm(v, axis=1)[:, None], f)
    if fit:
        mesh = mesh.with_vertices(_fit_limit_to_sphere(mesh, radius))
    c1, c2 = BALLOON_CASES[case]
    mat = MaterialParams("mooney_rivlin", thickness, c1=c1 * BALLOON_MU, c2=c2 * BALLOON_MU)
    return Benchmark("sphere", mesh, [], mat, 1.0, {"radius": radius, "case": case, "refine": refine})


def sphere_octant(refine: int = 0, case: int = 1, radius: float = 10.0, thickness: float = 0.1,
                  ) -> Benchmark:
    """One eighth of the sphere (``x, y, z >= 0``) with mirror-symmetric edges.

    The octant of the cube-sphere with ``16 2^refine`` faces per cube side
    has ``192 4^refine`` faces; its valence-3 vertex sits at the centre.
    """
    n = 16 * 2**refine
    full = sphere(0, radius, thickness, case, n0=n).mesh
    tol = 1e-9 * radius
    X = full.vertices
    keep = [k for k, q in enumerate(full.faces) if np.all(X[q] >= -tol)]
    used = np.unique(full.faces[keep])
    remap = -np.ones(full.n_vertices, dtype=np.int64)
    remap[used] = np.arange(used.size)
    V = X[used].copy()
    V[np.abs(V) < tol] = 0.0
    F = remap[full.faces[keep]]
    mirror = {}
    tmp = ControlMesh(V, F)
    for a, b in tmp.boundary_edges:
        axes = [ax for ax in range(3) if V[a, ax] == 0.0 and V[b, ax] == 0.0]
        mirror[(a, b)] = axes[0]
    mesh = ControlMesh(V, F, mirror)
    fixes = [(v, ax) for v in range(mesh.n_vertices) for ax in range(3) if V[v, ax] == 0.0]
    c1, c2 = BALLOON_CASES[case]
    mat = MaterialParams("mooney_rivlin", thickness, c1=c1 * BALLOON_MU, c2=c2 * BALLOON_MU)
    meta = {"radius": radius, "case": case, "mu": BALLOON_MU, "symmetry_factor": 8.0}
    return Benchmark("sphere_octant", mesh, fixes, mat, 1.0, meta)


def balloon_pressure(lam, c1: float, c2: float, thickness: float, radius: float):
    """Inflation pressure of a thin incompressible Mooney-Rivlin balloon."""
    lam = np.asarray(lam, dtype=float)
    return 4.0 * thickness / radius * (c1 * (lam**-1 - lam**-7) - c2 * (lam**-5 - lam))


# ---------------------------------------------------------------------
# Torus
# ---------------------------------------------------------------------
TORUS_HALF_EXTENT = (10.6522, 1.80474)


def torus_control_mesh(n_phi: int = 16, n_theta: int = 16, outer: float = 10.6522,
                       half_height: float = 1.80474) -> ControlMesh:
    """Closed torus about the y axis whose limit surface has the given extents.

    ``outer`` is the half width in x and z, ``half_height`` the half extent
    in y. For a closed uniform cubic B-spline polygon inscribed in a circle
    the vertex limit points shrink radially by ``(2 + cos(2 pi / n)) / 3``.
    """
    kp = (2.0 + math.cos(2.0 * math.pi / n_phi)) / 3.0
    kt = (2.0 + math.cos(2.0 * math.pi / n_theta)) / 3.0
    rc = half_height / kt
    Rc = outer / kp - rc * kt
    verts = []
    for j in range(n_theta):
        t = 2.0 * math.pi * j / n_theta
        for i in range(n_phi):
            ph = 2.0 * math.pi * i / n_phi
            rho = Rc + rc * math.cos(t)
            verts.append([rho * math.cos(ph), rc * math.sin(t), rho * math.sin(ph)])
    faces = []
    for j in range(n_theta):
        for i in range(n_phi):
            a = i + n_phi * j
            b = (i + 1) % n_phi + n_phi * j
            c = (i + 1) % n_phi + n_phi * ((j + 1) % n_theta)
            d = i + n_phi * ((j + 1) % n_theta)
            faces.append([a, d, c, b])
    return ControlMesh(np.array(verts), np.array(faces, dtype=np.int64))


def torus(refine: int = 0, case: int = 2, thickness: float = 0.01) -> Benchmark:
    """256-face closed torus with six isostatic rigid-body fixes."""
    n = 16 * 2**refine
    mesh = torus_control_mesh(n, n)
    q = n // 4
    # outer equator points (theta = 0) at phi = 0, 90 and 180 degrees
    p0, p90, p180 = 0, q, 2 * q
    fixes = [(p0, 1), (p0, 2), (p90, 0), (p90, 1), (p180, 1), (p180, 2)]
    c1, c2 = BALLOON_CASES[case]
    mat = MaterialParams("mooney_rivlin", thickness, c1=c1 * BALLOON_MU, c2=c2 * BALLOON_MU)
    meta = {"n_phi": n, "n_theta": n, "mu": BALLOON_MU, "case": case}
    return Benchmark("torus", mesh, fixes, mat, 1.0, meta)


def torus_symmetry_maps(n_phi: int = 16, n_theta: int = 16):
    """Vertex permutations and component transforms of the torus symmetries.

    Returns ``[(perm, Q)]``: the mapped field is ``(Q @ u[perm].T).T``, i.e.
    a symmetric displacement field satisfies ``u = (Q u[perm])``.
    """
    ids = np.arange(n_phi * n_theta).reshape(n_theta, n_phi)
    a = 2.0 * math.pi / n_phi
    # rotation about y by one sector: vertex i maps from i - 1
    rot = np.array([[math.cos(a), 0.0, -math.sin(a)], [0.0, 1.0, 0.0], [math.sin(a), 0.0, math.cos(a)]])
    perm_rot = np.roll(ids, 1, axis=1).ravel()
    # mirror y -> -y: theta -> -theta
    perm_mir = ids[(-np.arange(n_theta)) % n_theta].ravel()
    mir = np.diag([1.0, -1.0, 1.0])
    # mirror z -> -z: phi -> -phi
    perm_mz = ids[:, (-np.arange(n_phi)) % n_phi].ravel()
    mz = np.diag([1.0, 1.0, -1.0])
    return [(perm_rot, rot), (perm_mir, mir), (perm_mz, mz)]


def asymmetry_norm(u_points, maps) -> float:
    """Largest relative residual of a point field under the symmetry maps.

    Eigenvectors are defined up to sign, so each map takes the smaller of
    the residuals against ``+T u`` and ``-T u``.
    """
    u = np.asarray(u_points, dtype=float).reshape(-1, 3)
    nrm = np.linalg.norm(u)
    if nrm == 0.0:
        return 0.0
    worst = 0.0
    for perm, Q in maps:
        Tu = u[perm] @ Q.T
        r = min(np.linalg.norm(u - Tu), np.linalg.norm(u + Tu)) / nrm
        worst = max(worst, r)
    return worst


# ---------------------------------------------------------------------
# Airbag
# ---------------------------------------------------------------------
def airbag(refine: int = 0, E: float = 5e8, nu: float = 0.4, thickness: float = 0.001,
           n: int = 16) -> Benchmark:
    """Half airbag: flat unit square, StVK, edges held in z."""
    n = n * 2**refine
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    V = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], axis=1)
    mesh = ControlMesh(V, _quad_grid(n, n))
    fixes = _boundary_fixes(mesh, comps=(2,))
    centre = n // 2 + (n + 1) * (n // 2)
    edge_mid = n + (n + 1) * (n // 2)
    fixes += [(centre, 0), (centre, 1), (edge_mid, 1)]
    mat = MaterialParams("stvk", thickness, E=E, nu=nu)
    return Benchmark("airbag", mesh, fixes, mat, 1.0, {"n": n})


def generate_benchmark_mesh(name: str, refine: int = 0, **kw) -> Benchmark:
    """Benchmark by name: ``plate``, ``sphere_octant``, ``torus`` or ``airbag``."""
    gens = {"plate": plate, "sphere_octant": sphere_octant, "torus": torus, "airbag": airbag,
            "sphere": sphere}
    if name not in gens:
        raise ValueError(f"unknown benchmark {name!r}; choose from {', '.join(BENCHMARKS)}")
    return gens[name](refine, **kw)


def airbag_diagonal_profile(mesh: ControlMesh, u_full, n_samples: int = 400):
    """Displacement ``u_z`` and its curvature along the diagonal ``x = y``.

    Assumes the regular ``n x n`` grid of :func:`airbag`, whose limit
    parametrization is affine in ``(x, y)``. Returns ``(s, u_z, d2u_z/ds^2)``
    with ``s`` the x coordinate of the sample.
    """
    n = int(round(math.sqrt(mesh.n_faces)))
    U = np.asarray(u_full, dtype=float).reshape(-1, 3)
    s = (np.arange(n_samples) + 0.5) / n_samples
    w = np.empty_like(s)
    curv = np.empty_like(s)
    cache = {}
    for k, x in enumerate(s):
        i = min(int(x * n), n - 1)
        t = x * n - i
        face = i + n * i
        st = cache.get(face)
        if st is None:
            st = cache[face] = patch_stencil(mesh, face)
        b = eval_patch_basis(st, t, t)
        uz = np.einsum("amk,mk->a", st.weights[:, :, 2:], U[st.indices][:, 2:])
        w[k] = b.values @ uz
        # d/ds along x = y: u_uu + 2 u_uv + u_vv, scaled to physical length
        curv[k] = n * n * (b.d2[:, 0] + 2.0 * b.d2[:, 1] + b.d2[:, 2]) @ uz
    return s, w, curv


def count_sign_changes(values, rel_floor: float = 1e-3) -> int:
    """Sign changes of a sampled curve, ignoring values below ``rel_floor * max``."""
    v = np.asarray(values, dtype=float)
    floor = rel_floor * np.max(np.abs(v), initial=0.0)
    signs = np.sign(v[np.abs(v) > floor])
    return int(np.sum(signs[1:] != signs[:-1]))
