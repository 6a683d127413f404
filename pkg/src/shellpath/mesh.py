"""Quadrilateral control meshes for Catmull-Clark subdivision surfaces.

A :class:`ControlMesh` is an immutable quad mesh with its topology tables.
Besides one-step refinement it extracts, for every face, the *patch stencil*:
the ordered control points (plus linear ghost combinations at boundaries)
whose limit-surface basis functions are nonzero on that face.

Stencil ordering
----------------
Regular patches use a row-major 4x4 grid ``a = i + 4*j`` where ``i`` runs
along the first face edge (theta^1) and ``j`` along the last one (theta^2).
The face occupies grid cells ``(1..2, 1..2)``.

Irregular patches (one interior extraordinary vertex of valence ``n``) use
``2n + 8`` points with the extraordinary vertex placed at the parametric
origin of the face::

    0           extraordinary vertex v
    1 + 2k      k-th edge neighbour of v  (k = 0..n-1, counter-clockwise)
    2 + 2k      face-diagonal point between edge neighbours k and k+1
    2n+1..2n+7  the outer points (3,0) (3,1) (3,2) (3,3) (2,3) (1,3) (0,3)
                of the grid spanned by the face, in that order

Edge neighbour 0 lies along theta^1 and edge neighbour 1 along theta^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np
import scipy.sparse as sp

__all__ = [
    "MeshError",
    "SubdivisionRequired",
    "ControlMesh",
    "PatchStencil",
    "load_control_mesh",
    "parse_control_mesh",
    "write_control_mesh",
    "catmull_clark_subdivide",
    "subdivision_operator",
    "patch_stencil",
    "irregular_ring_faces",
    "limit_position_operator",
]


class MeshError(ValueError):
    """Invalid quad-mesh input or unsupported topology."""


class SubdivisionRequired(MeshError):
    """Face touches more than one extraordinary vertex; subdivide once more."""


def _edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True, eq=False)
class ControlMesh:
    """Validated quad control mesh.

    Parameters
    ----------
    vertices : (V, 3) array
    faces : (F, 4) int array, counter-clockwise vertex indices
    mirror_axes : mapping from boundary edge (sorted vertex pair) to the
        Cartesian axis normal to the symmetry plane the edge lies on.
        Boundary edges not listed use linear-extrapolation ghosts.
    """

    vertices: np.ndarray
    faces: np.ndarray
    mirror_axes: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        verts = np.array(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise MeshError("vertices must have shape (V, 3)")
        faces = np.array(self.faces, dtype=np.int64)
        if faces.ndim != 2 or faces.shape[1] != 4:
            raise MeshError("non-quad face: faces must have exactly 4 indices")
        verts.flags.writeable = False
        faces.flags.writeable = False
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "mirror_axes", dict(self.mirror_axes))
        self._build_topology()

    # -- topology -----------------------------------------------------
    def _build_topology(self) -> None:
        nv = len(self.vertices)
        halfedge: dict[tuple[int, int], int] = {}
        edge_faces: dict[tuple[int, int], list[int]] = {}
        for fid, face in enumerate(self.faces.tolist()):
            if len(set(face)) != 4:
                raise MeshError(f"face {fid}: vertex indices are not distinct")
            for v in face:
                if v < 0 or v >= nv:
                    raise MeshError(f"face {fid}: dangling vertex index {v}")
            for k in range(4):
                a, b = face[k], face[(k + 1) % 4]
                if (a, b) in halfedge:
                    other = halfedge[(a, b)]
                    raise MeshError(
                        f"face {fid}: inconsistent orientation, edge ({a}, {b}) "
                        f"has the same direction in face {other}"
                    )
                halfedge[(a, b)] = fid
                edge_faces.setdefault(_edge_key(a, b), []).append(fid)
        for edge, fl in edge_faces.items():
            if len(fl) > 2:
                raise MeshError(f"non-manifold edge {edge}: shared by faces {fl}")
        valence = np.zeros(nv, dtype=np.int64)
        for face in self.faces:
            valence[face] += 1
        boundary_edges = sorted(e for e, fl in edge_faces.items() if len(fl) == 1)
        is_boundary = np.zeros(nv, dtype=bool)
        for a, b in boundary_edges:
            is_boundary[a] = is_boundary[b] = True
        vertex_face = np.full(nv, -1, dtype=np.int64)
        for fid in range(len(self.faces) - 1, -1, -1):
            vertex_face[self.faces[fid]] = fid
        bnbr: dict[int, list[int]] = {}
        for a, b in boundary_edges:
            bnbr.setdefault(a, []).append(b)
            bnbr.setdefault(b, []).append(a)
        valence.flags.writeable = False
        is_boundary.flags.writeable = False
        object.__setattr__(self, "_vertex_face", vertex_face)
        object.__setattr__(self, "_boundary_nbr", bnbr)
        object.__setattr__(self, "_halfedge", halfedge)
        object.__setattr__(self, "_edge_faces", edge_faces)
        object.__setattr__(self, "valence", valence)
        object.__setattr__(self, "is_boundary", is_boundary)
        object.__setattr__(self, "boundary_edges", boundary_edges)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return sorted(self._edge_faces)

    @property
    def is_closed(self) -> bool:
        return not self.boundary_edges

    def edge_faces(self, a: int, b: int) -> list[int]:
        return list(self._edge_faces.get(_edge_key(a, b), []))

    def face_across(self, a: int, b: int) -> list[int] | None:
        """Face on the other side of the directed edge ``a -> b``.

        The returned vertex list is rotated to start at ``b``, i.e. it reads
        ``[b, a, x, y]``. ``None`` when ``a -> b`` is a boundary edge.
        """
        fid = self._halfedge.get((b, a))
        if fid is None:
            return None
        face = self.faces[fid].tolist()
        k = face.index(b)
        return face[k:] + face[:k]

    def face_containing(self, a: int, b: int) -> int | None:
        """Id of the face that holds the directed edge ``a -> b``."""
        return self._halfedge.get((a, b))

    def is_extraordinary(self, v: int) -> bool:
        return bool(not self.is_boundary[v] and self.valence[v] != 4)

    def is_regular_boundary(self, v: int) -> bool:
        return bool(self.is_boundary[v] and self.valence[v] in (1, 2))

    def vertex_ring(self, v: int) -> list[int]:
        """Counter-clockwise one-ring ``[e0, d0, e1, d1, ...]`` of an interior vertex."""
        if self.is_boundary[v]:
            raise MeshError(f"vertex {v} is on the boundary")
        fid = int(self._vertex_face[v])
        face = self.faces[fid].tolist()
        k = face.index(v)
        start = face[k:] + face[:k]
        ring: list[int] = []
        cur = start
        for _ in range(self.valence[v]):
            ring += [cur[1], cur[2]]
            nxt = self.face_across(cur[3], v)
            cur = nxt[nxt.index(v):] + nxt[: nxt.index(v)]
        return ring

    def with_vertices(self, vertices: np.ndarray) -> "ControlMesh":
        return ControlMesh(vertices, self.faces, self.mirror_axes)


@dataclass(frozen=True, eq=False)
class PatchStencil:
    """Control points influencing one face.

    ``weights[a, m, k]`` is the contribution of control point ``indices[m]``
    (Cartesian component ``k``) to stencil point ``a``. Interior patches have
    identity weights; boundary patches carry ghost rows. ``rotation`` is the
    position in ``mesh.faces[face]`` of the vertex placed at the parametric
    origin (the extraordinary vertex for irregular patches, else 0).
    """

    face: int
    valence: int
    indices: np.ndarray
    weights: np.ndarray
    rotation: int = 0

    @property
    def regular(self) -> bool:
        return self.valence == 4

    @property
    def size(self) -> int:
        return self.weights.shape[0]


# ---------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------
def parse_control_mesh(lines: Iterable[str]) -> ControlMesh:
    """Parse ``v x y z`` / ``f i j k l`` lines (1-based face indices).

    Blank lines and ``#`` comments are ignored. Optional ``m i j axis`` lines
    mark a boundary edge as lying on the symmetry plane normal to ``axis``
    (0, 1 or 2).
    """
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    mirrors: dict = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] == "v":
            if len(tok) != 4:
                raise MeshError(f"line {lineno}: vertex needs 3 coordinates")
            verts.append([float(t) for t in tok[1:]])
        elif tok[0] == "f":
            idx = [int(t.split("/")[0]) - 1 for t in tok[1:]]
            if len(idx) != 4:
                raise MeshError(
                    f"line {lineno}: non-quad face {len(faces)} with {len(idx)} indices"
                )
            faces.append(idx)
        elif tok[0] == "m":
            a, b, axis = int(tok[1]) - 1, int(tok[2]) - 1, int(tok[3])
            mirrors[_edge_key(a, b)] = axis
        else:
            raise MeshError(f"line {lineno}: unknown record {tok[0]!r}")
    if not faces:
        raise MeshError("mesh has no faces")
    mesh = ControlMesh(np.array(verts, dtype=float).reshape(-1, 3), np.array(faces), mirrors)
    for e in mirrors:
        if e not in set(mesh.boundary_edges):
            raise MeshError(f"mirror record for non-boundary edge {e}")
    return mesh


def load_control_mesh(source: TextIO | str) -> ControlMesh:
    """Read a quad mesh from a text stream or a path."""
    if isinstance(source, str):
        with open(source, encoding="ascii") as fh:
            return parse_control_mesh(fh)
    return parse_control_mesh(source)


def write_control_mesh(mesh: ControlMesh, stream: TextIO) -> None:
    for x, y, z in mesh.vertices:
        stream.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
    for f in mesh.faces:
        stream.write("f {} {} {} {}\n".format(*(f + 1)))
    for (a, b), axis in sorted(mesh.mirror_axes.items()):
        stream.write(f"m {a + 1} {b + 1} {axis}\n")


# ---------------------------------------------------------------------
# Subdivision
# ---------------------------------------------------------------------
def subdivision_operator(mesh: ControlMesh) -> tuple[sp.csr_matrix, np.ndarray, list]:
    """Linear Catmull-Clark refinement operator.

    Returns ``(S, faces, edges)``: new vertices are ``S @ old_vertices``,
    ordered as [vertex points (V), edge points (E, in ``edges`` order),
    face points (F)]. Child ``c`` of face ``f`` is new face ``4*f + c`` and
    has the parent's ``c``-th corner first.

    Boundaries follow the cubic B-spline crease rules (midpoint edges,
    ``(a + 6v + b)/8`` vertices, fixed corners), which coincide with
    refining the linearly extrapolated ghost layer.
    """
    nv, nf = mesh.n_vertices, mesh.n_faces
    edges = mesh.edges
    eid = {e: i for i, e in enumerate(edges)}
    ne = len(edges)
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []

    def add(r, c, w):
        rows.append(r)
        cols.append(c)
        vals.append(w)

    off_e, off_f = nv, nv + ne
    faces = mesh.faces.tolist()
    for f, face in enumerate(faces):
        for v in face:
            add(off_f + f, v, 0.25)
    if mesh.mirror_axes:
        raise MeshError(
            "refinement of meshes with mirror-symmetry boundaries is not supported; "
            "generate the symmetry sector at the target resolution instead"
        )
    for (a, b), i in eid.items():
        fl = mesh._edge_faces[(a, b)]
        if len(fl) == 2:
            add(off_e + i, a, 0.25)
            add(off_e + i, b, 0.25)
            for f in fl:
                for v in faces[f]:
                    add(off_e + i, v, 1.0 / 16.0)
        else:
            add(off_e + i, a, 0.5)
            add(off_e + i, b, 0.5)
    for v in range(nv):
        n = int(mesh.valence[v])
        if n == 0:
            add(v, v, 1.0)
        elif not mesh.is_boundary[v]:
            ring = mesh.vertex_ring(v)
            # (F + 2R + (n - 3) v) / n
            add(v, v, (n - 3.0) / n + 1.0 / (4 * n) + 1.0 / n)
            for k in range(n):
                add(v, ring[2 * k], 3.0 / (2 * n * n))
                add(v, ring[2 * k + 1], 1.0 / (4 * n * n))
        else:
            nb = _boundary_neighbours(mesh, v)
            if n == 1 or len(nb) != 2:
                add(v, v, 1.0)
            else:
                add(v, v, 0.75)
                add(v, nb[0], 0.125)
                add(v, nb[1], 0.125)
    S = sp.csr_matrix((vals, (rows, cols)), shape=(nv + ne + nf, nv))
    S.sum_duplicates()
    new_faces = []
    for f, face in enumerate(faces):
        for c in range(4):
            a, b, d = face[c], face[(c + 1) % 4], face[(c + 3) % 4]
            new_faces.append(
                [a, off_e + eid[_edge_key(a, b)], off_f + f, off_e + eid[_edge_key(d, a)]]
            )
    return S, np.array(new_faces, dtype=np.int64), edges


def _boundary_neighbours(mesh: ControlMesh, v: int) -> list[int]:
    return list(mesh._boundary_nbr.get(v, []))


def catmull_clark_subdivide(mesh: ControlMesh) -> ControlMesh:
    """One Catmull-Clark refinement step; every quad becomes four."""
    S, faces, edges = subdivision_operator(mesh)
    return ControlMesh(S @ mesh.vertices, faces)


def limit_position_operator(mesh: ControlMesh) -> sp.csr_matrix:
    """Sparse ``L`` with ``L @ P`` the limit-surface points of the vertices.

    Interior vertices use ``(n^2 v + 4 sum(e) + sum(d)) / (n (n + 5))``;
    extrapolated boundaries interpolate the cubic boundary curve
    ``(a + 4 v + b) / 6``; corners are interpolated.
    """
    if mesh.mirror_axes:
        raise MeshError("limit positions are not defined for mirror boundaries")
    rows, cols, vals = [], [], []
    for v in range(mesh.n_vertices):
        n = int(mesh.valence[v])
        if not mesh.is_boundary[v]:
            ring = mesh.vertex_ring(v)
            den = n * (n + 5.0)
            rows.append(v), cols.append(v), vals.append(n * n / den)
            for k in range(n):
                rows += [v, v]
                cols += [ring[2 * k], ring[2 * k + 1]]
                vals += [4.0 / den, 1.0 / den]
        else:
            nb = _boundary_neighbours(mesh, v)
            if n == 1 or len(nb) != 2:
                rows.append(v), cols.append(v), vals.append(1.0)
            else:
                rows += [v, v, v]
                cols += [v, nb[0], nb[1]]
                vals += [4.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0]
    L = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_vertices,) * 2)
    L.sum_duplicates()
    return L


# ---------------------------------------------------------------------
# Patch stencils
# ---------------------------------------------------------------------
class _Combo(dict):
    """Sparse linear combination ``{vertex: weight(3)}`` of control points."""

    @classmethod
    def point(cls, v: int) -> "_Combo":
        return cls({v: np.ones(3)})

    def lin(self, a: float, other: "_Combo", b: float) -> "_Combo":
        out = _Combo({k: a * w for k, w in self.items()})
        for k, w in other.items():
            out[k] = out.get(k, 0.0) + b * w
        return out

    def scaled(self, s: np.ndarray) -> "_Combo":
        return _Combo({k: w * s for k, w in self.items()})


def _reflect(boundary: _Combo, inner: _Combo, axis: int | None) -> _Combo:
    """Ghost point across a boundary row: ``2B - I`` or the mirror image of ``I``."""
    if axis is None:
        return boundary.lin(2.0, inner, -1.0)
    s = np.ones(3)
    s[axis] = -1.0
    return inner.scaled(s)


def _grid_regular(mesh: ControlMesh, quad: list[int], strict: bool = False) -> dict:
    """Fill the 4x4 grid around ``quad = [LL, LR, UR, UL]`` with combos."""
    v0, v1, v2, v3 = quad
    g: dict[tuple[int, int], _Combo] = {
        (1, 1): _Combo.point(v0),
        (2, 1): _Combo.point(v1),
        (2, 2): _Combo.point(v2),
        (1, 2): _Combo.point(v3),
    }
    side_edge = {"B": (v0, v1), "R": (v1, v2), "T": (v2, v3), "L": (v3, v0)}
    nbr = {s: mesh.face_across(a, b) for s, (a, b) in side_edge.items()}
    if strict and any(x is None for x in nbr.values()):
        raise MeshError("stencil leaves the local mesh")

    def axis_of(side):
        return mesh.mirror_axes.get(_edge_key(*side_edge[side]))

    # sides: neighbour lists read [b, a, x, y] with x adjacent to a
    layout = {
        "B": [(1, 0), (2, 0)],
        "R": [(3, 1), (3, 2)],
        "T": [(2, 3), (1, 3)],
        "L": [(0, 2), (0, 1)],
    }
    inner = {"B": ((1, 1), (1, 2), (2, 1), (2, 2)), "R": ((2, 1), (1, 1), (2, 2), (1, 2)),
             "T": ((2, 2), (2, 1), (1, 2), (1, 1)), "L": ((1, 2), (2, 2), (1, 1), (2, 1))}
    for s, cells in layout.items():
        if nbr[s] is not None:
            g[cells[0]] = _Combo.point(nbr[s][2])
            g[cells[1]] = _Combo.point(nbr[s][3])
        else:
            b0, i0, b1, i1 = inner[s]
            g[cells[0]] = _reflect(g[b0], g[i0], axis_of(s))
            g[cells[1]] = _reflect(g[b1], g[i1], axis_of(s))

    # corners: (corner, side A, side B, centre vertex, diagonal walk)
    corners = [
        ((0, 0), "B", "L", v0, ((1, 0), (0, 1)), ((1, 0), (2, 0)), ((0, 1), (0, 2))),
        ((3, 0), "B", "R", v1, ((2, 0), (3, 1)), ((2, 0), (1, 0)), ((3, 1), (3, 2))),
        ((3, 3), "R", "T", v2, ((3, 2), (2, 3)), ((3, 2), (3, 1)), ((2, 3), (1, 3))),
        ((0, 3), "T", "L", v3, ((1, 3), (0, 2)), ((1, 3), (2, 3)), ((0, 2), (0, 1))),
    ]
    for cell, sa, sb, cv, (pa, pb), (ra_b, ra_i), (rb_b, rb_i) in corners:
        have_a, have_b = nbr[sa] is not None, nbr[sb] is not None
        if have_a and have_b:
            if mesh.is_boundary[cv] or mesh.valence[cv] != 4:
                if strict or mesh.is_boundary[cv]:
                    raise MeshError(f"unsupported boundary configuration at vertex {cv}")
                raise SubdivisionRequired(f"vertex {cv} is extraordinary")
            a_pt, b_pt = next(iter(g[pa])), next(iter(g[pb]))
            side_id = mesh.face_containing(nbr[sa][0], nbr[sa][1])
            diag = [f for f in mesh.edge_faces(cv, a_pt) if f != side_id]
            quad_d = mesh.faces[diag[0]].tolist() if diag else []
            if not diag or b_pt not in quad_d:
                raise MeshError(f"inconsistent one-ring at vertex {cv}")
            (rest,) = set(quad_d) - {cv, a_pt, b_pt}
            g[cell] = _Combo.point(rest)
        elif have_a:
            g[cell] = _reflect(g[ra_b], g[ra_i], axis_of(sb))
        else:
            g[cell] = _reflect(g[rb_b], g[rb_i], axis_of(sa))
    return g


def _combos_to_stencil(
    face: int, valence: int, combos: list[_Combo], rotation: int = 0
) -> PatchStencil:
    verts = sorted({k for c in combos for k in c})
    pos = {v: i for i, v in enumerate(verts)}
    W = np.zeros((len(combos), len(verts), 3))
    for a, c in enumerate(combos):
        for v, w in c.items():
            W[a, pos[v]] += w
    return PatchStencil(face, valence, np.array(verts, dtype=np.int64), W, rotation)


def irregular_ring_faces(mesh: ControlMesh, quad: list[int], strict: bool = False) -> list[int]:
    """Canonical ``2n + 8`` vertex ids for a face whose first vertex is extraordinary."""
    v, e0, d0, e1 = quad
    n = int(mesh.valence[v])
    ring = [v]
    cur = quad
    for k in range(n):
        ring += [cur[1], cur[2]]
        nxt = mesh.face_across(cur[3], v)
        if nxt is None:
            raise MeshError(f"extraordinary vertex {v} touches the boundary")
        cur = nxt[nxt.index(v):] + nxt[: nxt.index(v)]
    if cur != quad:
        raise MeshError(f"one-ring of vertex {v} does not close")
    d_last = ring[2 * n]

    def across(a, b):
        f = mesh.face_across(a, b)
        if f is None:
            raise MeshError(f"irregular patch at vertex {v} reaches the boundary")
        return f

    c21 = across(e0, d0)  # [d0, e0, o1, o2]
    o1, o2 = c21[2], c21[3]
    c20 = across(e0, o1)  # [o1, e0, d_last, o0]
    if c20[2] != d_last:
        raise MeshError(f"vertex {e0} is not regular")
    o0 = c20[3]
    c12 = across(d0, e1)  # [e1, d0, o4, o5]
    o4, o5 = c12[2], c12[3]
    c22 = across(o2, d0)  # [d0, o2, o3, o4]
    if c22[3] != o4:
        raise MeshError(f"vertex {d0} is not regular")
    o3 = c22[2]
    c02 = across(o5, e1)  # [e1, o5, o6, d1]
    if c02[3] != ring[4]:
        raise MeshError(f"vertex {e1} is not regular")
    o6 = c02[2]
    return ring + [o0, o1, o2, o3, o4, o5, o6]


def patch_stencil(mesh: ControlMesh, face: int) -> PatchStencil:
    """Stencil of ``face`` (see module docstring for the ordering)."""
    if face < 0 or face >= mesh.n_faces:
        raise MeshError(f"face {face} does not exist")
    quad = mesh.faces[face].tolist()
    ev = [k for k, v in enumerate(quad) if mesh.is_extraordinary(v)]
    if len(ev) > 1:
        raise SubdivisionRequired(
            f"face {face} touches {len(ev)} extraordinary vertices; subdivide required"
        )
    for v in quad:
        if mesh.is_boundary[v] and not mesh.is_regular_boundary(v):
            raise MeshError(
                f"face {face}: boundary vertex {v} with {mesh.valence[v]} faces is unsupported"
            )
    if not ev:
        g = _grid_regular(mesh, quad)
        combos = [g[(a % 4, a // 4)] for a in range(16)]
        return _combos_to_stencil(face, 4, combos)
    k = ev[0]
    rot = quad[k:] + quad[:k]
    ids = irregular_ring_faces(mesh, rot)
    n = int(mesh.valence[rot[0]])
    return _combos_to_stencil(face, n, [_Combo.point(v) for v in ids], rotation=k)


def irregular_face_rotation(mesh: ControlMesh, face: int) -> int:
    """Index of the extraordinary corner of ``face`` (0 when regular)."""
    quad = mesh.faces[face].tolist()
    for k, v in enumerate(quad):
        if mesh.is_extraordinary(v):
            return k
    return 0


def needs_presubdivision(mesh: ControlMesh) -> bool:
    ext = np.array([mesh.is_extraordinary(v) for v in range(mesh.n_vertices)])
    return bool(np.any(ext[mesh.faces].sum(axis=1) > 1))
