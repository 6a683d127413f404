"""Global residual, tangent stiffness and surface diagnostics.

The residual is ``R = F_int - kappa * F_ext(u)`` where the external force is
a follower pressure ``p = kappa * p_ref`` acting along the deformed normal.
Elements are processed in vectorized chunks; global accumulation happens
in a fixed face order, so repeated assembly is bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .basis import eval_patch_basis, gauss_rule_2d
from .mesh import ControlMesh, MeshError, patch_stencil
from .shell_core import (
    MaterialParams,
    ShellError,
    deformed_frame,
    reference_frame,
    strain_state,
    strain_variations,
    stress_resultants,
    tangent_factors,
    thickness_rule,
    to_voigt_stress,
)

__all__ = [
    "AssemblyError",
    "DofMap",
    "PatchTable",
    "Discretization",
    "AssembledSystem",
    "element_internal",
    "pressure_load",
    "assemble",
    "enclosed_volume",
    "energy_density",
]

CHUNK_POINTS = 1200


class AssemblyError(RuntimeError):
    """Element evaluation failed; ``faces`` lists the offending face ids."""

    def __init__(self, message, faces=()):
        super().__init__(message)
        self.faces = list(faces)


@dataclass
class DofMap:
    """Global DOF numbering ``3 * point + component`` and single-DOF fixes."""

    n_points: int
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        n = 3 * self.n_points
        clean = {}
        for dof, val in self.fixed.items():
            dof = int(dof)
            if not 0 <= dof < n:
                raise ValueError(f"constrained dof {dof} out of range [0, {n})")
            clean[dof] = float(val)
        self.fixed = dict(sorted(clean.items()))
        mask = np.ones(n, dtype=bool)
        mask[list(self.fixed)] = False
        self.free = np.flatnonzero(mask)
        self.constrained = np.array(list(self.fixed), dtype=int)

    @property
    def n_dofs(self) -> int:
        return 3 * self.n_points

    @property
    def n_free(self) -> int:
        return self.free.size

    @classmethod
    def from_fixes(cls, n_points, fixes):
        """``fixes`` is an iterable of ``(point, component)`` or ``(point, component, value)``."""
        d = {}
        for f in fixes:
            val = f[2] if len(f) > 2 else 0.0
            d[3 * int(f[0]) + int(f[1])] = val
        return cls(n_points, d)

    def prescribed(self) -> np.ndarray:
        u = np.zeros(self.n_dofs)
        if self.fixed:
            u[self.constrained] = list(self.fixed.values())
        return u

    def expand(self, u_free) -> np.ndarray:
        u = self.prescribed()
        u[self.free] = u_free
        return u

    def apply(self, u) -> np.ndarray:
        """Copy of ``u`` with the prescribed values enforced."""
        u = np.array(u, dtype=float)
        if self.fixed:
            u[self.constrained] = list(self.fixed.values())
        return u


# ---------------------------------------------------------------------
# Per-face basis tables
# ---------------------------------------------------------------------
@dataclass
class _Group:
    faces: np.ndarray  # (E,)
    dofs: np.ndarray  # (E, n)
    comp: np.ndarray  # (n,)
    N: np.ndarray  # (E, Q, n)
    Nd1: np.ndarray  # (E, Q, n, 2)
    Nd2: np.ndarray  # (E, Q, n, 3)
    flagged: np.ndarray  # (Q,)


class PatchTable:
    """Real-DOF basis functions of every face at a fixed set of parameter points."""

    def __init__(self, mesh: ControlMesh, points):
        self.mesh = mesh
        self.points = np.asarray(points, dtype=float)
        stencils = [patch_stencil(mesh, f) for f in range(mesh.n_faces)]
        self.stencils = stencils
        keys: dict = {}
        for f, st in enumerate(stencils):
            keys.setdefault((st.valence, st.size, st.indices.size), []).append(f)
        self.groups: list[_Group] = []
        for (valence, _, m), faces in sorted(keys.items()):
            bases = [eval_patch_basis(valence, u, v) for u, v in self.points]
            B = np.stack([b.values for b in bases])
            B1 = np.stack([b.d1 for b in bases])
            B2 = np.stack([b.d2 for b in bases])
            W = np.stack([stencils[f].weights for f in faces])  # (E, S, m, 3)
            idx = np.stack([stencils[f].indices for f in faces])
            n = 3 * m
            N = np.einsum("qa,eamk->eqmk", B, W).reshape(len(faces), -1, n)
            Nd1 = np.einsum("qax,eamk->eqmkx", B1, W).reshape(len(faces), -1, n, 2)
            Nd2 = np.einsum("qax,eamk->eqmkx", B2, W).reshape(len(faces), -1, n, 3)
            dofs = (3 * idx[:, :, None] + np.arange(3)[None, None, :]).reshape(len(faces), n)
            flagged = np.array([b.flagged for b in bases])
            self.groups.append(
                _Group(np.array(faces), dofs, np.tile(np.arange(3), m), N, Nd1, Nd2, flagged)
            )

    def chunks(self):
        """Yield ``(group, element slice)`` pairs with bounded point counts."""
        Q = len(self.points)
        for g in self.groups:
            step = max(1, CHUNK_POINTS // (Q * max(1, g.dofs.shape[1] // 48)))
            for s in range(0, len(g.faces), step):
                yield g, slice(s, min(s + step, len(g.faces)))

    @staticmethod
    def field_derivatives(g: _Group, sl, x_full):
        """Position (or displacement) derivatives of a field given per DOF."""
        xe = x_full[g.dofs[sl]]  # (E, n)
        E = np.eye(3)[g.comp]
        val = np.einsum("eqr,er,ri->eqi", g.N[sl], xe, E)
        d1 = np.einsum("eqrx,er,ri->eqxi", g.Nd1[sl], xe, E)
        d2 = np.einsum("eqrx,er,ri->eqxi", g.Nd2[sl], xe, E)
        return val, d1, d2


class Discretization:
    """Mesh, material and quadrature bundled for repeated assembly."""

    def __init__(self, mesh: ControlMesh, material: MaterialParams, order: int = 3,
                 thickness_points: int = 2):
        self.mesh = mesh
        self.material = material
        pts, w = gauss_rule_2d(order)
        self.weights = w
        self.table = PatchTable(mesh, pts)
        self.theta3, self.w3 = thickness_rule(material.thickness, thickness_points)
        self.X = mesh.vertices.reshape(-1).astype(float)
        self._ref = {}

    @property
    def n_dofs(self) -> int:
        return 3 * self.mesh.n_vertices

    def chunks(self):
        return self.table.chunks()

    def reference(self, g, sl):
        key = (id(g), sl.start, sl.stop)
        ref = self._ref.get(key)
        if ref is None:
            _, d1, d2 = PatchTable.field_derivatives(g, sl, self.X)
            P = d1.shape[0] * d1.shape[1]
            try:
                ref = reference_frame(d1.reshape(P, 2, 3), d2.reshape(P, 3, 3),
                                      self.material.thickness, self.theta3, self.w3)
            except ShellError as exc:
                raise AssemblyError(f"degenerate reference geometry: {exc}", g.faces[sl]) from exc
            self._ref[key] = ref
        return ref


def _deformed(disc: Discretization, g, sl, u):
    x = disc.X + u
    val, d1, d2 = PatchTable.field_derivatives(g, sl, x)
    P = d1.shape[0] * d1.shape[1]
    ref = disc.reference(g, sl)
    dfm = deformed_frame(d1.reshape(P, 2, 3), d2.reshape(P, 3, 3), ref.J,
                         disc.material.incompressible)
    return ref, dfm, val.reshape(P, 3)


def _locate_failure(disc, g, sl, u, fn):
    bad = []
    for e in range(sl.start, sl.stop):
        try:
            fn(disc, g, slice(e, e + 1), u)
        except ShellError:
            bad.append(int(g.faces[e]))
    return bad


def _internal_chunk(disc: Discretization, g, sl, u, want_k=True):
    ref, dfm, _ = _deformed(disc, g, sl, u)
    st = strain_state(ref, dfm)
    res = stress_resultants(disc.material, ref, st)
    E = sl.stop - sl.start
    Q = len(disc.weights)
    n = g.dofs.shape[1]
    P = E * Q
    var = strain_variations(g.Nd1[sl].reshape(P, n, 2), g.Nd2[sl].reshape(P, n, 3), g.comp,
                            ref, dfm, disc.material.incompressible)
    wq = (np.tile(disc.weights, E) * ref.J)  # (P,)
    nv = to_voigt_stress(res.n)
    mv = to_voigt_stress(res.m)
    r = np.einsum("p,pri,pi->pr", wq, var.d_eps, nv) + np.einsum("p,pri,pi->pr", wq, var.d_kappa, mv)
    r_e = r.reshape(E, Q, n).sum(axis=1)
    energy = (wq * res.energy).reshape(E, Q).sum(axis=1)
    if not want_k:
        return r_e, None, energy
    Ls, Rs = [], []
    for L, R in tangent_factors(var, res):
        k = L.shape[2]
        Ls.append(np.swapaxes((wq[:, None, None] * L).reshape(E, Q, n, k), 1, 2).reshape(E, n, Q * k))
        Rs.append(np.swapaxes(R.reshape(E, Q, n, k), 1, 2).reshape(E, n, Q * k))
    K_e = np.matmul(np.concatenate(Ls, axis=2), np.swapaxes(np.concatenate(Rs, axis=2), 1, 2))
    return r_e, K_e, energy


def _pressure_chunk(disc: Discretization, g, sl, u, p):
    ref, dfm, _ = _deformed(disc, g, sl, u)
    E = sl.stop - sl.start
    Q = len(disc.weights)
    n = g.dofs.shape[1]
    P = E * Q
    N = g.N[sl].reshape(P, n)
    Nd1 = g.Nd1[sl].reshape(P, n, 2)
    wq = np.tile(disc.weights, E) * p
    a3t_c = dfm.a3_tilde[:, g.comp]  # (P, n)
    f = (wq[:, None] * N * a3t_c).reshape(E, Q, n).sum(axis=1)
    Ecomp = np.eye(3)[g.comp]
    a = dfm.a
    d_a3t = Nd1[..., 0, None] * np.cross(Ecomp[None], a[:, None, 1]) \
        + Nd1[..., 1, None] * np.cross(a[:, None, 0], Ecomp[None])  # (P, s, 3)
    L = (wq[:, None] * N)[..., None] * Ecomp[None]  # (P, r, 3)
    L = np.swapaxes(L.reshape(E, Q, n, 3), 1, 2).reshape(E, n, Q * 3)
    R = np.swapaxes(d_a3t.reshape(E, Q, n, 3), 1, 2).reshape(E, n, Q * 3)
    return f, np.matmul(L, np.swapaxes(R, 1, 2))


def element_internal(disc: Discretization, face: int, u):
    """Internal force vector and tangent of one face with its global DOF ids."""
    g, e = _find_face(disc, face)
    sl = slice(e, e + 1)
    try:
        r, K, _ = _internal_chunk(disc, g, sl, np.asarray(u, dtype=float))
    except ShellError as exc:
        raise AssemblyError(f"face {face}: {exc}", [face]) from exc
    return r[0], K[0], g.dofs[e].copy()


def pressure_load(disc: Discretization, face: int, u, p: float):
    """Follower pressure force and its tangent ``dF/du`` for one face."""
    if not np.isfinite(p):
        raise ValueError("pressure must be finite")
    g, e = _find_face(disc, face)
    sl = slice(e, e + 1)
    try:
        f, K = _pressure_chunk(disc, g, sl, np.asarray(u, dtype=float), p)
    except ShellError as exc:
        raise AssemblyError(f"face {face}: {exc}", [face]) from exc
    return f[0], K[0], g.dofs[e].copy()


def _find_face(disc, face):
    for g in disc.table.groups:
        hit = np.flatnonzero(g.faces == face)
        if hit.size:
            return g, int(hit[0])
    raise MeshError(f"face {face} does not exist")


def _to_csr(disc, rows, cols, vals, n):
    """Sum element entries into CSR with a pattern cached on ``disc``."""
    pat = getattr(disc, "_pattern", None)
    if pat is None or pat[3] != vals.size:
        keys = np.concatenate(rows).astype(np.int64) * n + np.concatenate(cols)
        uniq, inv = np.unique(keys, return_inverse=True)
        r, c = np.divmod(uniq, n)
        indptr = np.searchsorted(r, np.arange(n + 1))
        pat = (indptr, c, inv, vals.size)
        disc._pattern = pat
    indptr, c, inv, _ = pat
    data = np.bincount(inv, weights=vals, minlength=c.size)
    return sp.csr_matrix((data, c, indptr), shape=(n, n))


@dataclass
class AssembledSystem:
    R: np.ndarray
    K: sp.csr_matrix
    F_ext: np.ndarray
    F_int: np.ndarray
    energy: float
    kappa: float
    dofmap: DofMap

    @property
    def R_free(self) -> np.ndarray:
        return self.R[self.dofmap.free]

    @property
    def K_free(self) -> sp.csr_matrix:
        f = self.dofmap.free
        return self.K[f][:, f].tocsc()


def assemble(disc: Discretization, dofmap: DofMap, u, kappa: float = 0.0, p_ref: float = 0.0,
             tangent: bool = True) -> AssembledSystem:
    """Global residual ``F_int - kappa F_ext`` and tangent at state ``u``.

    ``u`` must already carry the prescribed values of constrained DOFs; the
    reduced system is obtained through :attr:`AssembledSystem.R_free` and
    :attr:`AssembledSystem.K_free`.
    """
    u = np.asarray(u, dtype=float)
    n = disc.n_dofs
    if u.shape != (n,):
        raise ValueError(f"state vector has shape {u.shape}, expected ({n},)")
    if not np.all(np.isfinite(u)):
        raise ValueError("state vector contains non-finite values")
    p = kappa * p_ref
    F_int = np.zeros(n)
    F_ext = np.zeros(n)
    rows, cols, vals = [], [], []
    energy = 0.0
    failed = []
    for g, sl in disc.chunks():
        dofs = g.dofs[sl]
        try:
            r, K, en = _internal_chunk(disc, g, sl, u, tangent)
            if p != 0.0 or p_ref != 0.0:
                f, Kf = _pressure_chunk(disc, g, sl, u, p_ref)
            else:
                f = Kf = None
        except ShellError:
            failed += _locate_failure(disc, g, sl, u, lambda d, gg, s, uu: _internal_chunk(d, gg, s, uu, False))
            continue
        np.add.at(F_int, dofs.ravel(), r.ravel())
        energy += float(en.sum())
        if f is not None:
            np.add.at(F_ext, dofs.ravel(), f.ravel())
        if tangent:
            Kt = K if Kf is None else K - kappa * Kf
            nd = dofs.shape[1]
            rows.append(np.repeat(dofs, nd, axis=1).ravel())
            cols.append(np.tile(dofs, (1, nd)).ravel())
            vals.append(Kt.ravel())
    if failed:
        raise AssemblyError(f"element evaluation failed on faces {failed[:20]}", failed)
    if tangent:
        Kg = _to_csr(disc, rows, cols, np.concatenate(vals), n)
    else:
        Kg = None
    return AssembledSystem(F_int - kappa * F_ext, Kg, F_ext, F_int, energy, kappa, dofmap)


# ---------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------
def enclosed_volume(disc: Discretization, u, symmetry_factor: float | None = None) -> float:
    """Volume enclosed by the deformed limit surface.

    Closed meshes use ``V = (1/3) \\oint x . a3 dA``. An open mesh is
    accepted only when every boundary edge is a mirror plane; the planes are
    assumed to pass through the origin, and ``symmetry_factor`` (default
    ``2**n_planes``) scales the sector volume.
    """
    mesh = disc.mesh
    if not mesh.is_closed:
        bnd = mesh.boundary_edges
        if not mesh.mirror_axes or any(tuple(sorted(e)) not in mesh.mirror_axes for e in bnd):
            raise MeshError("enclosed volume needs a closed mesh or mirror-plane boundaries")
        if symmetry_factor is None:
            symmetry_factor = 2.0 ** len(set(mesh.mirror_axes.values()))
    elif symmetry_factor is None:
        symmetry_factor = 1.0
    u = np.asarray(u, dtype=float)
    total = 0.0
    for g, sl in disc.chunks():
        ref, dfm, x = _deformed(disc, g, sl, u)
        E = sl.stop - sl.start
        w = np.tile(disc.weights, E)
        total += float(np.sum(w * np.einsum("pi,pi->p", x, dfm.a3_tilde)))
    return symmetry_factor * total / 3.0


def energy_density(disc: Discretization, u) -> np.ndarray:
    """Area-averaged mid-surface membrane energy density ``n^ab eps_ab`` per face."""
    u = np.asarray(u, dtype=float)
    out = np.zeros(disc.mesh.n_faces)
    for g, sl in disc.chunks():
        ref, dfm, _ = _deformed(disc, g, sl, u)
        st = strain_state(ref, dfm)
        res = stress_resultants(disc.material, ref, st)
        E = sl.stop - sl.start
        dens = np.einsum("pab,pab->p", res.n, st.eps)
        w = np.tile(disc.weights, E) * ref.J
        num = (w * dens).reshape(E, -1).sum(axis=1)
        den = w.reshape(E, -1).sum(axis=1)
        out[g.faces[sl]] = num / den
    return out


def sample_displacements(disc: Discretization, u, table: PatchTable | None = None) -> np.ndarray:
    """Displacement vectors at the quadrature points (or at ``table`` points)."""
    tab = table or disc.table
    u = np.asarray(u, dtype=float)
    vals = []
    for g, sl in tab.chunks():
        val, _, _ = PatchTable.field_derivatives(g, sl, u)
        vals.append(val.reshape(-1, 3))
    return np.concatenate(vals) if vals else np.zeros((0, 3))
