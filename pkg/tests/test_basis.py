import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _meshes import (
    child_coordinates,
    child_index,
    grid_mesh,
    star_mesh,
    surface_point,
    to_face_frame,
)
from shellpath.basis import (
    MAX_DEPTH,
    _irregular_basis,
    bspline_basis_row,
    eval_patch_basis,
    gauss_rule_2d,
    real_basis,
    regular_basis,
)
from shellpath.mesh import catmull_clark_subdivide, patch_stencil

unit = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)
interior = st.floats(min_value=0.02, max_value=0.98, allow_nan=False)

# position of the regular 4x4 grid points in the 2n+8 ordering (n = 4)
_RING4 = [(1, 1), (2, 1), (2, 2), (1, 2), (0, 2), (0, 1), (0, 0), (1, 0), (2, 0),
          (3, 0), (3, 1), (3, 2), (3, 3), (2, 3), (1, 3), (0, 3)]


@given(unit)
def test_bspline_row_partition_of_unity(t):
    val, d1, d2 = bspline_basis_row(t)
    assert abs(val.sum() - 1.0) < 1e-14
    assert abs(d1.sum()) < 1e-14
    assert abs(d2.sum()) < 1e-13
    assert np.all(val >= -1e-16)


def test_bspline_row_rejects_outside():
    with pytest.raises(ValueError):
        bspline_basis_row(1.5)


def test_bspline_row_derivatives_match_finite_differences():
    h = 1e-6
    for t in (0.2, 0.5, 0.8):
        v0, d1, d2 = bspline_basis_row(t)
        vp, d1p, _ = bspline_basis_row(t + h)
        vm, d1m, _ = bspline_basis_row(t - h)
        np.testing.assert_allclose((vp - vm) / (2 * h), d1, atol=1e-9)
        np.testing.assert_allclose((d1p - d1m) / (2 * h), d2, atol=1e-8)


@pytest.mark.parametrize("n", [3, 4, 5, 6, 8, 10])
@settings(max_examples=25, deadline=None)
@given(u=unit, v=unit)
def test_partition_of_unity(n, u, v):
    b = eval_patch_basis(n, u, v)
    assert b.values.shape == (2 * n + 8,)
    assert abs(b.values.sum() - 1.0) < 1e-12
    assert np.max(np.abs(b.d1.sum(axis=0))) < 1e-9
    assert np.max(np.abs(b.d2.sum(axis=0))) < 1e-6


@settings(max_examples=30, deadline=None)
@given(u=interior, v=interior)
def test_valence_four_ring_matches_tensor_product(u, v):
    reg = regular_basis(u, v)
    val, d1, d2, _ = _irregular_basis(4, u, v)
    order = [i + 4 * j for i, j in _RING4]
    np.testing.assert_allclose(val, reg[0][order], atol=1e-12)
    np.testing.assert_allclose(d1, reg[1][order], atol=1e-10)
    np.testing.assert_allclose(d2, reg[2][order], atol=1e-7)


def test_extraordinary_corner_is_flagged():
    b = eval_patch_basis(5, 0.0, 0.0)
    assert b.flagged
    assert not eval_patch_basis(5, 0.3, 0.2).flagged
    assert not eval_patch_basis(4, 0.0, 0.0).flagged


def test_parameter_outside_square_is_rejected():
    with pytest.raises(ValueError):
        eval_patch_basis(5, 1.2, 0.3)


def test_gauss_rule_integrates_bicubic_exactly():
    pts, w = gauss_rule_2d(3)
    assert abs(w.sum() - 1.0) < 1e-15
    f = pts[:, 0] ** 5 * pts[:, 1] ** 4
    assert abs(w @ f - 1.0 / 30.0) < 1e-14


def _global_subdivision_point(mesh, face, u, v, levels):
    """Evaluate by subdividing the whole mesh until the point is in a regular face."""
    J = np.eye(2)
    for _ in range(levels):
        c = child_index(u, v)
        u, v, A = child_coordinates(c, u, v)
        J = A @ J
        mesh = catmull_clark_subdivide(mesh)
        face = 4 * face + c
    st_ = patch_stencil(mesh, face)
    assert st_.regular
    x, d, _ = surface_point(mesh, face, u, v, st_)
    return x, J.T @ d


@pytest.mark.parametrize("valence", [3, 5, 6])
def test_irregular_patch_matches_global_subdivision(valence):
    mesh = star_mesh(valence, seed=valence)
    centre = int(np.flatnonzero(mesh.valence == valence)[0])
    faces = [f for f in range(mesh.n_faces) if centre in mesh.faces[f]]
    for face in faces[:2]:
        quad = list(mesh.faces[face])
        k = quad.index(centre)
        for (s, t) in [(0.1, 0.07), (0.3, 0.05), (0.02, 0.04)]:
            levels = int(np.floor(-np.log2(max(s, t)))) + 1
            u, v, _ = to_face_frame(k, s, t)
            x_ref, d_ref = _global_subdivision_point(mesh, face, u, v, levels)
            x, d, _ = surface_point(mesh, face, u, v)
            assert np.max(np.abs(x - x_ref)) < 1e-8
            assert np.max(np.abs(d - d_ref)) < 1e-8


def _edge_frames(quad, a, b):
    """Edge a->b of a face: start corner, direction along the edge and inward normal."""
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    ia, ib = quad.index(a), quad.index(b)
    p, q = corners[ia], corners[ib]
    e = q - p
    centre = np.array([0.5, 0.5])
    mid = 0.5 * (p + q)
    n = centre - mid
    n = n / np.linalg.norm(n)
    return p, e, n


def _seam_errors(mesh, tau=(0.25, 0.5, 0.75)):
    errs0, errs1, errs2 = [], [], []
    for a, b in mesh.edges:
        fl = mesh.edge_faces(a, b)
        if len(fl) != 2:
            continue
        f, g = fl
        qf, qg = list(mesh.faces[f]), list(mesh.faces[g])
        pf, ef, nf = _edge_frames(qf, a, b)
        pg, eg, ng = _edge_frames(qg, a, b)
        for s in tau:
            uf = pf + s * ef
            ug = pg + s * eg
            xf, df, hf = surface_point(mesh, f, *uf)
            xg, dg, hg = surface_point(mesh, g, *ug)
            errs0.append(np.max(np.abs(xf - xg)))
            errs1.append(np.max(np.abs(ef @ df - eg @ dg)))
            errs1.append(np.max(np.abs(nf @ df + ng @ dg)))
            hnn_f = np.einsum("i,j,ijk->k", nf, nf, hf)
            hnn_g = np.einsum("i,j,ijk->k", ng, ng, hg)
            errs2.append(np.max(np.abs(hnn_f - hnn_g)))
    return max(errs0), max(errs1), max(errs2)


@pytest.mark.parametrize("valence", [3, 5, 7])
def test_c1_seams_around_extraordinary_vertex(valence):
    mesh = star_mesh(valence, seed=1)
    e0, e1, _ = _seam_errors(mesh)
    assert e0 < 1e-9
    assert e1 < 1e-9


def test_c2_seams_on_regular_mesh():
    rng = np.random.default_rng(3)
    mesh = grid_mesh(5, 5)
    V = mesh.vertices.copy()
    V[:, 2] = 0.2 * rng.normal(size=len(V))
    e0, e1, e2 = _seam_errors(mesh.with_vertices(V))
    assert max(e0, e1, e2) < 1e-9


@settings(max_examples=10, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_affine_invariance(seed):
    rng = np.random.default_rng(seed)
    mesh = star_mesh(5, seed=2)
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    A = Q * rng.uniform(0.5, 2.0)
    t = rng.normal(size=3)
    moved = mesh.with_vertices(mesh.vertices @ A.T + t)
    for face in (0, 7, 23):
        x, d, _ = surface_point(mesh, face, 0.3, 0.6)
        y, e, _ = surface_point(moved, face, 0.3, 0.6)
        np.testing.assert_allclose(y, A @ x + t, atol=1e-10)
        np.testing.assert_allclose(e, d @ A.T, atol=1e-10)


def test_boundary_patch_reproduces_linear_fields():
    mesh = grid_mesh(3, 3)
    for face in range(mesh.n_faces):
        stc = patch_stencil(mesh, face)
        b = eval_patch_basis(stc, 0.3, 0.8)
        val, d1, _ = real_basis(stc, b)
        X = mesh.vertices[stc.indices]
        x = np.einsum("mk,mk->k", val, X)
        i, j = face % 3, face // 3
        np.testing.assert_allclose(x[:2], [(i + 0.3) / 3, (j + 0.8) / 3], atol=1e-13)
        np.testing.assert_allclose(np.einsum("mkx,mk->xk", d1, X)[:, :2], np.eye(2) / 3, atol=1e-13)


def test_max_depth_is_bounded():
    assert 1 <= MAX_DEPTH <= 16
    b = eval_patch_basis(5, 2.0**-(MAX_DEPTH + 3), 0.0)
    assert np.all(np.isfinite(b.d2))
