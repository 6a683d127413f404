import numpy as np
import pytest

from _meshes import cube_mesh, grid_mesh
from shellpath.assembly import (
    AssemblyError,
    Discretization,
    DofMap,
    assemble,
    element_internal,
    enclosed_volume,
    energy_density,
    pressure_load,
)
from shellpath.benchmarks import sphere, sphere_octant
from shellpath.mesh import MeshError, catmull_clark_subdivide
from shellpath.shell_core import MaterialParams

MR = MaterialParams("mooney_rivlin", 0.05, c1=0.8, c2=0.2)
SVK = MaterialParams("stvk", 0.05, E=10.0, nu=0.3)


def _cube(material=MR):
    mesh = catmull_clark_subdivide(catmull_clark_subdivide(cube_mesh()))
    return Discretization(mesh, material)


def _fd_jacobian(disc, dofmap, u, kappa, p_ref, dofs, h=1e-6):
    cols = []
    for d in dofs:
        e = np.zeros_like(u)
        e[d] = h
        rp = assemble(disc, dofmap, u + e, kappa, p_ref, tangent=False).R
        rm = assemble(disc, dofmap, u - e, kappa, p_ref, tangent=False).R
        cols.append((rp - rm) / (2 * h))
    return np.array(cols).T


@pytest.mark.parametrize("material", [MR, SVK], ids=lambda m: m.model)
def test_tangent_matches_residual_jacobian_with_follower_pressure(material):
    disc = _cube(material)
    dofmap = DofMap(disc.mesh.n_vertices)
    rng = np.random.default_rng(0)
    u = 0.08 * rng.normal(size=disc.n_dofs)
    kappa, p_ref = 0.7, 2.0
    sys = assemble(disc, dofmap, u, kappa, p_ref)
    dofs = rng.choice(disc.n_dofs, size=12, replace=False)
    fd = _fd_jacobian(disc, dofmap, u, kappa, p_ref, dofs)
    K = sys.K.toarray()[:, dofs]
    assert np.max(np.abs(K - fd)) <= 1e-5 * np.max(np.abs(K))
    # the follower part on its own
    Kp = (assemble(disc, dofmap, u, 1.0, p_ref).K - assemble(disc, dofmap, u, 0.0, p_ref).K).toarray()
    fdp = _fd_jacobian(disc, dofmap, u, 1.0, p_ref, dofs) - _fd_jacobian(disc, dofmap, u, 0.0, p_ref, dofs)
    assert np.max(np.abs(Kp[:, dofs] - fdp)) <= 1e-5 * np.max(np.abs(Kp))


def test_tangent_on_open_grid_with_constraints():
    mesh = grid_mesh(4, 4, z=lambda x, y: 0.2 * x * y)
    disc = Discretization(mesh, SVK)
    rim = [i for i, b in enumerate(mesh.is_boundary) if b]
    dofmap = DofMap.from_fixes(mesh.n_vertices, [(i, c) for i in rim for c in range(3)])
    rng = np.random.default_rng(1)
    u = dofmap.apply(0.03 * rng.normal(size=disc.n_dofs))
    sys = assemble(disc, dofmap, u, 0.5, 1.0)
    free = dofmap.free
    fd = _fd_jacobian(disc, dofmap, u, 0.5, 1.0, free)[free]
    K = sys.K_free.toarray()
    assert np.max(np.abs(K - fd)) <= 1e-5 * np.max(np.abs(K))
    assert sys.R_free.shape == (free.size,)


def test_internal_force_is_energy_gradient():
    disc = _cube()
    dofmap = DofMap(disc.mesh.n_vertices)
    rng = np.random.default_rng(2)
    u = 0.05 * rng.normal(size=disc.n_dofs)
    d = rng.normal(size=disc.n_dofs)
    h = 1e-6
    ep = assemble(disc, dofmap, u + h * d, tangent=False).energy
    em = assemble(disc, dofmap, u - h * d, tangent=False).energy
    f = assemble(disc, dofmap, u, tangent=False).F_int
    assert abs((ep - em) / (2 * h) - f @ d) <= 1e-6 * abs(f @ d)


def test_reference_state_is_stress_free():
    disc = _cube()
    sys = assemble(disc, DofMap(disc.mesh.n_vertices), np.zeros(disc.n_dofs))
    assert np.max(np.abs(sys.R)) < 1e-14
    assert abs(sys.energy) < 1e-14


def test_rigid_motion_leaves_no_internal_force():
    disc = _cube()
    X = disc.mesh.vertices
    Q, _ = np.linalg.qr(np.random.default_rng(3).normal(size=(3, 3)))
    Q *= np.sign(np.linalg.det(Q))
    u = (X @ Q.T + [0.3, -1.0, 2.0] - X).ravel()
    sys = assemble(disc, DofMap(disc.mesh.n_vertices), u, tangent=False)
    assert np.max(np.abs(sys.F_int)) < 1e-10


def test_unconstrained_tangent_has_six_rigid_modes():
    disc = _cube(SVK)
    K = assemble(disc, DofMap(disc.mesh.n_vertices), np.zeros(disc.n_dofs)).K.toarray()
    w = np.linalg.eigvalsh(0.5 * (K + K.T))
    assert np.all(np.abs(w[:6]) < 1e-9 * w[-1])
    assert w[6] > 1e-6 * w[-1]


def test_flat_square_pressure_sums_to_area():
    disc = Discretization(grid_mesh(3, 3), SVK)
    sys = assemble(disc, DofMap(disc.mesh.n_vertices), np.zeros(disc.n_dofs), 1.0, 2.5)
    F = sys.F_ext.reshape(-1, 3)
    np.testing.assert_allclose(F.sum(axis=0), [0.0, 0.0, 2.5], atol=1e-13)


def test_element_routines_agree_with_global_assembly():
    disc = _cube()
    rng = np.random.default_rng(4)
    u = 0.02 * rng.normal(size=disc.n_dofs)
    R = np.zeros(disc.n_dofs)
    F = np.zeros(disc.n_dofs)
    for f in range(disc.mesh.n_faces):
        r, K, dofs = element_internal(disc, f, u)
        np.testing.assert_allclose(K, K.T, atol=1e-10 * np.abs(K).max())
        np.add.at(R, dofs, r)
        fp, _, dofs = pressure_load(disc, f, u, 1.0)
        np.add.at(F, dofs, fp)
    sys = assemble(disc, DofMap(disc.mesh.n_vertices), u, 0.0, 1.0, tangent=False)
    np.testing.assert_allclose(R, sys.F_int, atol=1e-12)
    np.testing.assert_allclose(F, sys.F_ext, atol=1e-12)
    with pytest.raises(MeshError):
        element_internal(disc, disc.mesh.n_faces + 3, u)


def test_assembly_is_deterministic():
    disc = _cube()
    u = 0.01 * np.random.default_rng(5).normal(size=disc.n_dofs)
    a = assemble(disc, DofMap(disc.mesh.n_vertices), u, 0.3, 1.0)
    b = assemble(Discretization(disc.mesh, MR), DofMap(disc.mesh.n_vertices), u, 0.3, 1.0)
    assert np.array_equal(a.R, b.R)
    assert np.array_equal(a.K.toarray(), b.K.toarray())


def test_collapsed_state_reports_failing_faces():
    disc = _cube()
    u = -disc.mesh.vertices.ravel()
    with pytest.raises(AssemblyError) as info:
        assemble(disc, DofMap(disc.mesh.n_vertices), u)
    assert info.value.faces


def test_state_vector_is_validated():
    disc = _cube()
    dm = DofMap(disc.mesh.n_vertices)
    with pytest.raises(ValueError):
        assemble(disc, dm, np.zeros(5))
    bad = np.zeros(disc.n_dofs)
    bad[0] = np.nan
    with pytest.raises(ValueError):
        assemble(disc, dm, bad)


def test_dofmap_numbering_and_prescribed_values():
    dm = DofMap.from_fixes(4, [(0, 2), (3, 1, 0.25)])
    assert dm.n_dofs == 12 and dm.n_free == 10
    assert list(dm.constrained) == [2, 10]
    u = dm.expand(np.arange(10.0))
    assert u[2] == 0.0 and u[10] == 0.25
    np.testing.assert_array_equal(u[dm.free], np.arange(10.0))
    with pytest.raises(ValueError):
        DofMap(2, {6: 0.0})


def _sphere_volume_error(refine):
    b = sphere(refine)
    disc = Discretization(b.mesh, b.material)
    V = enclosed_volume(disc, np.zeros(disc.n_dofs))
    R = b.meta["radius"]
    return abs(V - 4.0 / 3.0 * np.pi * R**3) / (4.0 / 3.0 * np.pi * R**3)


def test_sphere_volume_converges():
    errs = [_sphere_volume_error(r) for r in range(3)]
    assert errs[0] <= 5e-3
    assert errs[0] / errs[1] >= 4.0
    assert errs[1] / errs[2] >= 4.0


def test_octant_volume_matches_full_sphere():
    b = sphere_octant()
    disc = Discretization(b.mesh, b.material)
    assert b.mesh.n_faces == 192
    V = enclosed_volume(disc, np.zeros(disc.n_dofs))
    R = b.meta["radius"]
    assert abs(V / (4.0 / 3.0 * np.pi * R**3) - 1.0) < 5e-3


def test_volume_is_translation_invariant_and_needs_closure():
    disc = _cube()
    V0 = enclosed_volume(disc, np.zeros(disc.n_dofs))
    V1 = enclosed_volume(disc, np.tile([1.0, -2.0, 0.5], disc.mesh.n_vertices))
    assert abs(V1 - V0) < 1e-12 * V0
    with pytest.raises(MeshError):
        enclosed_volume(Discretization(grid_mesh(2, 2), SVK), np.zeros(27))


def test_energy_density_is_zero_at_rest_and_positive_under_stretch():
    disc = _cube()
    assert np.all(np.abs(energy_density(disc, np.zeros(disc.n_dofs))) < 1e-14)
    u = 0.1 * disc.mesh.vertices.ravel()
    assert np.all(energy_density(disc, u) > 0.0)
