"""Bind a discretized shell to the continuation driver."""

from __future__ import annotations

import numpy as np

from .assembly import DofMap, Discretization, PatchTable, assemble, enclosed_volume, sample_displacements
from .continuation import ContinuationProblem

__all__ = ["ShellProblem"]


class ShellProblem:
    """Discretization, constraints and reference pressure of one analysis.

    Calling the instance with a free-DOF vector and a load factor returns the
    reduced ``(R, K, F_ext)`` triple expected by the solvers.
    """

    def __init__(self, mesh, material, fixes=(), p_ref: float = 1.0, symmetry_factor=None,
                 order: int = 3, thickness_points: int = 2):
        self.disc = Discretization(mesh, material, order, thickness_points)
        self.dofmap = DofMap.from_fixes(mesh.n_vertices, fixes)
        self.p_ref = float(p_ref)
        self.symmetry_factor = symmetry_factor
        self._corner_table = None
        self.n_assemblies = 0
        self._last = None  # (u bytes, kappa, result) of the latest full assembly

    @property
    def mesh(self):
        return self.disc.mesh

    def full(self, u_free) -> np.ndarray:
        return self.dofmap.expand(u_free)

    def __call__(self, u_free, kappa: float):
        key = np.asarray(u_free, dtype=float).tobytes()
        if self._last is not None and self._last[0] == key and self._last[1] == kappa:
            R, K, F = self._last[2]
            return R.copy(), K, F.copy()
        sys = assemble(self.disc, self.dofmap, self.full(u_free), kappa, self.p_ref)
        self.n_assemblies += 1
        out = (sys.R_free, sys.K_free, sys.F_ext[self.dofmap.free])
        self._last = (key, float(kappa), out)
        return out[0].copy(), out[1], out[2].copy()

    def residual(self, u_free, kappa: float):
        """Reduced residual and load vector without assembling the tangent."""
        key = np.asarray(u_free, dtype=float).tobytes()
        if self._last is not None and self._last[0] == key and self._last[1] == kappa:
            return self._last[2][0].copy(), self._last[2][2].copy()
        sys = assemble(self.disc, self.dofmap, self.full(u_free), kappa, self.p_ref, tangent=False)
        self.n_assemblies += 1
        return sys.R_free, sys.F_ext[self.dofmap.free]

    def residual_norm(self, u_free, kappa: float) -> float:
        sys = assemble(self.disc, self.dofmap, self.full(u_free), kappa, self.p_ref, tangent=False)
        return float(np.linalg.norm(sys.R_free))

    def volume(self, u_free) -> float:
        closed = self.mesh.is_closed
        if not closed and not self.mesh.mirror_axes:
            return float("nan")
        return enclosed_volume(self.disc, self.full(u_free), self.symmetry_factor)

    def corner_table(self) -> PatchTable:
        """Basis at face corners and centres, for displacement maxima."""
        if self._corner_table is None:
            pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]])
            self._corner_table = PatchTable(self.mesh, pts)
        return self._corner_table

    def max_disp(self, u_free) -> float:
        """Largest displacement magnitude over face corners, centres and quadrature points."""
        u = self.full(u_free)
        a = sample_displacements(self.disc, u)
        b = sample_displacements(self.disc, u, self.corner_table())
        return float(np.sqrt(max(np.max(np.sum(a**2, 1)), np.max(np.sum(b**2, 1)))))

    def continuation_problem(self, on_step=None) -> ContinuationProblem:
        return ContinuationProblem(self, self.dofmap.n_free, self.p_ref, self.volume, self.max_disp,
                                   on_step)
