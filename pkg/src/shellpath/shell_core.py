"""Pointwise Kirchhoff-Love shell mechanics.

Every function works on batches of surface points: leading axis ``P``.
Second-order surface tensors are ``(P, 2, 2)``; second parametric
derivatives are stored as ``(P, 3, 3)`` with rows (11, 12, 22).
Through-thickness data carries an extra axis ``T`` for the thickness
quadrature points.

Voigt convention for in-plane tensors: stresses ``[S11, S22, S12]`` and
strains in engineering form ``[E11, E22, 2 E12]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ShellError",
    "MaterialParams",
    "ReferenceFrame",
    "DeformedFrame",
    "StrainState",
    "MaterialResponse",
    "Resultants",
    "VariationSet",
    "thickness_rule",
    "reference_frame",
    "deformed_frame",
    "surface_frames",
    "strain_state",
    "material_response",
    "strain_energy_density",
    "stress_resultants",
    "strain_variations",
    "geometric_contraction",
    "to_voigt_stress",
    "to_voigt_strain",
    "tangent_to_voigt",
    "tangent_factors",
]

VOIGT = ((0, 0), (1, 1), (0, 1))
_LEVI = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _LEVI[_i, _j, _k] = 1.0
    _LEVI[_j, _i, _k] = -1.0


class ShellError(ArithmeticError):
    """Degenerate geometry or inadmissible deformation at a surface point."""


@dataclass(frozen=True)
class MaterialParams:
    """Constitutive model and reference thickness.

    ``model`` is ``"mooney_rivlin"`` (incompressible, uses ``c1``, ``c2``) or
    ``"stvk"`` (Saint Venant-Kirchhoff, uses ``E``, ``nu``).
    """

    model: str
    thickness: float
    c1: float = 0.0
    c2: float = 0.0
    E: float = 0.0
    nu: float = 0.0

    def __post_init__(self):
        if self.thickness <= 0:
            raise ValueError("thickness must be positive")
        if self.model == "mooney_rivlin":
            if self.c1 < 0 or self.c2 < 0 or self.c1 + self.c2 <= 0:
                raise ValueError("Mooney-Rivlin needs c1, c2 >= 0 and c1 + c2 > 0")
        elif self.model == "stvk":
            if self.E <= 0 or not (0.0 <= self.nu < 0.5):
                raise ValueError("StVK needs E > 0 and 0 <= nu < 0.5")
        else:
            raise ValueError(f"unknown material model {self.model!r}")

    @property
    def incompressible(self) -> bool:
        return self.model == "mooney_rivlin"


def thickness_rule(thickness: float, npts: int = 2):
    """Gauss points and weights on ``[-h/2, h/2]``."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * thickness * x, 0.5 * thickness * w


def _inv2(M):
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    inv = np.empty_like(M)
    inv[..., 0, 0] = M[..., 1, 1]
    inv[..., 1, 1] = M[..., 0, 0]
    inv[..., 0, 1] = -M[..., 0, 1]
    inv[..., 1, 0] = -M[..., 1, 0]
    return inv / det[..., None, None], det


def _sym_d2(d2):
    """``(P, 3, 3)`` rows (11, 12, 22) -> ``(P, 2, 2, 3)``."""
    return np.stack([np.stack([d2[:, 0], d2[:, 1]], 1), np.stack([d2[:, 1], d2[:, 2]], 1)], 1)


# ---------------------------------------------------------------------
# Frames
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class ReferenceFrame:
    a: np.ndarray  # (P, 2, 3) covariant tangents
    a3: np.ndarray  # (P, 3) unit normal
    a_d2: np.ndarray  # (P, 2, 2, 3) second derivatives
    metric: np.ndarray  # (P, 2, 2)
    metric_contra: np.ndarray
    curvature: np.ndarray  # b_ab
    J: np.ndarray  # (P,)
    theta3: np.ndarray  # (T,)
    weights3: np.ndarray  # (T,)
    g_cov: np.ndarray  # (P, T, 2, 2) shell-space metric
    g_contra: np.ndarray
    g_vectors: np.ndarray  # (P, T, 2, 3)
    Jc: np.ndarray  # (P, T)


@dataclass(frozen=True)
class DeformedFrame:
    a: np.ndarray
    a3: np.ndarray
    a3_tilde: np.ndarray  # a1 x a2
    a_d2: np.ndarray
    metric: np.ndarray
    J: np.ndarray
    h: np.ndarray  # a_{a,b} . a3
    curvature: np.ndarray  # lam3 * h
    lam3: np.ndarray

    @property
    def d(self) -> np.ndarray:
        return self.lam3[:, None] * self.a3


def reference_frame(d1, d2, thickness: float, theta3=None, weights3=None) -> ReferenceFrame:
    """Reference mid-surface frame and shell-space data at thickness points."""
    if theta3 is None:
        theta3, weights3 = thickness_rule(thickness)
    theta3 = np.asarray(theta3, dtype=float)
    weights3 = np.asarray(weights3, dtype=float)
    a = np.asarray(d1, dtype=float)
    a_d2 = _sym_d2(np.asarray(d2, dtype=float))
    at = np.cross(a[:, 0], a[:, 1])
    J = np.linalg.norm(at, axis=1)
    if np.any(J <= 1e-14):
        bad = np.flatnonzero(J <= 1e-14)
        raise ShellError(f"singular reference geometry at points {bad[:5].tolist()}")
    a3 = at / J[:, None]
    metric = np.einsum("pai,pbi->pab", a, a)
    contra, _ = _inv2(metric)
    b = np.einsum("pabi,pi->pab", a_d2, a3)
    # Weingarten: a3_{,a} = -b_ag a^{gd} a_d
    a3_d = -np.einsum("pag,pgd,pdi->pai", b, contra, a)
    t = theta3[None, :, None, None]
    g_vec = a[:, None] + t * a3_d[:, None]
    g_cov = metric[:, None] - 2.0 * t * b[:, None]
    g_contra, _ = _inv2(g_cov)
    vol = np.abs(np.einsum("pti,pi->pt", np.cross(g_vec[:, :, 0], g_vec[:, :, 1]), a3))
    Jc = vol / J[:, None]
    return ReferenceFrame(a, a3, a_d2, metric, contra, b, J, theta3, weights3, g_cov, g_contra, g_vec, Jc)


def deformed_frame(d1, d2, ref_J, incompressible: bool = True) -> DeformedFrame:
    a = np.asarray(d1, dtype=float)
    a_d2 = _sym_d2(np.asarray(d2, dtype=float))
    at = np.cross(a[:, 0], a[:, 1])
    J = np.linalg.norm(at, axis=1)
    if np.any(J <= 1e-14):
        bad = np.flatnonzero(J <= 1e-14)
        raise ShellError(f"singular deformed geometry at points {bad[:5].tolist()}")
    a3 = at / J[:, None]
    metric = np.einsum("pai,pbi->pab", a, a)
    h = np.einsum("pabi,pi->pab", a_d2, a3)
    lam3 = ref_J / J if incompressible else np.ones_like(J)
    return DeformedFrame(a, a3, at, a_d2, metric, J, h, lam3[:, None, None] * h, lam3)


def surface_frames(geom_d1, geom_d2, disp_d1, disp_d2, thickness, theta3=None, weights3=None,
                   incompressible: bool = True):
    """Reference and deformed frames from geometry and displacement derivatives.

    The deformed configuration is ``x = xbar + u``, so its derivatives are
    the sums of the geometry and displacement derivatives.
    """
    ref = reference_frame(geom_d1, geom_d2, thickness, theta3, weights3)
    dfm = deformed_frame(
        np.asarray(geom_d1) + np.asarray(disp_d1),
        np.asarray(geom_d2) + np.asarray(disp_d2),
        ref.J,
        incompressible,
    )
    return ref, dfm


@dataclass(frozen=True)
class StrainState:
    eps: np.ndarray  # (P, 2, 2) membrane strain
    kappa: np.ndarray  # (P, 2, 2) bending strain


def strain_state(ref: ReferenceFrame, dfm: DeformedFrame) -> StrainState:
    eps = 0.5 * (dfm.metric - ref.metric)
    kap = -dfm.curvature + ref.curvature
    eps = 0.5 * (eps + np.swapaxes(eps, 1, 2))
    kap = 0.5 * (kap + np.swapaxes(kap, 1, 2))
    return StrainState(eps, kap)


# ---------------------------------------------------------------------
# Constitutive response
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class MaterialResponse:
    S: np.ndarray  # (..., 2, 2) contravariant PK2 components
    C_hat: np.ndarray  # (..., 2, 2, 2, 2) condensed tangent
    p: np.ndarray | None  # Lagrange multiplier (Mooney-Rivlin)
    lam3: np.ndarray  # thickness stretch used in the update
    S33: np.ndarray | None = None


def _sym_outer(A, B):
    """``A^{ac} B^{bd} + A^{ad} B^{bc}``."""
    return np.einsum("...ac,...bd->...abcd", A, B) + np.einsum("...ad,...bc->...abcd", A, B)


def material_response(params: MaterialParams, g_contra, C) -> MaterialResponse:
    """In-plane PK2 stress and plane-stress tangent.

    ``g_contra`` is the contravariant reference metric at the thickness point,
    ``C`` the covariant in-plane Cauchy-Green components ``g_ab``. For the
    incompressible model the thickness stretch follows from ``det F = 1``.
    """
    G = np.asarray(g_contra, dtype=float)
    C = np.asarray(C, dtype=float)
    Cinv, detC = _inv2(C)
    if np.any(detC <= 0) or np.any(C[..., 0, 0] <= 0):
        bad = np.flatnonzero(np.ravel(detC <= 0) | np.ravel(C[..., 0, 0] <= 0))
        raise ShellError(f"non-positive-definite C at quadrature points {bad[:5].tolist()}")
    if params.model == "stvk":
        lam_bar = params.E * params.nu / (1.0 - params.nu**2)
        mu = params.E / (2.0 * (1.0 + params.nu))
        Gcov, _ = _inv2(G)
        Ecov = 0.5 * (C - Gcov)
        trE = np.einsum("...ab,...ab->...", G, Ecov)
        S = lam_bar * trE[..., None, None] * G + 2.0 * mu * np.einsum("...ag,...gd,...db->...ab", G, Ecov, G)
        Ch = lam_bar * np.einsum("...ab,...cd->...abcd", G, G) + mu * _sym_outer(G, G)
        return MaterialResponse(S, Ch, None, np.ones(C.shape[:-2]))

    c1, c2 = params.c1, params.c2
    _, detG = _inv2(G)
    C33 = 1.0 / (detG * detC)  # det(gbar_ab) / det(C_ab)
    tr2 = np.einsum("...ab,...ab->...", C, G)
    GCG = np.einsum("...ag,...gd,...db->...ab", G, C, G)
    dW = c1 * G + c2 * ((tr2 + C33)[..., None, None] * G - GCG)
    dW33 = c1 + c2 * tr2
    d2W = c2 * np.einsum("...ab,...cd->...abcd", G, G) - 0.5 * c2 * _sym_outer(G, G)
    d2W_33 = c2 * G
    d2W_3333 = 0.0
    p = 2.0 * C33 * dW33
    S = 2.0 * dW - p[..., None, None] * Cinv
    S33 = 2.0 * dW33 - p / C33
    # tangent with C33 held fixed, then static condensation of dE33
    dp = 2.0 * d2W_33 * C33[..., None, None]
    C4 = (
        4.0 * d2W
        - 2.0 * np.einsum("...cd,...ab->...abcd", dp, Cinv)
        - 2.0 * np.einsum("...ab,...cd->...abcd", dp, Cinv)
        - p[..., None, None, None, None]
        * (np.einsum("...ab,...cd->...abcd", Cinv, Cinv) - _sym_outer(Cinv, Cinv))
    )
    X = 6.0 * dW33 + 4.0 * d2W_3333 * C33
    C_ab33 = -Cinv * X[..., None, None]
    C_3333 = -X / C33
    Ch = C4 - np.einsum("...ab,...cd->...abcd", C_ab33, C_ab33) / C_3333[..., None, None, None, None]
    return MaterialResponse(S, Ch, p, np.sqrt(C33), S33)


def strain_energy_density(params: MaterialParams, g_contra, C):
    """Strain energy per unit reference volume (plane-stress reduced)."""
    G = np.asarray(g_contra, dtype=float)
    C = np.asarray(C, dtype=float)
    _, detC = _inv2(C)
    M = np.einsum("...ag,...gb->...ab", G, C)
    trM = M[..., 0, 0] + M[..., 1, 1]
    trM2 = np.einsum("...ab,...ba->...", M, M)
    if params.model == "stvk":
        lam_bar = params.E * params.nu / (1.0 - params.nu**2)
        mu = params.E / (2.0 * (1.0 + params.nu))
        E = 0.5 * (M - np.eye(2))
        trE = E[..., 0, 0] + E[..., 1, 1]
        return 0.5 * lam_bar * trE**2 + mu * np.einsum("...ab,...ba->...", E, E)
    _, detG = _inv2(G)
    C33 = 1.0 / (detG * detC)
    I1 = trM + C33
    I2 = 0.5 * (I1**2 - trM2 - C33**2)
    return params.c1 * (I1 - 3.0) + params.c2 * (I2 - 3.0)


def to_voigt_stress(S):
    return np.stack([S[..., i, j] for i, j in VOIGT], axis=-1)


def to_voigt_strain(E):
    return np.stack([E[..., 0, 0], E[..., 1, 1], 2.0 * E[..., 0, 1]], axis=-1)


def tangent_to_voigt(Ch):
    return np.stack(
        [np.stack([Ch[..., i, j, k, l] for k, l in VOIGT], axis=-1) for i, j in VOIGT], axis=-2
    )


# ---------------------------------------------------------------------
# Stress resultants
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class Resultants:
    n: np.ndarray  # (P, 2, 2)
    m: np.ndarray
    Dnn: np.ndarray  # (P, 3, 3) Voigt
    Dnm: np.ndarray
    Dmn: np.ndarray
    Dmm: np.ndarray
    energy: np.ndarray  # (P,) strain energy per unit reference area


def stress_resultants(params: MaterialParams, ref: ReferenceFrame, strain: StrainState) -> Resultants:
    """Integrate stress and tangent through the thickness."""
    t = ref.theta3
    C = ref.g_cov + 2.0 * (strain.eps[:, None] + t[None, :, None, None] * strain.kappa[:, None])
    resp = material_response(params, ref.g_contra, C)
    wJ = ref.Jc * ref.weights3[None, :]  # (P, T)
    wt = wJ * t[None, :]
    wtt = wt * t[None, :]
    n = np.einsum("pt,ptab->pab", wJ, resp.S)
    m = np.einsum("pt,ptab->pab", wt, resp.S)
    D = tangent_to_voigt(resp.C_hat)
    Dnn = np.einsum("pt,ptij->pij", wJ, D)
    Dnm = np.einsum("pt,ptij->pij", wt, D)
    Dmm = np.einsum("pt,ptij->pij", wtt, D)
    W = strain_energy_density(params, ref.g_contra, C)
    energy = np.einsum("pt,pt->p", wJ, W)
    return Resultants(n, m, Dnn, Dnm, Dnm.copy(), Dmm, energy)


# ---------------------------------------------------------------------
# Variations with respect to element DOFs
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class VariationSet:
    """First variations per DOF and helpers for the second variations.

    DOF ``r`` moves control point ``r // 3`` along Cartesian axis
    ``comp[r]``; its basis function derivatives are ``Nd1[:, r]`` and
    ``Nd2[:, r]``.
    """

    comp: np.ndarray  # (n,)
    Nd1: np.ndarray  # (P, n, 2)
    Nd2: np.ndarray  # (P, n, 3)
    d_a3t: np.ndarray  # (P, n, 3) first variation of a1 x a2
    d_J: np.ndarray  # (P, n)
    d_a3: np.ndarray  # (P, n, 3)
    d_lam3: np.ndarray  # (P, n)
    d_eps: np.ndarray  # (P, n, 3) Voigt engineering
    d_kappa: np.ndarray  # (P, n, 3)
    ref: ReferenceFrame
    dfm: DeformedFrame
    incompressible: bool

    def eps_tensor(self):
        """First variation of eps as ``(P, n, 2, 2)``."""
        return _voigt_eng_to_tensor(self.d_eps)

    def kappa_tensor(self):
        return _voigt_eng_to_tensor(self.d_kappa)

    def second_eps(self):
        """``delta_s delta_r eps_ab`` as ``(P, n, n, 2, 2)``."""
        same = (self.comp[:, None] == self.comp[None, :]).astype(float)
        t = np.einsum("pra,psb->prsab", self.Nd1, self.Nd1) * same[None, :, :, None, None]
        return 0.5 * (t + np.swapaxes(t, 3, 4))

    def second_kappa(self):
        """``delta_s delta_r kappa_ab`` as ``(P, n, n, 2, 2)``."""
        P, n = self.d_J.shape
        out = np.empty((P, n, n, 2, 2))
        for a in range(2):
            for b in range(a, 2):
                E = np.zeros((P, 2, 2))
                E[:, a, b] = 1.0
                if a != b:
                    E[:, b, a] = 0.0
                val = kappa_second_contraction(self, E)
                out[:, :, :, a, b] = val
                out[:, :, :, b, a] = val
        return out


def _voigt_eng_to_tensor(v):
    t = np.empty(v.shape[:-1] + (2, 2))
    t[..., 0, 0] = v[..., 0]
    t[..., 1, 1] = v[..., 1]
    t[..., 0, 1] = t[..., 1, 0] = 0.5 * v[..., 2]
    return t


def strain_variations(Nd1, Nd2, comp, ref: ReferenceFrame, dfm: DeformedFrame,
                      incompressible: bool = True) -> VariationSet:
    """First variations of frame and strain quantities for every DOF."""
    comp = np.asarray(comp)
    E = np.eye(3)[comp]  # (n, 3)
    a = dfm.a
    # delta_r a_a . a_b = Nd1[r, a] * a_b[comp_r]
    a_c = a[:, :, comp]  # (P, 2, n)
    da_a = np.einsum("pra,pbr->prab", Nd1, a_c)
    d_eps_t = 0.5 * (da_a + np.swapaxes(da_a, 2, 3))
    cross1 = np.cross(E[None], a[:, None, 1])  # e_c x a2
    cross2 = np.cross(a[:, None, 0], E[None])  # a1 x e_c
    d_a3t = Nd1[..., 0, None] * cross1 + Nd1[..., 1, None] * cross2
    d_J = np.einsum("pri,pi->pr", d_a3t, dfm.a3)
    d_a3 = (d_a3t - d_J[..., None] * dfm.a3[:, None]) / dfm.J[:, None, None]
    if incompressible:
        d_lam3 = -dfm.lam3[:, None] * d_J / dfm.J[:, None]
    else:
        d_lam3 = np.zeros_like(d_J)
    a3_c = dfm.a3[:, comp]  # (P, n)
    Nd2t = _sym_d2_dof(Nd2)  # (P, n, 2, 2)
    add2_a3 = np.einsum("pabi,pri->prab", dfm.a_d2, d_a3)
    d_kap_t = -dfm.lam3[:, None, None, None] * (Nd2t * a3_c[..., None, None] + add2_a3) \
        - d_lam3[..., None, None] * dfm.h[:, None]
    return VariationSet(
        comp, Nd1, Nd2, d_a3t, d_J, d_a3, d_lam3,
        to_voigt_strain(d_eps_t), to_voigt_strain(d_kap_t), ref, dfm, incompressible,
    )


def _sym_d2_dof(Nd2):
    out = np.empty(Nd2.shape[:-1] + (2, 2))
    out[..., 0, 0] = Nd2[..., 0]
    out[..., 0, 1] = out[..., 1, 0] = Nd2[..., 1]
    out[..., 1, 1] = Nd2[..., 2]
    return out


def _second_a3t_dot(var: VariationSet, v):
    """``v . delta_s delta_r (a1 x a2)`` as ``(P, n, n)``."""
    comp = var.comp
    lc = np.einsum("ijk,pk->pij", _LEVI, v)[:, comp][:, :, comp]  # (P, n, n)
    N = var.Nd1
    w = np.einsum("pr,ps->prs", N[..., 0], N[..., 1])
    return (w - np.swapaxes(w, 1, 2)) * lc


def second_J(var: VariationSet):
    dfm = var.dfm
    t1 = _second_a3t_dot(var, dfm.a3_tilde)
    t2 = np.einsum("pri,psi->prs", var.d_a3t, var.d_a3t)
    t3 = var.d_J[:, :, None] * var.d_J[:, None, :]
    return (t1 + t2 - t3) / dfm.J[:, None, None]


def kappa_second_contraction(var: VariationSet, mten, ddJ=None):
    """``m^{ab} delta_s delta_r kappa_ab`` as ``(P, n, n)``."""
    dfm = var.dfm
    comp = var.comp
    J = dfm.J[:, None, None]
    mt = np.asarray(mten)
    v = np.einsum("pab,pabi->pi", mt, dfm.a_d2)
    t = np.einsum("pi,pi->p", v, dfm.a3)
    q = np.einsum("pab,prab->pr", mt, _sym_d2_dof(var.Nd2))
    a3_c = dfm.a3[:, comp]
    v_da3 = np.einsum("pi,pri->pr", v, var.d_a3)
    if ddJ is None:
        ddJ = second_J(var)
    v_at = np.einsum("pi,pi->p", v, dfm.a3_tilde)[:, None, None]
    v_dat = np.einsum("pi,pri->pr", v, var.d_a3t)
    dJ = var.d_J
    v_dda3 = (
        _second_a3t_dot(var, v) / J
        - ddJ * v_at / J**2
        - (dJ[:, :, None] * v_dat[:, None, :] + v_dat[:, :, None] * dJ[:, None, :]) / J**2
        + 2.0 * dJ[:, :, None] * dJ[:, None, :] * v_at / J**3
    )
    # q_r * delta_s a3[comp_r]
    da3_c = var.d_a3[:, :, comp]  # (P, s, r)
    cross = q[:, :, None] * np.swapaxes(da3_c, 1, 2)
    lam3 = dfm.lam3[:, None, None]
    out = -lam3 * (cross + np.swapaxes(cross, 1, 2) + v_dda3)
    if var.incompressible:
        A = q * a3_c + v_da3  # (P, r)
        dl = var.d_lam3
        out -= dl[:, None, :] * A[:, :, None] + dl[:, :, None] * A[:, None, :]
        Jbar = var.ref.J[:, None, None]
        ddl = -Jbar * (-2.0 * dJ[:, :, None] * dJ[:, None, :] / J**3 + ddJ / J**2)
        out -= ddl * t[:, None, None]
    return out


def geometric_contraction(var: VariationSet, n, m):
    """``n : dd eps + m : dd kappa`` for every DOF pair, ``(P, n, n)``."""
    same = (var.comp[:, None] == var.comp[None, :]).astype(float)
    kn = np.einsum("pra,pab,psb->prs", var.Nd1, n, var.Nd1) * same[None]
    return kn + kappa_second_contraction(var, m)


def tangent_factors(var: VariationSet, res: Resultants):
    """Low-rank factors of the pointwise tangent.

    Returns a list of pairs ``(L, R)`` with shapes ``(P, n, k)`` such that
    the tangent at each point is ``sum(L @ R^T)`` over the pairs: material
    part ``B^T D B`` plus the geometric part ``n : dd eps + m : dd kappa``.
    Writing the tangent this way lets the caller fold the quadrature sum
    into one matrix product per element.
    """
    dfm, ref = var.dfm, var.ref
    comp = var.comp
    Ec = np.eye(3)[comp]  # (n, 3)
    P = dfm.J.shape[0]
    N = var.Nd1
    J = dfm.J
    lam3 = dfm.lam3
    out = []
    B = np.concatenate([var.d_eps, var.d_kappa], axis=2)  # (P, n, 6)
    D = np.empty((P, 6, 6))
    D[:, :3, :3], D[:, :3, 3:], D[:, 3:, :3], D[:, 3:, 3:] = res.Dnn, res.Dnm, res.Dmn, res.Dmm
    out.append((B, np.einsum("pij,psj->psi", D, B)))
    # membrane geometric term
    nN = np.einsum("pab,pra->prb", res.n, N)
    out.append(((nN[..., None] * Ec[None, :, None, :]).reshape(P, -1, 6),
                (N[..., None] * Ec[None, :, None, :]).reshape(P, -1, 6)))
    # bending geometric term
    v = np.einsum("pab,pabi->pi", res.m, dfm.a_d2)
    t = np.einsum("pi,pi->p", v, dfm.a3)
    q = np.einsum("pab,prab->pr", res.m, _sym_d2_dof(var.Nd2))
    dJ = var.d_J
    qE = q[..., None] * Ec[None]
    c = -lam3[:, None, None]
    out.append((c * qE, var.d_a3))
    out.append((var.d_a3, c * qE))

    def cross_pairs(coef, w):
        Ew = np.cross(Ec[None], w[:, None, :])  # e_c x w
        L1 = (coef[:, None] * N[..., 0])[..., None] * Ec[None]
        R1 = N[..., 1, None] * Ew
        L2 = (coef[:, None] * N[..., 1])[..., None] * Ew
        R2 = N[..., 0, None] * Ec[None]
        return [(L1, R1), (L2, R2)]

    out += cross_pairs(-lam3 / J, v)
    c_ddJ = lam3 * t / J
    c_dJdJ = -2.0 * lam3 * t / J**2
    if var.incompressible:
        c_ddJ = c_ddJ + ref.J * t / J**2
        c_dJdJ = c_dJdJ - 2.0 * ref.J * t / J**3
    f = c_ddJ / J
    out += cross_pairs(f, dfm.a3_tilde)
    out.append((f[:, None, None] * var.d_a3t, var.d_a3t))
    c_dJdJ = c_dJdJ - f
    out.append(((c_dJdJ[:, None] * dJ)[..., None], dJ[..., None]))
    v_dat = np.einsum("pi,pri->pr", v, var.d_a3t)
    cc = (lam3 / J**2)[:, None]
    out.append(((cc * dJ)[..., None], v_dat[..., None]))
    out.append(((cc * v_dat)[..., None], dJ[..., None]))
    if var.incompressible:
        A = q * dfm.a3[:, comp] + np.einsum("pi,pri->pr", v, var.d_a3)
        out.append(((-A)[..., None], var.d_lam3[..., None]))
        out.append(((-var.d_lam3)[..., None], A[..., None]))
    return out
