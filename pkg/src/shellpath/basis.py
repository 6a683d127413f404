"""Catmull-Clark limit-surface basis functions and their derivatives.

Regular patches are bicubic uniform B-spline tensor products. Patches with
one extraordinary vertex are evaluated by subdividing the ``2n + 8`` ring
until the evaluation point falls into a regular sub-patch (at most
``MAX_DEPTH`` levels), then evaluating that sub-patch and chaining the
subdivision matrices back to the ring.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mesh import (
    ControlMesh,
    PatchStencil,
    _grid_regular,
    irregular_ring_faces,
    subdivision_operator,
)

__all__ = [
    "MAX_DEPTH",
    "PatchBasis",
    "bspline_basis_row",
    "regular_basis",
    "eval_patch_basis",
    "real_basis",
    "gauss_rule_2d",
]

MAX_DEPTH = 10


@dataclass(frozen=True)
class PatchBasis:
    """Stencil basis at one parameter point.

    ``d2`` columns are the (11, 12, 22) second derivatives. ``flagged`` is set
    when the point is closer to the extraordinary corner than the recursion
    depth resolves, where second derivatives are not meaningful.
    """

    values: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    point: tuple[float, float]
    flagged: bool = False


def bspline_basis_row(t: float):
    """Uniform cubic B-spline segment basis on ``[0, 1]``.

    Returns values, first and second derivatives, each of length 4.
    """
    t = float(t)
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"parameter {t} outside [0, 1]")
    s = 1.0 - t
    val = np.array([s**3, 3 * t**3 - 6 * t**2 + 4, -3 * t**3 + 3 * t**2 + 3 * t + 1, t**3]) / 6.0
    d1 = np.array([-3 * s**2, 9 * t**2 - 12 * t, -9 * t**2 + 6 * t + 3, 3 * t**2]) / 6.0
    d2 = np.array([6 * s, 18 * t - 12, -18 * t + 6, 6 * t]) / 6.0
    return val, d1, d2


def regular_basis(u: float, v: float):
    """Bicubic basis on a 4x4 stencil, ``a = i + 4 j``."""
    nu, du, ddu = bspline_basis_row(u)
    nv, dv, ddv = bspline_basis_row(v)
    val = np.outer(nv, nu).ravel()
    d1 = np.stack([np.outer(nv, du).ravel(), np.outer(dv, nu).ravel()], axis=1)
    d2 = np.stack(
        [np.outer(nv, ddu).ravel(), np.outer(dv, du).ravel(), np.outer(ddv, nu).ravel()], axis=1
    )
    return val, d1, d2


def _local_ring_mesh(n: int) -> ControlMesh:
    """Abstract ``2n + 8`` point neighbourhood of an irregular patch."""
    e = lambda k: 1 + 2 * (k % n)  # noqa: E731
    d = lambda k: 2 + 2 * (k % n)  # noqa: E731
    o = [2 * n + 1 + k for k in range(7)]
    faces = [[0, e(k), d(k), e(k + 1)] for k in range(n)]
    faces += [
        [d(n - 1), o[0], o[1], e(0)],
        [e(0), o[1], o[2], d(0)],
        [d(0), o[2], o[3], o[4]],
        [e(1), d(0), o[4], o[5]],
        [d(1), e(1), o[5], o[6]],
    ]
    return ControlMesh(np.zeros((2 * n + 8, 3)), np.array(faces))


@lru_cache(maxsize=None)
def _irregular_operators(n: int):
    """Ring-to-ring matrix and the three regular child picks for valence ``n``.

    Returns ``(A, picks)`` with ``A`` of shape ``(2n+8, 2n+8)`` and
    ``picks[c]`` of shape ``(16, 2n+8)`` for children c = (1,0), (1,1), (0,1).
    """
    local = _local_ring_mesh(n)
    S, faces, _ = subdivision_operator(local)
    S = S.toarray()
    sub = ControlMesh(np.zeros((S.shape[0], 3)), faces)
    c0, c1, c2, c3 = (faces[k].tolist() for k in range(4))
    ring = irregular_ring_faces(sub, c0)
    A = S[ring]
    quads = [c1[3:] + c1[:3], c2[2:] + c2[:2], c3[1:] + c3[:1]]
    picks = []
    for quad in quads:
        g = _grid_regular(sub, quad, strict=True)
        ids = [next(iter(g[(a % 4, a // 4)])) for a in range(16)]
        picks.append(S[ids])
    powers = [np.eye(2 * n + 8)]
    for _ in range(MAX_DEPTH):
        powers.append(A @ powers[-1])
    A.flags.writeable = False
    return A, tuple(picks), tuple(powers)


def _irregular_basis(n: int, u: float, v: float):
    _, picks, powers = _irregular_operators(n)
    flagged = False
    m = max(u, v)
    if m <= 2.0**-MAX_DEPTH:
        flagged = True
        k = MAX_DEPTH
        u = v = 2.0**-MAX_DEPTH
    else:
        k = min(int(np.floor(-np.log2(m))) + 1, MAX_DEPTH)
    scale = 2.0 ** (k - 1)
    U, V = u * scale, v * scale
    if U >= 0.5 and V < 0.5:
        c, lu, lv = 0, 2 * U - 1, 2 * V
    elif U >= 0.5:
        c, lu, lv = 1, 2 * U - 1, 2 * V - 1
    else:
        c, lu, lv = 2, 2 * U, 2 * V - 1
    lu, lv = min(max(lu, 0.0), 1.0), min(max(lv, 0.0), 1.0)
    val, d1, d2 = regular_basis(lu, lv)
    M = picks[c] @ powers[k - 1]
    f = 2.0**k
    return M.T @ val, f * (M.T @ d1), f * f * (M.T @ d2), flagged


def eval_patch_basis(stencil: PatchStencil | int, u: float, v: float) -> PatchBasis:
    """Basis of a patch at ``(u, v)`` in the stencil's parametric frame.

    ``stencil`` may be a :class:`PatchStencil` or a bare valence.
    """
    n = stencil if isinstance(stencil, (int, np.integer)) else stencil.valence
    if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
        raise ValueError(f"parameter point ({u}, {v}) outside the unit square")
    if n == 4:
        val, d1, d2 = regular_basis(u, v)
        return PatchBasis(val, d1, d2, (u, v))
    val, d1, d2, flagged = _irregular_basis(int(n), u, v)
    return PatchBasis(val, d1, d2, (u, v), flagged)


def real_basis(stencil: PatchStencil, basis: PatchBasis):
    """Map stencil-point bases onto the stencil's real control points.

    Returns arrays of shape ``(m, 3)``, ``(m, 3, 2)`` and ``(m, 3, 3)``
    indexed by control point and Cartesian component.
    """
    W = stencil.weights
    val = np.einsum("a,amk->mk", basis.values, W)
    d1 = np.einsum("ax,amk->mkx", basis.d1, W)
    d2 = np.einsum("ax,amk->mkx", basis.d2, W)
    return val, d1, d2


def gauss_rule_2d(order: int = 3):
    """Tensor Gauss-Legendre points on the unit square and their weights."""
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    uu, vv = np.meshgrid(x, x, indexing="xy")
    pts = np.stack([uu.ravel(), vv.ravel()], axis=1)
    return pts, np.outer(w, w).ravel()
