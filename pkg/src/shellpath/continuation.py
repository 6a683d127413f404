"""Newton-Raphson and arc-length path following with stability monitoring.

The solvers talk to the discretized problem only through an *assembler*:
a callable ``assembler(u, kappa) -> (R, K, F)`` returning the residual
``R = F_int(u) - kappa F(u)``, its tangent ``K = dR/du`` and the load vector
``F`` on the free DOFs. ``K`` may be a scalar, a dense array or a sparse
matrix, which keeps small hand-made test problems cheap.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssemblyError
from .shell_core import ShellError

__all__ = [
    "SolverError",
    "StepFailure",
    "ContinuationState",
    "StabilityReport",
    "StepRecord",
    "PathHistory",
    "SolverSettings",
    "StabilitySettings",
    "ContinuationProblem",
    "newton_correct",
    "arc_length_step",
    "stability_check",
    "branch_switch",
    "mode_constrained_step",
    "PhaseLock",
    "run_continuation",
]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Linear solve failed (singular or non-finite tangent)."""


class StepFailure(RuntimeError):
    """A load step could not be completed even at the minimum step size."""


# ---------------------------------------------------------------------
# Linear algebra helpers
# ---------------------------------------------------------------------
class _Factor:
    def __init__(self, K):
        if np.isscalar(K) or np.ndim(K) == 0:
            k = float(K)
            if k == 0.0 or not math.isfinite(k):
                raise SolverError("singular scalar tangent")
            self._solve = lambda b: np.asarray(b, dtype=float) / k
            return
        if sp.issparse(K):
            try:
                # tangents are structurally symmetric: order on the pattern of K + K^T
                lu = spla.splu(sp.csc_matrix(K), permc_spec="MMD_AT_PLUS_A")
            except RuntimeError as exc:
                raise SolverError(f"sparse factorization failed: {exc}") from exc
            self._solve = lu.solve
            return
        K = np.atleast_2d(np.asarray(K, dtype=float))
        try:
            lu = sla.lu_factor(K, check_finite=True)
        except (ValueError, sla.LinAlgError) as exc:
            raise SolverError(f"dense factorization failed: {exc}") from exc
        if np.any(np.abs(np.diag(lu[0])) == 0.0):
            raise SolverError("singular dense tangent")
        self._solve = lambda b: sla.lu_solve(lu, b)

    def solve(self, b):
        x = np.atleast_1d(self._solve(np.atleast_1d(np.asarray(b, dtype=float))))
        if not np.all(np.isfinite(x)):
            raise SolverError("linear solve produced non-finite values")
        return x


def _norm(x) -> float:
    return float(np.linalg.norm(np.atleast_1d(x)))


# ---------------------------------------------------------------------
# State and records
# ---------------------------------------------------------------------
@dataclass
class ContinuationState:
    """Converged point on the equilibrium path plus step bookkeeping."""

    u: np.ndarray
    kappa: float = 0.0
    ds: float = 0.0
    du_prev: np.ndarray | None = None
    dkappa_prev: float | None = None
    step: int = 0
    branch: int = 0
    residual_ref: float = 0.0  # initial residual norm of the corrector that produced u

    def copy(self) -> "ContinuationState":
        return replace(
            self,
            u=np.array(self.u, dtype=float),
            du_prev=None if self.du_prev is None else np.array(self.du_prev, dtype=float),
        )


@dataclass
class StabilityReport:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, unit norm
    zero_crossing: bool
    classification: str  # "stable" | "limit-like" | "bifurcation-like"
    threshold: float
    n_negative: int = 0
    residuals: np.ndarray | None = None
    alignment: np.ndarray | None = None  # |cos| between each mode and the path tangent

    def new_bifurcation_mode(self, previous: "StabilityReport | None"):
        """Index of the first mode that became negative since ``previous`` and is
        not aligned with the path tangent, or None."""
        if previous is None or self.n_negative <= previous.n_negative:
            return None
        for k in range(previous.n_negative, min(self.n_negative, len(self.eigenvalues))):
            if self.alignment is None or self.alignment[k] <= 0.5:
                return k
        return None


@dataclass
class StepRecord:
    step: int
    branch: int
    kappa: float
    pressure: float
    volume: float
    max_disp: float
    eigenvalues: tuple
    newton_iters: int
    residual: float = 0.0
    load_norm: float = 0.0  # |kappa F|, the scale of ``residual``
    residual_ref: float = 0.0  # the corrector converged to residual <= tol_rel * residual_ref


@dataclass
class PathHistory:
    """Append-only list of converged steps; ``sink`` sees every new record."""

    records: list = field(default_factory=list)
    sink: Callable | None = None
    limit_points: list = field(default_factory=list)
    bifurcations: list = field(default_factory=list)
    failed_steps: int = 0
    status: str = "running"  # then "completed", "stopped" (step limit) or "failed"
    message: str = ""

    def append(self, rec: StepRecord) -> None:
        self.records.append(rec)
        if self.sink is not None:
            self.sink(rec)

    def branch(self, b: int) -> list:
        return [r for r in self.records if r.branch == b]

    def column(self, name: str, branch: int | None = None) -> np.ndarray:
        recs = self.records if branch is None else self.branch(branch)
        return np.array([getattr(r, name) for r in recs], dtype=float)


@dataclass
class SolverSettings:
    tol_rel: float = 0.01
    abs_tol: float = 1e-12
    max_iter: int = 20
    dkappa0: float = 0.1
    ds_min: float = 1e-8
    ds_max: float = math.inf
    psi: float = 0.0
    target_iters: int = 4
    max_steps: int = 200
    target_kappa: float | None = None
    target_volume: float | None = None
    max_halvings: int = 12
    arc_length: bool = True
    max_step: float | None = None  # cap on max|du| per Newton update


@dataclass
class StabilitySettings:
    n_eigs: int = 0
    zero_tol: float = 1e-6
    beta: float = 1.0
    branching: bool = False
    branch_steps: int = 20
    thickness: float = 1.0
    phase_lock: bool = True  # pin partner modes of a multiple crossing on the new branch


# ---------------------------------------------------------------------
# Newton corrector
# ---------------------------------------------------------------------
def newton_correct(state: ContinuationState, assembler, max_iter: int = 20, tol_rel: float = 0.01,
                   abs_tol: float = 1e-12, max_step: float | None = None):
    """Newton iterations at fixed load factor.

    Returns ``(state, iterations)``; raises :class:`StepFailure` when
    ``max_iter`` is exceeded. The absolute floor is ``abs_tol`` times the
    load scale ``max(1, |kappa| ||F||)``. With ``max_step`` each update is
    scaled down so that ``max|du| <= max_step``; an update that makes the
    element evaluation fail is halved (up to 10 times).
    """
    u = np.array(state.u, dtype=float)
    kappa = state.kappa
    R, K, F = assembler(u, kappa)
    r0 = _norm(R)
    floor = abs_tol * max(1.0, abs(kappa) * _norm(F))
    it = 0
    r = r0
    while r > tol_rel * r0 and r > floor:
        if it >= max_iter:
            raise StepFailure(f"Newton did not converge in {max_iter} iterations (|R| = {r:.3e})")
        du = _Factor(K).solve(-np.atleast_1d(R))
        if not u.ndim:
            du = du[0]
        if max_step is not None:
            big = float(np.max(np.abs(du)))
            if big > max_step:
                du = du * (max_step / big)
        for _ in range(11):
            try:
                R, K, F = assembler(u + du, kappa)
                break
            except (AssemblyError, ShellError):
                du = 0.5 * du
        else:
            raise StepFailure("Newton update keeps failing element evaluation")
        u = u + du
        it += 1
        r = _norm(R)
        if not math.isfinite(r):
            raise StepFailure("residual became non-finite")
    out = state.copy()
    out.residual_ref = r0
    out.u = u
    return out, it


# ---------------------------------------------------------------------
# Arc-length step
# ---------------------------------------------------------------------
def arc_length_step(state: ContinuationState, assembler, ds: float, psi: float = 0.0,
                    max_iter: int = 20, tol_rel: float = 0.01, abs_tol: float = 1e-12,
                    perturbation=None):
    """One cylindrical arc-length step of radius ``ds`` from a converged state.

    The constraint is ``du.du + psi^2 dk^2 |F|^2 = ds^2``. Without a previous
    increment the predictor follows the tangent with increasing load;
    otherwise it rescales the previous increment (secant predictor), which
    keeps the path orientation. ``perturbation`` is added to the predicted
    displacement (branch switching). Returns ``(new_state, iterations)``.
    """
    u0 = np.atleast_1d(np.array(state.u, dtype=float))
    k0 = state.kappa
    R, K, F = assembler(u0, k0)
    F = np.atleast_1d(F)
    F2 = float(F @ F)
    if state.du_prev is None or state.dkappa_prev is None:
        dut = _Factor(K).solve(F)
        dk = ds / math.sqrt(float(dut @ dut) + psi**2 * F2)
        du = dk * dut
    else:
        dup = np.atleast_1d(state.du_prev)
        length = math.sqrt(float(dup @ dup) + psi**2 * state.dkappa_prev**2 * F2)
        if length == 0.0:
            raise StepFailure("previous increment has zero length")
        du = dup * (ds / length)
        dk = state.dkappa_prev * (ds / length)
    if perturbation is not None:
        du = du + np.atleast_1d(perturbation)
    R, K, F = assembler(u0 + du, k0 + dk)
    r0 = _norm(R)
    it = 0
    while True:
        F = np.atleast_1d(F)
        F2 = float(F @ F)
        A = float(du @ du) + psi**2 * dk**2 * F2 - ds**2
        r = _norm(R)
        if not math.isfinite(r):
            raise StepFailure("residual became non-finite")
        floor = abs_tol * max(1.0, abs(k0 + dk) * math.sqrt(F2))
        if (r <= tol_rel * r0 or r <= floor) and abs(A) <= 1e-8 * ds**2 and it > 0 or (
            r <= floor and abs(A) <= 1e-8 * ds**2
        ):
            break
        if it >= max_iter:
            raise StepFailure(f"arc-length corrector did not converge (|R| = {r:.3e}, |A| = {A:.3e})")
        fac = _Factor(K)
        du1 = fac.solve(F)
        du2 = fac.solve(-np.atleast_1d(R))
        denom = 2.0 * float(du @ du1) + 2.0 * psi**2 * dk * F2
        if denom == 0.0:
            raise StepFailure("arc-length constraint is singular")
        ddk = (-A - 2.0 * float(du @ du2)) / denom
        du = du + du2 + ddk * du1
        dk += ddk
        it += 1
        R, K, F = assembler(u0 + du, k0 + dk)
    out = state.copy()
    out.residual_ref = r0
    out.u = u0 + du if np.ndim(state.u) else float((u0 + du)[0])
    out.kappa = k0 + dk
    out.du_prev = du
    out.dkappa_prev = dk
    out.ds = ds
    out.step = state.step + 1
    return out, it


# ---------------------------------------------------------------------
# Stability
# ---------------------------------------------------------------------
DENSE_LIMIT = 3000
COUNT_LIMIT = 1500  # full spectrum for the negative count up to this size


def stability_check(K, m: int, zero_tol: float = 1e-6, tangent=None) -> StabilityReport:
    """``m`` algebraically smallest eigenpairs of the reduced tangent.

    ``K`` is symmetrized first. A zero crossing is flagged when the smallest
    eigenvalue is at or below ``zero_tol * trace(K) / n``. With a path
    tangent supplied, a critical lowest mode is classified as limit-like when
    it has a substantial component along the tangent, bifurcation-like
    otherwise.
    """
    n = K.shape[0]
    m = min(int(m), n)
    if sp.issparse(K):
        Ks = ((K + K.T) * 0.5).tocsc()
        diag = Ks.diagonal()
    else:
        Kd = np.asarray(K, dtype=float)
        Ks = 0.5 * (Kd + Kd.T)
        diag = np.diag(Ks)
    scale = float(np.sum(diag)) / n
    threshold = zero_tol * abs(scale)
    if n <= DENSE_LIMIT:
        dense = Ks.toarray() if sp.issparse(Ks) else Ks
        w, V = sla.eigh(dense, subset_by_index=[0, m - 1])
        n_neg = int(np.sum(sla.eigvalsh(dense) < 0)) if n <= COUNT_LIMIT else None
    else:
        sigma = -1e-3 * abs(scale)
        w, V = spla.eigsh(Ks, k=m, sigma=sigma, which="LM", tol=1e-12)
        order = np.argsort(w)
        w, V = w[order], V[:, order]
        n_neg = None
    V = V / np.linalg.norm(V, axis=0)
    res = np.linalg.norm(Ks @ V - V * w, axis=0)
    if n_neg is None:
        n_neg = int(np.sum(w < 0))
    crossing = bool(w[0] <= threshold)
    align = None
    if tangent is not None:
        t = np.asarray(tangent, dtype=float)
        tn = np.linalg.norm(t)
        if tn > 0:
            align = np.abs(V.T @ t) / tn
    cls = "stable"
    if crossing:
        cls = "limit-like" if align is not None and align[0] > 0.5 else "bifurcation-like"
    return StabilityReport(w, V, crossing, cls, threshold, n_neg, res, align)


def branch_switch(state: ContinuationState, u_e, beta: float, thickness: float):
    """Perturbed displacement guess ``u + s u_e`` with ``max |s u_e| = beta h``."""
    u_e = np.asarray(u_e, dtype=float)
    amax = float(np.max(np.abs(u_e)))
    if beta == 0.0 or amax == 0.0:
        return np.array(state.u, dtype=float)
    return np.asarray(state.u, dtype=float) + (beta * thickness / amax) * u_e


def mode_constrained_step(state: ContinuationState, assembler, mode, start, max_iter: int = 20,
                          tol_rel: float = 0.01, abs_tol: float = 1e-12):
    """First step on a bifurcated branch.

    Starting from the perturbed guess ``start`` (see :func:`branch_switch`),
    solve ``R(u, kappa) = 0`` together with ``e . (u - u_b) = e . (start - u_b)``
    where ``e`` is the unit mode and ``u_b`` the state at the bifurcation.
    Holding the modal amplitude fixed keeps the corrector from returning to
    the symmetric solution; the load factor is free.
    """
    e = np.asarray(mode, dtype=float)
    e = e / np.linalg.norm(e)
    ub = np.asarray(state.u, dtype=float)
    xi = float(e @ (np.asarray(start, dtype=float) - ub))
    u = np.array(start, dtype=float)
    kappa = state.kappa
    R, K, F = assembler(u, kappa)
    r0 = _norm(R)
    it = 0
    while True:
        F = np.atleast_1d(F)
        r = _norm(R)
        g = float(e @ (u - ub)) - xi
        floor = abs_tol * max(1.0, abs(kappa) * _norm(F))
        if not math.isfinite(r):
            raise StepFailure("residual became non-finite")
        if (r <= tol_rel * r0 or r <= floor) and abs(g) <= 1e-10 * max(abs(xi), 1e-300) and (it > 0 or r <= floor):
            break
        if it >= max_iter:
            raise StepFailure(f"branch-switch corrector did not converge (|R| = {r:.3e})")
        Ks = K if sp.issparse(K) else sp.csr_matrix(np.atleast_2d(K))
        A = sp.bmat([[Ks, -F[:, None]], [e[None, :], None]], format="csc")
        d = _Factor(A).solve(np.concatenate([-np.atleast_1d(R), [-g]]))
        u = u + d[:-1]
        kappa += float(d[-1])
        it += 1
        R, K, F = assembler(u, kappa)
    # next predictor: path tangent at the new point, oriented so that the
    # modal amplitude keeps growing (the secant from u_b points back along
    # the principal branch when the switch lands close to the branch point)
    try:
        t = _Factor(K).solve(np.atleast_1d(F))
        sgn = 1.0 if float(e @ t) * xi >= 0.0 else -1.0
        du_next, dk_next = sgn * t, sgn
    except SolverError:
        du_next, dk_next = u - ub, kappa - state.kappa
    out = state.copy()
    out.residual_ref = r0
    out.u = u
    out.kappa = kappa
    out.du_prev = du_next
    out.dkappa_prev = dk_next
    out.step = state.step + 1
    return out, it


class PhaseLock:
    """Assembler wrapper that adds ``C^T (u - u_ref) = 0`` with multipliers.

    At a multiple zero crossing the partner modes of the one used for the
    switch stay (nearly) singular along the bifurcated branch, and the
    corrector drifts along them. Pinning their amplitudes removes the drift;
    the multipliers vanish at a true equilibrium. Extended vectors are
    ``x = (u, mu)``.
    """

    def __init__(self, assembler, C, u_ref):
        self.assembler = assembler
        self.C = np.atleast_2d(np.asarray(C, dtype=float).T).T
        self.u_ref = np.array(u_ref, dtype=float)
        self.n = self.u_ref.size
        self.k = self.C.shape[1]
        self._Cs = sp.csr_matrix(self.C)

    def __call__(self, x, kappa):
        u, mu = x[: self.n], x[self.n:]
        R, K, F = self.assembler(u, kappa)
        Rt = np.concatenate([np.atleast_1d(R) + self.C @ mu, self.C.T @ (u - self.u_ref)])
        Ks = K if sp.issparse(K) else sp.csr_matrix(np.atleast_2d(K))
        Kt = sp.bmat([[Ks, self._Cs], [self._Cs.T, None]], format="csc")
        return Rt, Kt, np.concatenate([np.atleast_1d(F), np.zeros(self.k)])

    def extend(self, v):
        return None if v is None else np.concatenate([np.asarray(v, dtype=float), np.zeros(self.k)])

    def extend_state(self, state: ContinuationState) -> ContinuationState:
        out = state.copy()
        out.u = self.extend(state.u)
        out.du_prev = self.extend(state.du_prev)
        return out

    def strip_state(self, state: ContinuationState) -> ContinuationState:
        out = state.copy()
        out.u = np.asarray(state.u)[: self.n].copy()
        if state.du_prev is not None:
            out.du_prev = np.asarray(state.du_prev)[: self.n].copy()
        return out


# ---------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------
@dataclass
class ContinuationProblem:
    """What the driver needs beyond the assembler.

    ``volume`` and ``max_disp`` map a free-DOF vector to diagnostics;
    ``p_ref`` converts the load factor to a pressure.
    """

    assembler: Callable
    n_free: int
    p_ref: float = 1.0
    volume: Callable | None = None
    max_disp: Callable | None = None
    on_step: Callable | None = None  # (state, record) -> None, e.g. snapshots


def _record(problem, state, iters, report, norms):
    vol = problem.volume(state.u) if problem.volume else float("nan")
    md = problem.max_disp(state.u) if problem.max_disp else float(np.max(np.abs(state.u), initial=0.0))
    eigs = tuple(float(x) for x in report.eigenvalues) if report is not None else ()
    return StepRecord(state.step, state.branch, float(state.kappa), float(state.kappa * problem.p_ref),
                      float(vol), float(md), eigs, int(iters), *norms, float(state.residual_ref))


def _residual_norm(problem, state):
    # residual-only evaluation when the assembler offers one (skips the tangent)
    residual = getattr(problem.assembler, "residual", None)
    if residual is not None:
        R, F = residual(state.u, state.kappa)
    else:
        R, _, F = problem.assembler(state.u, state.kappa)
    return float(_norm(R)), float(abs(state.kappa) * _norm(F))


def _stability(problem, state, settings: StabilitySettings, tangent=None):
    if settings.n_eigs <= 0:
        return None
    _, K, _ = problem.assembler(state.u, state.kappa)
    try:
        return stability_check(K, settings.n_eigs, settings.zero_tol, tangent)
    except Exception as exc:  # eigensolver breakdown: keep going without branching
        log.warning("eigen analysis failed at step %d: %s", state.step, exc)
        return None


def _done(problem, settings: SolverSettings, state, record):
    if settings.target_kappa is not None and state.kappa >= settings.target_kappa * (1 - 1e-12):
        return True
    if settings.target_volume is not None and record.volume >= settings.target_volume:
        return True
    return False


def _advance(problem, settings: SolverSettings, state, ds, lock: PhaseLock | None = None):
    """One arc-length step with halving on failure. Returns (state, iters, ds_used, failures)."""
    failures = 0
    asm = lock if lock is not None else problem.assembler
    start = lock.extend_state(state) if lock is not None else state
    while True:
        try:
            new, it = arc_length_step(start, asm, ds, settings.psi, settings.max_iter,
                                      settings.tol_rel, settings.abs_tol)
            if lock is not None:
                new = lock.strip_state(new)
            return new, it, ds, failures
        except (StepFailure, SolverError, AssemblyError, ShellError, FloatingPointError) as exc:
            failures += 1
            ds *= 0.5
            log.info("step %d failed (%s); halving ds to %.3e", state.step + 1, exc, ds)
            if ds < settings.ds_min or failures > settings.max_halvings:
                raise StepFailure(f"step {state.step + 1}: {exc}") from exc


def _load_step(problem, settings: SolverSettings, state, dk):
    """One load increment with halving on failure. Returns (state, iters, dk_used, failures)."""
    failures = 0
    while True:
        if settings.target_kappa is not None:
            dk = min(dk, settings.target_kappa - state.kappa)
        # no predictor: Newton starts from the last converged displacements
        trial = state.copy()
        trial.kappa = state.kappa + dk
        try:
            new, it = newton_correct(trial, problem.assembler, settings.max_iter, settings.tol_rel,
                                     settings.abs_tol, settings.max_step)
        except (StepFailure, SolverError, AssemblyError, ShellError, FloatingPointError) as exc:
            failures += 1
            dk *= 0.5
            log.info("step %d failed (%s); halving the load increment to %.3e", state.step + 1, exc, dk)
            if failures > settings.max_halvings:
                raise StepFailure(f"step {state.step + 1}: {exc}") from exc
            continue
        new.du_prev = new.u - state.u
        new.dkappa_prev = dk
        new.step = state.step + 1
        return new, it, dk, failures


def _land_on_target(problem, settings, prev: ContinuationState, new: ContinuationState):
    """Replace an overshooting step by a load-controlled solve at the target."""
    trial = prev.copy()
    trial.kappa = settings.target_kappa
    scale = (settings.target_kappa - prev.kappa) / (new.kappa - prev.kappa)
    trial.u = prev.u + scale * (new.u - prev.u)
    out, it = newton_correct(trial, problem.assembler, settings.max_iter, settings.tol_rel,
                             settings.abs_tol, settings.max_step)
    out.step = new.step
    out.du_prev = out.u - prev.u
    out.dkappa_prev = out.kappa - prev.kappa
    out.ds = new.ds
    return out, it


def run_continuation(problem: ContinuationProblem, solver: SolverSettings | None = None,
                     stability: StabilitySettings | None = None, history: PathHistory | None = None,
                     initial: ContinuationState | None = None) -> PathHistory:
    """Predictor, corrector, stability check, optional branch switch, record.

    The first increment is load controlled with ``solver.dkappa0``; later
    steps use arc length with adaptive radius. On the first bifurcation-like
    zero crossing (with branching enabled) the perturbed branch is traced for
    ``stability.branch_steps`` steps under branch id 1, then the principal
    branch resumes from the saved state.
    """
    solver = solver or SolverSettings()
    stability = stability or StabilitySettings()
    history = history if history is not None else PathHistory()
    state = initial.copy() if initial is not None else ContinuationState(np.zeros(problem.n_free))
    if not history.records:
        rep = _stability(problem, state, stability)
        history.append(_record(problem, state, 0, rep, _residual_norm(problem, state)))
    if solver.target_kappa is not None and solver.target_kappa <= 0.0:
        history.status = "completed"
        return history
    if solver.dkappa0 == 0.0:
        raise ValueError("dkappa0 must be nonzero")

    try:
        prev_report = None
        if state.du_prev is None:
            trial = state.copy()
            trial.kappa = state.kappa + solver.dkappa0
            if solver.target_kappa is not None:
                trial.kappa = min(trial.kappa, solver.target_kappa)
            new, it = newton_correct(trial, problem.assembler, solver.max_iter, solver.tol_rel,
                                     solver.abs_tol, solver.max_step)
            new.du_prev = new.u - state.u
            new.dkappa_prev = new.kappa - state.kappa
            new.ds = math.sqrt(float(new.du_prev @ new.du_prev) + solver.psi**2 * new.dkappa_prev**2)
            new.step = state.step + 1
            state = new
            prev_report = _stability(problem, state, stability)
            rec = _record(problem, state, it, prev_report, _residual_norm(problem, state))
            history.append(rec)
            if problem.on_step:
                problem.on_step(state, rec)
            if _done(problem, solver, state, rec):
                history.status = "completed"
                return history
        ds = min(max(state.ds, solver.ds_min), solver.ds_max)
        state.ds = ds
        branched = False
        saved = None
        lock = None
        dk = solver.dkappa0
        branch_count = 0
        principal_budget = None
        while state.step < solver.max_steps:
            if not solver.arc_length:
                new, it, dk_used, failures = _load_step(problem, solver, state, dk)
                history.failed_steps += failures
                dk = min(2.0 * dk_used, solver.dkappa0) if failures else solver.dkappa0
            else:
                new, it, ds_used, failures = _advance(problem, solver, state, ds,
                                                      lock if state.branch == 1 else None)
                history.failed_steps += failures
            if solver.target_kappa is not None and new.kappa > solver.target_kappa:
                new, it = _land_on_target(problem, solver, state, new)
            if state.dkappa_prev is not None and new.dkappa_prev is not None and \
                    np.sign(new.dkappa_prev) != np.sign(state.dkappa_prev):
                history.limit_points.append((state.step, new.step, new.branch))
            report = _stability(problem, new, stability, tangent=new.du_prev)
            rec = _record(problem, new, it, report, _residual_norm(problem, new))
            history.append(rec)
            if problem.on_step:
                problem.on_step(new, rec)
            state = new
            if solver.arc_length:
                ratio = solver.target_iters / max(it, 1)
                ds = min(max(ds_used * math.sqrt(ratio), solver.ds_min), solver.ds_max)
                state.ds = ds

            if state.branch == 1:
                branch_count += 1
                if branch_count >= stability.branch_steps:
                    state = saved
                    ds = state.ds
                    principal_budget = stability.branch_steps
                    continue
            elif principal_budget is not None:
                principal_budget -= 1
                if principal_budget <= 0:
                    break

            mode = None
            if stability.branching and not branched and report is not None and report.zero_crossing:
                mode = report.new_bifurcation_mode(prev_report)
            if mode is not None:
                branched = True
                history.bifurcations.append(state.step)
                saved = state.copy()
                e = report.eigenvectors[:, mode]
                u_pert = branch_switch(state, e, stability.beta, stability.thickness)
                partners = [k for k in range(prev_report.n_negative,
                                             min(report.n_negative, len(report.eigenvalues)))
                            if k != mode]
                lock = None
                if stability.phase_lock and partners:
                    lock = PhaseLock(problem.assembler, report.eigenvectors[:, partners], state.u)
                bstate = state.copy()
                bstate.branch = 1
                try:
                    if lock is None:
                        new, it = mode_constrained_step(bstate, problem.assembler, e, u_pert, solver.max_iter,
                                                        solver.tol_rel, solver.abs_tol)
                    else:
                        new, it = mode_constrained_step(lock.extend_state(bstate), lock, lock.extend(e),
                                                        lock.extend(u_pert), solver.max_iter,
                                                        solver.tol_rel, solver.abs_tol)
                        new = lock.strip_state(new)
                except (StepFailure, SolverError, AssemblyError, ShellError) as exc:
                    log.warning("branch switch at step %d failed: %s", state.step, exc)
                    prev_report = report
                    continue
                new.ds = ds
                rep = _stability(problem, new, stability, tangent=new.du_prev)
                rec = _record(problem, new, it, rep, _residual_norm(problem, new))
                history.append(rec)
                if problem.on_step:
                    problem.on_step(new, rec)
                state = new
                branch_count = 1
                prev_report = rep
                continue
            prev_report = report
            if _done(problem, solver, state, rec) and state.branch == 0:
                break
        else:
            if solver.target_kappa is not None or solver.target_volume is not None:
                history.status = "stopped"
                history.message = f"step limit {solver.max_steps} reached before the target"
                return history
        history.status = "completed"
    except (StepFailure, SolverError, AssemblyError, ShellError) as exc:
        history.status = "failed"
        history.message = str(exc)
        log.error("continuation aborted: %s", exc)
    return history
