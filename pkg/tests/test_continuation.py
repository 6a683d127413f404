import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from shellpath.continuation import (
    DENSE_LIMIT,
    ContinuationProblem,
    ContinuationState,
    PathHistory,
    PhaseLock,
    SolverSettings,
    StabilitySettings,
    StepFailure,
    arc_length_step,
    branch_switch,
    newton_correct,
    run_continuation,
    stability_check,
)


def _scalar(g, dg):
    """Assembler for ``g(u) = kappa`` with unit load."""
    def asm(u, kappa):
        u = np.atleast_1d(u)
        return np.array([g(u[0]) - kappa]), np.array([[dg(u[0])]]), np.array([1.0])
    return asm


def test_newton_solves_cubic():
    asm = _scalar(lambda u: (u + u**3) / 10.0, lambda u: (1 + 3 * u**2) / 10.0)
    out, it = newton_correct(ContinuationState(np.array([1.0]), kappa=1.0), asm, tol_rel=1e-12,
                             abs_tol=1e-14)
    assert abs(out.u[0] - 2.0) < 1e-12
    assert it <= 8


def test_newton_reports_non_convergence():
    asm = _scalar(lambda u: u**2 + 1.0, lambda u: 2 * u)
    with pytest.raises(StepFailure):
        newton_correct(ContinuationState(np.array([0.5]), kappa=0.0), asm, max_iter=15, tol_rel=1e-10)


def test_arc_length_step_on_linear_problem():
    asm = _scalar(lambda u: u, lambda u: 1.0)
    out, _ = arc_length_step(ContinuationState(np.array([0.0])), asm, 0.3, psi=1.0, tol_rel=1e-12)
    np.testing.assert_allclose(out.u, [0.3 / math.sqrt(2)], atol=1e-14)
    assert abs(out.kappa - 0.3 / math.sqrt(2)) < 1e-14


def _snap(u):
    return u - 1.5 * u**2 + 0.5 * u**3


def _snap_d(u):
    return 1 - 3 * u + 1.5 * u**2


def test_arc_length_passes_both_limit_points():
    asm = _scalar(_snap, _snap_d)
    prob = ContinuationProblem(asm, 1, volume=lambda u: float(u[0]))
    hist = run_continuation(prob, SolverSettings(dkappa0=0.02, ds_max=0.05, target_kappa=0.5,
                                                 tol_rel=1e-8, max_steps=500))
    assert hist.status == "completed"
    assert hist.failed_steps == 0
    u = hist.column("volume")
    k = hist.column("kappa")
    assert len(hist.limit_points) == 2
    assert np.max(np.abs(_snap(u) - k)) < 1e-6
    assert u[-1] > 1.577 and abs(k[-1] - 0.5) < 1e-12
    # limit loads bracket the analytic extrema
    u1 = (3 - math.sqrt(3)) / 3
    s0, s1, _ = hist.limit_points[0]
    assert k[s0] <= _snap(u1) + 1e-9 and k[s1] <= _snap(u1) + 1e-9
    assert max(k[s0], k[s1]) > _snap(u1) - 5e-3


def test_zero_target_returns_initial_state():
    asm = _scalar(lambda u: u, lambda u: 1.0)
    hist = run_continuation(ContinuationProblem(asm, 1), SolverSettings(target_kappa=0.0))
    assert hist.status == "completed"
    assert len(hist.records) == 1 and hist.records[0].kappa == 0.0


def test_load_control_reaches_target():
    asm = _scalar(lambda u: u + u**3, lambda u: 1 + 3 * u**2)
    hist = run_continuation(ContinuationProblem(asm, 1),
                            SolverSettings(dkappa0=0.5, arc_length=False, target_kappa=2.0, tol_rel=1e-10))
    assert hist.records[-1].kappa == pytest.approx(2.0)
    assert hist.records[-1].residual < 1e-8


@settings(max_examples=15, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1), st.integers(min_value=5, max_value=60))
def test_eigenpairs_of_random_spd(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    K = A @ A.T + 0.1 * np.eye(n)
    rep = stability_check(K, 3)
    ref = np.linalg.eigvalsh(K)[:3]
    np.testing.assert_allclose(rep.eigenvalues, ref, rtol=1e-10, atol=1e-10 * ref[-1])
    assert np.all(rep.residuals <= 1e-8 * np.linalg.norm(K, 2))
    assert not rep.zero_crossing and rep.n_negative == 0


def test_sparse_shift_invert_path():
    n = DENSE_LIMIT + 200
    d = np.linspace(1.0, 50.0, n)
    d[:4] = [0.2, 0.3, 0.5, 0.7]
    K = sp.diags(d).tocsc() + sp.diags([1e-3 * np.ones(n - 1)], [1]) + sp.diags([1e-3 * np.ones(n - 1)], [-1])
    rep = stability_check(K, 3)
    np.testing.assert_allclose(rep.eigenvalues, [0.2, 0.3, 0.5], atol=1e-5)
    assert np.all(rep.residuals < 1e-8)


def test_classification_uses_path_tangent():
    K = np.diag([-1.0, 2.0, 3.0])
    limit = stability_check(K, 2, tangent=np.array([1.0, 0.1, 0.0]))
    assert limit.zero_crossing and limit.classification == "limit-like"
    bif = stability_check(K, 2, tangent=np.array([0.0, 1.0, 0.0]))
    assert bif.classification == "bifurcation-like"
    assert bif.n_negative == 1
    prev = stability_check(np.diag([1.0, 2.0, 3.0]), 2)
    assert bif.new_bifurcation_mode(prev) == 0
    assert limit.new_bifurcation_mode(prev) is None
    assert bif.new_bifurcation_mode(bif) is None


def test_branch_switch_scaling():
    state = ContinuationState(np.array([1.0, 2.0, 3.0]))
    mode = np.array([0.0, -4.0, 2.0])
    out = branch_switch(state, mode, beta=1.0, thickness=0.01)
    np.testing.assert_allclose(out - state.u, [0.0, -0.01, 0.005])
    np.testing.assert_array_equal(branch_switch(state, mode, 0.0, 0.01), state.u)


def _pitchfork(u, kappa):
    # potential u^2/2 + (1 - u) v^2/2 + v^4/4 - kappa u; bifurcation at kappa = 1
    x, v = u
    R = np.array([x - 0.5 * v**2 - kappa, (1 - x) * v + v**3])
    K = np.array([[1.0, -v], [-v, 1 - x + 3 * v**2]])
    return R, K, np.array([1.0, 0.0])


def test_branch_switching_on_pitchfork():
    seen = []
    prob = ContinuationProblem(_pitchfork, 2, volume=lambda u: float(u[0]),
                               on_step=lambda s, r: seen.append(r.branch))
    hist = run_continuation(
        prob,
        SolverSettings(dkappa0=0.1, ds_max=0.1, max_steps=200, tol_rel=1e-10, target_kappa=3.0),
        StabilitySettings(n_eigs=2, branching=True, beta=1.0, thickness=0.01, branch_steps=12),
    )
    assert hist.status == "completed", hist.message
    assert len(hist.bifurcations) == 1
    branch = hist.branch(1)
    assert len(branch) == 12
    for rec in branch:
        # secondary path: kappa = (x + 1) / 2, below the principal kappa = x
        assert rec.kappa == pytest.approx((rec.volume + 1) / 2, abs=1e-8)
        assert rec.kappa < rec.volume
    principal = hist.branch(0)
    assert principal[-1].step > hist.bifurcations[0]
    assert all(abs(r.kappa - r.volume) < 1e-8 for r in principal)
    assert 1 in seen and seen[-1] == 0


def test_history_columns():
    h = PathHistory()
    assert h.column("kappa").size == 0


def _double_pitchfork(u, kappa):
    # O(2)-symmetric pair: secondary solutions form the circle v^2 + w^2 = x - 1
    x, v, w = u
    r2 = v * v + w * w
    R = np.array([x - 0.5 * r2 - kappa, (1 - x + r2) * v, (1 - x + r2) * w])
    K = np.array([
        [1.0, -v, -w],
        [-v, 1 - x + r2 + 2 * v * v, 2 * v * w],
        [-w, 2 * v * w, 1 - x + r2 + 2 * w * w],
    ])
    return R, K, np.array([1.0, 0.0, 0.0])


def test_double_crossing_branch_is_phase_locked():
    prob = ContinuationProblem(_double_pitchfork, 3, volume=lambda u: float(u[0]))
    hist = run_continuation(
        prob,
        SolverSettings(dkappa0=0.1, ds_max=0.1, max_steps=60, tol_rel=1e-10, target_kappa=2.0),
        StabilitySettings(n_eigs=3, branching=True, beta=1.0, thickness=0.01, branch_steps=10),
    )
    assert hist.status == "completed", hist.message
    branch = hist.branch(1)
    assert len(branch) == 10
    for rec in branch:
        assert rec.kappa == pytest.approx((rec.volume + 1) / 2, abs=1e-8)
        assert rec.residual < 1e-8
        # one eigenvalue stays at zero along the circle of solutions
        assert abs(rec.eigenvalues[0]) < 1e-8 or abs(rec.eigenvalues[1]) < 1e-8
    assert branch[-1].volume > branch[0].volume


def test_phase_lock_wrapper_shapes():
    lock = PhaseLock(_double_pitchfork, np.array([0.0, 0.0, 1.0]), np.zeros(3))
    R, K, F = lock(np.array([1.0, 0.2, 0.0, 0.0]), 0.5)
    assert R.shape == (4,) and K.shape == (4, 4) and F.shape == (4,)
    s = lock.strip_state(lock.extend_state(ContinuationState(np.ones(3), du_prev=np.ones(3))))
    np.testing.assert_array_equal(s.u, np.ones(3))
