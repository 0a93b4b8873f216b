"""Solvers: row/noise updates, critical penalties, graphical lasso, and the
shared alternating-minimization engine for all six estimators."""

import warnings

import numpy as np
import pytest
from sklearn.linear_model import MultiTaskLasso

import oracles
from clar.exceptions import InvalidInput, NumericalFailure
from clar.model import (RepeatedObservations, SolverConfig, default_sigma_min,
                        objective_clar, residual_gram)
from clar.solvers import (ESTIMATOR_NAMES, EstimatorKind, bst, glasso,
                          lambda_max_clar, lambda_max_for, solve, solve_clar,
                          solve_mle, solve_mler, solve_mrcer, solve_mtl,
                          solve_sgcl, update_beta_row_clar, update_s_clar)
from clar.spectral import spcl


def _instance(seed, n=10, p=8, q=6, r=3, snr=1.0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    x /= np.linalg.norm(x, axis=0)
    beta_star = np.zeros((p, q))
    beta_star[: max(1, p // 4)] = rng.standard_normal((max(1, p // 4), q))
    signal = x @ beta_star
    noise = rng.standard_normal((r, n, q))
    scale = np.linalg.norm(signal) / (snr * np.linalg.norm(noise)
                                      / np.sqrt(r))
    obs = RepeatedObservations(signal[None] + scale * noise)
    return x, obs


# ---------------------------------------------------------------------------
# block soft-thresholding
# ---------------------------------------------------------------------------

def test_bst_basic_cases():
    np.testing.assert_array_equal(bst(np.zeros(3), 0.5), np.zeros(3))
    v = np.array([3.0, 4.0])
    np.testing.assert_allclose(bst(v, 2.5), v / 2.0)  # (1 - 2.5/5) v
    out = bst(v, 5.0)  # exactly at the boundary
    assert out.dtype == float
    np.testing.assert_array_equal(out, np.zeros(2))
    np.testing.assert_array_equal(bst(v, 6.0), np.zeros(2))
    np.testing.assert_array_equal(bst(v, 0.0), v)
    with pytest.raises(InvalidInput):
        bst(v, -0.1)


def test_bst_is_proximal_map():
    # bst(z, tau) minimizes (1/2)||b - z||^2 + tau ||b|| (check by sampling)
    rng = np.random.default_rng(0)
    for _ in range(20):
        z = rng.standard_normal(4) * 2.0
        tau = rng.uniform(0, 3)
        b = bst(z, tau)
        val = 0.5 * np.sum((b - z) ** 2) + tau * np.linalg.norm(b)
        for _ in range(30):
            other = b + rng.standard_normal(4) * rng.uniform(0, 1)
            alt = 0.5 * np.sum((other - z) ** 2) + tau * np.linalg.norm(other)
            assert alt >= val - 1e-12


# ---------------------------------------------------------------------------
# row update
# ---------------------------------------------------------------------------

def test_row_update_satisfies_optimality_conditions():
    # After the update, row j satisfies the subgradient condition of
    # min_b (1/2nq)||Rj - X_j b||^2_{S^{-1}} + lam ||b||.
    for seed in range(10):
        x, obs = _instance(seed)
        rng = np.random.default_rng(200 + seed)
        beta = rng.standard_normal((8, 6)) * 0.2
        s = spcl(obs.cov_y / obs.q, 0.05)
        rbar = obs.mean - x @ beta
        lam = 0.02
        n, q = obs.n, obs.q
        j = int(rng.integers(0, 8))
        row, rbar = update_beta_row_clar(j, beta, x, rbar, s.inverse,
                                         lam, n, q)
        grad_term = x[:, j] @ s.inverse @ rbar / (n * q)
        if row.any():
            # gradient balances the penalty subgradient exactly
            np.testing.assert_allclose(grad_term,
                                       lam * row / np.linalg.norm(row),
                                       atol=1e-10)
        else:
            assert np.linalg.norm(grad_term) <= lam * (1.0 + 1e-10)


def test_row_update_maintains_residual_invariant():
    x, obs = _instance(3)
    rng = np.random.default_rng(9)
    beta = rng.standard_normal((8, 6)) * 0.3
    s = spcl(obs.cov_y / obs.q, 0.05)
    rbar = obs.mean - x @ beta
    for j in range(8):
        _, rbar = update_beta_row_clar(j, beta, x, rbar, s.inverse,
                                       0.01, obs.n, obs.q)
        np.testing.assert_allclose(rbar, obs.mean - x @ beta, atol=1e-12)


def test_row_update_zero_curvature_freezes_row():
    x, obs = _instance(4)
    x = x.copy()
    x[:, 2] = 0.0
    beta = np.ones((8, 6))
    rbar = obs.mean - x @ beta
    with pytest.warns(RuntimeWarning):
        row, _ = update_beta_row_clar(2, beta, x, rbar, np.eye(obs.n),
                                      0.01, obs.n, obs.q)
    np.testing.assert_array_equal(row, np.zeros(6))


def test_row_update_with_identity_metric_is_homoscedastic_update():
    # with S = Id the update is the plain multitask-lasso coordinate step
    x, obs = _instance(5)
    rng = np.random.default_rng(10)
    beta = rng.standard_normal((8, 6)) * 0.1
    beta_ref = beta.copy()
    rbar = obs.mean - x @ beta
    lam = 0.03
    j = 4
    row, _ = update_beta_row_clar(j, beta, x, rbar.copy(), np.eye(obs.n),
                                  lam, obs.n, obs.q)
    xj = x[:, j]
    lj = float(xj @ xj)
    target = xj @ (rbar + np.outer(xj, beta_ref[j])) / lj
    expected = bst(target, lam * obs.n * obs.q / lj)
    np.testing.assert_allclose(row, expected, atol=1e-12)


# ---------------------------------------------------------------------------
# noise update
# ---------------------------------------------------------------------------

def test_update_s_clar_matches_projected_gradient_oracle():
    # the closed form minimizes
    #   (1/2nqr) sum_l ||R^(l)||^2_{S^{-1}} + Tr(S)/(2n) over {S >= floor I}
    for seed in range(6):
        x, obs = _instance(seed, n=5, p=4, q=4, r=3)
        rng = np.random.default_rng(300 + seed)
        beta = rng.standard_normal((4, 4)) * 0.3
        floor = (0.01, 0.1, 1.0)[seed % 3]
        closed = update_s_clar(obs, x, beta, floor).matrix
        gram = oracles.stacked_residual_gram(obs.repetitions, x, beta)
        n, q, r = obs.n, obs.q, obs.r
        slow = oracles.pg_noise_minimizer(gram, floor,
                                          denom_quad=2.0 * n * q * r,
                                          denom_tr=2.0 * n)
        assert np.linalg.norm(closed - slow) < 1e-6


def test_update_s_clar_floor_active_when_residuals_vanish():
    x, obs = _instance(0, snr=1e12)
    beta_star_fit = np.linalg.lstsq(x, obs.mean, rcond=None)[0]
    s = update_s_clar(obs, x, beta_star_fit, 0.5)
    assert np.linalg.eigvalsh(s.matrix).min() >= 0.5 - 1e-12


# ---------------------------------------------------------------------------
# critical penalty
# ---------------------------------------------------------------------------

def test_lambda_max_closed_form():
    x, obs = _instance(1)
    sigma_min = default_sigma_min(obs)
    smax = spcl(obs.cov_y / obs.q, sigma_min)
    manual = np.max(np.linalg.norm(x.T @ smax.inverse @ obs.mean, axis=1)) \
        / (obs.n * obs.q)
    assert abs(lambda_max_clar(obs, x) - manual) < 1e-14


@pytest.mark.parametrize("name", ESTIMATOR_NAMES)
def test_lambda_max_is_sharp(name):
    # just above: exactly zero; just below: a nonzero row appears
    for seed in range(2):
        x, obs = _instance(40 + seed, n=12, p=10, q=5, r=4)
        mu = 0.1 if name == "mrcer" else None
        lam_max = lambda_max_for(name, obs, x, mu=mu)
        assert lam_max > 0
        kind = EstimatorKind(name, mu=mu)
        above = SolverConfig(lam=1.01 * lam_max, max_iters=300)
        res = solve(kind, obs, x, above)
        assert res.beta.support == frozenset()
        below = SolverConfig(lam=0.99 * lam_max, max_iters=300,
                             gap_tol=1e-10)
        res = solve(kind, obs, x, below)
        assert len(res.beta.support) > 0


def test_lambda_max_zero_design():
    obs = RepeatedObservations(np.zeros((2, 3, 2)))
    assert lambda_max_clar(obs, np.zeros((3, 2)), sigma_min=0.1) == 0.0


# ---------------------------------------------------------------------------
# graphical lasso
# ---------------------------------------------------------------------------

def test_glasso_matches_ista_oracle():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((3, 3))
    emp = a @ a.T / 3.0 + 0.5 * np.eye(3)
    prec = glasso(emp, 0.1)
    slow = oracles.glasso_ista(emp, 0.1)
    assert np.linalg.norm(prec - slow) < 1e-4
    assert oracles.glasso_kkt_gap(emp, prec, 0.1) < 1e-4


def test_glasso_large_penalty_gives_diagonal_precision():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((4, 4))
    emp = a @ a.T / 4.0 + np.eye(4)
    prec = glasso(emp, 100.0)
    off = prec - np.diag(np.diag(prec))
    assert np.abs(off).max() < 1e-8
    np.testing.assert_allclose(np.diag(prec), 1.0 / np.diag(emp), rtol=1e-6)


def test_glasso_small_penalty_approaches_inverse():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((6, 3))
    emp = a.T @ a / 6.0
    prec = glasso(emp, 1e-8)
    np.testing.assert_allclose(prec, np.linalg.inv(emp), rtol=1e-3)


def test_glasso_handles_rank_deficient_input():
    # zero residual matrix: diagonal loading keeps the problem well posed
    prec = glasso(np.zeros((3, 3)), 0.5)
    assert np.all(np.isfinite(prec))
    assert np.linalg.eigvalsh(prec).min() > 0


def test_glasso_validation():
    with pytest.raises(InvalidInput):
        glasso(np.eye(2), 0.0)
    with pytest.raises(InvalidInput):
        glasso(np.ones((2, 3)), 0.1)
    # mildly asymmetric input is symmetrized, not rejected
    asym = np.array([[2.0, 0.3], [0.1, 1.0]])
    sym = (asym + asym.T) / 2.0
    np.testing.assert_allclose(glasso(asym, 0.05), glasso(sym, 0.05),
                               atol=1e-12)


# ---------------------------------------------------------------------------
# estimator kinds and dispatch
# ---------------------------------------------------------------------------

def test_estimator_kind_validation():
    assert EstimatorKind("clar").mu is None
    with pytest.raises(InvalidInput):
        EstimatorKind("nope")
    with pytest.raises(InvalidInput):
        EstimatorKind("mrcer")  # needs mu
    with pytest.raises(InvalidInput):
        EstimatorKind("mrcer", mu=-1.0)
    with pytest.raises(InvalidInput):
        EstimatorKind("clar", mu=0.5)  # mu is mrcer-only


def test_solve_dispatch_accepts_strings():
    x, obs = _instance(6)
    config = SolverConfig(lam=0.5 * lambda_max_for("clar", obs, x),
                          max_iters=200)
    a = solve("clar", obs, x, config)
    b = solve(EstimatorKind("clar"), obs, x, config)
    np.testing.assert_array_equal(a.beta.beta, b.beta.beta)
    assert a.estimator == "clar"


# ---------------------------------------------------------------------------
# engine behavior
# ---------------------------------------------------------------------------

def test_solve_at_lambda_max_returns_zero_immediately():
    x, obs = _instance(7)
    lam_max = lambda_max_clar(obs, x)
    res = solve_clar(obs, x, SolverConfig(lam=lam_max * 1.0))
    assert res.beta.support == frozenset()
    assert res.converged
    assert res.gap_trace and res.gap_trace[-1] < 1e-10


def test_objective_trace_monotone_convex():
    x, obs = _instance(8, n=12, p=10, q=6, r=4)
    lam = 0.3 * lambda_max_clar(obs, x)
    for solver, o in ((solve_clar, obs), (solve_sgcl, obs), (solve_mtl, obs)):
        res = solver(o, x, SolverConfig(lam=lam, max_iters=300,
                                        gap_tol=1e-8))
        trace = np.asarray(res.objective_trace)
        assert np.all(np.diff(trace) <= 1e-10)
        assert all(g >= 0.0 for g in res.gap_trace)


def test_objective_trace_monotone_mle_family():
    # alternating minimization decreases the nonconvex objectives too; allow
    # relative rounding slack because the precision factors reach ~1/floor^2
    x, obs = _instance(9, n=12, p=10, q=6, r=4)
    for solver, kwargs in ((solve_mle, {}), (solve_mler, {}),
                           (solve_mrcer, dict(mu=0.1))):
        lam = 0.3 * lambda_max_for(
            "mrcer" if kwargs else "mle", obs, x, mu=kwargs.get("mu"))
        res = solver(obs, x, SolverConfig(lam=lam, max_iters=200,
                                          gap_tol=1e-6), **kwargs)
        trace = np.asarray(res.objective_trace)
        scale = np.maximum(1.0, np.abs(trace[:-1]))
        assert np.all(np.diff(trace) <= 1e-7 * scale)


def test_sgcl_equals_clar_with_single_repetition():
    x, obs = _instance(10, r=1)
    lam = 0.4 * lambda_max_clar(obs, x)
    config = SolverConfig(lam=lam, max_iters=120, gap_tol=1e-8)
    a = solve_clar(obs, x, config)
    b = solve_sgcl(obs, x, config)
    np.testing.assert_array_equal(a.beta.beta, b.beta.beta)
    np.testing.assert_array_equal(a.noise.matrix, b.noise.matrix)


def test_sgcl_noise_floor_is_scaled():
    x, obs = _instance(11, r=4)
    res = solve_sgcl(obs, x, SolverConfig(lam=0.3 * lambda_max_for(
        "sgcl", obs, x), sigma_min=0.2, max_iters=100))
    floor = 0.2 / np.sqrt(obs.r)
    assert np.linalg.eigvalsh(res.noise.matrix).min() >= floor - 1e-10
    assert res.noise.floor == pytest.approx(floor)


def test_mtl_matches_sklearn_multitask_lasso():
    # homoscedastic special case against an entirely external implementation:
    # sklearn minimizes (1/2n)||Y - XW||^2 + alpha ||W||_{2,1}, so
    # alpha = lam * q maps between the scalings.
    x, obs = _instance(12, n=20, p=12, q=5, r=1)
    lam = 0.3 * lambda_max_for("mtl", obs, x)
    res = solve_mtl(obs, x, SolverConfig(lam=lam, gap_tol=1e-12,
                                         max_iters=5000))
    ext = MultiTaskLasso(alpha=lam * obs.q, fit_intercept=False,
                         tol=1e-14, max_iter=20000)
    ext.fit(x, obs.mean)
    np.testing.assert_allclose(res.beta.beta, ext.coef_.T, atol=1e-8)


def test_warm_start_converges_fast_and_agrees():
    x, obs = _instance(13, r=4)
    lam = 0.3 * lambda_max_clar(obs, x)
    config = SolverConfig(lam=lam, gap_tol=1e-9, max_iters=2000,
                          s_update_freq=3)
    cold = solve_clar(obs, x, config)
    warm = solve_clar(obs, x, config, beta0=cold.beta.beta)
    assert warm.iterations <= cold.iterations
    f_cold = objective_clar(obs, x, cold.beta, cold.noise, lam)
    f_warm = objective_clar(obs, x, warm.beta, warm.noise, lam)
    assert abs(f_cold - f_warm) <= 10 * config.gap_tol


def test_callback_receives_every_sweep():
    x, obs = _instance(14)
    seen = []

    def cb(t, beta, noise):
        seen.append((t, beta))

    solve_clar(obs, x, SolverConfig(lam=0.3 * lambda_max_clar(obs, x),
                                    max_iters=20, gap_tol=1e-14),
               callback=cb)
    ts = [t for t, _ in seen]
    assert ts == list(range(1, len(ts) + 1))
    # callback gets copies, not views of the working buffer
    assert len({id(b) for _, b in seen}) == len(seen)


def test_iteration_cap_reports_unconverged():
    x, obs = _instance(15, n=14, p=20, q=8, r=2)
    res = solve_clar(obs, x, SolverConfig(
        lam=0.05 * lambda_max_clar(obs, x), max_iters=3, gap_tol=1e-14))
    assert not res.converged
    assert res.iterations == 3
    assert res.wall_time > 0.0


def test_non_finite_inputs_rejected():
    x, obs = _instance(16)
    bad = obs.repetitions.copy()
    bad[0, 0, 0] = np.nan
    with pytest.raises(InvalidInput):
        RepeatedObservations(bad)


def test_numerical_failure_carries_trace():
    err = NumericalFailure("boom", trace=[1.0, 2.0])
    assert err.trace == [1.0, 2.0]


def test_mrcer_returns_covariance_and_respects_mu():
    x, obs = _instance(17, r=4)
    lam = 0.3 * lambda_max_for("mrcer", obs, x, mu=0.2)
    res = solve_mrcer(obs, x, SolverConfig(lam=lam, max_iters=150), mu=0.2)
    assert res.noise.shape == (obs.n, obs.n)
    assert np.linalg.eigvalsh(res.noise).min() > 0
    np.testing.assert_allclose(res.noise, res.noise.T, atol=1e-12)
    with pytest.raises(InvalidInput):
        solve_mrcer(obs, x, SolverConfig(lam=lam), mu=0.0)


def test_mtl_result_has_no_noise_model():
    x, obs = _instance(18)
    res = solve_mtl(obs, x, SolverConfig(
        lam=0.5 * lambda_max_for("mtl", obs, x), max_iters=100))
    assert res.noise is None


def test_mle_noise_floor_uses_squared_scale():
    x, obs = _instance(19, r=4)
    res = solve_mle(obs, x, SolverConfig(
        lam=0.5 * lambda_max_for("mle", obs, x), sigma_min=0.3,
        max_iters=100))
    floor = 0.3 ** 2 / obs.r ** 2
    assert np.linalg.eigvalsh(res.noise).min() >= floor - 1e-12


def test_residual_gram_consistency_after_solve():
    # the engine's internal residual bookkeeping matches a fresh computation
    x, obs = _instance(20, r=3)
    lam = 0.25 * lambda_max_clar(obs, x)
    res = solve_clar(obs, x, SolverConfig(lam=lam, max_iters=400,
                                          gap_tol=1e-9))
    fresh = update_s_clar(obs, x, res.beta.beta, res.noise.floor)
    assert np.linalg.norm(fresh.matrix - res.noise.matrix) < 1e-8
