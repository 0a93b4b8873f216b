"""Block-coordinate-descent solvers for the concomitant estimators.

One alternating engine drives all six estimators: a noise update (clipped
square root, eigenvalue clipping, graphical lasso, or nothing) every
``s_update_freq`` sweeps followed by cyclic block-soft-thresholded row
updates of the coefficients.  The convex solvers stop on a duality-gap
certificate; the biconvex MLE family stops when the objective decrease over
an update cycle falls below ``gap_tol / 10``.
"""

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from . import duality
from .exceptions import InvalidInput, NumericalFailure
from .model import (Coefficients, SolverConfig, _beta_array, as_matrix,
                    as_observations, default_sigma_min, l21_norm,
                    residual_gram)
from .spectral import cl, spcl, sym_eig

ESTIMATOR_NAMES = ("clar", "sgcl", "mtl", "mle", "mler", "mrcer")
_CONVEX = frozenset({"clar", "sgcl", "mtl"})


@dataclass(frozen=True)
class EstimatorKind:
    """Selected estimator; ``mu`` is the graphical-lasso penalty (mrcer only).

    Valid names: clar, sgcl, mtl, mle, mler, mrcer.
    """

    name: str
    mu: float = None

    def __post_init__(self):
        if self.name not in ESTIMATOR_NAMES:
            raise InvalidInput(f"unknown estimator {self.name!r}; expected "
                               f"one of {ESTIMATOR_NAMES}")
        if self.name == "mrcer" and (self.mu is None or not self.mu > 0):
            raise InvalidInput("mrcer requires a positive mu")
        if self.name != "mrcer" and self.mu is not None:
            raise InvalidInput(f"{self.name} does not take mu")


@dataclass
class SolveResult:
    """Outcome of a solve.

    ``noise`` is a CoStdMatrix (S) for clar/sgcl, the covariance matrix Sigma
    for the MLE family, and None for mtl.  ``gap_trace`` is populated for the
    convex solvers only; gaps are evaluated on the noise-update cadence.
    ``objective_trace`` holds the objective right after the first noise
    update and then after every sweep.
    """

    beta: Coefficients
    noise: object
    objective_trace: list
    gap_trace: list
    iterations: int
    converged: bool
    wall_time: float
    estimator: str


def bst(x, tau):
    """Block soft-thresholding: (1 - tau/||x||)_+ x, exact zero at the bound.

    BST(0, tau) = 0 by convention.
    """
    if tau < 0:
        raise InvalidInput(f"threshold must be nonnegative, got {tau}")
    x = np.asarray(x, dtype=float)
    norm = float(np.linalg.norm(x))
    if norm <= tau:
        return np.zeros_like(x)
    return (1.0 - tau / norm) * x


def update_beta_row_clar(j, beta, x, mean_residual, s_inv, lam, n, q):
    """One closed-form row update of Algorithm-style BCD, in place.

    Restores the residual invariant ``mean_residual = Ybar - X B`` around the
    update:  R += X_j B_j ;  B_j = BST(X_j^T S^{-1} R / L_j, lam n q / L_j) ;
    R -= X_j B_j, with curvature L_j = ||X_j||^2_{S^{-1}}.

    Returns the updated row and residual.  Rows with L_j = 0 are frozen at
    zero with a warning.
    """
    x = as_matrix(x)
    beta = _beta_array(beta)
    xj = x[:, j]
    wj = s_inv @ xj
    lj = float(xj @ wj)
    if lj <= 0.0:
        warnings.warn(f"row {j} has zero curvature; frozen at zero",
                      RuntimeWarning)
        beta[j] = 0.0
        return beta[j], mean_residual
    if beta[j].any():
        mean_residual += np.outer(xj, beta[j])
    cvec = (wj @ mean_residual) / lj
    beta[j] = bst(cvec, lam * n * q / lj)
    if beta[j].any():
        mean_residual -= np.outer(xj, beta[j])
    return beta[j], mean_residual


def update_s_clar(obs, x, beta, sigma_min):
    """Closed-form noise update SpCl((1/rq) sum_l R^(l) R^(l)^T, sigma_min).

    The Gram matrix comes from the O(q n^2) residual expansion and is
    symmetrized before the clipped square root.
    """
    obs = as_observations(obs)
    gram = residual_gram(obs, x, beta)
    gram = (gram + gram.T) / 2.0
    return spcl(gram / (obs.r * obs.q), sigma_min)


def lambda_max_clar(obs, x, sigma_min=None):
    """Critical penalty: (1/nq) ||X^T Smax^{-1} Ybar||_{2,inf}.

    Smax = SpCl((1/qr) sum_l Y^(l) Y^(l)^T, sigma_min); solving at or above
    this level returns exactly zero coefficients.
    """
    obs = as_observations(obs)
    x = as_matrix(x)
    if sigma_min is None:
        sigma_min = default_sigma_min(obs)
    smax = spcl(obs.cov_y / obs.q, sigma_min)
    scores = np.linalg.norm(x.T @ (smax.inverse @ obs.mean), axis=1)
    return float(np.max(scores, initial=0.0)) / (obs.n * obs.q)


def lambda_max_for(kind, obs, x, sigma_min=None, mu=None):
    """Zero-fixed-point penalty threshold for any estimator.

    Each alternating solver updates its noise matrix first, so beta = 0 is a
    fixed point iff lambda >= ||X^T M0 Ybar||_{2,inf} / (n q) with M0 the
    inverse noise matrix produced by the first update at beta = 0.  This is
    the exact quantity an empirical bisection would locate.
    """
    if isinstance(kind, EstimatorKind):
        mu = kind.mu if mu is None else mu
        kind = kind.name
    obs = as_observations(obs)
    x = as_matrix(x)
    n, q, r = obs.n, obs.q, obs.r
    if sigma_min is None:
        sigma_min = default_sigma_min(obs)
    if kind == "clar":
        return lambda_max_clar(obs, x, sigma_min)
    if kind == "mtl":
        scores = np.linalg.norm(x.T @ obs.mean, axis=1)
        return float(np.max(scores, initial=0.0)) / (n * q)
    mean_gram = (obs.mean @ obs.mean.T) / q
    if kind == "sgcl":
        m0 = spcl(mean_gram, sigma_min / math.sqrt(r)).inverse
    elif kind == "mle":
        m0 = np.linalg.inv(cl(mean_gram, sigma_min ** 2 / r ** 2))
    elif kind == "mler":
        m0 = np.linalg.inv(cl(obs.cov_y / q, sigma_min ** 2))
    elif kind == "mrcer":
        if mu is None or not mu > 0:
            raise InvalidInput("mrcer requires a positive mu")
        m0 = glasso(obs.cov_y / q, mu)
    else:
        raise InvalidInput(f"unknown estimator {kind!r}")
    scores = np.linalg.norm(x.T @ (m0 @ obs.mean), axis=1)
    return float(np.max(scores, initial=0.0)) / (n * q)


def _glasso_kkt_residual(emp, prec, mu):
    """Sup-norm of the graphical-lasso optimality residual."""
    w = np.linalg.inv(prec)
    grad = emp - w
    scale = max(float(np.max(np.abs(prec))), 1.0)
    nonzero = np.abs(prec) > 1e-10 * scale
    tight = np.abs(grad + mu * np.sign(prec))
    slack = np.maximum(np.abs(grad) - mu, 0.0)
    resid = np.where(nonzero, tight, slack)
    np.fill_diagonal(resid, np.abs(np.diag(grad)))
    return float(np.max(resid))


def glasso(emp_cov, mu, tol=1e-10, max_iter=1000):
    """Sparse precision matrix: argmin <emp_cov, K> - log det K + mu ||K||_1
    over the off-diagonal entries of K.

    Delegates to scikit-learn's coordinate-descent graphical lasso, with
    diagonal loading ``emp_cov + 1e-6 (tr/n) I`` applied when the smallest
    eigenvalue falls below 1e-8 (a zero-trace input is loaded with 1e-6 I so
    the problem stays bounded).  The result is accepted only when the
    optimality residual sup-norm is below 1e-4.
    """
    from sklearn.covariance import graphical_lasso as _sk_glasso

    emp = np.asarray(emp_cov, dtype=float)
    if emp.ndim != 2 or emp.shape[0] != emp.shape[1]:
        raise InvalidInput(f"emp_cov must be square, got shape {emp.shape}")
    if not mu > 0:
        raise InvalidInput(f"mu must be positive, got {mu}")
    emp = (emp + emp.T) / 2.0
    n = emp.shape[0]
    smallest = float(np.linalg.eigvalsh(emp)[0])
    if smallest < 1e-8:
        trace = float(np.trace(emp))
        load = 1e-6 * (trace / n) if trace > 0 else 1e-6
        emp = emp + load * np.eye(n)
    last_resid = math.inf
    for tol_k, iter_k in ((tol, max_iter), (tol * 1e-2, max_iter * 10)):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                _, prec = _sk_glasso(emp, alpha=mu, tol=tol_k,
                                     max_iter=iter_k)
        except (FloatingPointError, np.linalg.LinAlgError) as exc:
            raise NumericalFailure(f"graphical lasso failed: {exc}") from exc
        prec = (prec + prec.T) / 2.0
        last_resid = _glasso_kkt_residual(emp, prec, mu)
        if last_resid < 1e-4:
            return prec
    raise NumericalFailure(
        f"graphical lasso did not reach optimality "
        f"(residual {last_resid:.3e} >= 1e-4)")


def _alternating_bcd(obs, x, config, kind, floor, mu=None, beta0=None,
                     callback=None):
    """Shared alternating loop; see module docstring for the schedule."""
    t_start = time.perf_counter()
    obs = as_observations(obs)
    x = as_matrix(x)
    n, q, r = obs.n, obs.q, obs.r
    if x.shape[0] != n:
        raise InvalidInput(f"X has {x.shape[0]} rows, observations have "
                           f"n={n}")
    p = x.shape[1]
    lam = float(config.lam)
    f_sigma = int(config.s_update_freq)
    gap_tol = float(config.gap_tol)
    convex = kind in _CONVEX
    identity_metric = kind == "mtl"

    if beta0 is None:
        beta = np.zeros((p, q))
    else:
        beta = np.array(_beta_array(beta0), dtype=float, copy=True)
        if beta.shape != (p, q):
            raise InvalidInput(f"beta0 must have shape {(p, q)}, "
                               f"got {beta.shape}")

    mean = obs.mean
    if r > 1:
        bias = r * obs.cov_y - r * (mean @ mean.T)
        bias = (bias + bias.T) / 2.0
    else:
        bias = None

    rbar = mean - x @ beta
    metric = None
    noise_out = None
    obj_term = 0.0
    bias_inner = 0.0
    w = None
    lvec = None
    thr = None
    degenerate_warned = False

    def _gram_over_rq():
        xb = mean - rbar
        gram = (r * obs.cov_y - r * (mean @ xb.T) - r * (xb @ mean.T)
                + r * (xb @ xb.T))
        return ((gram + gram.T) / 2.0) / (r * q)

    def _objective():
        if identity_metric:
            return float(np.sum(rbar * rbar)) / (2.0 * n * q) \
                + lam * l21_norm(beta)
        quad = r * float(np.sum((metric @ rbar) * rbar)) + bias_inner
        return quad / (2.0 * n * q * r) + obj_term + lam * l21_norm(beta)

    def _dual_value():
        if identity_metric:
            theta = duality.mtl_dual_point(rbar, x, lam, n, q)
            return duality.mtl_dual_objective(theta, mean, lam, n, q)
        dp = duality.dual_from_residuals(obs, x, beta, lam, n, q,
                                         s_inv=metric)
        return duality.dual_objective(dp, obs, lam, floor, n, q, r)

    objective_trace = []
    gap_trace = []
    converged = False
    iterations = 0

    for t in range(1, int(config.max_iters) + 1):
        if (t - 1) % f_sigma == 0:
            if kind in ("clar", "sgcl"):
                s_state = spcl(_gram_over_rq(), floor)
                metric = s_state.inverse
                obj_term = float(np.sum(s_state.decomposition.values)) \
                    / (2.0 * n)
                noise_out = s_state
            elif kind in ("mle", "mler"):
                dec = sym_eig(_gram_over_rq())
                vals = np.maximum(np.maximum(dec.values, 0.0), floor)
                u = dec.basis
                metric = (u / vals) @ u.T
                obj_term = float(np.sum(np.log(vals))) / (2.0 * n)
                noise_out = (u * vals) @ u.T
            elif kind == "mrcer":
                metric = glasso(_gram_over_rq(), mu)
                sign, logdet = np.linalg.slogdet(metric)
                if sign <= 0:
                    raise NumericalFailure("precision matrix lost positive "
                                           "definiteness",
                                           trace=objective_trace)
                off_l1 = float(np.sum(np.abs(metric))
                               - np.sum(np.abs(np.diag(metric))))
                obj_term = (-logdet + mu * off_l1) / (2.0 * n)
                noise_out = metric
            if identity_metric:
                w = x.T
                lvec = np.sum(x * x, axis=0)
            else:
                w = (metric @ x).T
                lvec = np.einsum("pn,np->p", w, x)
                bias_inner = float(np.sum(metric * bias)) \
                    if bias is not None else 0.0
            if np.any(lvec <= 0.0):
                if not degenerate_warned:
                    warnings.warn("columns with zero curvature; their rows "
                                  "are frozen at zero", RuntimeWarning)
                    degenerate_warned = True
                beta[lvec <= 0.0] = 0.0  # zero columns: residual unaffected
            with np.errstate(divide="ignore"):
                thr = lam * n * q / lvec
            obj_now = _objective()
            if not math.isfinite(obj_now):
                raise NumericalFailure("objective is not finite",
                                       trace=objective_trace)
            if t == 1:
                objective_trace.append(obj_now)
            if convex:
                gap = duality.duality_gap(obj_now, _dual_value())
                gap_trace.append(gap)
                if gap < gap_tol:
                    converged = True
                    break

        for j in range(p):
            lj = lvec[j]
            if lj <= 0.0:
                continue
            xj = x[:, j]
            bj = beta[j]
            if bj.any():
                rbar += np.outer(xj, bj)
            new = bst((w[j] @ rbar) / lj, thr[j])
            beta[j] = new
            if new.any():
                rbar -= np.outer(xj, new)

        iterations = t
        obj_now = _objective()
        if not math.isfinite(obj_now):
            raise NumericalFailure("objective is not finite",
                                   trace=objective_trace)
        objective_trace.append(obj_now)
        if callback is not None:
            callback(t, beta.copy(), noise_out)
        if not convex and t > 1 and (t - 1) % f_sigma == 0:
            if objective_trace[-2] - objective_trace[-1] < gap_tol / 10.0:
                converged = True
                break

    noise_final = noise_out
    if kind == "mrcer" and noise_out is not None:
        cov = np.linalg.inv(noise_out)
        noise_final = (cov + cov.T) / 2.0
    elif kind == "mtl":
        noise_final = None
    return SolveResult(
        beta=Coefficients(beta),
        noise=noise_final,
        objective_trace=objective_trace,
        gap_trace=gap_trace,
        iterations=iterations,
        converged=converged,
        wall_time=time.perf_counter() - t_start,
        estimator=kind,
    )


def solve_clar(obs, x, config, beta0=None, callback=None):
    """Concomitant estimator on all repetitions, noise floor sigma_min.

    Convex; stops when the duality gap certificate drops below
    ``config.gap_tol``.
    """
    obs = as_observations(obs)
    sigma = config.sigma_min if config.sigma_min is not None \
        else default_sigma_min(obs)
    return _alternating_bcd(obs, x, config, kind="clar", floor=sigma,
                            beta0=beta0, callback=callback)


def solve_sgcl(mean_obs, x, config, beta0=None, callback=None):
    """Concomitant estimator on the averaged observation only.

    The noise floor is rescaled to sigma_min/sqrt(r); with r = 1 this solver
    performs exactly the same iterations as :func:`solve_clar`.
    """
    obs = as_observations(mean_obs)
    sigma = config.sigma_min if config.sigma_min is not None \
        else default_sigma_min(obs)
    return _alternating_bcd(obs.mean_view(), x, config, kind="sgcl",
                            floor=sigma / math.sqrt(obs.r), beta0=beta0,
                            callback=callback)


def solve_mtl(mean_obs, x, config, beta0=None, callback=None):
    """Homoscedastic multitask lasso on the averaged observation."""
    obs = as_observations(mean_obs)
    return _alternating_bcd(obs.mean_view(), x, config, kind="mtl",
                            floor=None, beta0=beta0, callback=callback)


def solve_mle(mean_obs, x, config, beta0=None, callback=None):
    """Smoothed maximum-likelihood estimator on the averaged observation.

    Covariance floor sigma_min^2 / r^2; biconvex, no gap certificate.
    """
    obs = as_observations(mean_obs)
    sigma = config.sigma_min if config.sigma_min is not None \
        else default_sigma_min(obs)
    return _alternating_bcd(obs.mean_view(), x, config, kind="mle",
                            floor=sigma ** 2 / obs.r ** 2, beta0=beta0,
                            callback=callback)


def solve_mler(obs, x, config, beta0=None, callback=None):
    """Smoothed maximum-likelihood estimator on all repetitions.

    Covariance floor sigma_min^2; biconvex, no gap certificate.
    """
    obs = as_observations(obs)
    sigma = config.sigma_min if config.sigma_min is not None \
        else default_sigma_min(obs)
    return _alternating_bcd(obs, x, config, kind="mler", floor=sigma ** 2,
                            beta0=beta0, callback=callback)


def solve_mrcer(obs, x, config, mu, beta0=None, callback=None):
    """Row-sparse regression with graphical-lasso precision updates.

    The precision matrix is refit by :func:`glasso` on the repetition-
    averaged empirical covariance at every noise update.
    """
    if mu is None or not mu > 0:
        raise InvalidInput("mrcer requires a positive mu")
    obs = as_observations(obs)
    return _alternating_bcd(obs, x, config, kind="mrcer", floor=None, mu=mu,
                            beta0=beta0, callback=callback)


def solve(kind, obs, x, config, beta0=None, callback=None):
    """Dispatch on an EstimatorKind (or estimator name)."""
    if isinstance(kind, str):
        kind = EstimatorKind(kind)
    if kind.name == "clar":
        return solve_clar(obs, x, config, beta0=beta0, callback=callback)
    if kind.name == "sgcl":
        return solve_sgcl(obs, x, config, beta0=beta0, callback=callback)
    if kind.name == "mtl":
        return solve_mtl(obs, x, config, beta0=beta0, callback=callback)
    if kind.name == "mle":
        return solve_mle(obs, x, config, beta0=beta0, callback=callback)
    if kind.name == "mler":
        return solve_mler(obs, x, config, beta0=beta0, callback=callback)
    return solve_mrcer(obs, x, config, kind.mu, beta0=beta0,
                       callback=callback)
