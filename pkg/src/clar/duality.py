"""Dual objective, feasible dual-point construction, and duality gaps.

The dual feasible set constrains the averaged dual variable through
``||X^T Theta_bar||_{2,inf} <= 1`` and the stacked variables through
``||sum_l Theta^(l) Theta^(l)^T||_2 <= r / (lambda^2 n^2 q)``.  Any feasible
point certifies a valid gap by weak duality; candidates are built from the
current residuals and rescaled uniformly into feasibility.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InternalError, InvalidInput
from .model import as_matrix, as_observations, _beta_array

_FEAS_TOL = 1e-10


@dataclass(frozen=True)
class DualPoint:
    """Dual variables Theta^(1)..Theta^(r) with feasibility status.

    Attributes
    ----------
    thetas : ndarray, shape (r, n, q)
    mean_theta : ndarray, shape (n, q)
        Theta_bar = (1/r) sum_l Theta^(l).
    feasible : bool
        Set by the constructor; both constraints hold within 1e-10 when true.
    """

    thetas: np.ndarray
    mean_theta: np.ndarray
    feasible: bool


def _stacked_outer(thetas):
    """sum_l Theta^(l) Theta^(l)^T, symmetrized."""
    acc = np.einsum("lnq,lmq->nm", thetas, thetas)
    return (acc + acc.T) / 2.0


def check_feasible(thetas, x, lam, tol=_FEAS_TOL):
    """Verify both dual constraints within ``tol``; returns bool."""
    thetas = np.asarray(thetas, dtype=float)
    x = as_matrix(x)
    r, n, q = thetas.shape
    mean_theta = thetas.mean(axis=0)
    row_norms = np.linalg.norm(x.T @ mean_theta, axis=1)
    if row_norms.size and row_norms.max() > 1.0 + tol:
        return False
    top = float(np.linalg.eigvalsh(_stacked_outer(thetas))[-1])
    return top <= r / (lam ** 2 * n ** 2 * q) + tol


def dual_objective(dual, obs, lam, sigma_min, n, q, r):
    """Dual objective

    D(Theta) = (sigma_min/2) (1 - (q n lam^2 / r) sum_l ||Theta^(l)||^2)
               + (lam/r) sum_l <Theta^(l), Y^(l)>.

    Weak duality: D(Theta) lower-bounds the primal objective at every
    primal-feasible (B, S) for every feasible dual point.
    """
    if not dual.feasible:
        raise InvalidInput("dual point is not feasible")
    obs = as_observations(obs)
    thetas = dual.thetas
    sq = float(np.sum(thetas ** 2))
    inner = float(np.sum(thetas * obs.repetitions))
    return (sigma_min / 2.0) * (1.0 - (q * n * lam ** 2 / r) * sq) \
        + (lam / r) * inner


def dual_from_residuals(obs, x, beta, lam, n, q, s_inv=None):
    """Feasible dual point from the current residuals.

    The candidate is Theta^(l) = M (Y^(l) - X B) / (n q lam) with M = s_inv
    when given (the solver passes its current noise metric, which makes the
    candidate exact at the optimum) and M = Id otherwise (plain residual
    rescaling).  A single factor

        alpha = min(1, 1/||X^T Theta_bar||_{2,inf},
                    sqrt(r / (lam^2 n^2 q ||sum_l Theta Theta^T||_2)))

    is applied to all Theta^(l); it preserves both constraints because one is
    1-homogeneous and the other 2-homogeneous in alpha <= 1.
    """
    obs = as_observations(obs)
    x = as_matrix(x)
    beta = _beta_array(beta)
    r = obs.r
    residuals = obs.repetitions - (x @ beta)[None]
    cand = residuals / (n * q * lam)
    if s_inv is not None:
        cand = np.matmul(s_inv, cand)
    mean_cand = cand.mean(axis=0)
    row_max = float(np.max(np.linalg.norm(x.T @ mean_cand, axis=1), initial=0.0))
    top = float(np.linalg.eigvalsh(_stacked_outer(cand))[-1])
    caps = [1.0]
    if row_max > 0.0:
        caps.append(1.0 / row_max)
    if top > 0.0:
        caps.append(math.sqrt(r / (lam ** 2 * n ** 2 * q * top)))
    alpha = min(caps)
    thetas = alpha * cand
    return DualPoint(thetas=thetas, mean_theta=alpha * mean_cand,
                     feasible=True)


def duality_gap(primal_value, dual_value):
    """Gap = primal - dual, clamped at zero against floating-point noise.

    A gap below -1e-6 means weak duality failed, which can only be an
    implementation bug, and raises InternalError.
    """
    gap = primal_value - dual_value
    if gap < -1e-6:
        raise InternalError(
            f"negative duality gap {gap:.3e}: weak-duality violation")
    return max(gap, 0.0)


def mtl_dual_point(mean_residual, x, lam, n, q):
    """Feasible dual point of the homoscedastic multitask problem.

    Candidate (Ybar - X B)/(n q lam), rescaled by 1/max(1,
    ||X^T Theta||_{2,inf}).
    """
    x = as_matrix(x)
    theta = np.asarray(mean_residual, dtype=float) / (n * q * lam)
    row_max = float(np.max(np.linalg.norm(x.T @ theta, axis=1), initial=0.0))
    if row_max > 1.0:
        theta = theta / row_max
    return theta


def mtl_dual_objective(theta, mean, lam, n, q):
    """D(Theta) = lam <Theta, Ybar> - (n q lam^2 / 2) ||Theta||^2."""
    theta = np.asarray(theta, dtype=float)
    return lam * float(np.sum(theta * mean)) \
        - (n * q * lam ** 2 / 2.0) * float(np.sum(theta ** 2))
