"""Data model for multitask regression with repeated measurements.

Holds the design matrix, the repeated observation stack with its cached mean
and Gram matrix, row-sparse coefficients, the estimated co-standard-deviation
matrix, solver configuration, and the objective / residual-Gram routines
shared by the solvers.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateDesign, InvalidInput
from .spectral import SpectralDecomposition, sym_eig


def l21_norm(beta):
    """Sum of Euclidean row norms of a p x q matrix."""
    return float(np.sum(np.linalg.norm(beta, axis=1)))


def as_matrix(x):
    """Return the underlying 2-D array of a DesignMatrix or array-like."""
    if isinstance(x, DesignMatrix):
        return x.matrix
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise InvalidInput(f"expected a 2-D design matrix, got ndim={x.ndim}")
    return x


class DesignMatrix:
    """Design (gain) matrix X of shape (n, p) with cached column norms."""

    def __init__(self, matrix):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
            raise InvalidInput(f"design matrix must be 2-D and nonempty, "
                               f"got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise InvalidInput("design matrix contains non-finite entries")
        self.matrix = matrix
        self._column_norms = None

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def p(self):
        return self.matrix.shape[1]

    @property
    def column_norms(self):
        if self._column_norms is None:
            self._column_norms = np.linalg.norm(self.matrix, axis=0)
        return self._column_norms


class RepeatedObservations:
    """The r repeated measurement matrices Y^(1)..Y^(r).

    Stores the stack as an (r, n, q) array together with the arithmetic mean
    Ybar and the Gram matrix cov_y = (1/r) sum_l Y^(l) Y^(l)^T, both computed
    once at construction.
    """

    def __init__(self, repetitions):
        reps = np.asarray(repetitions, dtype=float)
        if reps.ndim == 2:
            reps = reps[None]
        if reps.ndim != 3 or reps.shape[0] < 1:
            raise InvalidInput("repetitions must be one or more n x q "
                               f"matrices, got shape {reps.shape}")
        if not np.all(np.isfinite(reps)):
            raise InvalidInput("observations contain non-finite entries")
        self.repetitions = reps
        self.mean = reps.mean(axis=0)
        # Summed as a loop of symmetric Gram products so that the r = 1 stack
        # reproduces mean @ mean.T bit-for-bit.
        acc = np.zeros((reps.shape[1], reps.shape[1]))
        for rep in reps:
            acc += rep @ rep.T
        cov = acc / reps.shape[0]
        self.cov_y = (cov + cov.T) / 2.0

    @property
    def r(self):
        return self.repetitions.shape[0]

    @property
    def n(self):
        return self.repetitions.shape[1]

    @property
    def q(self):
        return self.repetitions.shape[2]

    def mean_view(self):
        """Single-repetition view holding only the averaged observation."""
        return RepeatedObservations(self.mean[None])


def as_observations(obs):
    """Coerce an (r, n, q) stack, a single matrix, or pass through."""
    if isinstance(obs, RepeatedObservations):
        return obs
    return RepeatedObservations(obs)


class Coefficients:
    """Row-sparse p x q coefficient matrix with explicit support tracking.

    A row belongs to the support iff its Euclidean norm is exactly nonzero:
    block soft-thresholding produces exact zeros, so no epsilon threshold is
    applied.
    """

    def __init__(self, beta):
        beta = np.asarray(beta, dtype=float)
        if beta.ndim != 2:
            raise InvalidInput(f"beta must be 2-D, got ndim={beta.ndim}")
        self.beta = beta

    @property
    def p(self):
        return self.beta.shape[0]

    @property
    def q(self):
        return self.beta.shape[1]

    @property
    def support(self):
        """Frozenset of row indices with nonzero rows."""
        nonzero = np.flatnonzero(np.any(self.beta != 0.0, axis=1))
        return frozenset(int(j) for j in nonzero)


@dataclass(frozen=True)
class CoStdMatrix:
    """Symmetric positive (semi-)definite noise matrix with spectral cache.

    ``matrix`` is S for the co-standard-deviation estimators or Sigma for the
    MLE family; ``inverse`` is cached (None when the matrix is singular, which
    only occurs for synthetic noiseless instances) and ``decomposition``
    holds the eigensystem of ``matrix``.
    """

    matrix: np.ndarray
    inverse: np.ndarray
    decomposition: SpectralDecomposition
    floor: float = None

    @classmethod
    def from_matrix(cls, matrix, floor=None):
        dec = sym_eig(matrix)
        smallest = dec.values[-1] if dec.values.size else 0.0
        inverse = None
        if smallest > 0:
            inverse = (dec.basis / dec.values) @ dec.basis.T
        return cls(matrix=np.asarray(matrix, dtype=float), inverse=inverse,
                   decomposition=dec, floor=floor)

    @property
    def n(self):
        return self.matrix.shape[0]

    def trace(self):
        return float(np.trace(self.matrix))


@dataclass(frozen=True)
class SolverConfig:
    """Configuration shared by all solvers.

    Attributes
    ----------
    lam : float
        Regularization strength of the row-sparsity penalty.
    sigma_min : float or None
        Spectral floor; None applies the default rule
        ``||Ybar|| / (1000 * n * q)`` at solve time.  Estimator-specific
        rescalings (sigma_min/sqrt(r) for the averaged concomitant solver,
        sigma_min^2 and sigma_min^2/r^2 covariance floors for the MLE family)
        are derived from this single value.
    s_update_freq : int
        Number of coefficient sweeps per noise update (f_Sigma).
    max_iters : int
        Sweep cap T.
    gap_tol : float
        Duality-gap tolerance for convex solvers; non-convex solvers stop
        when the objective decrease over an update cycle drops below
        gap_tol/10.
    seed : int or None
        RNG handle reserved for randomized tie-breaking; unused by default.
    """

    lam: float
    sigma_min: float = None
    s_update_freq: int = 10
    max_iters: int = 10000
    gap_tol: float = 1e-6
    seed: int = None

    def __post_init__(self):
        if not self.lam > 0:
            raise InvalidInput(f"lambda must be positive, got {self.lam}")
        if self.sigma_min is not None and not self.sigma_min > 0:
            raise InvalidInput(
                f"sigma_min must be positive, got {self.sigma_min}")
        if int(self.s_update_freq) < 1:
            raise InvalidInput("s_update_freq must be >= 1")
        if int(self.max_iters) < 1:
            raise InvalidInput("max_iters must be >= 1")
        if not self.gap_tol > 0:
            raise InvalidInput(f"gap_tol must be positive, got {self.gap_tol}")


def default_sigma_min(obs):
    """Default spectral floor ||Ybar|| / (1000 * n * q)."""
    obs = as_observations(obs)
    return float(np.linalg.norm(obs.mean)) / (1000.0 * obs.n * obs.q)


def _beta_array(beta):
    if isinstance(beta, Coefficients):
        return beta.beta
    return np.asarray(beta, dtype=float)


def _s_inverse(s):
    if isinstance(s, CoStdMatrix):
        if s.inverse is None:
            raise InvalidInput("noise matrix is singular")
        return s.matrix, s.inverse
    s = np.asarray(s, dtype=float)
    return s, np.linalg.inv(s)


def objective_clar(obs, x, beta, s, lam):
    """Primal objective: data fit + trace penalty + row-sparsity penalty.

    sum_l ||Y^(l) - X B||^2_{S^{-1}} / (2 n q r) + Tr(S) / (2 n)
        + lam * ||B||_{2,1}

    evaluated term by term from the raw repetitions (no cached Gram
    shortcuts), so it doubles as an independent check of the solvers'
    internal objective bookkeeping.
    """
    obs = as_observations(obs)
    x = as_matrix(x)
    beta = _beta_array(beta)
    s_mat, s_inv = _s_inverse(s)
    n, q, r = obs.n, obs.q, obs.r
    if x.shape[0] != n or beta.shape != (x.shape[1], q):
        raise InvalidInput(
            f"inconsistent shapes: X {x.shape}, beta {beta.shape}, "
            f"observations ({n}, {q})")
    if s_mat.shape != (n, n):
        raise InvalidInput(f"noise matrix must be {n} x {n}, "
                           f"got {s_mat.shape}")
    xb = x @ beta
    quad = 0.0
    for rep in obs.repetitions:
        res = rep - xb
        quad += float(np.sum(res * (s_inv @ res)))
    return (quad / (2.0 * n * q * r)
            + float(np.trace(s_mat)) / (2.0 * n)
            + lam * l21_norm(beta))


def residual_gram(obs, x, beta):
    """Gram matrix sum_l (Y^(l) - X B)(Y^(l) - X B)^T in O(q n^2).

    Expanded through the precomputed cov_y so the cost is independent of r:

        r*cov_y - r*Ybar (X B)^T - r*(X B) Ybar^T + r*(X B)(X B)^T
    """
    obs = as_observations(obs)
    x = as_matrix(x)
    beta = _beta_array(beta)
    if x.shape[0] != obs.n or beta.shape != (x.shape[1], obs.q):
        raise InvalidInput(
            f"inconsistent shapes: X {x.shape}, beta {beta.shape}, "
            f"observations ({obs.n}, {obs.q})")
    r = obs.r
    xb = x @ beta
    return (r * obs.cov_y - r * (obs.mean @ xb.T) - r * (xb @ obs.mean.T)
            + r * (xb @ xb.T))


def snr(x, beta_star, obs):
    """Signal-to-noise ratio ||X B*|| / (sqrt(r) ||X B* - Ybar||).

    Returns math.inf when the averaged observations equal the noiseless
    signal exactly.
    """
    obs = as_observations(obs)
    x = as_matrix(x)
    beta_star = _beta_array(beta_star)
    signal = x @ beta_star
    noise = float(np.linalg.norm(signal - obs.mean))
    if noise == 0.0:
        return math.inf
    return float(np.linalg.norm(signal)) / (math.sqrt(obs.r) * noise)


def preprocess_rescale(x, obs):
    """Row/column rescaling for heterogeneous designs.

    First divides row i of X and of every Y^(l) by ||X_{i,:}||, then divides
    each column of X by its norm.  After the second step every column of X
    has unit norm (rows no longer necessarily do).
    """
    x = as_matrix(x)
    obs = as_observations(obs)
    if x.shape[0] != obs.n:
        raise InvalidInput(f"X has {x.shape[0]} rows but observations "
                           f"have n={obs.n}")
    row_norms = np.linalg.norm(x, axis=1)
    if np.any(row_norms == 0.0):
        raise DegenerateDesign("design matrix has a zero row")
    x_rows = x / row_norms[:, None]
    reps = obs.repetitions / row_norms[None, :, None]
    col_norms = np.linalg.norm(x_rows, axis=0)
    if np.any(col_norms == 0.0):
        raise DegenerateDesign("design matrix has a zero column")
    return DesignMatrix(x_rows / col_norms[None, :]), \
        RepeatedObservations(reps)
