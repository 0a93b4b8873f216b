"""Synthetic instances: Toeplitz-correlated design, row-sparse coefficients,
Toeplitz-shaped repeated noise with exact signal-to-noise targeting, plus the
Monte-Carlo study of the two residual-covariance estimators.

Randomness comes from numpy's seedable 64-bit PCG64 generator.  Streams are
split deterministically: substream 0 draws the design, substream 1 the
coefficients, substream 2+l the l-th noise repetition, and covariance_study
keys one substream per trial, so results never depend on evaluation order.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .exceptions import InternalError, InvalidInput
from .model import (Coefficients, CoStdMatrix, DesignMatrix,
                    RepeatedObservations, snr)
from .spectral import sym_eig


@dataclass(frozen=True)
class SimConfig:
    """Scenario description; defaults mirror the standard synthetic setting
    (150 observations, 500 features, 100 tasks, 30 active rows)."""

    n: int = 150
    p: int = 500
    q: int = 100
    r: int = 20
    rho_x: float = 0.6
    rho_s: float = 0.4
    n_nonzero_rows: int = 30
    target_snr: float = 0.03
    seed: int = 0

    def __post_init__(self):
        for name in ("n", "p", "q", "r", "n_nonzero_rows"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise InvalidInput(f"{name} must be a positive integer, "
                                   f"got {value!r}")
        for name in ("rho_x", "rho_s"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise InvalidInput(f"{name} must lie in [0, 1), "
                                   f"got {value!r}")
        if self.n_nonzero_rows > self.p:
            raise InvalidInput(f"n_nonzero_rows={self.n_nonzero_rows} "
                               f"exceeds p={self.p}")
        if not (self.target_snr == math.inf or self.target_snr > 0):
            raise InvalidInput(f"target_snr must be positive or inf, "
                               f"got {self.target_snr!r}")
        if not isinstance(self.seed, (int, np.integer)):
            raise InvalidInput(f"seed must be an integer, got {self.seed!r}")


@dataclass(frozen=True)
class SimInstance:
    """Realized scenario: design, ground truth, observations, achieved SNR."""

    x: DesignMatrix
    beta_star: Coefficients
    s_star: CoStdMatrix
    obs: RepeatedObservations
    achieved_snr: float


def toeplitz_corr(dim, rho):
    """Correlation matrix with entry (i, j) = rho^|i-j|; SPD for rho < 1."""
    if not 0.0 <= rho < 1.0:
        raise InvalidInput(f"rho must lie in [0, 1), got {rho!r}")
    if not dim >= 1:
        raise InvalidInput(f"dim must be a positive integer, got {dim!r}")
    return toeplitz(rho ** np.arange(dim, dtype=float))


def _sqrt_spd(a):
    """Symmetric PSD square root through the eigendecomposition."""
    dec = sym_eig(a)
    root = np.sqrt(np.maximum(dec.values, 0.0))
    return (dec.basis * root) @ dec.basis.T


def _substream(seed, key):
    """Independent generator for one component of the scenario."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(key,)))


def generate(config):
    """Draw one SimInstance.

    Y^(l) = X B* + S* E^(l): the design is G T^{1/2} column-normalized with T
    Toeplitz(rho_x); B* has n_nonzero_rows standard-normal rows; S* is
    Toeplitz(rho_s) times the unique scalar that makes the realized SNR
    ||X B*|| / (sqrt(r) ||X B* - Ybar||) hit target_snr exactly.  An infinite
    target yields exactly zero noise.  Bit-reproducible for a fixed seed.
    """
    if not isinstance(config, SimConfig):
        raise InvalidInput("config must be a SimConfig")
    n, p, q, r = config.n, config.p, config.q, config.r

    gauss = _substream(config.seed, 0).standard_normal((n, p))
    x = gauss @ _sqrt_spd(toeplitz_corr(p, config.rho_x))
    norms = np.linalg.norm(x, axis=0)
    if np.any(norms == 0.0):
        raise InternalError("generated design has a zero column")
    x = x / norms

    rng_beta = _substream(config.seed, 1)
    rows = np.sort(rng_beta.choice(p, size=config.n_nonzero_rows,
                                   replace=False))
    beta_star = np.zeros((p, q))
    beta_star[rows] = rng_beta.standard_normal((config.n_nonzero_rows, q))
    signal = x @ beta_star

    shape = toeplitz_corr(n, config.rho_s)
    eps = np.stack([_substream(config.seed, 2 + l).standard_normal((n, q))
                    for l in range(r)])

    if config.target_snr == math.inf:
        scale = 0.0
    else:
        mean_noise = shape @ eps.mean(axis=0)
        denom = math.sqrt(r) * config.target_snr \
            * float(np.linalg.norm(mean_noise))
        if denom == 0.0:
            raise InternalError("degenerate noise draw; cannot scale to the "
                                "requested SNR")
        scale = float(np.linalg.norm(signal)) / denom

    s_star = scale * shape
    obs = RepeatedObservations(signal[None] + np.matmul(s_star, eps))
    if config.target_snr == math.inf:
        # the repetitions themselves must equal the signal bitwise; the
        # averaged view may wobble by an ulp when r copies are re-averaged,
        # so the achieved ratio is infinite by construction, not remeasured
        if not all(np.array_equal(rep, signal) for rep in obs.repetitions):
            raise InternalError("infinite SNR target produced noisy data")
        achieved = math.inf
    else:
        achieved = snr(x, beta_star, obs)
        if abs(achieved - config.target_snr) > 0.02 * config.target_snr:
            raise InternalError(f"achieved SNR {achieved} misses target "
                                f"{config.target_snr} by more than 2%")
    return SimInstance(
        x=DesignMatrix(x),
        beta_star=Coefficients(beta_star),
        s_star=CoStdMatrix.from_matrix(s_star),
        obs=obs,
        achieved_snr=achieved,
    )


def covariance_study(n, q, r, s_star, n_trials, seed):
    """Monte-Carlo comparison of the two residual-covariance estimators.

    With the coefficients fixed at the truth, the residuals are pure noise
    N^(l) = S* E^(l).  The study draws ``n_trials`` independent noise stacks
    and forms, per trial, the per-repetition estimator
    (1/qr) sum_l N^(l) N^(l)^T and the summed-residual estimator
    (1/qr) (sum_l N^(l)) (sum_l N^(l))^T.  Both are unbiased for
    Sigma* = S*^2; averaging over repetitions divides the element-wise
    variance by r.

    Returns ``(mean_ratio_clar, mean_ratio_sgcl, variance_ratio)``: the two
    relative mean-bias norms ||mean - Sigma*||_F / ||Sigma*||_F and the
    median over entries of var(summed) / var(per-repetition).
    """
    for name, value in (("n", n), ("q", q), ("r", r)):
        if not isinstance(value, (int, np.integer)) or value < 1:
            raise InvalidInput(f"{name} must be a positive integer, "
                               f"got {value!r}")
    if not isinstance(n_trials, (int, np.integer)) or n_trials < 2:
        raise InvalidInput(f"n_trials must be an integer >= 2, "
                           f"got {n_trials!r}")
    s = np.asarray(s_star.matrix if isinstance(s_star, CoStdMatrix)
                   else s_star, dtype=float)
    if s.shape != (n, n):
        raise InvalidInput(f"s_star must have shape {(n, n)}, "
                           f"got {s.shape}")
    s = (s + s.T) / 2.0
    sigma_star = s @ s

    sum_c = np.zeros((n, n))
    sum_c2 = np.zeros((n, n))
    sum_s = np.zeros((n, n))
    sum_s2 = np.zeros((n, n))
    for trial in range(n_trials):
        eps = _substream(seed, trial).standard_normal((r, n, q))
        noise = np.matmul(s, eps)
        est_c = np.einsum("lnq,lmq->nm", noise, noise) / (q * r)
        summed = noise.sum(axis=0)
        est_s = (summed @ summed.T) / (q * r)
        sum_c += est_c
        sum_c2 += est_c * est_c
        sum_s += est_s
        sum_s2 += est_s * est_s

    mean_c = sum_c / n_trials
    mean_s = sum_s / n_trials
    var_c = sum_c2 / n_trials - mean_c * mean_c
    var_s = sum_s2 / n_trials - mean_s * mean_s
    ref = float(np.linalg.norm(sigma_star))
    if ref == 0.0:
        raise InvalidInput("s_star must be nonzero")
    if np.any(var_c <= 0.0):
        raise InternalError("degenerate Monte-Carlo variance")
    return (
        float(np.linalg.norm(mean_c - sigma_star)) / ref,
        float(np.linalg.norm(mean_s - sigma_star)) / ref,
        float(np.median(var_s / var_c)),
    )
