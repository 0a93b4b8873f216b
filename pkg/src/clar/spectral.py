"""Spectral primitives: symmetric eigendecomposition and SVD wrappers, the
clipped square root, eigenvalue clipping, Schatten-ball projections, and
closed-form smoothed Schatten norms.

All routines are pure functions of dense float arrays.  Eigen/singular values
are returned sorted in descending order so that downstream code and tests are
deterministic.
"""

import numpy as np
from dataclasses import dataclass

from .exceptions import InvalidInput, NumericalFailure

# Relative tolerance accepted for asymmetry of inputs and for negative
# eigenvalues of nominally PSD matrices (Gram products drift in floating
# point); anything larger is treated as a caller error.
_SYM_RTOL = 1e-8
_PSD_RTOL = 1e-8


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigendecomposition A = U diag(values) U^T of a symmetric matrix.

    Attributes
    ----------
    basis : ndarray, shape (n, n)
        Orthogonal matrix U, one eigenvector per column.
    values : ndarray, shape (n,)
        Real eigenvalues, sorted descending.
    """

    basis: np.ndarray
    values: np.ndarray

    def reconstruct(self):
        """Return U diag(values) U^T."""
        return (self.basis * self.values) @ self.basis.T


@dataclass(frozen=True)
class SingularDecomposition:
    """Thin SVD Z = V diag(values) W^T of an n x q matrix, k = min(n, q).

    Attributes
    ----------
    left : ndarray, shape (n, k)
        Orthonormal left singular vectors V.
    values : ndarray, shape (k,)
        Nonnegative singular values, sorted descending.
    right : ndarray, shape (q, k)
        Orthonormal right singular vectors W.
    """

    left: np.ndarray
    values: np.ndarray
    right: np.ndarray

    def reconstruct(self):
        """Return V diag(values) W^T."""
        return (self.left * self.values) @ self.right.T


@dataclass(frozen=True)
class SmoothingReport:
    """Smoothed norm value together with its exact and worst-case error.

    ``error = smoothed_value - exact_norm`` is the exact smoothing error and
    ``bound`` the theoretical cap; ``0 <= error <= bound`` always holds.
    """

    smoothed_value: float
    exact_norm: float
    error: float
    bound: float


def _as_float_matrix(a, name="input"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise InvalidInput(f"{name} must be a 2-D array, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return a


def sym_eig(a):
    """Eigendecomposition of a (nearly) symmetric matrix.

    The input is symmetrized as (A + A^T)/2 before decomposition; asymmetry
    beyond ``1e-8`` relative Frobenius mass is rejected.

    Parameters
    ----------
    a : ndarray, shape (n, n)
        Symmetric matrix (up to floating-point drift).

    Returns
    -------
    SpectralDecomposition
        Eigenvalues sorted descending, orthonormal eigenvector columns.
    """
    a = _as_float_matrix(a)
    n, m = a.shape
    if n != m:
        raise InvalidInput(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.linalg.norm(a)))
    if np.linalg.norm(a - a.T) > _SYM_RTOL * scale:
        raise InvalidInput("matrix is not symmetric within tolerance 1e-8")
    sym = (a + a.T) / 2.0
    try:
        w, u = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc
    return SpectralDecomposition(
        basis=np.ascontiguousarray(u[:, ::-1]),
        values=np.ascontiguousarray(w[::-1]),
    )


def svd(z):
    """Thin singular value decomposition of an n x q matrix.

    Returns
    -------
    SingularDecomposition
        Singular values sorted descending (LAPACK convention).
    """
    z = _as_float_matrix(z)
    try:
        v, s, wt = np.linalg.svd(z, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD failed: {exc}") from exc
    return SingularDecomposition(left=v, values=s, right=wt.T)


def _psd_eigenvalues(dec, scale, what):
    """Clamp tiny negative eigenvalues of a nominally PSD input to zero."""
    vals = dec.values
    if vals.size and vals[-1] < -_PSD_RTOL * max(1.0, scale):
        raise InvalidInput(f"{what} is not positive semi-definite "
                           f"(eigenvalue {vals[-1]:.3e})")
    return np.maximum(vals, 0.0)


def spcl(sigma, sigma_min):
    """Clipped square root: U diag(max(sqrt(gamma_i), sigma_min)) U^T.

    This is the closed-form minimizer of S -> (1/2)<S^{-1}, Sigma> + (1/2)Tr S
    over {S >= sigma_min * Id}.

    Parameters
    ----------
    sigma : ndarray, shape (n, n)
        PSD matrix (eigenvalues >= -1e-8 relative; tiny negatives clamped).
    sigma_min : float
        Positive spectral floor applied to the square-rooted eigenvalues.

    Returns
    -------
    CoStdMatrix
        With ``matrix`` >= sigma_min * Id and cached inverse/decomposition.
    """
    from .model import CoStdMatrix

    if not sigma_min > 0:
        raise InvalidInput(f"sigma_min must be positive, got {sigma_min}")
    dec = sym_eig(sigma)
    vals = _psd_eigenvalues(dec, float(np.linalg.norm(sigma)), "spcl input")
    clipped = np.maximum(np.sqrt(vals), sigma_min)
    u = dec.basis
    return CoStdMatrix(
        matrix=(u * clipped) @ u.T,
        inverse=(u / clipped) @ u.T,
        decomposition=SpectralDecomposition(basis=u, values=clipped),
        floor=float(sigma_min),
    )


def cl(sigma, floor):
    """Eigenvalue clipping U diag(max(gamma_i, floor)) U^T.

    Minimizes Sigma -> <A, Sigma^{-1}> - log det(Sigma^{-1}) over the set
    {Sigma^{-1} <= Id/floor} when applied to A; used by the MLE-family
    covariance updates.

    Returns the clipped PSD matrix as a plain array.
    """
    if not floor > 0:
        raise InvalidInput(f"floor must be positive, got {floor}")
    dec = sym_eig(sigma)
    vals = _psd_eigenvalues(dec, float(np.linalg.norm(sigma)), "cl input")
    clipped = np.maximum(vals, floor)
    return (dec.basis * clipped) @ dec.basis.T


def proj_schatten_inf_ball(z):
    """Euclidean projection onto the unit spectral-norm ball.

    Singular values are clipped at 1; ``z`` is returned unchanged when it
    already lies inside the ball.
    """
    dec = svd(z)
    if dec.values.size == 0 or dec.values[0] <= 1.0:
        return np.asarray(z, dtype=float)
    return (dec.left * np.minimum(dec.values, 1.0)) @ dec.right.T


def proj_schatten_2_ball(z):
    """Euclidean projection onto the unit Frobenius ball: radial scaling."""
    z = _as_float_matrix(z)
    norm = np.linalg.norm(z)
    return z if norm <= 1.0 else z / norm


def _nu_root(gamma, radius):
    """Exact root of sum_i (gamma_i - nu)_+ = radius over the breakpoints.

    ``gamma`` must be sorted descending with sum > radius.  The left-hand
    side is piecewise linear and strictly decreasing until it hits zero, so
    the root lies in a segment found by a linear scan; ties among equal
    gamma_i simply share a segment.
    """
    csum = np.cumsum(gamma)
    m_range = np.arange(1, gamma.size + 1)
    candidates = (csum - radius) / m_range
    valid = gamma > candidates
    m = int(np.nonzero(valid)[0][-1])  # largest m with gamma_m above its nu
    return float(candidates[m])


def proj_schatten_1_ball(z):
    """Euclidean projection onto the unit nuclear-norm ball.

    Returns
    -------
    (projection, nu) : (ndarray, float)
        ``nu`` is the exact root of sum_i (gamma_i - nu)_+ = 1, solved by a
        breakpoint scan (no iterative root finder); ``nu = 0`` when the input
        is already inside the ball.
    """
    dec = svd(z)
    if float(dec.values.sum()) <= 1.0:
        return np.asarray(z, dtype=float), 0.0
    nu = _nu_root(dec.values, 1.0)
    shrunk = np.maximum(dec.values - nu, 0.0)
    return (dec.left * shrunk) @ dec.right.T, nu


def smoothed_schatten1(z, sigma_min):
    """Smoothed Schatten-1 (nuclear) norm of an n x q matrix.

    Equals ``min over {S >= sigma_min Id} of (1/2)||Z||^2_{S^{-1}} +
    (1/2)Tr(S)`` and admits the closed form

        (1/(2 sigma)) sum_{gamma_i <= sigma} gamma_i^2
        + sum_{gamma_i > sigma} gamma_i
        - (sigma/2) #{gamma_i > sigma} + (n/2) sigma

    over the singular values gamma_i of Z.  The value always lies within
    [nuclear norm, nuclear norm + n*sigma/2].
    """
    if not sigma_min > 0:
        raise InvalidInput(f"sigma_min must be positive, got {sigma_min}")
    z = _as_float_matrix(z)
    n = z.shape[0]
    gamma = np.linalg.svd(z, compute_uv=False)
    small = gamma <= sigma_min
    return float(
        np.sum(gamma[small] ** 2) / (2.0 * sigma_min)
        + np.sum(gamma[~small])
        - (sigma_min / 2.0) * np.count_nonzero(~small)
        + (n / 2.0) * sigma_min
    )


def smoothed_schatten2(z, sigma_min):
    """Smoothed Schatten-2 (Frobenius) norm: the Huber form.

    ||Z||^2/(2 sigma) + sigma/2 when ||Z|| <= sigma, else ||Z||; continuously
    differentiable at the branch point.
    """
    if not sigma_min > 0:
        raise InvalidInput(f"sigma_min must be positive, got {sigma_min}")
    z = _as_float_matrix(z)
    norm = float(np.linalg.norm(z))
    if norm <= sigma_min:
        return norm ** 2 / (2.0 * sigma_min) + sigma_min / 2.0
    return norm


def smoothed_schatten_inf(z, sigma_min):
    """Smoothed Schatten-infinity (spectral) norm.

    First branch ||Z||^2/(2 sigma) + sigma/2 applies when the nuclear norm of
    Z is at most sigma; otherwise the value is

        (sigma/2) sum_i (gamma_i^2/sigma^2 - nu^2)_+ + sigma/2

    with nu the nuclear-ball projection multiplier of Z/sigma (the implicit
    equation sum_i (gamma_i/sigma - nu)_+ = 1).  The result is within
    sigma/2 of the spectral norm on either side.
    """
    if not sigma_min > 0:
        raise InvalidInput(f"sigma_min must be positive, got {sigma_min}")
    z = _as_float_matrix(z)
    gamma = np.linalg.svd(z, compute_uv=False)
    if float(gamma.sum()) <= sigma_min:
        return float(np.sum(gamma ** 2)) / (2.0 * sigma_min) + sigma_min / 2.0
    scaled = gamma / sigma_min
    nu = _nu_root(scaled, 1.0)
    return float(
        (sigma_min / 2.0) * np.sum(np.maximum(scaled ** 2 - nu ** 2, 0.0))
        + sigma_min / 2.0
    )


def smoothed_trace_reg(z, sigma_min):
    """Trace-regularized smoothing sum_i sqrt(gamma_i^2 + sigma^2) (n terms).

    The competing smoothing of the nuclear norm; its error over the nuclear
    norm is at most n*sigma (attained at Z = 0) and at least twice the error
    of :func:`smoothed_schatten1` everywhere.
    """
    if not sigma_min > 0:
        raise InvalidInput(f"sigma_min must be positive, got {sigma_min}")
    z = _as_float_matrix(z)
    n = z.shape[0]
    gamma = np.linalg.svd(z, compute_uv=False)
    value = float(np.sum(np.sqrt(gamma ** 2 + sigma_min ** 2)))
    value += (n - gamma.size) * sigma_min  # implicit zero singular values
    return value


def smoothing_report_schatten1(z, sigma_min):
    """SmoothingReport for :func:`smoothed_schatten1` (bound n*sigma/2)."""
    z = _as_float_matrix(z)
    value = smoothed_schatten1(z, sigma_min)
    exact = float(np.sum(np.linalg.svd(z, compute_uv=False)))
    return SmoothingReport(
        smoothed_value=value,
        exact_norm=exact,
        error=value - exact,
        bound=z.shape[0] * sigma_min / 2.0,
    )


def smoothing_report_trace_reg(z, sigma_min):
    """SmoothingReport for :func:`smoothed_trace_reg` (bound n*sigma)."""
    z = _as_float_matrix(z)
    value = smoothed_trace_reg(z, sigma_min)
    exact = float(np.sum(np.linalg.svd(z, compute_uv=False)))
    return SmoothingReport(
        smoothed_value=value,
        exact_norm=exact,
        error=value - exact,
        bound=z.shape[0] * sigma_min,
    )
