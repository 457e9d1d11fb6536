"""Exact Gram-matrix recovery through folded-Gaussian covariances.

Each pixel column of the synthetic matrix Y is a draw of |g| with
g ~ N(0, W W^T). For unit-norm rows the folded covariance of entries i != j is
psi(<w_i, w_j>), so inverting psi entrywise and rounding to the known grid
returns the scaled Gram matrix exactly once d is large enough.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, MatrixError, ParameterError, SizingError
from .model import OverlapMatrix, SyntheticDataset

PSI_MAX = 1.0 - 2.0 / math.pi  # psi(1), the folded variance of N(0, 1)


def psi(z):
    """(2/pi) * (z*arcsin(z) + sqrt(1 - z^2) - 1), clamped to z in [0, 1].

    Written as z*arcsin(z) - z^2 / (1 + sqrt(1 - z^2)) to avoid cancellation
    near zero.
    """
    z = np.asarray(z, dtype=float)
    if np.any((z < 0.0) | (z > 1.0)):
        warnings.warn("psi argument outside [0, 1] was clamped", RuntimeWarning, stacklevel=2)
        z = np.clip(z, 0.0, 1.0)
    out = (2.0 / math.pi) * (z * np.arcsin(z) - z * z / (1.0 + np.sqrt(1.0 - z * z)))
    return float(out) if out.ndim == 0 else out


def psi_inv(v, tol: float = 1e-13):
    """Inverse of ``psi`` on [0, 1 - 2/pi] by vectorised bisection.

    Bisection runs on the argument until the bracket is narrower than ``tol``;
    values outside the range are clamped with a warning.
    """
    v = np.asarray(v, dtype=float)
    if np.any((v < 0.0) | (v > PSI_MAX)):
        warnings.warn("psi_inv argument outside [0, 1 - 2/pi] was clamped", RuntimeWarning, stacklevel=2)
        v = np.clip(v, 0.0, PSI_MAX)
    lo = np.zeros_like(v)
    hi = np.ones_like(v)
    n_iter = max(1, math.ceil(math.log2(1.0 / tol)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for _ in range(n_iter):
            mid = 0.5 * (lo + hi)
            below = psi(mid) < v
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
    z = 0.5 * (lo + hi)
    z = np.where(v <= 0.0, 0.0, np.where(v >= PSI_MAX, 1.0, z))
    return float(z) if z.ndim == 0 else z


@dataclass(frozen=True)
class FoldedCovariance:
    mean: np.ndarray
    cov: np.ndarray


def _image_rows(Y) -> np.ndarray:
    return Y.images if isinstance(Y, SyntheticDataset) else np.asarray(Y, dtype=float)


def empirical_folded_covariance(Y) -> FoldedCovariance:
    """Mean and 1/d-normalised covariance of the d pixel columns of Y (m x d)."""
    Y = _image_rows(Y)
    m, d = Y.shape
    if d < 2:
        raise SizingError(f"need at least two pixels, got d={d}")
    mu = Y.mean(axis=1)
    cov = (Y @ Y.T) / d - np.outer(mu, mu)
    cov = 0.5 * (cov + cov.T)
    return FoldedCovariance(mu, cov)


def clip_floor(eta: float) -> float:
    """Lower clip applied before inversion: eta^2 / 4."""
    return eta * eta / 4.0


def gram_extract(Y, eta: float, grid: int, *, return_estimate: bool = False):
    """Recover ``grid * <w_i, w_j>`` as an integer matrix.

    Returns an ``OverlapMatrix``; with ``return_estimate`` also the unrounded
    matrix psi_inv(clip(cov)) for diagnostics.
    """
    if grid < 1:
        raise ParameterError("grid must be a positive integer")
    if not 0.0 < eta < 1.0:
        raise ParameterError("eta must lie in (0, 1)")
    fc = empirical_folded_covariance(Y)
    C = np.clip(fc.cov, clip_floor(eta), PSI_MAX)
    iu = np.triu_indices(C.shape[0], 1)
    est = np.ones_like(C)
    est[iu] = psi_inv(C[iu])
    est[(iu[1], iu[0])] = est[iu]
    R = np.rint(est * grid)
    np.fill_diagonal(R, grid)
    if R.size and (R.min() < 0 or R.max() > grid):
        raise ConsistencyError("rounded Gram entry outside [0, grid]; d is probably too small")
    if not np.array_equal(R, R.T):
        raise MatrixError("internal error: recovered Gram matrix is not symmetric")
    M = OverlapMatrix(R.astype(np.int64), int(grid))
    return (M, est) if return_estimate else M


def gram_grid(k_pub: int, k_priv: int) -> int:
    """Rounding grid for the unit-norm convention.

    All-private (or all-public) data uses k; mixed data has inner products
    a/(2 k_pub) + b/(2 k_priv), all multiples of 1/(2 lcm(k_pub, k_priv)).
    """
    if k_pub > 0 and k_priv > 0:
        return 2 * math.lcm(k_pub, k_priv)
    return max(k_pub, k_priv)
