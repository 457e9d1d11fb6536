"""Public-support recovery from one synthetic image (sparse phase retrieval with
the private coordinates of every pixel row unobserved).

For pixel rows p_j restricted to the public columns and responses y_j,

    M = (1/d) sum_j (y_j^2 - 1) (p_j p_j^T - I)

has expectation 2 w_S w_S^T when ||w|| = 1. The support of w_S is read off the top
eigenvector of either a sparse-PCA SDP solution or a diagonally thresholded
principal block of M.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, OptimizationError, ParameterError

log = logging.getLogger(__name__)


def _pairs(P, y):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if P.shape[0] != y.shape[0]:
        raise DimensionError(f"{P.shape[0]} pixel rows but {y.shape[0]} responses")
    if P.shape[0] == 0:
        raise DimensionError("need at least one (row, response) pair")
    return P, y


def spectral_matrix(P, y) -> np.ndarray:
    """(1/d) sum_j (y_j^2 - 1)(p_j p_j^T - I) for rows p_j of P (d x n_pub)."""
    P, y = _pairs(P, y)
    c = y * y - 1.0
    M = (P.T * c) @ P / len(y)
    M[np.diag_indices_from(M)] -= c.mean()
    return 0.5 * (M + M.T)


# --- sparse PCA SDP ---------------------------------------------------------


def _project_simplex(v: np.ndarray, radius: float = 1.0) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - radius
    idx = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def project_spectraplex(X: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix with unit trace (Frobenius norm)."""
    lam, V = np.linalg.eigh(0.5 * (X + X.T))
    lam = _project_simplex(lam)
    return (V * lam) @ V.T


def project_l1_ball(X: np.ndarray, radius: float) -> np.ndarray:
    """Entrywise projection onto {X : sum |X_ij| <= radius}."""
    x = X.ravel()
    if np.abs(x).sum() <= radius:
        return X.copy()
    w = _project_simplex(np.abs(x), radius)
    return (np.sign(x) * w).reshape(X.shape)


def _feasible_incumbent(Z: np.ndarray, k: float) -> np.ndarray:
    """Shrink off-diagonal mass of a unit-trace PSD Z until sum |Z_ij| <= k."""
    off = np.abs(Z).sum() - np.abs(np.diag(Z)).sum()
    if 1.0 + off <= k:
        return Z
    keep = max(0.0, (k - 1.0) / off)
    D = np.diag(np.diag(Z))
    return keep * Z + (1.0 - keep) * D


@dataclass(frozen=True)
class SDPResult:
    Z: np.ndarray
    objective: float
    upper_bound: float
    iterations: int

    @property
    def gap(self) -> float:
        return self.upper_bound - self.objective


def sparse_pca_sdp(
    M: np.ndarray,
    k_pub: int,
    tol: float = 1e-4,
    *,
    max_iter: int = 20000,
    rho: float | None = None,
    check_every: int = 10,
) -> SDPResult:
    """max <Z, M> over PSD Z with tr Z = 1 and sum |Z_ij| <= k_pub.

    ADMM splitting between the unit-trace PSD cone and the entrywise L1 ball.
    Every returned Z is exactly feasible; the duality gap against the dual
    bound lambda_max(M - Y) + k_pub * max|Y| certifies optimality.
    """
    M = 0.5 * (np.asarray(M, dtype=float) + np.asarray(M, dtype=float).T)
    n = M.shape[0]
    if k_pub < 1:
        raise ParameterError("k_pub must be at least 1")
    if tol <= 0:
        raise ParameterError("tol must be positive")
    scale = np.abs(M).max() if M.size else 0.0
    target = tol * (1.0 + scale * k_pub)
    if rho is None:
        rho = max(np.linalg.norm(M, 2), 1e-3)
    W = np.eye(n) / n
    U = np.zeros_like(M)
    best = None
    for it in range(1, max_iter + 1):
        Z = project_spectraplex(W - U + M / rho)
        W_old = W
        W = project_l1_ball(Z + U, k_pub)
        U += Z - W
        r = np.linalg.norm(Z - W)
        s = rho * np.linalg.norm(W - W_old)
        if it % check_every == 0 or it == max_iter:
            inc = _feasible_incumbent(Z, k_pub)
            obj = float(np.sum(inc * M))
            Y = rho * U
            ub = float(np.linalg.eigvalsh(M - Y)[-1] + k_pub * np.abs(Y).max())
            if best is None or obj > best.objective:
                best = SDPResult(inc, obj, ub, it)
            else:
                best = SDPResult(best.Z, best.objective, min(ub, best.upper_bound), it)
            if best.gap <= target:
                log.debug("sdp converged: it=%d gap=%.3g bound=%.3g", it, best.gap, target)
                return best
        # residual balancing
        if r > 10 * s:
            rho *= 2.0
            U /= 2.0
        elif s > 10 * r:
            rho /= 2.0
            U *= 2.0
    raise OptimizationError(
        f"sparse PCA SDP did not reach gap {target:.3g} in {max_iter} iterations "
        f"(gap {best.gap:.3g})",
        best=best,
        gap=best.gap,
    )


# --- diagonal thresholding --------------------------------------------------


def default_window(k_pub: int) -> int:
    return max(25, 4 * k_pub)


@dataclass(frozen=True)
class ThresholdedSpectrum:
    coords: np.ndarray  # kept public coordinates, ascending
    block: np.ndarray  # principal submatrix of M on coords
    n_pub: int

    def dense(self) -> np.ndarray:
        """M with every entry outside the kept principal block set to zero."""
        out = np.zeros((self.n_pub, self.n_pub))
        out[np.ix_(self.coords, self.coords)] = self.block
        return out


def threshold_scores(P, y) -> np.ndarray:
    """(1/d) sum_j y_j^2 (p_j)_i^2 for every public coordinate i."""
    P, y = _pairs(P, y)
    return (y * y) @ (P * P) / len(y)


def top_coordinates(scores: np.ndarray, count: int) -> np.ndarray:
    """Indices of the ``count`` largest scores; ties go to the lowest index."""
    order = np.argsort(-np.asarray(scores), kind="stable")
    return np.sort(order[:count])


def _block(P, y, coords):
    Pc = P[:, coords]
    c = y * y - 1.0
    B = (Pc.T * c) @ Pc / len(y)
    B[np.diag_indices_from(B)] -= c.mean()
    return 0.5 * (B + B.T)


def diagonal_threshold_support(P, y, k_pub: int, window: int | None = None) -> ThresholdedSpectrum:
    P, y = _pairs(P, y)
    n_pub = P.shape[1]
    window = default_window(k_pub) if window is None else int(window)
    if window < k_pub:
        raise ParameterError(f"window={window} is smaller than k_pub={k_pub}")
    window = min(window, n_pub)
    coords = top_coordinates(threshold_scores(P, y), window)
    return ThresholdedSpectrum(coords, _block(P, y, coords), n_pub)


# --- support estimate -------------------------------------------------------


# A unit-norm mixed selection vector has 2 ||w_S||^2 = 1; estimates below a
# quarter of that signal are flagged.
LOW_CONFIDENCE = 0.25


@dataclass(frozen=True)
class SupportEstimate:
    indices: tuple[int, ...]
    confidence: float
    k_pub: int

    @property
    def low_confidence(self) -> bool:
        return self.confidence < LOW_CONFIDENCE


def _top_k_magnitude(v: np.ndarray, k: int) -> tuple[int, ...]:
    return tuple(int(i) for i in top_coordinates(np.abs(v), k))


def learn_public(P, y, k_pub: int, method: str = "threshold", *, window=None, tol: float = 1e-4) -> SupportEstimate:
    """Estimate supp(w_S) from public pixel rows P (d x n_pub) and one synthetic image y.

    ``confidence`` is the leading eigenvalue of the thresholded block, or the
    SDP objective for ``method="sdp"``; both estimate 2 ||w_S||^2.
    """
    if k_pub < 1:
        raise ParameterError("learn_public needs k_pub >= 1")
    P, y = _pairs(P, y)
    if k_pub > P.shape[1]:
        raise ParameterError("k_pub exceeds the number of public columns")
    if method == "threshold":
        ts = diagonal_threshold_support(P, y, k_pub, window)
        lam, V = np.linalg.eigh(ts.block)
        full = np.zeros(ts.n_pub)
        full[ts.coords] = V[:, -1]
        return SupportEstimate(_top_k_magnitude(full, k_pub), float(lam[-1]), k_pub)
    if method == "sdp":
        res = sparse_pca_sdp(spectral_matrix(P, y), k_pub, tol)
        lam, V = np.linalg.eigh(res.Z)
        return SupportEstimate(_top_k_magnitude(V[:, -1], k_pub), res.objective, k_pub)
    raise ParameterError(f"unknown method {method!r}")


def learn_public_all(public_view, images, k_pub: int, *, window=None) -> list[SupportEstimate]:
    """Threshold-method estimates for every synthetic image (rows of ``images``)."""
    P = np.asarray(public_view, dtype=float)
    Y = np.atleast_2d(np.asarray(images, dtype=float))
    if Y.shape[1] != P.shape[0]:
        raise DimensionError("images and public view disagree on d")
    window = min(default_window(k_pub) if window is None else int(window), P.shape[1])
    if window < k_pub:
        raise ParameterError(f"window={window} is smaller than k_pub={k_pub}")
    scores = (Y * Y) @ (P * P) / P.shape[0]
    out = []
    for i, y in enumerate(Y):
        coords = top_coordinates(scores[i], window)
        lam, V = np.linalg.eigh(_block(P, y, coords))
        full = np.zeros(P.shape[1])
        full[coords] = V[:, -1]
        out.append(SupportEstimate(_top_k_magnitude(full, k_pub), float(lam[-1]), k_pub))
    return out
