"""End-to-end private-image recovery from a synthetic dataset.

Stages: Gram extraction, public-support estimation (mixed data only),
subtraction of the public part of the Gram matrix, floral search on the
private overlap counts, and per-pixel sign solving on the floral rows.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConsistencyError,
    InconsistentSystemError,
    InsufficientSamplesError,
    MTPRError,
    ParameterError,
    StageError,
    SupportConsistencyError,
)
from .floral import FloralAssignment, build_neighbor_index, find_floral_submatrix
from .gram import gram_extract, gram_grid
from .model import ImageMatrix, ModelParams, OverlapMatrix, SyntheticDataset, selection_weights
from .public import SupportEstimate, learn_public, learn_public_all
from .signs import _solve_many, default_tolerance, incidence, solve_pixel_batch

log = logging.getLogger(__name__)

# Below these sizes recovery is attempted but is unlikely to succeed.
MIN_PIXELS = 10_000
MIN_IMAGES_PER_PRIVATE = 20


def gram_eta(k_pub: int, k_priv: int) -> float:
    """Clip parameter for Gram extraction: half the grid spacing, at most 1/(2k_pub + 2k_priv)."""
    return min(1.0 / (2 * k_pub + 2 * k_priv), 1.0 / (2 * gram_grid(k_pub, k_priv)))


def _overlap_counts(supports, m: int) -> np.ndarray:
    n = 1 + max((max(s.indices) for s in supports if s.indices), default=0)
    B = np.zeros((m, n))
    for i, s in enumerate(supports):
        B[i, list(s.indices)] = 1.0
    return np.rint(B @ B.T).astype(np.int64)


def subtract_public_contribution(
    M: OverlapMatrix,
    supports,
    params: ModelParams,
    *,
    clamp: bool = True,
    atol: float = 1e-9,
) -> tuple[OverlapMatrix, int]:
    """Private overlap counts b_ij = 2 k_priv (M_ij / grid - |S_i ∩ S_j| / (2 k_pub)).

    Returns the matrix on grid k_priv and the number of entries that fell
    outside [0, k_priv] (Gram rounding noise) and were clamped. Non-integer
    results mean some public support is wrong and raise
    SupportConsistencyError listing the offending pairs.
    """
    kp, kq = params.k_pub, params.k_priv
    if kp == 0:
        return M, 0
    if M.grid != gram_grid(kp, kq):
        raise ParameterError(f"expected the mixed grid {gram_grid(kp, kq)}, got {M.grid}")
    if len(supports) != M.m:
        raise ParameterError("need one support estimate per synthetic image")
    C = _overlap_counts(supports, M.m)
    B = 2 * kq * (M.entries / M.grid - C / (2 * kp))
    R = np.rint(B)
    bad = np.abs(B - R) > atol
    if bad.any():
        pairs = [(int(i), int(j)) for i, j in zip(*np.nonzero(np.triu(bad, 1)))]
        raise SupportConsistencyError(
            f"{len(pairs)} Gram entries are not integers after subtraction", pairs=pairs
        )
    out = (R < 0) | (R > kq)
    np.fill_diagonal(out, False)
    if out.any() and not clamp:
        pairs = [(int(i), int(j)) for i, j in zip(*np.nonzero(np.triu(out, 1)))]
        raise SupportConsistencyError(f"{len(pairs)} private counts outside [0, {kq}]", pairs=pairs)
    R = np.clip(R, 0, kq).astype(np.int64)
    np.fill_diagonal(R, kq)
    return OverlapMatrix(R, kq).validate(), int(np.count_nonzero(np.triu(out, 1)))


@dataclass
class AttackReport:
    recovered: np.ndarray  # (k_priv + 2) x d
    floral: FloralAssignment
    public_supports: list
    timing: dict
    ambiguity_count: int
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EvaluationResult:
    matching: dict  # recovered row -> true image column (global index)
    errors: dict  # recovered row -> relative L-inf error of absolute values
    max_abs_error: float
    exact_count: int


class _Stage:
    def __init__(self, timing: dict, name: str):
        self.timing, self.name = timing, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, et, ev, tb):
        self.timing[self.name] = time.perf_counter() - self.t0
        if ev is not None and isinstance(ev, MTPRError) and not isinstance(ev, (StageError, InsufficientSamplesError)):
            raise StageError(self.name, ev) from ev
        return False


def _floral_system(F: FloralAssignment, images, public_view, supports, params):
    """Rows, offsets and scale of the pixel systems for one floral assignment."""
    rows = images[list(F.indices)]
    wp, wq = selection_weights(params.k_pub, params.k_priv)
    if params.k_pub == 0:
        return rows, None, wq
    offsets = np.stack([wp * public_view[:, list(supports[j].indices)].sum(axis=1) for j in F.indices])
    return rows, offsets, wq


def _pixel_check(F, images, public_view, supports, params, n_pixels: int) -> bool:
    rows, offsets, scale = _floral_system(F, images, public_view, supports, params)
    d = rows.shape[1]
    pick = np.linspace(0, d - 1, min(n_pixels, d)).astype(int)
    V = rows[:, pick].T
    off = None if offsets is None else offsets[:, pick].T
    A = incidence([F.labels[j] for j in F.indices], params.k_priv + 2)
    try:
        _, _, status = _solve_many(A, V, off, scale, default_tolerance(V), off is None)
    except (ParameterError, InconsistentSystemError):
        return False
    return bool(np.all(status == 0))


def learn_private_images(
    dataset: SyntheticDataset,
    *,
    public_method: str = "threshold",
    guard: float = math.inf,
    check_pixels: int = 64,
) -> AttackReport:
    """Recover k_priv + 2 private images (up to per-pixel sign) from synthetic data.

    Reads only ``dataset.images``, ``dataset.public_view`` and ``dataset.params``.
    """
    images = np.asarray(dataset.images, dtype=float)
    public_view = np.asarray(dataset.public_view, dtype=float)
    params = dataset.params.validate(private_recovery=True)
    m, d = images.shape
    kp, kq = params.k_pub, params.k_priv
    if d < MIN_PIXELS or m < MIN_IMAGES_PER_PRIVATE * params.n_priv:
        warnings.warn(
            f"d={d}, m={m} is below the calibrated regime (d >= {MIN_PIXELS}, "
            f"m >= {MIN_IMAGES_PER_PRIVATE} n_priv); recovery may fail",
            RuntimeWarning,
            stacklevel=2,
        )
    timing: dict = {}
    diag: dict = {}

    with _Stage(timing, "gram"):
        grid = gram_grid(kp, kq)
        M = gram_extract(images, gram_eta(kp, kq), grid)

    supports: list[SupportEstimate] = []
    with _Stage(timing, "public"):
        if kp > 0:
            supports = learn_public_all(public_view, images, kp)
            diag["low_confidence_supports"] = sum(s.low_confidence for s in supports)

    with _Stage(timing, "subtract"):
        try:
            Mp, clamped = subtract_public_contribution(M, supports, params)
        except SupportConsistencyError as err:
            implicated = sorted({i for pair in err.pairs for i in pair})
            log.info("retrying public support for %d images with the SDP method", len(implicated))
            for i in implicated:
                supports[i] = learn_public(public_view, images[i], kp, "sdp")
            Mp, clamped = subtract_public_contribution(M, supports, params)
            diag["sdp_retries"] = len(implicated)
        diag["clamped_entries"] = clamped

    with _Stage(timing, "floral"):
        nbr = build_neighbor_index(Mp, kq)
        diag["max_neighbors"] = nbr.max_degree()
        rejected = 0

        def accept(F):
            nonlocal rejected
            ok = _pixel_check(F, images, public_view, supports, params, check_pixels)
            rejected += not ok
            return ok

        F = find_floral_submatrix(Mp, kq, guard, accept=accept, nbr=nbr)
        diag["rejected_florals"] = rejected
        if F is None:
            raise InsufficientSamplesError(
                f"no floral submatrix among m={m} synthetic images "
                f"(max {diag['max_neighbors']} neighbours per row, {rejected} candidates rejected); "
                "more synthetic images are needed"
            )

    with _Stage(timing, "solve"):
        rows, offsets, scale = _floral_system(F, images, public_view, supports, params)
        batch = solve_pixel_batch(F, rows, offsets, scale)
        recovered = np.ascontiguousarray(batch.images.T)

    return AttackReport(recovered, F, supports, timing, batch.ambiguity_count, diag)


def evaluate_recovery(report, truth: ImageMatrix, rtol: float = 1e-6) -> EvaluationResult:
    """Match recovered images to true private columns by L-inf distance of absolute values."""
    R = np.abs(np.atleast_2d(np.asarray(getattr(report, "recovered", report), dtype=float)))
    X = np.abs(truth.private)
    if R.shape[1] != X.shape[0]:
        raise ParameterError("recovered images and truth disagree on d")
    dist = np.array([np.max(np.abs(X - r[:, None]), axis=0) for r in R])  # (#rec, n_priv)
    norms = np.maximum(X.max(axis=0), np.finfo(float).tiny)
    matching, errors = {}, {}
    D = dist.copy()
    for _ in range(min(D.shape)):
        i, j = np.unravel_index(np.argmin(D), D.shape)
        matching[int(i)] = int(truth.n_pub + j)
        errors[int(i)] = float(dist[i, j] / norms[j])
        D[i, :] = np.inf
        D[:, j] = np.inf
    max_abs = max((dist[i, j - truth.n_pub] for i, j in matching.items()), default=0.0)
    exact = sum(e <= rtol for e in errors.values())
    return EvaluationResult(matching, errors, float(max_abs), int(exact))
