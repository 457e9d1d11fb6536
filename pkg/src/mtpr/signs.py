"""Per-pixel solver for |scale * sum_{i in S} a_i + offset_S| = v_S over all k-subsets S.

The solver picks k+2 linearly independent subsets, enumerates sign patterns on
those equations only, solves each square system and keeps candidates whose
residual over every equation is within tolerance. ``enumerate_all_solutions``
is the slow independent oracle that enumerates signs on every equation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InconsistentSystemError, ParameterError, RecoveryQualityError


def k_subsets(k: int) -> list[tuple[int, ...]]:
    """All k-subsets of range(k+2) in lexicographic order."""
    return list(itertools.combinations(range(k + 2), k))


def incidence(subsets: Sequence[Sequence[int]], n_vars: int) -> np.ndarray:
    A = np.zeros((len(subsets), n_vars))
    for r, S in enumerate(subsets):
        A[r, list(S)] = 1.0
    return A


def default_tolerance(values) -> np.ndarray | float:
    v = np.asarray(values, dtype=float)
    return 1e-6 * np.maximum(1.0, v.max(axis=-1))


@dataclass
class SignedSystem:
    subsets: list[tuple[int, ...]]
    values: np.ndarray
    tolerance: float | None = None
    offsets: np.ndarray | None = None
    scale: float = 1.0

    def __post_init__(self):
        self.subsets = [tuple(sorted(S)) for S in self.subsets]
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.subsets),):
            raise ParameterError("need exactly one value per subset")
        if np.any(self.values < 0):
            raise ParameterError("values must be nonnegative")
        if self.offsets is not None:
            self.offsets = np.asarray(self.offsets, dtype=float)
            if self.offsets.shape != self.values.shape:
                raise ParameterError("offsets must match values")
        if self.tolerance is None:
            self.tolerance = float(default_tolerance(self.values))
        if self.tolerance <= 0:
            raise ParameterError("tolerance must be positive")

    @property
    def n_vars(self) -> int:
        return 1 + max(max(S) for S in self.subsets)

    @property
    def symmetric(self) -> bool:
        """True when a -> -a maps solutions to solutions (no offsets)."""
        return self.offsets is None or not np.any(self.offsets)


@dataclass(frozen=True)
class SignedSolution:
    values: np.ndarray
    residual: float
    ambiguous: bool


def spanning_rows(A: np.ndarray) -> list[int]:
    """Greedy pivoted elimination: first rows of A forming a basis of its row space."""
    rows: list[int] = []
    basis = np.zeros((0, A.shape[1]))
    for r in range(A.shape[0]):
        v = A[r].copy()
        for b in basis:
            v -= (v @ b) * b
        nrm = np.linalg.norm(v)
        if nrm > 1e-9:
            basis = np.vstack([basis, v / nrm])
            rows.append(r)
            if len(rows) == A.shape[1]:
                break
    return rows


def _sign_patterns(n: int, fix_first: bool) -> np.ndarray:
    free = n - 1 if fix_first else n
    pats = np.array(list(itertools.product((1.0, -1.0), repeat=free))).reshape(-1, free)
    if fix_first:
        pats = np.hstack([np.ones((pats.shape[0], 1)), pats])
    return pats


def _canonical(a: np.ndarray, tol) -> np.ndarray:
    """Flip rows of a so that the first entry larger than tol is positive."""
    a = np.atleast_2d(a)
    big = np.abs(a) > np.atleast_1d(tol)[:, None]
    first = np.where(big.any(axis=1), big.argmax(axis=1), 0)
    sgn = np.where(a[np.arange(a.shape[0]), first] < 0, -1.0, 1.0)
    return a * sgn[:, None]


def _solve_many(A, V, offsets, scale, tau, symmetric):
    """Vectorised basis enumeration. V is (d, L); returns (a, residual, status).

    status: 0 unique, 1 ambiguous, 2 inconsistent.
    """
    d, L = V.shape
    n = A.shape[1]
    rows = spanning_rows(A)
    if len(rows) < n:
        raise ParameterError("subset family does not determine the unknowns")
    Binv = np.linalg.inv(A[rows])
    pats = _sign_patterns(n, fix_first=symmetric)  # (P, n)
    off = np.zeros((d, L)) if offsets is None else offsets
    T = (pats[None, :, :] * V[:, None, rows] - off[:, None, rows]) / scale  # (d, P, n)
    cand = T @ Binv.T  # (d, P, n)
    pred = scale * (cand @ A.T) + off[:, None, :]  # (d, P, L)
    res = np.max(np.abs(np.abs(pred) - V[:, None, :]), axis=2)  # (d, P)
    ok = res <= tau[:, None]
    best = np.argmin(res, axis=1)
    a = cand[np.arange(d), best]
    residual = res[np.arange(d), best]
    # another accepted candidate that is not equivalent to the best one
    eq_tol = (tau / scale)[:, None]
    same = np.max(np.abs(cand - a[:, None, :]), axis=2) <= eq_tol
    if symmetric:
        same |= np.max(np.abs(cand + a[:, None, :]), axis=2) <= eq_tol
    ambiguous = np.any(ok & ~same, axis=1)
    status = np.where(~ok.any(axis=1), 2, np.where(ambiguous, 1, 0))
    if symmetric:
        a = _canonical(a, tau / scale)
    return a, residual, status


def solve_signed_system(sys: SignedSystem) -> SignedSolution:
    A = incidence(sys.subsets, sys.n_vars)
    V = sys.values[None, :]
    off = None if sys.offsets is None else sys.offsets[None, :]
    a, res, status = _solve_many(A, V, off, sys.scale, np.array([sys.tolerance]), sys.symmetric)
    if status[0] == 2:
        raise InconsistentSystemError(
            f"no sign pattern satisfies the system (best residual {res[0]:.3g} > {sys.tolerance:.3g})"
        )
    return SignedSolution(a[0], float(res[0]), bool(status[0] == 1))


def enumerate_all_solutions(sys: SignedSystem) -> list[np.ndarray]:
    """Every solution class, found by least squares under all 2^L constraint signs.

    Classes are taken up to a global sign when the system has no offsets.
    """
    L = len(sys.subsets)
    if L > 16:
        raise ParameterError(f"oracle limited to 16 equations, got {L}")
    A = sys.scale * incidence(sys.subsets, sys.n_vars)
    off = np.zeros(L) if sys.offsets is None else sys.offsets
    pats = np.array(list(itertools.product((1.0, -1.0), repeat=L)))
    targets = pats * sys.values[None, :] - off[None, :]
    sol = targets @ np.linalg.pinv(A).T
    res = np.max(np.abs(sol @ A.T - targets), axis=1)
    found: list[np.ndarray] = []
    eq = sys.tolerance / sys.scale
    for a in sol[res <= sys.tolerance]:
        dup = any(
            np.max(np.abs(a - b)) <= eq or (sys.symmetric and np.max(np.abs(a + b)) <= eq)
            for b in found
        )
        if not dup:
            found.append(a)
    if sys.symmetric:
        found = [_canonical(a, eq)[0] for a in found]
    return found


@dataclass(frozen=True)
class PixelBatchResult:
    images: np.ndarray  # d x (k+2); column i is recovered image i
    ambiguity_count: int
    inconsistent_count: int
    residual: np.ndarray


def solve_pixel_batch(
    floral,
    rows: np.ndarray,
    offsets: np.ndarray | None = None,
    scale: float = 1.0,
    *,
    max_bad_fraction: float = 1e-3,
    chunk: int = 4096,
) -> PixelBatchResult:
    """Solve every pixel with the labels of ``floral``.

    ``rows`` holds the synthetic images indexed by ``floral.indices`` (|I| x d),
    in that order; ``offsets`` (same shape) is the known public contribution.
    """
    subsets = [floral.labels[j] for j in floral.indices]
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[0] != len(subsets):
        raise ParameterError("need one synthetic row per floral index")
    n_vars = 1 + max(max(S) for S in subsets)
    A = incidence(subsets, n_vars)
    symmetric = offsets is None or not np.any(offsets)
    d = rows.shape[1]
    out = np.empty((d, n_vars))
    residual = np.empty(d)
    status = np.empty(d, dtype=np.int64)
    for lo in range(0, d, chunk):
        V = rows[:, lo : lo + chunk].T
        off = None if symmetric else np.asarray(offsets)[:, lo : lo + chunk].T
        tau = default_tolerance(V)
        out[lo : lo + chunk], residual[lo : lo + chunk], status[lo : lo + chunk] = _solve_many(
            A, V, off, scale, tau, symmetric
        )
    n_amb = int(np.sum(status == 1))
    n_bad = int(np.sum(status == 2))
    if d and (n_amb + n_bad) / d > max_bad_fraction:
        raise RecoveryQualityError(
            f"{n_amb} ambiguous and {n_bad} inconsistent pixels out of {d}"
        )
    return PixelBatchResult(out, n_amb, n_bad, residual)
