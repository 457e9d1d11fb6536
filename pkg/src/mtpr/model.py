"""Gaussian generative model: image matrices, selection vectors, synthetic data.

Column convention: the first ``n_pub`` columns of the image matrix are the
public images, the remaining ``n_priv`` columns are private. Selection-vector
supports always use these global column labels.

Gaussian draws come from numpy's PCG64 ``Generator.standard_normal``
(ziggurat). Reproducibility is promised within this implementation only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionError, MatrixError, ParameterError, SizingError

# Largest matrix (in float64 entries) the sampler will allocate: 4 GiB.
MAX_ENTRIES = 1 << 29


@dataclass(frozen=True)
class ModelParams:
    d: int
    n_pub: int
    n_priv: int
    k_pub: int
    k_priv: int
    m: int
    seed: int = 0

    @property
    def n(self) -> int:
        return self.n_pub + self.n_priv

    @property
    def mixed(self) -> bool:
        return self.k_pub > 0 and self.k_priv > 0

    def validate(self, *, private_recovery: bool = False) -> "ModelParams":
        for name in ("d", "n_pub", "n_priv", "k_pub", "k_priv", "m"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ParameterError(f"{name} must be a nonnegative integer, got {v!r}")
        if self.d < 1:
            raise SizingError(f"d must be positive, got {self.d}")
        if self.n < 1:
            raise SizingError("need at least one image column")
        if self.k_pub > self.n_pub:
            raise ParameterError(f"k_pub={self.k_pub} exceeds n_pub={self.n_pub}")
        if self.k_priv > self.n_priv:
            raise ParameterError(f"k_priv={self.k_priv} exceeds n_priv={self.n_priv}")
        if self.k_pub + self.k_priv == 0:
            raise ParameterError("selection vectors need a nonempty support")
        if private_recovery and self.k_priv < 2:
            raise ParameterError("private recovery needs k_priv >= 2")
        if not 0 <= int(self.seed) < 1 << 64:
            raise ParameterError("seed must fit in 64 bits")
        if self.d * self.n > MAX_ENTRIES or self.d * self.m > MAX_ENTRIES:
            raise SizingError(
                f"d*n={self.d * self.n} or d*m={self.d * self.m} exceeds the "
                f"memory budget of {MAX_ENTRIES} entries"
            )
        return self


def selection_weights(k_pub: int, k_priv: int) -> tuple[float, float]:
    """Per-entry weights (public, private) giving a unit-norm selection vector.

    When both parts are present each part carries half the squared norm.
    """
    if k_pub > 0 and k_priv > 0:
        return 1.0 / math.sqrt(2 * k_pub), 1.0 / math.sqrt(2 * k_priv)
    if k_pub > 0:
        return 1.0 / math.sqrt(k_pub), 0.0
    return 0.0, 1.0 / math.sqrt(k_priv)


@dataclass(frozen=True)
class ImageMatrix:
    entries: np.ndarray  # d x n
    n_pub: int

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    @property
    def public_index(self) -> range:
        return range(self.n_pub)

    @property
    def public(self) -> np.ndarray:
        return self.entries[:, : self.n_pub]

    @property
    def private(self) -> np.ndarray:
        return self.entries[:, self.n_pub :]


@dataclass(frozen=True)
class SelectionVector:
    support_pub: tuple[int, ...]
    support_priv: tuple[int, ...]
    weight_pub: float
    weight_priv: float

    @property
    def support(self) -> tuple[int, ...]:
        return self.support_pub + self.support_priv

    def dense(self, n: int) -> np.ndarray:
        w = np.zeros(n)
        w[list(self.support_pub)] = self.weight_pub
        w[list(self.support_priv)] = self.weight_priv
        return w


@dataclass(frozen=True)
class SyntheticDataset:
    images: np.ndarray  # m x d, row i = |X w_i|
    public_view: np.ndarray  # d x n_pub
    params: ModelParams = field(compare=False)

    @property
    def m(self) -> int:
        return self.images.shape[0]

    @property
    def d(self) -> int:
        return self.images.shape[1]


class Instance(NamedTuple):
    truth: ImageMatrix
    dataset: SyntheticDataset
    selections: list[SelectionVector]


def sample_image_matrix(params: ModelParams, rng: np.random.Generator) -> ImageMatrix:
    params.validate()
    return ImageMatrix(rng.standard_normal((params.d, params.n)), params.n_pub)


def _random_subsets(rng, count, pool, k, offset=0):
    # Rows of argpartition over iid uniforms are uniform k-subsets.
    if k == 0 or count == 0:
        return np.zeros((count, 0), dtype=np.int64)
    keys = rng.random((count, pool))
    if k < pool:
        idx = np.argpartition(keys, k - 1, axis=1)[:, :k]
    else:
        idx = np.tile(np.arange(pool), (count, 1))
    return np.sort(idx, axis=1) + offset


def sample_selection_vectors(params: ModelParams, rng: np.random.Generator) -> list[SelectionVector]:
    params.validate()
    wp, wq = selection_weights(params.k_pub, params.k_priv)
    pub = _random_subsets(rng, params.m, params.n_pub, params.k_pub)
    priv = _random_subsets(rng, params.m, params.n_priv, params.k_priv, offset=params.n_pub)
    return [
        SelectionVector(tuple(map(int, a)), tuple(map(int, b)), wp, wq)
        for a, b in zip(pub, priv)
    ]


def selection_matrix(ws: Sequence[SelectionVector], n: int) -> np.ndarray:
    """Stack selection vectors into the m x n matrix W."""
    W = np.zeros((len(ws), n))
    for i, w in enumerate(ws):
        W[i, list(w.support_pub)] = w.weight_pub
        W[i, list(w.support_priv)] = w.weight_priv
    return W


def synthesize(X, w) -> np.ndarray:
    """Synthetic image |X w| for one selection vector."""
    entries = X.entries if isinstance(X, ImageMatrix) else np.asarray(X, dtype=float)
    vec = w.dense(entries.shape[1]) if isinstance(w, SelectionVector) else np.asarray(w, dtype=float)
    if vec.ndim != 1 or vec.shape[0] != entries.shape[1]:
        raise DimensionError(
            f"selection vector of length {vec.shape} does not match {entries.shape[1]} columns"
        )
    return np.abs(entries @ vec)


def generate_instance(params: ModelParams) -> Instance:
    """Sample X and w_1..w_m from ``params.seed`` and synthesize the dataset."""
    params.validate()
    ss_x, ss_w = np.random.SeedSequence(int(params.seed)).spawn(2)
    X = sample_image_matrix(params, np.random.default_rng(ss_x))
    ws = sample_selection_vectors(params, np.random.default_rng(ss_w))
    W = selection_matrix(ws, params.n)
    images = np.abs(W @ X.entries.T) if ws else np.zeros((0, params.d))
    dataset = SyntheticDataset(
        images=np.ascontiguousarray(images),
        public_view=np.ascontiguousarray(X.public),
        params=params,
    )
    return Instance(X, dataset, ws)


@dataclass(frozen=True)
class OverlapMatrix:
    """Integer matrix with entry (i, j) = grid * <w_i, w_j>."""

    entries: np.ndarray
    grid: int

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    def validate(self) -> "OverlapMatrix":
        E = self.entries
        if E.ndim != 2 or E.shape[0] != E.shape[1]:
            raise MatrixError(f"overlap matrix must be square, got {E.shape}")
        if not np.array_equal(E, E.T):
            raise MatrixError("overlap matrix is not symmetric")
        if E.size and not np.all(np.diag(E) == self.grid):
            raise MatrixError(f"overlap matrix diagonal must equal grid={self.grid}")
        if E.size and (E.min() < 0 or E.max() > self.grid):
            raise MatrixError(f"overlap entries must lie in [0, {self.grid}]")
        return self


def overlap_oracle(ws: Sequence[SelectionVector], scale: int) -> OverlapMatrix:
    """Ground-truth ``scale * <w_i, w_j>`` rounded to integers."""
    if scale < 1:
        raise ParameterError("scale must be a positive integer")
    n = 1 + max((max(w.support) for w in ws if w.support), default=0)
    W = selection_matrix(ws, n)
    G = scale * (W @ W.T)
    R = np.rint(G)
    if G.size and np.max(np.abs(G - R)) > 1e-9:
        raise ParameterError(f"inner products are not multiples of 1/{scale}")
    return OverlapMatrix(R.astype(np.int64), int(scale))


def support_overlaps(ws: Sequence[SelectionVector], part: str = "priv") -> np.ndarray:
    """Integer matrix of |supp_i ∩ supp_j| restricted to ``part`` ("pub" or "priv")."""
    attr = {"pub": "support_pub", "priv": "support_priv"}[part]
    n = 1 + max((max(getattr(w, attr)) for w in ws if getattr(w, attr)), default=0)
    B = np.zeros((len(ws), n), dtype=np.int64)
    for i, w in enumerate(ws):
        B[i, list(getattr(w, attr))] = 1
    return B @ B.T


def sample_folded(cov, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw |g| with g ~ N(0, cov); ``size`` adds a leading sample axis."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape[0] != cov.shape[1]:
        raise MatrixError("covariance must be square")
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise MatrixError("covariance must be symmetric")
    lam, V = np.linalg.eigh(cov)
    if lam.size and lam.min() < -1e-8:
        raise MatrixError(f"covariance is not PSD (min eigenvalue {lam.min():.3g})")
    L = V * np.sqrt(np.clip(lam, 0.0, None))
    shape = (cov.shape[0],) if size is None else (size, cov.shape[0])
    z = rng.standard_normal(shape)
    return np.abs(z @ L.T)
