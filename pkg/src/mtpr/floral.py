"""Search for floral principal submatrices of an all-private overlap matrix.

A floral submatrix has one row for every k-subset of a (k+2)-set U, with entry
(S, S') equal to |S ∩ S'|. The search seeds on a *house*: an apex row i0 and a
4-cycle j1..j4 of (k-1)-neighbours of i0 whose cycle edges are k-1 and whose
diagonals are k-2. With 0-based labels over U = {0, .., k+1}:

    i0 = {0, .., k-1}      i1 = {2, .., k+1}      core = {2, .., k-1}
    S_ab = {a} ∪ core ∪ {b}     a in {0, 1}, b in {k, k+1}

Every other family member is pinned down by its intersection sizes with these
anchors plus one group of k-2 sets {0, 1, k} ∪ core \\ {s}, whose s-labels are an
arbitrary (symmetric) choice. Each remaining label is then matched to the first
row with the predicted intersection vector, and the result is re-verified.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .errors import ParameterError, StructureError
from .model import OverlapMatrix

Label = tuple[int, ...]


def _entries(M) -> np.ndarray:
    E = M.entries if isinstance(M, OverlapMatrix) else np.asarray(M)
    if E.ndim != 2 or E.shape[0] != E.shape[1]:
        raise ParameterError(f"overlap matrix must be square, got shape {E.shape}")
    return E


def family_size(k: int) -> int:
    return math.comb(k + 2, 2)


def family(k: int) -> list[Label]:
    return list(itertools.combinations(range(k + 2), k))


def intersection_matrix(labels) -> np.ndarray:
    sets = [set(s) for s in labels]
    return np.array([[len(a & b) for b in sets] for a in sets], dtype=np.int64)


def _k_from_size(L: int) -> int:
    k = (math.isqrt(8 * L + 1) - 3) // 2
    if k < 2 or family_size(k) != L:
        raise ParameterError(f"{L} rows is not the size of a floral family C(k+2, 2) with k >= 2")
    return k


@dataclass(frozen=True)
class NeighborIndex:
    """Sorted level sets N^t_i = {j : M_ij = t} for t in {k-1, k-2}."""

    k: int
    levels: dict  # t -> list of int arrays, one per row

    def __call__(self, i: int, t: int) -> np.ndarray:
        return self.levels[t][i]

    @property
    def m(self) -> int:
        return len(self.levels[self.k - 1])

    def max_degree(self, t: int | None = None) -> int:
        t = self.k - 1 if t is None else t
        return max((len(a) for a in self.levels[t]), default=0)


def build_neighbor_index(M, k: int) -> NeighborIndex:
    E = _entries(M)
    if k < 2:
        raise ParameterError("floral search needs k >= 2")
    m = E.shape[0]
    levels = {}
    for t in (k - 1, k - 2):
        rows, cols = np.nonzero(E == t)
        keep = rows != cols
        rows, cols = rows[keep], cols[keep]
        cuts = np.searchsorted(rows, np.arange(m + 1))
        levels[t] = [cols[cuts[i] : cuts[i + 1]] for i in range(m)]
    return NeighborIndex(k, levels)


def predicted_neighbor_count(k: int, m: int, n: int) -> float:
    """Order-of-magnitude size of N^{k-1}_i for random supports: m k^{k+1} n^{1-k}."""
    return m * k ** (k + 1) * float(n) ** (1 - k)


def house_budget(k: int, m: int, n: int, constant: float = 100.0) -> float:
    """Optional abort threshold constant * k^{5k} m^5 n^{2-4k} on enumerated houses."""
    return constant * float(k) ** (5 * k) * float(m) ** 5 * float(n) ** (2 - 4 * k)


@dataclass(frozen=True)
class HouseWitness:
    apex: int
    cycle: tuple[int, int, int, int]


@dataclass(frozen=True)
class FloralAssignment:
    indices: tuple[int, ...]  # ordered so labels run through C(k+2, k) lexicographically
    labels: dict  # row index -> k-subset of range(k+2)
    k: int

    def matrix(self) -> np.ndarray:
        return intersection_matrix([self.labels[i] for i in self.indices])


def is_house(M, i0, j1, j2, j3, j4, k: int | None = None) -> bool:
    E = _entries(M)
    idx = (i0, j1, j2, j3, j4)
    if len(set(idx)) < 5 or not j1 < j4:
        return False
    if k is None:
        k = int(E[i0, i0])
    j = (j1, j2, j3, j4)
    cycle = all(E[j[a], j[(a + 1) % 4]] == k - 1 for a in range(4))
    diag = E[j1, j3] == k - 2 and E[j2, j4] == k - 2
    apex = all(E[i0, x] == k - 1 for x in j)
    return bool(cycle and diag and apex)


def _apex_houses(E, nbr: NeighborIndex, i0: int) -> Iterator[tuple[int, int, int, int]]:
    """Houses with apex i0 in lexicographic order of (j1, j2, j3, j4)."""
    k = nbr.k
    N = nbr(i0, k - 1)
    if len(N) < 4:
        return
    sub = E[np.ix_(N, N)]
    A = sub == k - 1
    D = sub == k - 2
    for a in range(len(N)):
        for b in np.flatnonzero(A[a]):
            for c in np.flatnonzero(A[b] & D[a]):
                for e in np.flatnonzero(A[c] & A[a] & D[b]):
                    if e > a:
                        yield int(N[a]), int(N[b]), int(N[c]), int(N[e])


def count_houses(M, k: int, nbr: NeighborIndex | None = None) -> int:
    """Exact number of house tuples (i0; j1, j2, j3, j4) with j1 < j4."""
    E = _entries(M)
    nbr = build_neighbor_index(E, k) if nbr is None else nbr
    total = 0
    for i0 in range(E.shape[0]):
        N = nbr(i0, k - 1)
        if len(N) < 4:
            continue
        sub = E[np.ix_(N, N)]
        A = (sub == k - 1).astype(np.int64)
        D = (sub == k - 2).astype(np.int64)
        n = len(N)
        for a in range(n - 1):
            B = np.flatnonzero(A[a])
            C = np.flatnonzero(D[a])
            Ea = B[B > a]
            if len(B) == 0 or len(C) == 0 or len(Ea) == 0:
                continue
            U = A[np.ix_(B, C)]  # j2 -- j3 edges
            V = A[np.ix_(C, Ea)]  # j3 -- j4 edges
            Q = D[np.ix_(B, Ea)]  # j2, j4 diagonal
            total += int(np.sum((Q @ V.T) * U))
    return total


# --- label construction ------------------------------------------------------


def _anchor_labels(k: int, z: int) -> tuple[Label, Label, list[Label]]:
    core = list(range(2, k))
    lab = lambda a, b: tuple(sorted([a, *core, b]))  # noqa: E731
    i0 = tuple(range(k))
    i1 = tuple(range(2, k + 2))
    if z == 0:
        cyc = [lab(0, k), lab(0, k + 1), lab(1, k + 1), lab(1, k)]
    else:
        cyc = [lab(0, k), lab(1, k), lab(1, k + 1), lab(0, k + 1)]
    return i0, i1, cyc


def _expected(target: Label, labels: list[Label]) -> np.ndarray:
    t = set(target)
    return np.array([len(t & set(s)) for s in labels])


def _assemble(E, nbr: NeighborIndex, i0: int, cycle, i1: int, z: int):
    """Labels for a full family seeded at (i0, cycle, i1), or a failure message."""
    k = nbr.k
    l0, l1, lc = _anchor_labels(k, z)
    rows = [i0, i1, *cycle]
    labels = [l0, l1, *lc]
    if k >= 3:
        core = list(range(2, k))
        pool = nbr(i0, k - 1)
        sub = E[np.ix_(pool, rows)]
        probe = tuple(sorted({0, 1, k, *core[1:]}))
        hits = pool[np.all(sub == _expected(probe, labels), axis=1)]
        group: list[int] = []
        for r in hits:
            if not any(E[r, g] == k for g in group):
                group.append(int(r))
        if len(group) != k - 2:
            return f"expected exactly {k - 2} sets of shape {{0,1,{k}}} ∪ core minus one, found {len(group)}"
        G = E[np.ix_(group, group)]
        if np.any(G[~np.eye(len(group), dtype=bool)] != k - 1):
            return "sets of the first group are not pairwise (k-1)-neighbours"
        for s, r in zip(core, group):
            rows.append(r)
            labels.append(tuple(x for x in sorted({0, 1, k, *core}) if x != s))
        placed = set(labels)
        todo = [T for T in family(k) if T not in placed]
        pool = np.concatenate([nbr(i0, k - 1), nbr(i0, k - 2)])
        sub = E[np.ix_(pool, rows)]
        anchors = list(labels)
        for T in todo:
            hit = np.flatnonzero(np.all(sub == _expected(T, anchors), axis=1))
            if len(hit) == 0:
                return f"no row matches the intersection pattern of label {T}"
            r = int(pool[hit].min())
            rows.append(r)
            labels.append(T)
    if len(set(rows)) != len(rows):
        return "two labels matched the same row"
    return dict(zip(rows, labels))


def _ordered(assign: dict, k: int) -> FloralAssignment:
    by_label = {v: r for r, v in assign.items()}
    idx = tuple(by_label[T] for T in family(k))
    return FloralAssignment(idx, {r: assign[r] for r in idx}, k)


def _i1_candidates(E, i0, cycle, k):
    ok = E[i0] == k - 2
    for j in cycle:
        ok &= E[j] == k - 1
    ok[i0] = False
    return np.flatnonzero(ok)


def identify_family(P, k: int) -> dict:
    """Label the rows of an intersection-size matrix by the k-subsets of range(k+2).

    Returns {row: label} with |F(i) ∩ F(j)| = P_ij for all rows, unique up to a
    permutation of range(k+2). Raises StructureError naming the first counting
    step that fails.
    """
    E = _entries(P).astype(np.int64)
    L = family_size(k)
    if E.shape[0] != L:
        raise StructureError(f"expected {L} rows for k={k}, got {E.shape[0]}")
    if not np.array_equal(E, E.T) or np.any(np.diag(E) != k):
        raise StructureError("matrix must be symmetric with diagonal k")
    nbr = build_neighbor_index(E, k)
    n1 = len(nbr(0, k - 1))
    if n1 != 2 * k:
        raise StructureError(f"expected exactly {2 * k} sets at level k-1 from the anchor row, found {n1}")
    first_failure = None
    for cycle in _apex_houses(E, nbr, 0):
        cands = _i1_candidates(E, 0, cycle, k)
        if len(cands) != 1:
            first_failure = first_failure or (
                f"expected exactly one set at level k-2 from the anchor and k-1 from all four house sets, found {len(cands)}"
            )
            continue
        for z in (0, 1):
            got = _assemble(E, nbr, 0, cycle, int(cands[0]), z)
            if isinstance(got, str):
                first_failure = first_failure or got
                continue
            F = _ordered(got, k)
            if np.array_equal(E[np.ix_(F.indices, F.indices)], F.matrix()):
                return dict(got)
            first_failure = first_failure or "assembled labels disagree with some entry"
    raise StructureError(first_failure or "no house (4-cycle of (k-1)-neighbours) around the anchor row")


def verify_floral(M, indices, k: int | None = None) -> FloralAssignment | None:
    """Labeling of the principal submatrix on ``indices`` if it is floral, else None."""
    E = _entries(M)
    indices = [int(i) for i in indices]
    if k is None:
        try:
            k = _k_from_size(len(indices))
        except ParameterError:
            return None
    if len(indices) != family_size(k) or len(set(indices)) != len(indices):
        return None
    P = E[np.ix_(indices, indices)]
    try:
        local = identify_family(P, k)
    except StructureError:
        return None
    F = _ordered({indices[p]: lab for p, lab in local.items()}, k)
    if not np.array_equal(E[np.ix_(F.indices, F.indices)], F.matrix()):
        return None
    return F


def orient_pair_family(M, F: FloralAssignment) -> tuple[FloralAssignment, int]:
    """Fix the complement ambiguity of k = 2 labelings using rows outside the floral.

    For k = 2 the map S -> complement(S) preserves every intersection size of
    C(4, 2), so the floral block alone cannot tell a labeling from its
    complement. A row meeting U in one element u overlaps exactly the three
    labels containing u (a star); under the complemented labeling those three
    look like a triangle. Returns the majority orientation and the vote margin.
    """
    if F.k != 2:
        return F, 0
    E = _entries(M)
    idx = list(F.indices)
    B = E[:, idx]
    pick = (np.sum(B == 1, axis=1) == 3) & (np.sum(B == 0, axis=1) == 3)
    pick[idx] = False
    star = tri = 0
    for r in np.flatnonzero(pick):
        labs = [set(F.labels[idx[c]]) for c in np.flatnonzero(B[r] == 1)]
        if labs[0] & labs[1] & labs[2]:
            star += 1
        else:
            tri += 1
    if tri > star:
        flipped = {j: tuple(sorted({0, 1, 2, 3} - set(lab))) for j, lab in F.labels.items()}
        return _ordered(flipped, 2), tri - star
    return F, star - tri


def find_floral_submatrix(
    M,
    k: int,
    guard: float = math.inf,
    *,
    accept: Callable[[FloralAssignment], bool] | None = None,
    nbr: NeighborIndex | None = None,
) -> FloralAssignment | None:
    """First floral principal submatrix reached from the lowest apex row.

    ``guard`` caps the number of houses examined (None is returned once it is
    exceeded). ``accept`` may veto verified candidates; the search then moves on.
    """
    E = _entries(M)
    if k < 2:
        raise ParameterError("floral search needs k >= 2")
    if isinstance(M, OverlapMatrix) and M.grid != k:
        raise ParameterError(f"overlap matrix is on grid {M.grid}, expected the private grid {k}")
    nbr = build_neighbor_index(E, k) if nbr is None else nbr
    seen = 0
    for i0 in range(E.shape[0]):
        for cycle in _apex_houses(E, nbr, i0):
            seen += 1
            if seen > guard:
                return None
            for i1 in _i1_candidates(E, i0, cycle, k):
                for z in (0, 1):
                    got = _assemble(E, nbr, i0, cycle, int(i1), z)
                    if isinstance(got, str):
                        continue
                    F = verify_floral(E, list(got), k)
                    if F is None:
                        continue
                    F, _ = orient_pair_family(E, F)
                    if accept is None or accept(F):
                        return F
    return None
