"""Fast randomized consistency checks that run without pytest."""

from __future__ import annotations

import time

import numpy as np

from .floral import family, find_floral_submatrix, identify_family, intersection_matrix, verify_floral
from .gram import PSI_MAX, psi, psi_inv
from .model import ModelParams, generate_instance, overlap_oracle
from .signs import SignedSystem, enumerate_all_solutions, k_subsets, solve_signed_system


def _psi_roundtrip(rng):
    z = np.linspace(0.0, 1.0, 2001)
    return abs(psi(1.0) - PSI_MAX) < 1e-12 and np.max(np.abs(psi_inv(psi(z)) - z)) < 1e-9


def _families(rng):
    for k in (2, 3, 4, 5):
        fam = family(k)
        for _ in range(20):
            perm = rng.permutation(k + 2)
            labs = [tuple(sorted(perm[list(fam[o])])) for o in rng.permutation(len(fam))]
            P = intersection_matrix(labs)
            F = identify_family(P, k)
            if not np.array_equal(intersection_matrix([F[i] for i in range(len(fam))]), P):
                return False
            if verify_floral(P, range(len(fam)), k) is None:
                return False
    return True


def _signs(rng):
    for k in (2, 3):
        subsets = k_subsets(k)
        for _ in range(50):
            a = rng.standard_normal(k + 2)
            v = np.array([abs(a[list(S)].sum()) for S in subsets])
            sol = solve_signed_system(SignedSystem(subsets, v))
            classes = enumerate_all_solutions(SignedSystem(subsets, v))
            if sol.ambiguous or len(classes) != 1:
                return False
            if np.max(np.abs(np.abs(sol.values) - np.abs(a))) > 1e-8:
                return False
    return True


def _small_floral(rng):
    p = ModelParams(d=1, n_pub=0, n_priv=6, k_pub=0, k_priv=2, m=40, seed=int(rng.integers(1 << 31)))
    inst = generate_instance(p)
    M = overlap_oracle(inst.selections, 2)
    F = find_floral_submatrix(M, 2)
    return F is None or verify_floral(M, F.indices, 2) is not None


CHECKS = [
    ("psi round trip", _psi_roundtrip),
    ("set-family identification", _families),
    ("sign solver vs. enumeration", _signs),
    ("floral search soundness", _small_floral),
]


def run_selftest(seed: int = 0, verbose: bool = False) -> bool:
    rng = np.random.default_rng(seed)
    ok = True
    for name, check in CHECKS:
        t0 = time.perf_counter()
        passed = bool(check(rng))
        ok &= passed
        if verbose:
            print(f"{'PASS' if passed else 'FAIL'}  {name}  ({time.perf_counter() - t0:.2f}s)")
    return ok
