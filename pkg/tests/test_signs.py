from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mtpr.errors import InconsistentSystemError, ParameterError, RecoveryQualityError
from mtpr.signs import (
    SignedSystem,
    enumerate_all_solutions,
    incidence,
    k_subsets,
    solve_pixel_batch,
    solve_signed_system,
    spanning_rows,
)


def system_for(a, k, offsets=None, scale=1.0):
    subsets = k_subsets(k)
    s = scale * incidence(subsets, k + 2) @ a
    if offsets is not None:
        s = s + offsets
    return SignedSystem(subsets, np.abs(s), offsets=offsets, scale=scale)


def floral_for(k):
    subsets = k_subsets(k)
    idx = tuple(range(100, 100 + len(subsets)))
    return SimpleNamespace(indices=idx, labels=dict(zip(idx, subsets)))


def same_up_to_sign(x, y, tol=1e-8):
    return np.max(np.abs(x - y)) < tol or np.max(np.abs(x + y)) < tol


def test_worked_example():
    a = np.array([1.0, -2.0, 3.0, 0.5])
    sys_ = system_for(a, 2)
    assert sys_.values.tolist() == [1.0, 4.0, 1.5, 1.0, 1.5, 3.5]
    sol = solve_signed_system(sys_)
    assert not sol.ambiguous
    assert same_up_to_sign(sol.values, a)
    assert sol.residual < 1e-12
    assert len(enumerate_all_solutions(sys_)) == 1


def test_zero_system_is_unique():
    sol = solve_signed_system(SignedSystem(k_subsets(2), np.zeros(6)))
    assert not sol.ambiguous
    assert np.all(sol.values == 0)


def test_all_equal_system_is_ambiguous():
    sys_ = SignedSystem(k_subsets(2), np.full(6, 2.0))
    assert solve_signed_system(sys_).ambiguous
    classes = enumerate_all_solutions(sys_)
    # (1,1,1,1) and the four placements of (3,-1,-1,-1)
    assert len(classes) == 5
    for target in ([1, 1, 1, 1], [3, -1, -1, -1]):
        assert any(same_up_to_sign(c, np.array(target, float)) for c in classes)


def test_inconsistent_system():
    with pytest.raises(InconsistentSystemError):
        solve_signed_system(SignedSystem(k_subsets(2), np.array([1.0, 0, 0, 0, 0, 5.0])))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(subsets=k_subsets(2), values=-np.ones(6)),
        dict(subsets=k_subsets(2), values=np.ones(5)),
        dict(subsets=k_subsets(2), values=np.ones(6), tolerance=0.0),
        dict(subsets=k_subsets(2), values=np.ones(6), offsets=np.ones(3)),
    ],
)
def test_system_validation(kwargs):
    with pytest.raises(ParameterError):
        SignedSystem(**kwargs)


def test_spanning_rows_has_full_rank():
    for k in (2, 3, 4, 5):
        A = incidence(k_subsets(k), k + 2)
        rows = spanning_rows(A)
        assert len(rows) == k + 2
        assert np.linalg.matrix_rank(A[rows]) == k + 2


@pytest.mark.parametrize("k", [2, 3, 4])
def test_oracle_equivalence(k):
    rng = np.random.default_rng(k)
    for _ in range(100):
        a = rng.standard_normal(k + 2)
        sys_ = system_for(a, k)
        sol = solve_signed_system(sys_)
        classes = enumerate_all_solutions(sys_)
        assert sol.ambiguous == (len(classes) > 1)
        assert any(same_up_to_sign(sol.values, c, 1e-6) for c in classes)
        assert same_up_to_sign(sol.values, a, 1e-8)


def test_oracle_size_guard():
    with pytest.raises(ParameterError):
        enumerate_all_solutions(SignedSystem(k_subsets(5), np.ones(21)))


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 5, elements=st.floats(-10, 10)))
def test_canonical_sign_invariant_under_negation(a):
    s1 = solve_signed_system(system_for(a, 3))
    s2 = solve_signed_system(system_for(-a, 3))
    assert np.array_equal(s1.values, s2.values)
    assert s1.residual <= SignedSystem(k_subsets(3), np.abs(incidence(k_subsets(3), 5) @ a)).tolerance


def test_offsets_fix_the_global_sign():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a = rng.standard_normal(4)
        u = rng.standard_normal(6)
        sol = solve_signed_system(system_for(a, 2, offsets=u, scale=0.5))
        assert not sol.ambiguous
        assert np.max(np.abs(sol.values - a)) < 1e-8


def test_pixel_batch_of_one_matches_single_solve():
    a = np.array([1.0, -2.0, 3.0, 0.5])
    sys_ = system_for(a, 2)
    batch = solve_pixel_batch(floral_for(2), sys_.values[:, None])
    assert np.allclose(batch.images[0], solve_signed_system(sys_).values)


def test_pixel_batch_gaussian_images():
    rng = np.random.default_rng(4)
    k, d = 2, 1000
    X = rng.standard_normal((d, k + 2))
    rows = np.abs(incidence(k_subsets(k), k + 2) @ X.T) / np.sqrt(k)
    batch = solve_pixel_batch(floral_for(k), rows, scale=1 / np.sqrt(k))
    assert batch.ambiguity_count == 0
    assert np.allclose(np.abs(batch.images), np.abs(X), rtol=1e-6, atol=1e-12)


def test_pixel_batch_counts_adversarial_pixel():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((2000, 4))
    rows = np.abs(incidence(k_subsets(2), 4) @ X.T)
    rows[:, 17] = 2.0
    batch = solve_pixel_batch(floral_for(2), rows)
    assert batch.ambiguity_count == 1
    rows[:, :10] = 2.0
    with pytest.raises(RecoveryQualityError):
        solve_pixel_batch(floral_for(2), rows)


def test_pixel_batch_with_offsets_recovers_signs():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((500, 5))
    U = rng.standard_normal((10, 500))
    A = incidence(k_subsets(3), 5)
    rows = np.abs(0.4 * A @ X.T + U)
    batch = solve_pixel_batch(floral_for(3), rows, offsets=U, scale=0.4)
    assert np.allclose(batch.images, X, atol=1e-8)
