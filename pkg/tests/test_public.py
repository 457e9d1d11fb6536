import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mtpr.errors import DimensionError, OptimizationError, ParameterError
from mtpr.model import ModelParams, generate_instance
from mtpr.public import (
    diagonal_threshold_support,
    learn_public,
    learn_public_all,
    project_l1_ball,
    project_spectraplex,
    sparse_pca_sdp,
    spectral_matrix,
    threshold_scores,
    top_coordinates,
)


def spectral_matrix_loop(P, y):
    n = P.shape[1]
    M = np.zeros((n, n))
    for p, v in zip(P, y):
        M += (v * v - 1) * (np.outer(p, p) - np.eye(n))
    return M / len(y)


def test_spectral_matrix_matches_explicit_sum():
    rng = np.random.default_rng(0)
    P = rng.standard_normal((50, 6))
    y = np.abs(rng.standard_normal(50))
    assert np.allclose(spectral_matrix(P, y), spectral_matrix_loop(P, y))


def test_spectral_matrix_expectation():
    # for unit-norm w, E[M] = 2 w_S w_S^T
    rng = np.random.default_rng(1)
    d, n_pub = 400000, 4
    X = rng.standard_normal((d, n_pub + 2))
    w = np.array([0.5, 0.5, 0, 0, 0.5, 0.5])
    M = spectral_matrix(X[:, :n_pub], np.abs(X @ w))
    assert np.allclose(M, 2 * np.outer(w[:n_pub], w[:n_pub]), atol=0.03)


def test_spectral_matrix_dimension_mismatch():
    with pytest.raises(DimensionError):
        spectral_matrix(np.zeros((3, 2)), np.zeros(4))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (5, 5), elements=st.floats(-3, 3)))
def test_spectraplex_projection(X):
    Z = project_spectraplex(X)
    lam = np.linalg.eigvalsh(Z)
    assert lam.min() > -1e-10
    assert abs(np.trace(Z) - 1) < 1e-10
    assert np.allclose(project_spectraplex(Z), Z, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(-3, 3)), st.floats(0.1, 5))
def test_l1_ball_projection(X, r):
    Y = project_l1_ball(X, r)
    assert np.abs(Y).sum() <= r + 1e-9
    # optimality: moving toward any other ball point never gets closer
    rng = np.random.default_rng(0)
    for _ in range(5):
        V = project_l1_ball(rng.standard_normal(X.shape) * 3, r)
        assert np.linalg.norm(X - Y) <= np.linalg.norm(X - V) + 1e-9


def test_sdp_single_spike():
    M = np.zeros((5, 5))
    M[0, 0] = 1.0
    res = sparse_pca_sdp(M, 1)
    assert res.objective == pytest.approx(1.0, abs=1e-4)
    assert res.Z[0, 0] == pytest.approx(1.0, abs=1e-3)


def test_sdp_matches_convex_solver():
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(3)
    n, k = 8, 2
    v = np.zeros(n)
    v[[1, 5]] = 1 / np.sqrt(2)
    G = rng.standard_normal((n, n)) * 0.2
    M = np.outer(v, v) + (G + G.T) / 2
    Z = cp.Variable((n, n), symmetric=True)
    prob = cp.Problem(cp.Maximize(cp.trace(M @ Z)), [Z >> 0, cp.trace(Z) == 1, cp.sum(cp.abs(Z)) <= k])
    prob.solve()
    res = sparse_pca_sdp(M, k, tol=1e-6)
    assert res.objective == pytest.approx(prob.value, abs=1e-3)
    assert np.abs(res.Z).sum() <= k + 1e-9
    assert np.linalg.eigvalsh(res.Z).min() > -1e-9
    assert res.gap >= -1e-9


def test_sdp_reports_best_iterate_on_failure():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((6, 6))
    with pytest.raises(OptimizationError) as info:
        sparse_pca_sdp(A + A.T, 2, tol=1e-12, max_iter=5, check_every=1)
    assert info.value.best is not None
    assert abs(np.trace(info.value.best.Z) - 1) < 1e-9


def test_top_coordinates_tie_break():
    assert top_coordinates(np.array([1.0, 3.0, 3.0, 2.0, 3.0]), 2).tolist() == [1, 2]


def test_threshold_block_and_dense():
    rng = np.random.default_rng(2)
    P = rng.standard_normal((200, 40))
    y = np.abs(rng.standard_normal(200))
    ts = diagonal_threshold_support(P, y, 2, window=10)
    assert len(ts.coords) == 10
    full = spectral_matrix(P, y)
    assert np.allclose(ts.block, full[np.ix_(ts.coords, ts.coords)])
    D = ts.dense()
    mask = np.zeros((40, 40), dtype=bool)
    mask[np.ix_(ts.coords, ts.coords)] = True
    assert np.all(D[~mask] == 0)
    expected = top_coordinates(threshold_scores(P, y), 10)
    assert ts.coords.tolist() == expected.tolist()


def test_window_smaller_than_support():
    with pytest.raises(ParameterError):
        diagonal_threshold_support(np.ones((4, 5)), np.ones(4), 3, window=2)


@pytest.mark.parametrize("method", ["threshold", "sdp"])
def test_learn_public_recovers_support(method):
    p = ModelParams(d=6000, n_pub=40, n_priv=10, k_pub=2, k_priv=2, m=5, seed=4)
    inst = generate_instance(p)
    for y, w in zip(inst.dataset.images, inst.selections):
        est = learn_public(inst.dataset.public_view, y, 2, method)
        assert est.indices == w.support_pub
        assert not est.low_confidence
        assert est.confidence == pytest.approx(1.0, abs=0.2)


def test_entirely_private_vector_is_low_confidence():
    rng = np.random.default_rng(5)
    P = rng.standard_normal((20000, 30))
    y = np.abs(rng.standard_normal((20000, 2)) @ np.array([1, 1]) / np.sqrt(2))
    est = learn_public(P, y, 2)
    assert est.low_confidence


def test_learn_public_all_agrees_with_single():
    p = ModelParams(d=3000, n_pub=60, n_priv=10, k_pub=3, k_priv=2, m=6, seed=8)
    inst = generate_instance(p)
    batch = learn_public_all(inst.dataset.public_view, inst.dataset.images, 3)
    for y, est in zip(inst.dataset.images, batch):
        one = learn_public(inst.dataset.public_view, y, 3)
        assert one.indices == est.indices
        assert one.confidence == pytest.approx(est.confidence)


def test_unknown_method():
    with pytest.raises(ParameterError):
        learn_public(np.ones((4, 3)), np.ones(4), 1, "magic")
