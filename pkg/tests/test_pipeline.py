import warnings

import numpy as np
import pytest

from mtpr import pipeline
from mtpr.errors import ConsistencyError, InsufficientSamplesError, StageError, SupportConsistencyError
from mtpr.model import ImageMatrix, ModelParams, OverlapMatrix, generate_instance, overlap_oracle
from mtpr.pipeline import (
    AttackReport,
    evaluate_recovery,
    learn_private_images,
    subtract_public_contribution,
)
from mtpr.public import SupportEstimate


def estimates(supports, k_pub):
    return [SupportEstimate(tuple(s), 1.0, k_pub) for s in supports]


def test_subtract_passthrough_without_public_part():
    M = OverlapMatrix(np.array([[2, 1], [1, 2]]), 2)
    p = ModelParams(d=1, n_pub=0, n_priv=4, k_pub=0, k_priv=2, m=2)
    out, clamped = subtract_public_contribution(M, [], p)
    assert out is M and clamped == 0


def test_subtract_shared_public_image():
    # k_pub=1, k_priv=2: sharing the public image only gives <w_i, w_j> = 1/2
    p = ModelParams(d=1, n_pub=3, n_priv=6, k_pub=1, k_priv=2, m=2)
    M = OverlapMatrix(np.array([[4, 2], [2, 4]]), 4)
    out, _ = subtract_public_contribution(M, estimates([(0,), (0,)], 1), p)
    assert out.entries.tolist() == [[2, 0], [0, 2]]
    assert out.grid == 2


def test_subtract_matches_private_oracle():
    p = ModelParams(d=1, n_pub=20, n_priv=10, k_pub=3, k_priv=2, m=200, seed=1)
    inst = generate_instance(p)
    M = overlap_oracle(inst.selections, 12)
    sup = estimates([w.support_pub for w in inst.selections], 3)
    out, clamped = subtract_public_contribution(M, sup, p)
    priv = [type(w)((), w.support_priv, 0.0, 1 / np.sqrt(2)) for w in inst.selections]
    assert np.array_equal(out.entries, overlap_oracle(priv, 2).entries)
    assert clamped == 0


def test_subtract_detects_wrong_support():
    p = ModelParams(d=1, n_pub=20, n_priv=10, k_pub=3, k_priv=2, m=50, seed=2)
    inst = generate_instance(p)
    M = overlap_oracle(inst.selections, 12)
    sup = [list(w.support_pub) for w in inst.selections]
    # replace one public image of row 0 by one that row 1 uses and row 0 does not
    extra = next(i for i in inst.selections[1].support_pub if i not in sup[0])
    sup[0][0] = extra
    with pytest.raises(SupportConsistencyError) as info:
        subtract_public_contribution(M, estimates(sup, 3), p)
    assert any(0 in pair for pair in info.value.pairs)


def test_subtract_clamps_out_of_range():
    p = ModelParams(d=1, n_pub=4, n_priv=4, k_pub=2, k_priv=2, m=2)
    M = OverlapMatrix(np.array([[4, 0], [0, 4]]), 4)
    sup = estimates([(0, 1), (0, 1)], 2)
    out, clamped = subtract_public_contribution(M, sup, p)
    assert clamped == 1 and out.entries[0, 1] == 0
    with pytest.raises(SupportConsistencyError):
        subtract_public_contribution(M, sup, p, clamp=False)


def _report(recovered):
    return AttackReport(recovered, None, [], {}, 0)


def test_evaluate_sign_flips_are_exact():
    rng = np.random.default_rng(0)
    X = ImageMatrix(rng.standard_normal((300, 8)), 2)
    rec = X.private[:, [4, 1, 0, 3]].T * rng.choice([-1.0, 1.0], (4, 300))
    ev = evaluate_recovery(_report(rec), X)
    assert ev.exact_count == 4
    assert ev.max_abs_error <= 1e-12
    assert ev.matching == {0: 6, 1: 3, 2: 2, 3: 5}


def test_evaluate_zero_images():
    rng = np.random.default_rng(1)
    X = ImageMatrix(rng.standard_normal((100, 6)), 0)
    assert evaluate_recovery(np.zeros((4, 100)), X).exact_count == 0


def test_evaluate_one_perturbed_pixel():
    rng = np.random.default_rng(2)
    X = ImageMatrix(rng.standard_normal((100, 6)), 0)
    rec = X.private[:, :4].T.copy()
    rec[2, 10] += 1e-3
    ev = evaluate_recovery(rec, X)
    assert ev.exact_count == 3
    assert ev.max_abs_error == pytest.approx(1e-3, rel=1e-6)
    assert ev.errors[2] > 1e-6
    assert len(set(ev.matching.values())) == 4


def test_insufficient_samples():
    p = ModelParams(d=20000, n_pub=0, n_priv=30, k_pub=0, k_priv=2, m=10, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(InsufficientSamplesError):
            learn_private_images(generate_instance(p).dataset)


def test_below_threshold_warns():
    p = ModelParams(d=2000, n_pub=0, n_priv=30, k_pub=0, k_priv=2, m=10, seed=0)
    with pytest.warns(RuntimeWarning, match="calibrated"):
        with pytest.raises((InsufficientSamplesError, StageError)):
            learn_private_images(generate_instance(p).dataset)


def test_stage_errors_are_annotated(monkeypatch):
    def broken(*a, **k):
        raise ConsistencyError("boom")

    monkeypatch.setattr(pipeline, "gram_extract", broken)
    p = ModelParams(d=20000, n_pub=0, n_priv=30, k_pub=0, k_priv=2, m=600, seed=0)
    with pytest.raises(StageError) as info:
        learn_private_images(generate_instance(p).dataset)
    assert info.value.stage == "gram"
    assert isinstance(info.value.cause, ConsistencyError)


class Tracking:
    """Dataset double that records which attributes the attack touches."""

    def __init__(self, ds, truth, selections):
        object.__setattr__(self, "_ds", ds)
        object.__setattr__(self, "truth", truth)
        object.__setattr__(self, "selections", selections)
        object.__setattr__(self, "seen", set())

    def __getattribute__(self, name):
        if name in ("_ds", "seen", "__class__", "__dict__"):
            return object.__getattribute__(self, name)
        object.__getattribute__(self, "seen").add(name)
        if name in ("truth", "selections"):
            return object.__getattribute__(self, name)
        return getattr(object.__getattribute__(self, "_ds"), name)


def test_stage_isolation(private_instance):
    ds = Tracking(private_instance.dataset, private_instance.truth, private_instance.selections)
    report = learn_private_images(ds)
    assert ds.seen <= {"images", "public_view", "params"}
    assert report.recovered.shape == (4, 20000)


def test_end_to_end_private(private_instance):
    report = learn_private_images(private_instance.dataset)
    ev = evaluate_recovery(report, private_instance.truth)
    assert ev.exact_count == 4
    assert len(set(ev.matching.values())) == 4
    assert set(report.timing) == {"gram", "public", "subtract", "floral", "solve"}
    assert report.ambiguity_count == 0


def test_end_to_end_mixed():
    p = ModelParams(d=20000, n_pub=200, n_priv=30, k_pub=2, k_priv=2, m=1500, seed=4)
    inst = generate_instance(p)
    report = learn_private_images(inst.dataset)
    assert len(report.public_supports) == 1500
    assert evaluate_recovery(report, inst.truth).exact_count == 4


def test_success_rate_does_not_drop_with_more_samples():
    rates = []
    for m in (300, 700, 1200):
        ok = 0
        for seed in range(3):
            p = ModelParams(d=20000, n_pub=0, n_priv=30, k_pub=0, k_priv=2, m=m, seed=seed)
            inst = generate_instance(p)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    ok += evaluate_recovery(learn_private_images(inst.dataset), inst.truth).exact_count == 4
            except InsufficientSamplesError:
                pass
        rates.append(ok)
    assert rates == sorted(rates)
    assert rates[-1] == 3
