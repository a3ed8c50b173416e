import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import random_model
from sentrylab.augment import (
    OPS,
    TransformFamily,
    TransformSpec,
    check_committees,
    check_consistency,
    committee,
    decide,
    sample_chain,
    verdict_from_predictions,
)


@pytest.mark.parametrize("op", OPS)
def test_severity_zero_is_identity(op):
    x = np.random.default_rng(0).standard_normal(9)
    fam = TransformFamily()
    assert np.array_equal(fam.apply(TransformSpec(op, 0.0, 123), x), x)
    img = TransformFamily(image_shape=(4, 4))
    xi = np.random.default_rng(1).random(16)
    assert np.array_equal(img.apply(TransformSpec(op, 0.0, 5), xi), xi)


@pytest.mark.parametrize("op", OPS)
def test_ops_preserve_dimension(op):
    x = np.random.default_rng(0).standard_normal(12)
    assert TransformFamily().apply(TransformSpec(op, 2.0, 9), x).shape == x.shape
    xi = np.random.default_rng(1).random(64)
    out = TransformFamily(image_shape=(8, 8)).apply(TransformSpec(op, 2.0, 9), xi)
    assert out.shape == xi.shape and out.min() >= 0 and out.max() <= 1


def test_chain_identity_and_determinism():
    x = np.arange(6.0)
    fam = TransformFamily()
    chain = sample_chain(np.random.default_rng(3), 1, 0.0)
    assert np.array_equal(fam.apply_chain(chain, x), x)
    a = sample_chain(np.random.default_rng(3), 3, 2.0)
    b = sample_chain(np.random.default_rng(3), 3, 2.0)
    assert a == b and len(a) == 3
    assert fam.apply_chain(a, x).shape == x.shape


def test_chain_needs_ops():
    with pytest.raises(ValueError):
        sample_chain(np.random.default_rng(0), 0, 1.0)


def test_committee_properties():
    x = np.random.default_rng(0).standard_normal(5)
    same = committee(np.random.default_rng(1), x, 3, 3, 0.0)
    assert len(same) == 3 and all(np.array_equal(m, x) for m in same)
    a = committee(np.random.default_rng(2), x, 3, 3, 2.0)
    b = committee(np.random.default_rng(2), x, 3, 3, 2.0)
    assert all(np.array_equal(p, q) for p, q in zip(a, b))
    with pytest.raises(ValueError):
        committee(np.random.default_rng(2), x, 0, 3, 2.0)


class TestVerdict:
    def test_examples(self):
        # committee positions below are 1-based in prose, 0-based in the record
        v = verdict_from_predictions(2, [2, 0, 2])
        assert v.consistent and v.last_match == 2 and v.last_mismatch == 1
        v = verdict_from_predictions(2, [0, 2, 1])
        assert not v.consistent and v.last_mismatch == 2 and v.last_match == 1
        v = verdict_from_predictions(1, [1, 1, 0, 0])
        assert not v.consistent

    def test_unanimous(self):
        assert not verdict_from_predictions(0, [0, 0, 1], "unanimous").consistent
        assert verdict_from_predictions(0, [0, 0, 0], "unanimous").consistent


def _brute_force(flags, voting):
    n_match = sum(flags)
    n_miss = len(flags) - n_match
    if voting == "majority":
        return n_match >= len(flags) // 2 + 1 and n_match > n_miss
    return n_miss == 0


@pytest.mark.parametrize("k", range(1, 6))
def test_voting_exhaustive(k):
    for flags in itertools.product([0, 1], repeat=k):
        preds = [0 if f else 1 for f in flags]
        for voting in ("majority", "unanimous"):
            v = verdict_from_predictions(0, preds, voting)
            assert v.consistent == _brute_force(flags, voting)
            hits = [i for i, f in enumerate(flags) if f]
            misses = [i for i, f in enumerate(flags) if not f]
            assert v.last_match == (hits[-1] if hits else None)
            assert v.last_mismatch == (misses[-1] if misses else None)
        if decide(flags, "unanimous"):
            assert decide(flags, "majority")


@given(st.lists(st.booleans(), min_size=1, max_size=9), st.randoms())
def test_majority_depends_only_on_counts(flags, rnd):
    shuffled = list(flags)
    rnd.shuffle(shuffled)
    assert decide(flags) == decide(shuffled)


def test_severity_zero_all_consistent():
    rng = np.random.default_rng(4)
    m = random_model(rng, 5, (8,), 3)
    X = rng.standard_normal((20, 5))
    members = np.stack([committee(rng, x, 3, 3, 0.0) for x in X])
    assert all(v.consistent for v in check_committees(m, X, members))


def test_batched_matches_single_and_is_deterministic():
    rng = np.random.default_rng(5)
    m = random_model(rng, 5, (8,), 3)
    X = rng.standard_normal((10, 5))
    members = np.stack([committee(np.random.default_rng(i), x, 3, 3, 2.0) for i, x in enumerate(X)])
    batched = check_committees(m, X, members)
    single = [check_consistency(m, x, mem) for x, mem in zip(X, members)]
    assert batched == single
    again = np.stack([committee(np.random.default_rng(i), x, 3, 3, 2.0) for i, x in enumerate(X)])
    assert check_committees(m, X, again) == batched


def test_default_ranges_keep_single_op_agreement():
    from sentrylab.augment import single_op_agreement
    from sentrylab.core import init_classifier
    from sentrylab.data import SyntheticSpec, make_synthetic_pair
    from sentrylab.trainer import TrainConfig, train_source

    spec = SyntheticSpec(n_classes=5, dim=10, separation=4.0, n_source_test_per_class=100)
    d = make_synthetic_pair(np.random.default_rng(0), spec)
    m = init_classifier(np.random.default_rng(0), 10, (32, 16), 5)
    m, _ = train_source(m, d["source_train"], TrainConfig(source_epochs=10, batch_size=64, lr=1e-3))
    agree = single_op_agreement(m, d["source_test"].X, severity=2.0)
    assert set(agree) == set(OPS)
    assert min(agree.values()) >= 0.6


def test_image_family_uses_image_ranges():
    from sentrylab.augment import DEFAULT_RANGES, IMAGE_RANGES

    assert TransformFamily(image_shape=(4, 4)).ranges == IMAGE_RANGES
    assert TransformFamily().ranges == DEFAULT_RANGES
    assert TransformFamily(ranges={"noise": 0.0}).ranges["noise"] == 0.0
