import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import max_rel_error, numeric_grad, random_model, scalar_forward
from sentrylab.augment import verdict_from_predictions
from sentrylab.core import (
    Classifier,
    DimensionError,
    DivergenceError,
    OptimizerState,
    entropy,
    forward,
    forward_cache,
    grad_step,
    init_classifier,
    load_checkpoint,
    loss_ce,
    loss_ie,
    loss_sentry,
    loss_total,
    pseudolabel,
    save_checkpoint,
    selective_entropy,
    smooth_distribution,
)
from sentrylab.core.losses import loss_entropy


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class TestForward:
    def test_identical_head_rows_give_uniform(self, rng):
        m = init_classifier(rng, 4, (), 5, 0.05)
        m.params["head"][:] = m.params["head"][0]
        np.testing.assert_allclose(forward(m, rng.standard_normal(4)), np.full(5, 0.2), atol=1e-15)

    def test_lower_temperature_sharpens(self, rng):
        m = init_classifier(rng, 4, (6,), 3, 1.0)
        x = rng.standard_normal(4)
        hot = forward(m, x).max()
        m.temperature = 0.05
        assert forward(m, x).max() > hot

    def test_matches_scalar_oracle(self, rng):
        for act in ("relu", "tanh"):
            m = random_model(rng, 5, (7, 4), 3, 0.3, act)
            x = rng.standard_normal(5)
            np.testing.assert_allclose(forward(m, x), scalar_forward(m, x), rtol=1e-12)

    def test_probability_vector_and_unit_features(self, rng):
        m = random_model(rng, 6, (10, 8), 4, 0.05)
        X = rng.standard_normal((50, 6))
        cache = forward_cache(m, X)
        assert np.all(cache.probs >= 0) and np.all(cache.probs <= 1)
        np.testing.assert_allclose(cache.probs.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(np.linalg.norm(cache.unit, axis=1), 1.0, atol=1e-9)

    def test_dimension_mismatch(self, rng):
        m = init_classifier(rng, 4, (3,), 2)
        with pytest.raises(DimensionError) as err:
            forward(m, np.zeros(5))
        assert err.value.expected == 4 and err.value.actual == 5

    def test_temperature_must_be_positive(self):
        with pytest.raises(ValueError):
            Classifier(3, (), 2, temperature=0.0)


class TestPseudolabel:
    def _fixed_output(self, probs):
        # no hidden layers, head rows chosen so the softmax yields ``probs`` on input e_0
        C = len(probs)
        m = Classifier(1, (), C, temperature=1.0, params={"head": np.log(np.asarray(probs))[:, None]})
        return m, np.ones(1)

    def test_argmax(self):
        m, x = self._fixed_output([0.1, 0.7, 0.2])
        assert pseudolabel(m, x) == 1

    def test_tie_goes_to_lowest_index(self):
        m, x = self._fixed_output([0.5, 0.5])
        assert pseudolabel(m, x) == 0

    def test_matches_oracle(self, rng):
        m = random_model(rng, 5, (6,), 4)
        for _ in range(10):
            x = rng.standard_normal(5)
            assert pseudolabel(m, x) == int(np.argmax(scalar_forward(m, x)))


class TestEntropy:
    def test_closed_forms(self):
        assert entropy([0.0, 1.0, 0.0]) == 0.0
        assert entropy(np.full(4, 0.25)) == pytest.approx(math.log(4))
        assert entropy([0.5, 0.5]) == pytest.approx(0.6931, abs=1e-4)

    @given(st.lists(st.floats(0, 1), min_size=2, max_size=8).filter(lambda v: sum(v) > 1e-6))
    def test_bounds(self, raw):
        p = np.asarray(raw) / sum(raw)
        h = entropy(p)
        assert -1e-12 <= h <= math.log(len(p)) + 1e-12


class TestLossValues:
    def test_ce_zero_on_onehot_and_log_c_on_uniform(self):
        m = Classifier(1, (), 3, temperature=1e-3, params={"head": np.array([[1.0], [-1.0], [-1.0]])})
        assert loss_ce(m, np.ones((2, 1)), [0, 0]).value == pytest.approx(0.0, abs=1e-12)
        m.params["head"][:] = 0.3
        assert loss_ce(m, np.ones((2, 1)), [2, 1]).value == pytest.approx(math.log(3))

    def test_ce_label_out_of_range(self, rng):
        m = random_model(rng)
        with pytest.raises(ValueError):
            loss_ce(m, rng.standard_normal((2, 5)), [0, 4])

    def test_ie_uniform_q_and_onehot_output(self, rng):
        m = random_model(rng)
        X = rng.standard_normal((7, 5))
        assert loss_ie(m, X, np.full(4, 0.25)).value == pytest.approx(-math.log(4))
        onehot = Classifier(1, (), 3, temperature=1e-3, params={"head": np.array([[-1.0], [1.0], [-1.0]])})
        q = np.array([0.2, 0.3, 0.5])
        assert loss_ie(onehot, np.ones((1, 1)), q).value == pytest.approx(math.log(0.3))

    def test_ie_rejects_zero_q(self, rng):
        with pytest.raises(ValueError):
            loss_ie(random_model(rng), np.zeros((1, 5)), np.array([0.5, 0.5, 0.0, 0.0]))

    def test_smoothing_has_no_zeros(self):
        q = smooth_distribution([5, 0, 0, 3])
        assert np.all(q > 0) and q.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(smooth_distribution([0, 0]), [0.5, 0.5])

    def test_sentry_all_consistent_onehot_is_zero(self):
        m = Classifier(1, (), 2, temperature=1e-3, params={"head": np.array([[1.0], [-1.0]])})
        v = verdict_from_predictions(0, [0, 0, 0])
        members = np.ones((2, 3, 1))
        assert loss_sentry(m, [v, v], members).value == pytest.approx(0.0, abs=1e-12)

    def test_sentry_mixed_uniform_cancels(self, rng):
        m = init_classifier(rng, 3, (), 4)
        m.params["head"][:] = 1.0
        cons = verdict_from_predictions(0, [0, 0, 1])
        inc = verdict_from_predictions(0, [1, 2, 0])
        members = rng.standard_normal((2, 3, 3))
        assert loss_sentry(m, [cons, inc], members).value == pytest.approx(0.0, abs=1e-12)

    def test_sentry_empty(self, rng):
        with pytest.raises(ValueError):
            loss_sentry(random_model(rng), [], np.zeros((0, 3, 5)))

    def test_sentry_all_consistent_reduces_to_mean_entropy(self, rng):
        m = random_model(rng)
        members = rng.standard_normal((4, 3, 5))
        verdicts = [verdict_from_predictions(1, [1, 1, 0]) for _ in range(4)]
        chosen = members[:, 1]
        assert loss_sentry(m, verdicts, members).value == pytest.approx(loss_entropy(m, chosen).value, rel=1e-14)

    def test_total_reduces_to_ce(self, rng):
        m = random_model(rng)
        Xs, ys, Xt = rng.standard_normal((6, 5)), rng.integers(0, 4, 6), rng.standard_normal((6, 5))
        sent = selective_entropy(m, Xt[:3], Xt[3:])
        total, _ = loss_total(m, Xs, ys, Xt, np.full(4, 0.25), sent, 0.0, 0.0)
        ce = loss_ce(m, Xs, ys)
        assert total.value == ce.value
        for k in ce.grad:
            assert np.array_equal(total.grad[k], ce.grad[k])

    def test_total_default_weights(self):
        import inspect
        sig = inspect.signature(loss_total)
        assert sig.parameters["lambda_ie"].default == 0.1
        assert sig.parameters["lambda_sentry"].default == 1.0

    def test_total_negative_weight(self, rng):
        m = random_model(rng)
        with pytest.raises(ValueError):
            loss_total(m, np.zeros((1, 5)), [0], np.zeros((1, 5)), np.full(4, 0.25), None, -0.1, 1.0)

    def test_total_gradient_is_component_sum(self, rng):
        m = random_model(rng)
        Xs, ys, Xt = rng.standard_normal((6, 5)), rng.integers(0, 4, 6), rng.standard_normal((6, 5))
        q = smooth_distribution(rng.integers(0, 9, 4))
        sent = selective_entropy(m, Xt[:2], Xt[2:])
        total, _ = loss_total(m, Xs, ys, Xt, q, sent, 0.1, 1.0)
        ce, ie = loss_ce(m, Xs, ys), loss_ie(m, Xt, q)
        for k in total.grad:
            np.testing.assert_allclose(total.grad[k], ce.grad[k] + 0.1 * ie.grad[k] + sent.grad[k],
                                       rtol=0, atol=1e-10)


def _loss_cases(rng, m):
    Xs = rng.standard_normal((6, m.in_dim))
    ys = rng.integers(0, m.n_classes, 6)
    Xt = rng.standard_normal((6, m.in_dim))
    q = smooth_distribution(rng.integers(0, 9, m.n_classes))
    members = rng.standard_normal((6, 3, m.in_dim))
    verdicts = [verdict_from_predictions(0, rng.integers(0, 2, 3)) for _ in range(6)]
    return {
        "ce": lambda mm: loss_ce(mm, Xs, ys),
        "ie": lambda mm: loss_ie(mm, Xt, q),
        "sentry": lambda mm: loss_sentry(mm, verdicts, members),
        "total": lambda mm: loss_total(mm, Xs, ys, Xt, q, loss_sentry(mm, verdicts, members), 0.1, 1.0)[0],
    }


@pytest.mark.parametrize("seed", range(20))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, activation="relu" if seed % 2 else "tanh")
    assert m.n_params() <= 2000
    for name, fn in _loss_cases(rng, m).items():
        err = max_rel_error(fn(m).grad, numeric_grad(m, fn))
        assert err < 1e-4, name


def test_entropy_descent_on_consistent_instance(rng):
    m = random_model(rng, 4, (6,), 3, 0.5, "tanh")
    x = rng.standard_normal((1, 4))
    prev = loss_entropy(m, x).value
    for _ in range(5000):
        g = loss_entropy(m, x)
        for k in m.params:
            m.params[k] -= 0.05 * g.grad[k]
        now = loss_entropy(m, x).value
        assert now < prev
        prev = now
        if now < 1e-3:
            break
    assert prev < 1e-3


class TestGradStep:
    def test_zero_gradient_keeps_params(self, rng):
        m = random_model(rng)
        before = {k: v.copy() for k, v in m.params.items()}
        grad_step(m, {k: np.zeros_like(v) for k, v in m.params.items()}, OptimizerState("adam", 1e-2))
        for k in before:
            assert np.array_equal(before[k], m.params[k])

    def test_sgd_scalar(self):
        m = Classifier(1, (), 1, 1.0, params={"head": np.array([[2.0]])})
        grad_step(m, {"head": np.array([[0.5]])}, OptimizerState("sgd", 0.1, momentum=0.0))
        assert m.params["head"][0, 0] == pytest.approx(2.0 - 0.1 * 0.5)

    def test_adam_matches_hand_steps(self):
        # minimise f(w) = (w - 3)^2 from w = 0 with lr 0.1
        m = Classifier(1, (), 1, 1.0, params={"head": np.array([[0.0]])})
        st_ = OptimizerState("adam", 0.1)
        w, mo, ve = 0.0, 0.0, 0.0
        for t in range(1, 4):
            g = 2 * (m.params["head"][0, 0] - 3)
            grad_step(m, {"head": np.array([[g]])}, st_)
            gh = 2 * (w - 3)
            mo = 0.9 * mo + 0.1 * gh
            ve = 0.999 * ve + 0.001 * gh * gh
            w = w - 0.1 * (mo / (1 - 0.9 ** t)) / (math.sqrt(ve / (1 - 0.999 ** t)) + 1e-8)
            assert m.params["head"][0, 0] == pytest.approx(w, abs=1e-15)
        # first Adam step moves by exactly lr in the descent direction
        assert abs(w) > 0.29

    def test_nonfinite_gradient(self, rng):
        m = random_model(rng)
        g = {k: np.zeros_like(v) for k, v in m.params.items()}
        g["head"][0, 0] = np.nan
        with pytest.raises(DivergenceError):
            grad_step(m, g, OptimizerState())

    def test_shape_mismatch(self, rng):
        m = random_model(rng)
        with pytest.raises(ValueError):
            grad_step(m, {"head": np.zeros((1, 1))}, OptimizerState())


def test_checkpoint_round_trip(tmp_path, rng):
    m = random_model(rng, 5, (4, 3), 2, 0.05)
    gen = np.random.default_rng(7)
    gen.random(3)
    path = save_checkpoint(tmp_path / "m.npz", m, gen)
    back, state = load_checkpoint(path)
    assert back.hidden == m.hidden and back.temperature == m.temperature
    for k in m.params:
        assert np.array_equal(back.params[k], m.params[k])
    restored = np.random.default_rng()
    restored.bit_generator.state = state
    assert restored.random() == gen.random()
    with np.load(path) as z:
        assert z["param/head"].dtype.str == "<f8"


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_forward_deterministic(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    x = rng.standard_normal(5)
    assert np.array_equal(forward(m, x), forward(m, x))
