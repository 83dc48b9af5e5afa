from __future__ import annotations

import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gchains.errors import ModelError, PreconditionError
from gchains.kernel import (
    Autoregressive,
    Ising,
    Link,
    MarkovOrder1,
    a_k_uniform,
    check_sim_bound,
    conditional_prob_envelope,
    memoryless,
    model_hash,
    symmetric_markov,
    uniqueness_class,
    var_k,
)


def logistic(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def ising_tail(beta: float, p: float, k: int) -> float:
    """Logit-scale tail ``2 beta sum_{j>k} j**-p`` via mpmath's Hurwitz zeta."""
    return float(2 * beta * mpmath.zeta(p, k + 1))


def brute_force_a_k(beta: float, p: float, k: int) -> float:
    """``1 - max over windows of the envelope width``, enumerating every window directly."""
    r = ising_tail(beta, p, k)
    worst = 0.0
    for window in itertools.product((-1, 1), repeat=k):
        s = sum(2 * beta * j ** (-p) * x for j, x in enumerate(window, start=1))
        worst = max(worst, logistic(s + r) - logistic(s - r))
    return 1.0 - worst


windows = st.lists(st.sampled_from([-1, 1]), min_size=0, max_size=12)
models = st.one_of(
    st.builds(Ising, st.floats(0.05, 1.5), st.floats(1.1, 5.0)),
    st.builds(
        Autoregressive,
        st.floats(-1.0, 1.0),
        st.lists(st.floats(-1.0, 1.0), max_size=4).map(tuple),
        st.floats(-0.5, 0.5),
        st.floats(1.5, 5.0),
    ),
    st.builds(lambda a, b: MarkovOrder1(((a, 1 - a), (b, 1 - b))), st.floats(0, 1), st.floats(0, 1)),
)


class TestEnvelope:
    def test_memoryless_autoregressive_is_half(self):
        m = Autoregressive(0.0, (0.0, 0.0))
        for window in ([], [1], [-1, 1, 1]):
            env = conditional_prob_envelope(m, 1, window)
            assert env.lower == env.upper == 0.5

    def test_order_one_autoregressive_at_depth_zero(self):
        env = conditional_prob_envelope(Autoregressive(0.0, (0.5,)), 1, [])
        assert env.lower == pytest.approx(logistic(-0.5), abs=1e-12)
        assert env.upper == pytest.approx(logistic(0.5), abs=1e-12)
        assert env.lower == pytest.approx(0.3775, abs=1e-4)
        assert env.upper == pytest.approx(0.6225, abs=1e-4)

    def test_ising_all_plus_converges_to_zeta_two(self):
        target = 1.0 / (1.0 + math.exp(-2 * 0.5 * math.pi**2 / 6))
        assert target == pytest.approx(0.8383, abs=1e-4)
        m = Ising(0.5, 2.0)
        widths = []
        for L in (10, 100, 1000):
            env = conditional_prob_envelope(m, 1, [1] * L)
            assert env.lower <= target <= env.upper
            widths.append(env.width)
        assert widths[0] > widths[1] > widths[2]
        assert widths[2] < 1e-3

    @given(models, windows)
    @settings(max_examples=150, deadline=None)
    def test_normalization(self, model, window):
        lo = conditional_prob_envelope(model, -1, window)
        hi = conditional_prob_envelope(model, 1, window)
        assert 0.0 <= lo.lower <= lo.upper <= 1.0
        assert lo.lower + hi.lower <= 1.0 + 1e-12
        assert lo.upper + hi.upper >= 1.0 - 1e-12

    @given(models, windows, st.sampled_from([-1, 1]))
    @settings(max_examples=150, deadline=None)
    def test_nested_windows_tighten(self, model, window, x):
        prev = conditional_prob_envelope(model, x, [])
        for k in range(1, len(window) + 1):
            cur = conditional_prob_envelope(model, x, window[:k])
            assert cur.lower >= prev.lower - 1e-12
            assert cur.upper <= prev.upper + 1e-12
            prev = cur

    def test_rejects_bad_symbols(self):
        m = Ising(0.3, 2.0)
        with pytest.raises(ModelError):
            conditional_prob_envelope(m, 0, [])
        with pytest.raises(ModelError):
            conditional_prob_envelope(m, 1, [1, 2])


class TestMinorization:
    @pytest.mark.parametrize("model", [memoryless(0.5), memoryless(0.8), Autoregressive(0.3)])
    def test_memoryless_models_have_unit_a_k(self, model):
        for k in range(5):
            assert a_k_uniform(model, k, "exact_scan").value == 1.0
            assert var_k(model, k).value == 0.0

    def test_ising_certified_bound_value(self):
        got = a_k_uniform(Ising(0.3, 3.5), 2).value
        assert got == pytest.approx(1 - 0.6 * 2 ** (-2.5), abs=1e-12)
        assert got == pytest.approx(0.8939, abs=1e-4)
        assert a_k_uniform(Ising(0.3, 3.5), 2, "exact_scan").value >= got

    def test_finite_order_autoregressive(self):
        m = Autoregressive(0.0, (0.5,))
        assert a_k_uniform(m, 1, "exact_scan").value == 1.0
        assert var_k(m, 0).value == pytest.approx(logistic(0.5) - logistic(-0.5), abs=1e-12)
        assert var_k(m, 0).value == pytest.approx(0.2449, abs=1e-4)

    @pytest.mark.parametrize("beta,p", [(0.3, 4.0), (0.5, 2.5), (0.2, 1.6), (1.0, 3.0)])
    def test_exact_scan_matches_enumeration(self, beta, p):
        m = Ising(beta, p)
        for k in range(0, 9):
            assert a_k_uniform(m, k, "exact_scan").value == pytest.approx(brute_force_a_k(beta, p, k), abs=1e-10)

    @pytest.mark.parametrize("beta,p", [(0.3, 4.0), (0.5, 2.5), (0.2, 1.6), (0.7, 1.5), (0.4, 1.1)])
    def test_exact_scan_dominates_certified_bound(self, beta, p):
        m = Ising(beta, p)
        for k in range(0, 11):
            assert a_k_uniform(m, k, "exact_scan").value >= a_k_uniform(m, k).value - 1e-15

    @pytest.mark.parametrize("beta,p", [(0.3, 4.0), (0.5, 2.5), (0.2, 1.6), (0.9, 1.5)])
    def test_ising_variation_below_power_law(self, beta, p):
        m = Ising(beta, p)
        for k in range(1, 11):
            assert var_k(m, k).value <= 2 * beta * k ** (1 - p)

    def test_ising_power_law_needs_p_at_least_three_halves(self):
        # with p close to 1 the tail sum exceeds k**(1-p)/2 and the plain bound fails;
        # the certified bound stays valid through its extra factor
        m = Ising(0.01, 1.1)
        k = 3
        plain = 2 * 0.01 * k ** (1 - 1.1)
        assert plain < 1.0
        assert var_k(m, k).value > plain
        assert a_k_uniform(m, k).value <= a_k_uniform(m, k, "exact_scan").value

    @pytest.mark.parametrize(
        "model",
        [
            Autoregressive(0.2, (0.4, -0.2), 0.5, 3.0),
            Autoregressive(-0.3, (), 1.0, 4.0),
            Autoregressive(0.0, (1.0, 0.5, 0.25)),
        ],
    )
    def test_autoregressive_variation_bound(self, model):
        for k in range(0, 10):
            assert var_k(model, k).value <= 2 * model.link.qprime_sup * model.r(k) * (1 + 1e-9)

    def test_a_k_equals_one_minus_var_k(self):
        for m in (Ising(0.3, 4.0), Autoregressive(0.1, (0.3,), 0.2, 3.0), symmetric_markov(0.9)):
            for k in range(0, 10):
                assert abs(a_k_uniform(m, k, "exact_scan").value - (1 - var_k(m, k).value)) <= 1e-12

    def test_exact_scan_limit(self):
        m = Ising(0.3, 4.0, k_scan_max=4)
        with pytest.raises(PreconditionError):
            a_k_uniform(m, 5, "exact_scan")
        assert var_k(m, 5).mode == "certified_bound"

    def test_clamped_flag(self):
        b = a_k_uniform(Ising(2.0, 1.2), 1)
        assert b.value == 0.0 and b.clamped

    def test_markov_layer_zero(self):
        m = MarkovOrder1(((0.7, 0.3), (0.2, 0.8)))
        assert a_k_uniform(m, 0, "exact_scan").value == pytest.approx(0.2 + 0.3)
        assert a_k_uniform(m, 1, "exact_scan").value == 1.0


class TestUniqueness:
    def test_ising_p_between_three_halves_and_two(self):
        assert uniqueness_class(Ising(0.3, 1.6)) == "square_summable_variation"
        assert uniqueness_class(Ising(2.0, 1.6)) == "square_summable_variation"

    def test_ising_p_small(self):
        assert uniqueness_class(Ising(0.3, 1.2)) == "none_detected"

    def test_positive_product(self):
        assert uniqueness_class(Autoregressive(0.0, (), 1.0, 4.0)) == "positive_product"
        assert uniqueness_class(Ising(0.3, 4.0)) == "positive_product"
        assert uniqueness_class(symmetric_markov(0.9)) == "positive_product"


class TestSimBound:
    def test_identical_histories(self, rng):
        m = Ising(0.5, 2.5)
        h = rng.choice([-1, 1], size=(20, 1, 50))
        pairs = np.concatenate([h, h], axis=1)
        assert check_sim_bound(m, pairs, {-1: 0.3, 1: -2.0}) <= 0.0

    def test_single_flip(self):
        m = Ising(0.5, 2.5)
        L, lag = 30, 4
        omega = np.ones(L)
        sigma = omega.copy()
        sigma[lag - 1] = -1
        pairs = np.array([[omega, sigma]])
        # h = 1 has zero lhs; h(x) = x measures the change in g(+1) - g(-1)
        assert check_sim_bound(m, pairs, lambda x: 1.0, allowance=False) <= 0.0
        s_o = sum(j ** -2.5 for j in range(1, L + 1))
        s_s = s_o - 2 * lag**-2.5
        lhs = abs(2 * (logistic(2 * 0.5 * s_o) - logistic(2 * 0.5 * s_s)))
        assert lhs <= 2 * 2 * 0.5 * lag**-2.5
        assert check_sim_bound(m, pairs, lambda x: float(x), allowance=False) <= 0.0

    def test_random_pairs(self, rng):
        m = Ising(0.5, 2.5)
        pairs = rng.choice([-1.0, 1.0], size=(2000, 2, 200))
        assert check_sim_bound(m, pairs, lambda x: float(x)) <= 0.0
        assert check_sim_bound(m, pairs, {-1: 0.0, 1: 1.0}) <= 0.0

    def test_requires_ising(self):
        with pytest.raises(ModelError):
            check_sim_bound(symmetric_markov(0.9), np.ones((1, 2, 3)), lambda x: 1.0)


class TestModels:
    @pytest.mark.parametrize(
        "build",
        [
            lambda: Ising(0.0, 2.0),
            lambda: Ising(0.3, 1.0),
            lambda: Ising(float("nan"), 2.0),
            lambda: Autoregressive(0.0, (), 1.0, 1.0),
            lambda: Autoregressive(float("inf")),
            lambda: MarkovOrder1(((0.5, 0.6), (0.5, 0.5))),
            lambda: MarkovOrder1(((1.2, -0.2), (0.5, 0.5))),
            lambda: Autoregressive(0.0, (), link=Link("bad", logistic, 0.0)),
        ],
    )
    def test_invalid_parameters(self, build):
        with pytest.raises(ModelError):
            build()

    def test_degenerate_markov_allowed(self):
        m = MarkovOrder1(((0.0, 1.0), (1.0, 0.0)))
        assert a_k_uniform(m, 0, "exact_scan").value == 0.0

    def test_hash_is_stable_and_distinguishes(self):
        assert model_hash(Ising(0.3, 4.0)) == model_hash(Ising(0.3, 4.0))
        assert model_hash(Ising(0.3, 4.0)) != model_hash(Ising(0.3, 4.5))
        assert len(model_hash(symmetric_markov(0.9))) == 16
