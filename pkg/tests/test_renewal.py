from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gchains.errors import PreconditionError, ZeroMean
from gchains.kernel import Ising, a_lower_sequence
from gchains.renewal import (
    DecayClass,
    GapLaw,
    classify_decay,
    gap_law_dp,
    gap_law_empirical,
    power_tail_sum,
    regularize,
    rho_table,
    size_bias_chi2,
    size_biased_gap,
    straddle_mean_identity,
    straddling_gaps,
    summability_checks,
)


def rho_by_matrix_power(a: np.ndarray, m_max: int) -> np.ndarray:
    """Return probabilities from powers of the explicit transition matrix on states 0..m_max."""
    P = np.zeros((m_max + 1, m_max + 1))
    for k in range(m_max + 1):
        ak = a[min(k, len(a) - 1)]
        P[k, 0] += 1.0 - ak
        P[k, min(k + 1, m_max)] += ak
    out = np.empty(m_max + 1)
    row = np.zeros(m_max + 1)
    row[0] = 1.0
    for m in range(m_max + 1):
        out[m] = row[0]
        row = row @ P
    return out


def streak_gaps(a: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Gaps between times ``t`` with ``u[t + j] < a[j]`` for every ``j < len(a)``; plain loops."""
    J = len(a)
    marks = [t for t in range(len(u) - J) if all(u[t + j] < a[j] for j in range(J))]
    return np.diff(marks)


a_sequences = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=30)


class TestRhoTable:
    @pytest.mark.parametrize("a", [0.3, 0.5, 0.9])
    def test_constant_a(self, a):
        t = rho_table([a], 1000)
        assert np.max(np.abs(t.rho[1:] - (1 - a))) <= 1e-12

    def test_two_step_by_hand(self):
        a = 0.37
        assert rho_table([a], 2).rho[2] == pytest.approx((1 - a) ** 2 + a * (1 - a), abs=1e-15)

    def test_degenerate_sequences(self):
        assert np.all(rho_table([0.0], 500).rho == 1.0)
        assert np.all(rho_table([1.0], 500).rho[1:] == 0.0)

    @given(a_sequences)
    @settings(max_examples=60, deadline=None)
    def test_matches_matrix_powers(self, a):
        a = np.maximum.accumulate(np.asarray(a))
        t = rho_table(a, 40)
        assert np.max(np.abs(t.rho - rho_by_matrix_power(a, 40))) <= 1e-12

    @given(a_sequences)
    @settings(max_examples=60, deadline=None)
    def test_rows_are_stochastic(self, a):
        assert rho_table(a, 200).row_error <= 1e-12

    @given(a_sequences, st.integers(0, 29), st.floats(0.0, 1.0))
    @settings(max_examples=100, deadline=None)
    def test_raising_one_entry_never_raises_rho(self, a, idx, bump):
        base = regularize(a, 60)
        raised = base.copy()
        i = min(idx, len(raised) - 1)
        raised[i] = raised[i] + bump * (1.0 - raised[i])
        raised = np.maximum.accumulate(raised)
        lo = rho_table(base, 60).rho
        hi = rho_table(raised, 60).rho
        assert np.all(hi <= lo + 1e-12)

    def test_regularization_keeps_raw(self):
        t = rho_table([0.5, 0.2, 0.9], 10)
        assert t.a_raw.tolist() == [0.5, 0.2, 0.9]
        assert t.a_regularized[:3].tolist() == [0.5, 0.5, 0.9]

    def test_mean_gap_at_least_one_when_converged(self):
        t = rho_table(a_lower_sequence(Ising(0.3, 4.0), 3000), 3000)
        assert t.mean_gap_converged
        assert t.mean_gap >= 1.0

    def test_unconverged_moments_are_flagged(self):
        report = rho_table([0.5], 100).report()
        assert report["mean_gap"] == "divergent-or-unconverged"

    def test_rejects_out_of_range(self):
        with pytest.raises(PreconditionError):
            rho_table([1.2], 10)


class TestGapLaw:
    def test_tail_equals_rho(self):
        a = a_lower_sequence(Ising(0.3, 4.0), 2000)
        law = gap_law_dp(a, 2000)
        rho = rho_table(a, 1500).rho
        # P(gap > M) = rho_M
        assert np.max(np.abs(law.survival()[2:1502] - rho[1:1501])) <= 1e-12

    def test_mean_is_inverse_product(self):
        a = a_lower_sequence(Ising(0.3, 4.0), 4000)
        law = gap_law_dp(a, 4000)
        assert law.mean() == pytest.approx(1.0 / np.prod(a), rel=1e-6)

    def test_geometric_case(self):
        law = gap_law_dp([0.25, 1.0], 200)
        k = np.arange(1, 201)
        assert np.max(np.abs(law.pmf[1:] - 0.25 * 0.75 ** (k - 1))) <= 1e-14

    def test_against_direct_streak_simulation(self):
        a = np.array([0.7, 0.85, 0.95, 0.99])
        u = np.random.default_rng(5).random(200_000)
        gaps = streak_gaps(a, u)
        law = gap_law_dp(np.concatenate((a, [1.0])), 400)
        counts = np.bincount(gaps, minlength=12)[1:12]
        expected = law.pmf[1:12] * len(gaps)
        z = (counts - expected) / np.sqrt(expected)
        assert np.max(np.abs(z)) < 4.5
        assert gaps.mean() == pytest.approx(law.mean(), abs=4 * gaps.std() / math.sqrt(len(gaps)))

    def test_forward_tail_geometric(self):
        law = gap_law_dp([0.2, 1.0], 400)
        assert np.allclose(law.forward_tail()[:50], 0.8 ** np.arange(50), atol=1e-12)

    def test_empirical(self):
        law = gap_law_empirical([1, 1, 2, 3])
        assert law.pmf.tolist() == [0.0, 0.5, 0.25, 0.25]
        assert law.mean() == 1.75
        with pytest.raises(PreconditionError):
            gap_law_empirical([0, 1])


class TestSizeBias:
    def test_point_mass(self):
        sb = size_biased_gap(GapLaw(np.array([0.0, 1.0]), "dp"))
        assert sb.pmf.tolist() == [0.0, 1.0]

    def test_uniform_on_two(self):
        sb = size_biased_gap(GapLaw(np.array([0.0, 0.5, 0.5]), "dp"))
        assert sb.pmf[1:] == pytest.approx([1 / 3, 2 / 3], abs=1e-15)

    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=25).filter(lambda v: sum(v) > 1e-3))
    @settings(max_examples=80, deadline=None)
    def test_second_moment_identity(self, weights):
        w = np.asarray(weights)
        law = GapLaw(np.concatenate(([0.0], w / w.sum())), "dp")
        lhs, rhs = straddle_mean_identity(law)
        assert lhs == pytest.approx(rhs, rel=1e-10)
        assert size_biased_gap(law).pmf.sum() == pytest.approx(1.0, abs=1e-12)

    def test_zero_mean(self):
        with pytest.raises(ZeroMean):
            size_biased_gap(GapLaw(np.array([0.0, 0.0]), "dp"))

    def test_straddling_gaps(self):
        r = [0, 2, 7, 8]
        assert straddling_gaps(r, [0, 1, 2, 6, 7, 8, 20]).tolist() == [2, 2, 5, 5, 1]

    def test_chi_square_accepts_true_law(self, rng):
        gaps = rng.geometric(0.4, size=50_000)
        k = np.arange(1, 60)
        sb = k * 0.4 * 0.6 ** (k - 1) / 2.5
        straddle = rng.choice(k, size=5_000, p=sb / sb.sum())
        assert size_bias_chi2(straddle, gaps).pvalue > 0.01
        assert size_bias_chi2(gaps[:5_000], gaps).pvalue < 1e-6


CLASS_TABLE = [
    ((0.0, 3.0), "fclt_var2"),
    ((-2.0, 2.0), "fclt_var2"),
    ((0.0, 1.5), "fclt_var1"),
    ((-2.0, 1.0), "fclt_var1"),
    ((0.0, 1.0), "none"),
    ((2.0, 2.0), "fclt_var1"),
]


class TestDecay:
    @pytest.mark.parametrize("ab,expected", CLASS_TABLE)
    def test_classifier_table(self, ab, expected):
        assert classify_decay(DecayClass(ab[0], ab[1], 1.0)) == expected

    @given(st.floats(-4.0, 4.0), st.floats(1.0, 6.0), st.floats(0.01, 10.0))
    @settings(max_examples=100, deadline=None)
    def test_strong_regime_certifies_second_moment(self, a, b, c):
        d = DecayClass(a, b, c)
        if classify_decay(d) == "fclt_var2":
            report = summability_checks(np.full(2, 0.9), d)
            assert report["second_moment_certified"]

    @pytest.mark.parametrize("bad", [(0.0, 0.5, 1.0, 2), (0.0, 2.0, 0.0, 2), (0.0, 2.0, 1.0, 1)])
    def test_invalid(self, bad):
        with pytest.raises(PreconditionError):
            DecayClass(*bad)

    @staticmethod
    def _seq(power: float, n: int = 50) -> np.ndarray:
        k = np.arange(n, dtype=np.float64)
        a = np.zeros(n)
        a[2:] = 1.0 - k[2:] ** (-power)
        return a

    def test_cubic_tail(self):
        r = summability_checks(self._seq(3.0), DecayClass(0.0, 3.0, 1.0))
        assert r["product_positive"] is False  # a_0 = 0 here
        r = summability_checks(np.maximum(self._seq(3.0), 0.5), DecayClass(0.0, 3.0, 1.0))
        assert r["product_positive"] and r["second_moment_certified"]

    def test_harmonic_tail(self):
        r = summability_checks(np.maximum(self._seq(1.0), 0.5), DecayClass(0.0, 1.0, 1.0))
        assert r["sum_one_minus_a"] == "divergent"
        assert not r["product_positive"]

    def test_square_tail(self):
        r = summability_checks(np.maximum(self._seq(2.0), 0.5), DecayClass(0.0, 2.0, 1.0))
        assert r["product_positive"]
        assert not r["second_moment_certified"]
        assert r["sum_k_one_minus_a"] == "divergent"

    @pytest.mark.parametrize("a,b", [(2.0, 3.0), (0.5, 2.5), (-1.5, 2.0), (-3.0, 1.2), (3.0, 1.5), (-2.0, 1.0)])
    def test_power_tail_sum_bounds_series(self, a, b):
        # decreasing summand: the sum beyond N lies between the integral from N and that plus f(N)
        N = 10**6
        k = np.arange(5, N, dtype=np.float64)
        head = float(np.sum(np.log(k) ** a / k**b))
        with mpmath.workdps(30):
            # substitute x = e^u so the integrand decays exponentially (or is a plain power for b = 1)
            integral = float(mpmath.quad(lambda u: u**a * mpmath.exp((1 - b) * u), [mpmath.log(N), mpmath.inf]))
        lo, hi = head + integral, head + integral + math.log(N) ** a / N**b
        got = power_tail_sum(1.0, a, b, 5)
        assert lo <= got <= hi * 1.03

    def test_power_tail_sum_against_zeta(self):
        from scipy.special import zeta

        assert power_tail_sum(1.0, 0.0, 3.0, 10) == pytest.approx(float(zeta(3.0, 10)), rel=1e-6)
        assert power_tail_sum(2.0, 0.0, 1.0, 10) == math.inf
        assert power_tail_sum(1.0, -2.0, 1.0, 3) < math.inf
