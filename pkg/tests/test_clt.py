from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest

from gchains.clt import (
    AutocovStats,
    ObservableF,
    VarianceEstimate,
    agreement,
    autocov_stats,
    clt_test,
    consistency_check,
    covariance_constant,
    mean_zero_blocks,
    merge_autocov,
    normal_cdf,
    partial_sums,
    path_variance_check,
    select_max_lag,
    variance_autocov,
    variance_block,
    variance_replication,
    wald_check,
    z_score,
)
from gchains.errors import InsufficientData, LagTooLarge, NonCenteredObservable, PreconditionError
from gchains.kernel import Ising, MarkovOrder1, memoryless, symmetric_markov
from gchains.regen import UniformStream, extract_blocks, simulate
from gchains.renewal import gap_law_dp

IDENTITY = ObservableF.identity()


def naive_lag_sums(v: np.ndarray, L: int) -> np.ndarray:
    n = len(v)
    return np.array([sum(v[t] * v[t + i] for t in range(n - i)) for i in range(L + 1)])


@pytest.fixture(scope="module")
def markov_run():
    return simulate(symmetric_markov(0.9), 200_000, UniformStream(21))


class TestObservable:
    def test_values_and_transforms(self):
        f = ObservableF(-0.5, 2.0)
        assert f(-1) == -0.5 and f(1) == 2.0
        assert f.sup == 2.0
        g = f.scaled(-2.0)
        assert (g.minus, g.plus) == (1.0, -4.0)
        h = f.shifted(0.5)
        assert (h.minus, h.plus, h.centering) == (0.0, 2.5, "none")

    def test_centered_identity(self):
        f = ObservableF.centered_identity(0.2, 0.01)
        assert (f.minus, f.plus, f.centering, f.center_se) == (-1.2, 0.8, "empirical", 0.01)

    def test_covariance_constant(self):
        assert covariance_constant(IDENTITY) == 2.0
        assert covariance_constant(ObservableF(0.0, 3.0)) == 9.0
        assert covariance_constant(ObservableF.zero()) == 0.0


class TestBlockEstimator:
    def test_memoryless_exact_inputs(self):
        tr = simulate(memoryless(0.5), 20_000, UniformStream(0))
        est = variance_block(extract_blocks(tr, IDENTITY))
        # every block is one step with xi = +-1, so the estimate is exactly 1
        assert est.value == 1.0
        assert est.std_error == 0.0

    def test_zero_observable(self, markov_run):
        est = variance_block(extract_blocks(markov_run, ObservableF.zero()))
        assert est.value == 0.0 and est.std_error == 0.0
        assert est.details["mean_xi_z"] == 0.0

    def test_markov_target(self, markov_run):
        est = variance_block(extract_blocks(markov_run, IDENTITY))
        assert abs(est.value - 9.0) < 3 * est.std_error

    @pytest.mark.parametrize("c", [2.0, 3.0])
    def test_quadratic_scaling(self, markov_run, c):
        base = variance_block(extract_blocks(markov_run, IDENTITY)).value
        scaled = variance_block(extract_blocks(markov_run, IDENTITY.scaled(c))).value
        assert scaled == pytest.approx(c * c * base, rel=1e-12)
        if c == 2.0:
            assert scaled == 4.0 * base

    def test_too_few_blocks(self):
        tr = simulate(memoryless(0.5), 20, UniformStream(0))
        with pytest.raises(InsufficientData):
            variance_block(extract_blocks(tr, IDENTITY))

    def test_mean_zero_blocks(self, markov_run):
        ok, z = mean_zero_blocks(extract_blocks(markov_run, IDENTITY))
        assert ok and z < 3
        ok, z = mean_zero_blocks(extract_blocks(markov_run, ObservableF(0.0, 1.0)))
        assert not ok


class TestAutocov:
    @pytest.mark.parametrize("L", [10, 100])
    def test_lag_sums_match_naive(self, L):
        v = np.random.default_rng(L).normal(size=1500)
        st = autocov_stats(v, L)
        assert np.allclose(st.sums, naive_lag_sums(v, L), rtol=1e-10, atol=1e-9)
        assert st.counts.tolist() == [1500 - i for i in range(L + 1)]

    def test_merge_is_associative(self):
        rng = np.random.default_rng(3)
        parts = [autocov_stats(rng.normal(size=n), 8) for n in (300, 500, 700)]
        left = parts[0].merge(parts[1]).merge(parts[2])
        right = parts[0].merge(parts[1].merge(parts[2]))
        for a, b in ((left, right), (left, merge_autocov(parts))):
            assert np.allclose(a.sums, b.sums, rtol=1e-14)
            assert a.n == b.n == 1500 and a.min_len == 300

    def test_lag_bound_controls_truncation(self):
        # exact autocovariances of the +-1 chain that stays with probability 0.9
        gamma = 0.8 ** np.arange(400)
        law = gap_law_dp([0.2, 1.0], 2000)
        L, bound = select_max_lag(gamma, law.forward_tail(), covariance_constant(IDENTITY), 399)
        omitted = 2 * np.sum(gamma[L + 1 :])
        assert omitted <= bound
        running = gamma[0] + 2 * np.sum(gamma[1 : L + 1])
        assert bound <= 0.01 * running
        assert abs(running - 9.0) <= 0.01 * 9.0

    def test_markov_target(self, markov_run):
        est = variance_autocov(markov_run, IDENTITY, gap_law=gap_law_dp([0.2, 1.0], 2000))
        assert est.details["lag_policy"] == "regeneration_tail"
        assert abs(est.value - 9.0) < 3 * est.std_error

    @pytest.mark.parametrize("c", [2.0, 3.0])
    def test_quadratic_scaling(self, markov_run, c):
        base = variance_autocov(markov_run, IDENTITY, max_lag=40).value
        scaled = variance_autocov(markov_run, IDENTITY.scaled(c), max_lag=40).value
        assert scaled == pytest.approx(c * c * base, rel=1e-12)

    def test_taper(self, markov_run):
        plain = variance_autocov(markov_run, IDENTITY, max_lag=40)
        tapered = variance_autocov(markov_run, IDENTITY, max_lag=40, taper=True)
        assert tapered.value < plain.value

    def test_lag_too_large(self):
        tr = simulate(memoryless(0.5), 1000, UniformStream(0))
        with pytest.raises(LagTooLarge):
            variance_autocov(tr, IDENTITY, max_lag=100)

    def test_uncentered_observable_rejected(self):
        tr = simulate(memoryless(0.5), 100_000, UniformStream(0))
        with pytest.raises(NonCenteredObservable):
            variance_autocov(tr, ObservableF(-0.8, 1.2, "none"), max_lag=5)

    def test_stats_container(self):
        st = AutocovStats(np.array([4.0, 2.0]), np.array([4.0, 0.0]), 0.0, 4, 4)
        assert st.gamma().tolist() == [1.0, 2.0]


class TestReplication:
    def test_all_zero(self):
        est = variance_replication(np.zeros(100))
        assert est.value == 0.0 and est.std_error == 0.0

    def test_normal_sample(self):
        x = np.random.default_rng(4).normal(scale=2.0, size=4000)
        est = variance_replication(x)
        assert abs(est.value - 4.0) < 3 * est.std_error

    def test_too_few(self):
        with pytest.raises(InsufficientData):
            variance_replication(np.ones(5))


class TestAgreement:
    def test_z_scores(self):
        a = VarianceEstimate(1.0, 0.3, "a", 1)
        b = VarianceEstimate(1.5, 0.4, "b", 1)
        assert z_score(a, b) == pytest.approx(1.0)
        assert agreement([a, b, a]) == pytest.approx({"a~b": 1.0, "a~a": 0.0, "b~a": 1.0})

    def test_exact_estimates(self):
        a = VarianceEstimate(0.0, 0.0, "a", 1)
        assert z_score(a, a) == 0.0
        assert z_score(a, VarianceEstimate(1.0, 0.0, "b", 1)) == math.inf


class TestNormality:
    def test_normal_cdf_against_mpmath(self):
        xs = np.linspace(-8, 8, 161)
        ref = np.array([float(mpmath.ncdf(x)) for x in xs])
        assert np.max(np.abs(normal_cdf(xs) - ref)) <= 1e-7
        assert normal_cdf(0.0) == 0.5

    def test_ks_is_calibrated(self):
        rng = np.random.default_rng(5)
        pvals = np.array([clt_test(rng.normal(size=500), 1.0).ks_pvalue for _ in range(1000)])
        assert np.mean(pvals >= 0.01) >= 0.98

    def test_wrong_scale_detected(self):
        x = np.random.default_rng(6).normal(scale=1.5, size=2000)
        assert clt_test(x, 1.0).ks_pvalue < 1e-6

    def test_constant_replicas(self):
        res = clt_test(np.zeros(200), 1.0)
        assert res.ks_distance >= 0.5

    def test_sigma_must_be_positive(self):
        with pytest.raises(PreconditionError):
            clt_test(np.zeros(200), 0.0)

    def test_partial_sums(self):
        v = np.arange(1.0, 9.0)
        assert partial_sums(v, (0.25, 0.5, 1.0)).tolist() == pytest.approx(np.array([3.0, 10.0, 36.0]) / math.sqrt(8))

    def test_path_variance(self):
        rng = np.random.default_rng(7)
        steps = rng.normal(size=(2000, 400))
        paths = np.array([partial_sums(s) for s in steps])
        for row in path_variance_check(paths, 1.0):
            assert row["z"] < 4
            assert row["target"] == row["t"]


class TestConsistency:
    def test_markov(self):
        m = MarkovOrder1(((0.7, 0.3), (0.2, 0.8)))
        tr = simulate(m, 200_000, UniformStream(8))
        for x in (-1, 1):
            res = consistency_check(m, tr, lambda w: 1.0, x)
            assert res.z < 4 and res.truncation_error == 0.0
        res = consistency_check(m, tr, lambda w: w[:, 0] > 0, 1, h_depth=1)
        assert res.z < 4

    def test_ising_with_window_function(self):
        m = Ising(0.3, 4.0)
        tr = simulate(m, 200_000, UniformStream(9))
        res = consistency_check(m, tr, lambda w: w[:, 0] * w[:, 2], 1, h_depth=3, depth=200)
        assert res.z < 4
        assert res.truncation_error < 1e-5

    def test_wrong_model_is_detected(self):
        tr = simulate(symmetric_markov(0.9), 200_000, UniformStream(10))
        res = consistency_check(symmetric_markov(0.6), tr, lambda w: w[:, 0] > 0, 1, h_depth=1)
        assert res.z > 10


class TestWald:
    def test_zero_observable(self):
        sets = [extract_blocks(simulate(memoryless(0.5), 1100, UniformStream(0, r)), ObservableF.zero()) for r in range(100)]
        res = wald_check(sets, 1000)
        assert res.relative_error == 0.0 and res.z == 0.0

    def test_memoryless(self):
        sets = [extract_blocks(simulate(memoryless(0.5), 1100, UniformStream(1, r)), IDENTITY) for r in range(200)]
        res = wald_check(sets, 1000)
        assert res.z < 3

    def test_markov(self):
        sets = [
            extract_blocks(simulate(symmetric_markov(0.9), 100_500, UniformStream(2, r)), IDENTITY)
            for r in range(200)
        ]
        res = wald_check(sets, 100_000)
        assert res.z < 3

    def test_short_runs_rejected(self):
        sets = [extract_blocks(simulate(memoryless(0.5), 1000, UniformStream(1, r)), IDENTITY) for r in range(100)]
        with pytest.raises(InsufficientData):
            wald_check(sets, 1000)

    def test_too_few_replicas(self):
        with pytest.raises(InsufficientData):
            wald_check([], 10)
