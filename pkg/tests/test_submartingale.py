"""Monte Carlo process tests: drift, trajectories, and hitting times."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from bplab.submartingale import (
    IncrementProcess,
    corollary_cases,
    drift_lower_bound_check,
    hitting_time,
    simulate_S,
)
from bplab.qnn import CircuitSpec

ALPHA = 0.1


class TestIncrementProcess:
    def test_validation(self):
        with pytest.raises(ValueError):
            IncrementProcess(alpha=0.0, p=0.5, sampler=lambda rng, n: np.zeros(n))
        with pytest.raises(ValueError):
            IncrementProcess(alpha=0.1, p=1.5, sampler=lambda rng, n: np.zeros(n))
        with pytest.raises(ValueError):
            IncrementProcess.uniform(ALPHA, 1.0, 0.5)
        with pytest.raises(ValueError):
            IncrementProcess.bernoulli_mixture(ALPHA, 0.5, accept=ALPHA / 2)
        with pytest.raises(ValueError):
            IncrementProcess.exponential(ALPHA, mean=0.0)

    def test_uniform_acceptance_probability(self):
        process = IncrementProcess.uniform(ALPHA, 0.0, 2 * ALPHA)
        assert process.p == pytest.approx(0.5)
        process = IncrementProcess.uniform(ALPHA, ALPHA, 2 * ALPHA)
        assert process.p == 1.0

    def test_empirical_acceptance_rate_tracks_p(self):
        for process in (
            IncrementProcess.uniform(ALPHA, 0.0, 2 * ALPHA, seed=1),
            IncrementProcess.exponential(ALPHA, ALPHA, seed=2),
            IncrementProcess.bernoulli_mixture(ALPHA, 0.3, accept=10 * ALPHA,
                                               seed=3),
        ):
            n = 40_000
            draws = process.draw(n)
            rate = float(np.mean(draws >= process.alpha))
            tol = 3 * math.sqrt(process.p * (1 - process.p) / n) + 1e-12
            assert abs(rate - process.p) <= tol, process.label

    def test_indicator_consistency(self):
        process = IncrementProcess.bernoulli_mixture(
            ALPHA, 0.4, accept=(ALPHA, 3 * ALPHA), reject=(0.0, ALPHA / 2), seed=5)
        draws = process.draw(10_000)
        indicator = draws >= ALPHA
        gated = np.where(indicator, draws, 0.0)
        assert np.all(gated[indicator] >= ALPHA)
        assert np.all(gated[~indicator] == 0.0)


class TestSimulate:
    def test_all_subthreshold_stays_zero(self):
        process = IncrementProcess.point_mass(ALPHA, ALPHA / 2)
        assert process.p == 0.0
        trajectory = simulate_S(process, 200)
        assert np.all(trajectory == 0.0)

    def test_deterministic_staircase(self):
        process = IncrementProcess.point_mass(ALPHA, ALPHA)
        trajectory = simulate_S(process, 50)
        np.testing.assert_allclose(trajectory, ALPHA * np.arange(1, 51),
                                   rtol=1e-12)

    def test_uniform_law_drift_matches_quadrature(self):
        # E[Delta * 1{Delta >= alpha}] for Uniform[0, 2a]: quadrature oracle
        # against the closed form 3a/4.
        density = 1.0 / (2 * ALPHA)
        integral, _ = integrate.quad(lambda y: y * density, ALPHA, 2 * ALPHA)
        assert integral == pytest.approx(3 * ALPHA / 4, abs=1e-12)
        assert integral == pytest.approx(0.075, abs=1e-12)

        process = IncrementProcess.uniform(ALPHA, 0.0, 2 * ALPHA, seed=9)
        steps = 100_000
        trajectory = simulate_S(process, steps)
        increments = np.diff(np.concatenate([[0.0], trajectory]))
        stderr = increments.std(ddof=1) / math.sqrt(steps)
        assert abs(increments.mean() - integral) <= 3 * stderr

    @given(seed=st.integers(0, 10_000), steps=st.integers(1, 300))
    @settings(max_examples=50, deadline=None)
    def test_trajectories_never_decrease(self, seed, steps):
        process = IncrementProcess.uniform(ALPHA, 0.0, 3 * ALPHA, seed=seed)
        trajectory = simulate_S(process, steps)
        assert np.all(np.diff(trajectory) >= 0.0)
        # Bounded law: the supremum is capped by steps * sup
        assert trajectory[-1] <= steps * process.sup_delta + 1e-12


class TestDriftLowerBound:
    def test_uniform_law_passes_with_margin(self):
        process = IncrementProcess.uniform(ALPHA, 0.0, 2 * ALPHA, seed=11)
        check = drift_lower_bound_check(process, 100_000)
        assert check.passed
        assert check.lower_bound == pytest.approx(ALPHA * 0.5)
        assert check.empirical_mean == pytest.approx(0.075, abs=0.003)

    def test_tight_equality_case(self):
        process = IncrementProcess.point_mass(ALPHA, ALPHA, seed=12)
        check = drift_lower_bound_check(process, 10_000)
        assert check.passed
        assert check.empirical_mean == pytest.approx(ALPHA, abs=1e-12)
        assert check.stderr == pytest.approx(0.0, abs=1e-15)

    def test_point_mass_far_above_threshold(self):
        process = IncrementProcess.bernoulli_mixture(ALPHA, 0.3,
                                                     accept=10 * ALPHA, seed=13)
        check = drift_lower_bound_check(process, 100_000)
        assert check.passed
        assert check.empirical_mean == pytest.approx(0.3 * 10 * ALPHA, rel=0.05)
        assert check.empirical_mean >= check.lower_bound

    def test_sample_size_validated(self):
        process = IncrementProcess.point_mass(ALPHA, ALPHA)
        with pytest.raises(ValueError):
            drift_lower_bound_check(process, 100)


class TestHittingTime:
    def test_deterministic_staircase_exact(self):
        process = IncrementProcess.point_mass(ALPHA, ALPHA, seed=0)
        report = hitting_time(process, b=1.0, trials=200)
        assert np.all(report.hitting_times == 10)
        assert report.empirical_mean == 10.0
        assert report.theorem_bound == pytest.approx(10.0)
        assert report.bound_satisfied and report.conclusive
        assert report.censored == 0

    def test_uniform_mixture_under_bound(self):
        process = IncrementProcess.bernoulli_mixture(
            ALPHA, 0.5, accept=(ALPHA, 2 * ALPHA), reject=(0.0, ALPHA / 2),
            seed=21)
        report = hitting_time(process, b=1.0, trials=400)
        assert report.theorem_bound == pytest.approx(20.0)
        assert report.empirical_mean <= 20.0
        # True mean is near b / E[Delta * I] = 1 / 0.075
        assert report.empirical_mean == pytest.approx(13.3, abs=1.0)
        assert report.bound_satisfied

    def test_unreachable_level_censors_every_trial(self):
        process = IncrementProcess.point_mass(ALPHA, ALPHA / 2, seed=3)
        report = hitting_time(process, b=1.0, trials=100, max_steps=500)
        assert report.all_censored
        assert not report.conclusive
        assert not report.bound_satisfied
        assert np.all(report.hitting_times == 500)

    def test_hitting_times_start_at_one(self):
        process = IncrementProcess.point_mass(2.0, 2.0, seed=4)
        report = hitting_time(process, b=1.0, trials=100)
        assert np.all(report.hitting_times == 1)

    def test_validation(self):
        process = IncrementProcess.point_mass(ALPHA, ALPHA)
        with pytest.raises(ValueError):
            hitting_time(process, b=0.0, trials=100)
        with pytest.raises(ValueError):
            hitting_time(process, b=1.0, trials=5)


class TestCorollaryCases:
    def test_default_law_meets_both_bounds(self):
        one, sup = corollary_cases(CircuitSpec(2, 2), k=50, p=0.5, trials=200,
                                   seed=31)
        assert one.case == "b=1/poly"
        assert one.b == pytest.approx(1.0 / 64.0)
        assert one.stated_bound == pytest.approx(100.0)
        assert one.hitting.empirical_mean <= one.stated_bound
        assert one.hitting.bound_satisfied

        assert sup.case == "b=B_S"
        assert sup.hitting.bound_satisfied
        assert sup.hitting.empirical_mean <= sup.stated_bound

    def test_tight_point_mass_hits_exactly_k(self):
        spec = CircuitSpec(2, 2)
        alpha = 1.0 / (2 ** 6 * 50)
        process = IncrementProcess.point_mass(alpha, alpha, seed=7)
        one, _ = corollary_cases(spec, k=50, p=1.0, trials=100, seed=7,
                                 process=process, pilot_steps=500)
        assert np.all(one.hitting.hitting_times == 50)
        assert one.hitting.empirical_mean == pytest.approx(50.0)
        assert one.stated_bound == pytest.approx(50.0)
        assert one.hitting.bound_satisfied

    def test_requires_positive_p(self):
        with pytest.raises(ValueError):
            corollary_cases(CircuitSpec(2, 2), k=50, p=0.0, trials=100)
