"""Probability boosting wrappers.

Checks:
  * ReductionConfig derives its chain length T and repeat count from
    (c, delta_fail, r) by the stated formulas
  * reduction_boost certifies a deterministic halving step in the expected
    number of passes and never returns something worse than the start
  * degenerate inputs: zero initial estimate, broken estimators, exhausted
    pass budgets
  * markov_boost retries ceil(log2(1/gamma)) times, returns the best-value
    iterate, and raises ConvergenceError with that iterate when every
    attempt misses its budget
"""

import numpy as np
import pytest

from levsolve.errors import ConfigurationError, ConvergenceError, NumericError
from levsolve.homotopy import (
    ReductionConfig,
    ReductionStats,
    markov_boost,
    reduction_boost,
)


def quadratic_value(x):
    return 0.5 * float(np.asarray(x) @ np.asarray(x))


class TestReductionConfig:
    def test_unit_distortion_single_step(self):
        cfg = ReductionConfig(c=0.5, delta_fail=0.5, r=1.0)
        assert cfg.T == 1
        assert cfg.repeats_per_step == 1

    def test_distortion_two(self):
        # T = ceil(log2(2 * r^2)) = ceil(log2(8)) = 3 chain steps;
        # repeats = ceil(log2(2 * 3)) = 3
        cfg = ReductionConfig(c=0.5, delta_fail=0.5, r=2.0)
        assert cfg.T == 3
        assert cfg.repeats_per_step == 3

    def test_explicit_overrides_kept(self):
        cfg = ReductionConfig(c=0.5, delta_fail=0.5, r=1.0, T=7,
                              repeats_per_step=2)
        assert cfg.T == 7
        assert cfg.repeats_per_step == 2

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            ReductionConfig(c=1.5, delta_fail=0.5, r=1.0)
        with pytest.raises(ConfigurationError):
            ReductionConfig(c=0.5, delta_fail=0.0, r=1.0)
        with pytest.raises(ConfigurationError):
            ReductionConfig(c=0.5, delta_fail=0.5, r=0.5)


class TestReductionBoost:
    def test_deterministic_halving_certifies(self):
        cfg = ReductionConfig(c=0.5, delta_fail=0.5, r=1.0)
        x0 = np.array([4.0, -3.0])
        stats = ReductionStats()
        # one exact halving of the gap per base call
        out = reduction_boost(
            quadratic_value, x0,
            lambda x, rng: x / np.sqrt(2.0),
            quadratic_value, cfg, 2.0 ** -10,
            rng=np.random.default_rng(0), stats=stats)
        assert quadratic_value(out) <= 2.0 ** -10 * quadratic_value(x0)
        assert stats.passes_run == stats.passes_accepted == 10
        assert stats.base_calls == 10

    def test_zero_initial_estimate_returns_start(self):
        cfg = ReductionConfig(c=0.5, delta_fail=0.5, r=1.0)
        x0 = np.zeros(3)
        stats = ReductionStats()
        out = reduction_boost(quadratic_value, x0,
                              lambda x, rng: x, quadratic_value, cfg, 0.5,
                              stats=stats)
        np.testing.assert_array_equal(out, x0)
        assert stats.passes_run == 0

    def test_never_worse_when_base_diverges(self):
        cfg = ReductionConfig(c=0.5, delta_fail=0.5, r=1.0)
        x0 = np.array([1.0, 1.0])
        with pytest.raises(ConvergenceError) as exc_info:
            reduction_boost(quadratic_value, x0,
                            lambda x, rng: 2.0 * x,  # always worsens
                            quadratic_value, cfg, 0.25,
                            rng=np.random.default_rng(1))
        best = exc_info.value.best
        assert quadratic_value(best) <= quadratic_value(x0) + 1e-12

    def test_negative_estimator_raises(self):
        cfg = ReductionConfig(c=0.5, delta_fail=0.5, r=1.0)
        with pytest.raises(NumericError):
            reduction_boost(quadratic_value, np.ones(2),
                            lambda x, rng: x, lambda x: -1.0, cfg, 0.5)

    def test_epsilon_validation(self):
        cfg = ReductionConfig(c=0.5, delta_fail=0.5, r=1.0)
        with pytest.raises(ConfigurationError):
            reduction_boost(quadratic_value, np.ones(2),
                            lambda x, rng: x, quadratic_value, cfg, 1.0)

    def test_best_of_repeats_picks_the_winner(self):
        # base alternates between a bad and a good step depending on the
        # generator; with repeats_per_step > 1 the good one must be chosen
        cfg = ReductionConfig(c=0.5, delta_fail=0.5, r=1.0, T=1,
                              repeats_per_step=4)
        calls = {"n": 0}

        def base(x, rng):
            calls["n"] += 1
            if calls["n"] % 2 == 0:
                return x * 0.1
            return x * 3.0

        out = reduction_boost(quadratic_value, np.array([2.0]), base,
                              quadratic_value, cfg, 0.5,
                              rng=np.random.default_rng(2))
        assert quadratic_value(out) <= 0.5 * quadratic_value(np.array([2.0]))


class TestMarkovBoost:
    def test_first_success_returns_immediately(self):
        calls = {"n": 0}

        def proc(eps_half, budget_factor, seed):
            calls["n"] += 1
            assert budget_factor == 2.0
            return np.array([1.0]), 5.0, True

        out = markov_boost(proc, 1e-3, 1.0 / 32.0, np.random.default_rng(0))
        assert calls["n"] == 1
        np.testing.assert_array_equal(out, [1.0])

    def test_retry_count_matches_gamma(self):
        calls = {"n": 0}

        def proc(eps_half, budget_factor, seed):
            calls["n"] += 1
            return np.array([float(calls["n"])]), float(calls["n"]), False

        with pytest.raises(ConvergenceError) as exc_info:
            markov_boost(proc, 1e-3, 1.0 / 8.0, np.random.default_rng(1))
        assert calls["n"] == 3  # ceil(log2(8))
        np.testing.assert_array_equal(exc_info.value.best, [1.0])

    def test_returns_best_value_iterate(self):
        values = [3.0, 1.0, 2.0]
        oks = [False, False, True]
        state = {"i": 0}

        def proc(eps_half, budget_factor, seed):
            i = state["i"]
            state["i"] += 1
            return np.array([values[i]]), values[i], oks[i]

        out = markov_boost(proc, 1e-3, 1.0 / 8.0, np.random.default_rng(2))
        np.testing.assert_array_equal(out, [1.0])

    def test_gamma_validation(self):
        with pytest.raises(ConfigurationError):
            markov_boost(lambda e, b, s: (None, 0.0, True), 1e-3, 0.0,
                         np.random.default_rng(0))
        with pytest.raises(ConfigurationError):
            markov_boost(lambda e, b, s: (None, 0.0, True), 1e-3, 1.0,
                         np.random.default_rng(0))
