import math

import numpy as np
import pytest

from sgdmlab.optimizers import StepSchedule
from sgdmlab.problems import NoiseModel, quadratic_new
from sgdmlab.stats import (
    _increment_variances,
    ensemble_summary,
    expectation_rate_bound,
    expectation_rate_check,
    log_spaced_checkpoints,
    save_ensemble_csv,
    smoothness_comparison,
    subsequence_rate_check,
)

from test_problems import random_spd


class TestCheckpoints:
    def test_expected_grid(self):
        np.testing.assert_array_equal(
            log_spaced_checkpoints(10_000),
            [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000],
        )

    def test_endpoint_always_included(self):
        assert log_spaced_checkpoints(137)[-1] == 137
        assert log_spaced_checkpoints(1)[-1] == 1


class TestEnsembleSummary:
    def test_matches_numpy_oracle(self):
        rng = np.random.default_rng(0)
        vals = rng.standard_normal((11, 40))
        s = ensemble_summary(vals)
        np.testing.assert_allclose(s["mean"], vals.mean(axis=1))
        np.testing.assert_allclose(s["stderr"],
                                   vals.std(axis=1, ddof=1) / math.sqrt(40))
        np.testing.assert_allclose(s["q50"], np.quantile(vals, 0.5, axis=1))

    def test_csv_header(self, tmp_path):
        vals = np.ones((3, 4))
        path = tmp_path / "e.csv"
        save_ensemble_csv(path, ensemble_summary(vals))
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "k,mean,stderr,q10,q50,q90"
        assert len(lines) == 4


class TestExpectationRate:
    def test_bound_hand_formula(self):
        obj = quadratic_new(np.eye(2) * 2.0)
        x0 = np.array([1.0, -1.0])
        val = expectation_rate_bound(obj, sigma2=8.0, x0=x0, k=10)
        expect = (3.0 * 2.0 * 2.0 + 4.0 * 8.0 / 2.0) * math.log(12.0) / (2.0 * math.sqrt(11.0))
        assert val == pytest.approx(expect, rel=1e-12)

    def test_mean_stays_under_envelope(self):
        obj = quadratic_new(random_spd(5, 0))
        rep = expectation_rate_check(obj, NoiseModel.gaussian(5, 1.0),
                                     K=1000, M=60, master_seed=0)
        assert rep["passed"], rep
        assert rep["first_failure_k"] is None
        assert rep["checkpoints"][-1] == 1000


class TestSubsequence:
    def test_running_min_is_monotone_and_decays(self):
        obj = quadratic_new(random_spd(4, 2))
        rep = subsequence_rate_check(obj, K=10_000, seed=0, checkpoints=(100,))
        rm = rep["running_min"]
        assert np.all(np.diff(rm) <= 0.0)
        assert rep["at"][10_000] < rep["at"][100]
        assert rep["m_final"] > 0.0


class TestSmoothness:
    def test_increment_variance_window(self):
        # K = 8: the window starts at index 6 (= 3K/4), so two increments
        f = np.zeros((9, 1))
        f[6:, 0] = [1.0, 3.0, 3.0]
        out = _increment_variances(f)
        assert out[0] == pytest.approx(np.var([2.0, 0.0], ddof=1))

    def test_momentum_is_smoother_than_sgd(self):
        obj = quadratic_new(random_spd(5, 1))
        noise = NoiseModel.gaussian(5, 25.0)
        rep = smoothness_comparison(obj, noise, K=800, M=8, master_seed=0)
        assert not rep["skipped"]
        assert rep["passed"]
        assert rep["median_var_sgdm"] < rep["median_var_sgd"]
        assert rep["noise_multiplier_ratio"] < 1.0

    def test_noiseless_comparison_is_skipped(self):
        obj = quadratic_new(np.eye(2))
        rep = smoothness_comparison(obj, NoiseModel.noiseless(2), K=100, M=2,
                                    master_seed=0)
        assert rep["skipped"]
        assert "reason" in rep
