import math

import numpy as np
import pytest

from sgdmlab.concentration import (
    a_sequence,
    anytime_bound,
    anytime_constants,
    anytime_coverage,
    gamma_constants,
    initial_energy,
    mgf_lemma_check,
    supermartingale_trace,
    tail_lemma_check,
)
from sgdmlab.optimizers import StepSchedule, schedule_eval
from sgdmlab.problems import NoiseModel, quadratic_new

from test_problems import random_spd


def anytime_schedule(L=1.0, scale=1.0):
    return StepSchedule(kind="anytime_log2", L=L, scale=scale)


class TestASequence:
    def test_formula(self):
        s = anytime_schedule(L=2.0)
        for k in (1, 5, 40):
            assert a_sequence(s, k) == pytest.approx(16.0 * schedule_eval(s, k) / k)
            # closed form for this schedule: scale / (L^2 k log^2(k+2))
            assert a_sequence(s, k) == pytest.approx(1.0 / (4.0 * k * math.log(k + 2) ** 2))


class TestGammaConstants:
    def test_brackets_contain_brute_force_partial_sums(self):
        """A direct 10^7-term summation must land inside the bracket computed
        from a 10^5-term truncation (plus its integral tail)."""
        s = anytime_schedule()
        br = gamma_constants(s, sigma2=1.0, k_trunc=100_000)
        ks = np.arange(1, 10_000_001, dtype=float)
        a = a_sequence(s, ks)
        partial = float(np.sum(a))
        # the true value is partial + tail(1e7), with the tail itself below
        # (1 + 2e-7) / log(1e7 + 2); the bracket must respect both sides
        tail_cap = (1.0 + 2e-7) / math.log(1e7 + 2.0)
        assert br.gamma1_lower <= partial + tail_cap
        assert partial <= br.gamma1_upper
        log_partial = float(np.sum(np.log1p(a)))
        assert math.exp(log_partial) <= br.gamma2_upper

    def test_brackets_are_nested_as_truncation_grows(self):
        s = anytime_schedule()
        coarse = gamma_constants(s, 2.0, k_trunc=10_000)
        fine = gamma_constants(s, 2.0, k_trunc=1_000_000)
        assert coarse.gamma1_lower <= fine.gamma1_lower
        assert fine.gamma1_upper <= coarse.gamma1_upper
        assert coarse.gamma2_lower <= fine.gamma2_lower + 1e-12
        assert fine.gamma2_upper <= coarse.gamma2_upper + 1e-12

    def test_width_shrinks_with_truncation(self):
        s = anytime_schedule()
        w1 = gamma_constants(s, 1.0, k_trunc=1_000).gamma1_width
        w2 = gamma_constants(s, 1.0, k_trunc=100_000).gamma1_width
        assert w2 < w1 / 10.0

    def test_unit_series_analytic_ceiling(self):
        # sum 1/(k log^2(k+2)) is provably below 4
        br = gamma_constants(anytime_schedule(), 1.0, k_trunc=1_000_000)
        assert br.gamma1_upper <= 4.0

    def test_schedule_scaling_relation(self):
        """The wide-stepsize schedule has weights exactly 16x the conservative
        one at equal scale, so the series scales by 16."""
        br_a = gamma_constants(anytime_schedule(), 0.0, k_trunc=50_000)
        br_e = gamma_constants(StepSchedule(kind="expectation_log2", L=1.0), 0.0,
                               k_trunc=50_000)
        assert br_e.gamma1_upper == pytest.approx(16.0 * br_a.gamma1_upper, rel=1e-12)

    def test_epsilon_schedule_tail_exponent(self):
        s = StepSchedule(kind="epsilon_log", L=1.0, epsilon=0.5)
        br = gamma_constants(s, 1.0, k_trunc=100_000)
        # tail integral 1/(eps log^eps(K+2)) is much fatter than the log^2 case
        br2 = gamma_constants(anytime_schedule(), 1.0, k_trunc=100_000)
        assert br.gamma1_width > br2.gamma1_width

    def test_divergent_schedules_rejected(self):
        with pytest.raises(ValueError, match="divergent"):
            gamma_constants(StepSchedule(kind="sqrt_k", scale=1.0), 1.0)
        with pytest.raises(ValueError, match="divergent"):
            gamma_constants(StepSchedule(kind="constant", scale=0.1), 1.0)
        with pytest.raises(ValueError, match="sigma2"):
            gamma_constants(anytime_schedule(), -1.0)


class TestAnytimeBound:
    def test_constants_formula(self):
        s = anytime_schedule()
        const = anytime_constants(s, E0=2.0, L=3.0, sigma2=0.5, k_trunc=10_000)
        g1, g2 = const.brackets.gamma1_upper, const.brackets.gamma2_upper
        cross = 3.0 * 0.5 * (1.0 + 0.5 * g1 * g2) * g1
        assert const.C1 == pytest.approx(3.0 * g2 * 2.0 + cross, rel=1e-12)
        assert const.C2 == pytest.approx(3.0 * g2 + cross, rel=1e-12)
        assert const.log_power == 1.0

    def test_envelope_shape_and_beta_monotonicity(self):
        const = anytime_constants(anytime_schedule(), 1.0, 1.0, 1.0, k_trunc=10_000)
        k = 100
        expect = (const.C1 + const.C2 * math.log(20.0)) * math.log(102.0) / math.sqrt(101.0)
        assert anytime_bound(const, k, 0.05) == pytest.approx(expect, rel=1e-12)
        assert anytime_bound(const, k, 0.01) > anytime_bound(const, k, 0.2)

    def test_epsilon_schedule_uses_reduced_log_power(self):
        s = StepSchedule(kind="epsilon_log", L=1.0, epsilon=0.5)
        const = anytime_constants(s, 1.0, 1.0, 1.0, k_trunc=10_000)
        assert const.log_power == pytest.approx(0.75)

    def test_invalid_beta_rejected(self):
        const = anytime_constants(anytime_schedule(), 1.0, 1.0, 1.0, k_trunc=1_000)
        for beta in (0.0, 1.0, -0.1, 2.0):
            with pytest.raises(ValueError, match="beta"):
                anytime_bound(const, 10, beta)

    def test_initial_energy_hand_value(self):
        obj = quadratic_new(np.eye(2))
        s = anytime_schedule(L=obj.lipschitz)
        x0 = np.array([1.0, 1.0])
        eta0 = schedule_eval(s, 0)
        expect = 2.0 + 4.0 * math.sqrt(eta0) * 1.0  # f_gap(x0) = 1
        assert initial_energy(obj, s, x0) == pytest.approx(expect, rel=1e-12)


class TestCoverage:
    def test_conservative_bound_never_violated_in_small_run(self):
        obj = quadratic_new(random_spd(5, 0))
        noise = NoiseModel.gaussian(5, 0.01)
        sched = anytime_schedule(L=obj.lipschitz)
        rep = anytime_coverage(obj, noise, sched, K=500, M=50, beta=0.05,
                               master_seed=0, k_trunc=100_000)
        assert rep["fraction_violating"] == 0.0
        assert rep["passed"]
        assert rep["min_margin"] > 0.0
        assert rep["nominal_level"] == pytest.approx(0.1)


class TestSupermartingale:
    def test_mean_trace_non_increasing_and_pathwise_drift(self):
        obj = quadratic_new(np.array([[1.0]]))
        noise = NoiseModel.gaussian(1, 0.01)
        rep = supermartingale_trace(obj, noise, anytime_schedule(), K=60, M=2000,
                                    master_seed=0, k_trunc=100_000)
        assert rep["pathwise_ok"], rep["pathwise_max_residual"]
        assert not rep["overflow_clamped"]
        m, se = rep["mean"], rep["stderr"]
        slack = 3.0 * np.hypot(se[1:], se[:-1])
        assert np.all(np.diff(m) <= slack)
        # the start value is exp(gamma2 t E(0)) with t = 1/gamma2_upper
        e0 = initial_energy(obj, anytime_schedule(), np.ones(1))
        assert m[0] == pytest.approx(math.exp(e0), rel=1e-8)

    def test_rejects_oversized_transform_parameter(self):
        obj = quadratic_new(np.array([[1.0]]))
        noise = NoiseModel.gaussian(1, 0.01)
        with pytest.raises(ValueError, match="1/gamma2"):
            supermartingale_trace(obj, noise, anytime_schedule(), K=10, M=5,
                                  master_seed=0, t=10.0, k_trunc=10_000)

    def test_rejects_stepsizes_violating_drift_hypothesis(self):
        obj = quadratic_new(np.array([[1.0]]))
        noise = NoiseModel.gaussian(1, 0.01)
        sched = anytime_schedule(scale=40.0)  # eta_k > k/(16 L^2) at small k
        with pytest.raises(ValueError, match="16"):
            supermartingale_trace(obj, noise, sched, K=10, M=5, master_seed=0,
                                  k_trunc=10_000)


class TestScalarLemmas:
    def test_mgf_rows_pass_at_moderate_sample_size(self):
        rows = mgf_lemma_check([0.25, 1.0], n_samples=100_000, seed=0)
        for row in rows:
            assert row["passed"]
            assert row["mean"] >= 1.0 - 3.0 * row["stderr"]  # Jensen: mean >= exp(0)=1

    def test_mgf_ceiling_formula(self):
        rows = mgf_lemma_check([0.5], n_samples=1_000, seed=1)
        assert rows[0]["ceiling"] == pytest.approx(math.exp(0.75 * 0.25))

    def test_tail_rows_pass_and_fractions_decrease(self):
        rows = tail_lemma_check([0.5, 1.0, 2.0], n_terms=20, n_samples=40_000, seed=0)
        fracs = [r["fraction"] for r in rows]
        assert all(r["passed"] for r in rows)
        assert fracs == sorted(fracs, reverse=True)

    def test_tail_certificates_hold_per_term(self):
        # the per-term scale sigma_l^2 = 2 s_l^2/(1-e^-2) certifies the scalar
        # exponential-moment condition: (1 - 2 s^2/sigma^2)^(-1/2) <= e
        s2 = 1.7
        sigma2 = 2.0 * s2 / (1.0 - math.exp(-2.0))
        assert (1.0 - 2.0 * s2 / sigma2) ** -0.5 <= math.e
