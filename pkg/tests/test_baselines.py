import numpy as np
import pytest

from cran_infer.baselines import (BASELINE_KINDS, FIXED_LEVEL_MARGIN, BaselineSpec, fixed_precoding_level,
                                  run_baseline, uniform_quantization_lambda)
from cran_infer.metrics import fronthaul_matrix, fronthaul_rate, received_discriminant_gain
from cran_infer.model import ChannelSet, FeatureStatistics
from cran_infer.sca import run_algorithm1, transmit_scalars
from cran_infer.simulate import energy_audit, transmit_power_audit

from _instances import desk_instance, unit_config


def gain(sol, stats, cfg):
    return received_discriminant_gain(sol, stats, cfg)


class TestBaselineKinds:
    def test_kinds(self):
        assert BASELINE_KINDS == ("uniform-quantization", "uniform-beamforming", "fixed-precoding")
        with pytest.raises(ValueError):
            BaselineSpec("mmse")
        with pytest.raises(ValueError):
            BaselineSpec("fixed-precoding", fixed_level=0.0)

    def test_fixed_level_meets_budgets(self):
        cfg, _, _ = desk_instance(0)
        b0 = fixed_precoding_level(cfg)
        assert b0 ** 2 <= cfg.max_precoding_power.min()
        energy = cfg.D * b0 ** 2 * cfg.signal_second_moment.sum() * cfg.slot_duration
        assert energy <= FIXED_LEVEL_MARGIN * cfg.energy_budget * (1 + 1e-12)

    def test_fixed_level_power_bound(self):
        cfg = unit_config(max_precoding_power=0.25, energy_budget=100.0)
        assert fixed_precoding_level(cfg) == pytest.approx(0.5)

    def test_level_over_budget_rejected(self):
        cfg, ch, stats = desk_instance(1)
        with pytest.raises(ValueError):
            run_baseline(BaselineSpec("fixed-precoding", fixed_level=10.0), cfg, ch, stats)


class TestUniformQuantizationLambda:
    def test_scalar_hand_value(self):
        A = np.array([[1.0 + 0j]])  # P h h^H with sigma_z^2 = 0
        assert uniform_quantization_lambda(A, 1.0) == pytest.approx(1.0, abs=1e-9)

    def test_more_capacity_means_less_noise(self):
        cfg, ch, _ = desk_instance(2)
        A = fronthaul_matrix(cfg, ch)
        assert uniform_quantization_lambda(A, 8.0) < uniform_quantization_lambda(A, 4.0)

    def test_rate_is_met_with_equality(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = rng.integers(1, 6)
            G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            A = G @ G.conj().T * rng.uniform(0.01, 10) + rng.uniform(0, 1) * np.eye(n)
            C = rng.uniform(0.1, 20)
            lam = uniform_quantization_lambda(A, C)
            assert abs(fronthaul_rate(np.full(n, lam), A) - C) <= 1e-8


@pytest.fixture(scope="module")
def paired_runs():
    """Proposed and all baselines on the same three instances."""
    out = []
    for seed in (20, 21, 22):
        cfg, ch, stats = desk_instance(seed)
        runs = {"proposed": run_algorithm1(cfg, ch, stats)}
        for kind in BASELINE_KINDS:
            runs[kind] = run_baseline(kind, cfg, ch, stats)
        out.append((cfg, ch, stats, runs))
    return out


class TestBaselineRuns:
    def test_proposed_dominates(self, paired_runs):
        for cfg, _, stats, runs in paired_runs:
            best = gain(runs["proposed"][0], stats, cfg)
            for kind in BASELINE_KINDS:
                assert gain(runs[kind][0], stats, cfg) <= best + 1e-6

    def test_traces_monotone(self, paired_runs):
        for _, _, _, runs in paired_runs:
            for kind in BASELINE_KINDS:
                assert np.all(np.diff(runs[kind][1].objectives) >= -1e-9)

    def test_feasibility(self, paired_runs):
        for cfg, ch, _, runs in paired_runs:
            for kind in BASELINE_KINDS:
                sol = runs[kind][0]
                assert transmit_power_audit(sol, ch, cfg).ok
                assert energy_audit(sol, ch, cfg).ok
                assert fronthaul_rate(sol.quantization_diag, fronthaul_matrix(cfg, ch)) <= \
                    cfg.fronthaul_capacity + 1e-7

    def test_frozen_parts(self, paired_runs):
        for cfg, ch, stats, runs in paired_runs:
            q = runs["uniform-quantization"][0].quantization_diag
            np.testing.assert_allclose(q, q[0], rtol=1e-14)
            lam = uniform_quantization_lambda(fronthaul_matrix(cfg, ch), cfg.fronthaul_capacity)
            np.testing.assert_allclose(q[0], lam, rtol=1e-8)
            np.testing.assert_array_equal(runs["uniform-beamforming"][0].beamformers, 1.0)
            b = np.abs(transmit_scalars(runs["fixed-precoding"][0], ch))
            np.testing.assert_allclose(b, fixed_precoding_level(cfg), rtol=1e-9)

    def test_uniform_quantization_usually_beats_uniform_beamforming(self):
        wins = []
        for seed in range(30, 40):
            cfg, ch, stats = desk_instance(seed)
            g1 = gain(run_baseline("uniform-quantization", cfg, ch, stats)[0], stats, cfg)
            g2 = gain(run_baseline("uniform-beamforming", cfg, ch, stats)[0], stats, cfg)
            wins.append(g1 >= g2)
        assert np.mean(wins) >= 0.8

    def test_uniform_beamforming_scalar_closed_form(self):
        # K = M = N = 1 with h = 1: m = 1 is already optimal, the gain rises with
        # c and falls with q, so c sits on the tighter budget and q on the rate limit
        cfg = unit_config(max_precoding_power=0.5, energy_budget=0.3, awgn_power=0.2,
                          sensing_noise_power=0.05, fronthaul_capacity=2.0)
        stats = FeatureStatistics(np.array([[0.0], [1.5]]), np.array([0.7]))
        ch = ChannelSet(np.ones((1, 1, 1), dtype=complex))
        sol, _ = run_baseline("uniform-beamforming", cfg, ch, stats, eps_stop=1e-8, max_iters=200)
        c2 = min(0.5, 0.3)
        q = (0.5 + 0.2) / (2.0 ** 2.0 - 1.0)
        best = 2.25 * c2 / (c2 * 0.75 + 0.5 * (0.2 + q))
        np.testing.assert_allclose(gain(sol, stats, cfg), best, rtol=1e-3)

    def test_warm_start_reuse(self):
        cfg, ch, stats = desk_instance(23)
        for kind in BASELINE_KINDS:
            sol, state = run_baseline(kind, cfg, ch, stats)
            _, again = run_baseline(kind, cfg, ch, stats, start=sol)
            assert again.objectives[0] == pytest.approx(state.objectives[-1], rel=1e-9)
