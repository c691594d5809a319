import csv

import numpy as np
import pytest
from scipy import stats as sps

from cran_infer.metrics import aggregate_statistics
from cran_infer.model import ChannelSet, DesignSolution, FeatureStatistics
from cran_infer.sca import run_algorithm1
from cran_infer.simulate import (DUMP_HEADER, ForwardSample, energy_audit, forward_pass, sample_local_features,
                                 simulate_class, transmit_power_audit, write_sample_dump)

from _instances import desk_instance, unit_config

TINY_Q = 1e-300


def design(c, m, q, D=None):
    c = np.atleast_2d(np.asarray(c, dtype=float))
    K, D = c.shape
    m = np.asarray(m, dtype=complex).reshape(D, -1)
    return DesignSolution(c, m, np.asarray(q, dtype=float), np.zeros(D), np.zeros((K, D)))


@pytest.fixture(scope="module")
def optimized():
    cfg, ch, stats = desk_instance(40)
    sol, _ = run_algorithm1(cfg, ch, stats)
    return cfg, ch, stats, sol


class TestLocalFeatures:
    def test_noiseless_copies(self):
        stats = FeatureStatistics(np.array([[0.0, 1.0], [2.0, -1.0]]), np.array([1.0, 0.5]))
        x, local = sample_local_features(stats, np.zeros(3), 1, np.random.default_rng(0))
        assert x.shape == (2,) and local.shape == (3, 2)
        np.testing.assert_array_equal(local, np.broadcast_to(x, (3, 2)))

    def test_moments(self):
        stats = FeatureStatistics(np.array([[0.0, 1.0], [3.0, -1.0]]), np.array([1.0, 0.25]))
        eps2 = np.array([0.0, 0.5, 2.0])
        n = 100_000
        x, local = sample_local_features(stats, eps2, 1, np.random.default_rng(1), n)
        var = local.var(axis=0)
        np.testing.assert_allclose(var, stats.feature_variances[None, :] + eps2[:, None], rtol=0.02)
        se = np.sqrt((stats.feature_variances[None, :] + eps2[:, None]) / n)
        assert np.all(np.abs(local.mean(axis=0) - stats.class_means[1]) <= 3 * se)

    def test_label_range(self):
        stats = FeatureStatistics(np.array([[0.0], [1.0]]), np.array([1.0]))
        with pytest.raises(ValueError):
            sample_local_features(stats, [0.0], 2, np.random.default_rng(0))
        with pytest.raises(ValueError):
            sample_local_features(stats, [-1.0], 0, np.random.default_rng(0))


class TestForwardPass:
    def test_identity_chain(self):
        cfg = unit_config(awgn_power=0.0)
        ch = ChannelSet(np.full((1, 1, 1), 0.3 - 0.4j))
        sol = design([[1.0]], [[1.0]], [TINY_Q])
        local = np.array([[0.731]])
        np.testing.assert_allclose(forward_pass(sol, local, ch, cfg, np.random.default_rng(0)), [0.731],
                                   rtol=1e-12)

    def test_two_devices_add(self):
        cfg = unit_config(K=2, D=3, awgn_power=0.0)
        h = np.array([[[1.0 + 1j]], [[-0.5j]]])
        ch = ChannelSet(h)
        sol = design(np.ones((2, 3)), np.full((3, 1), np.exp(0.2j)), [TINY_Q])
        x = np.array([0.5, -1.0, 2.0])
        out = forward_pass(sol, np.stack([x, x]), ch, cfg, np.random.default_rng(0))
        np.testing.assert_allclose(out, 2 * x, rtol=1e-12)

    def test_vanishing_channel(self):
        cfg = unit_config()
        ch = ChannelSet(np.zeros((1, 1, 1), dtype=complex))
        sol = design([[1.0]], [[1.0]], [1.0])
        with pytest.raises(ValueError):
            forward_pass(sol, np.ones((1, 1)), ch, cfg, np.random.default_rng(0))

    def test_batch_matches_moments(self, optimized):
        # pooled over classes the variance has 3 x 1e5 draws per dimension
        cfg, ch, stats, sol = optimized
        agg = aggregate_statistics(sol, stats, cfg)
        rng = np.random.default_rng(2)
        resid = []
        for label in range(stats.L):
            s = simulate_class(sol, stats, ch, cfg, label, 100_000, rng).received
            scale = np.maximum(np.abs(agg.post_means[label]), np.sqrt(agg.post_variances))
            assert np.all(np.abs(s.mean(axis=0) - agg.post_means[label]) <= 0.01 * scale)
            resid.append(s - agg.post_means[label])
        var = np.concatenate(resid).var(axis=0)
        np.testing.assert_allclose(var, agg.post_variances, rtol=0.01)

    def test_ks_per_class_and_dimension(self, optimized):
        cfg, ch, stats, sol = optimized
        agg = aggregate_statistics(sol, stats, cfg)
        rng = np.random.default_rng(3)
        for label in range(stats.L):
            s = simulate_class(sol, stats, ch, cfg, label, 10_000, rng).received
            for d in range(stats.D):
                p = sps.kstest(s[:, d], "norm", args=(agg.post_means[label, d],
                                                      np.sqrt(agg.post_variances[d]))).pvalue
                assert p >= 0.01

    def test_single_and_batch_shapes(self, optimized):
        cfg, ch, stats, sol = optimized
        rng = np.random.default_rng(4)
        _, local = sample_local_features(stats, cfg.sensing_noise_power, 0, rng)
        assert forward_pass(sol, local, ch, cfg, rng).shape == (stats.D,)
        sample = simulate_class(sol, stats, ch, cfg, 2, 7, rng)
        assert sample.received.shape == sample.ground_truth.shape == (7, stats.D)
        np.testing.assert_array_equal(sample.true_class, 2)

    def test_reproducible(self, optimized):
        cfg, ch, stats, sol = optimized
        a = simulate_class(sol, stats, ch, cfg, 1, 50, np.random.default_rng(5))
        b = simulate_class(sol, stats, ch, cfg, 1, 50, np.random.default_rng(5))
        np.testing.assert_array_equal(a.received, b.received)


class TestAudits:
    def test_hand_power(self):
        cfg = unit_config(max_precoding_power=0.25)
        ch = ChannelSet(np.full((1, 1, 1), 2.0 + 0j))
        audit = transmit_power_audit(design([[1.0]], [[1.0]], [1.0]), ch, cfg)
        np.testing.assert_allclose(audit.power, [[0.25]])
        assert audit.ok
        assert not transmit_power_audit(design([[1.1]], [[1.0]], [1.0]), ch, cfg).ok

    def test_zero_strength(self):
        cfg = unit_config()
        ch = ChannelSet(np.zeros((1, 1, 1), dtype=complex))
        audit = transmit_power_audit(design([[0.0]], [[1.0]], [1.0]), ch, cfg)
        np.testing.assert_array_equal(audit.power, 0.0)

    def test_energy_hand(self):
        cfg = unit_config(K=2, D=2, energy_budget=1.0, slot_duration=0.5, signal_second_moment=[1.0, 2.0])
        ch = ChannelSet(np.ones((2, 1, 1), dtype=complex))
        audit = energy_audit(design(np.full((2, 2), 0.5), np.ones((2, 1)), [1.0]), ch, cfg)
        # 0.25 * (1 + 1 + 2 + 2) * 0.5
        assert audit.energy == pytest.approx(0.75) and audit.ok

    def test_optimizer_output_passes(self, optimized):
        cfg, ch, _, sol = optimized
        assert transmit_power_audit(sol, ch, cfg).ok
        assert energy_audit(sol, ch, cfg).ok


class TestDump:
    def test_round_trip(self, tmp_path):
        sample = ForwardSample([0, 1], np.zeros((2, 2)), np.array([[0.1, 0.2], [0.3, 1 / 3]]))
        path = tmp_path / "dump.csv"
        write_sample_dump(path, 4, sample)
        write_sample_dump(path, 5, sample, append=True)
        rows = list(csv.reader(path.open()))
        assert tuple(rows[0]) == DUMP_HEADER
        assert len(rows) == 1 + 8
        assert rows[4] == ["4", "1", "1", repr(1 / 3)]
        assert rows[5][0] == "5"

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            ForwardSample([0], np.zeros((1, 2)), np.zeros((1, 3)))
        with pytest.raises(ValueError):
            ForwardSample([0, 1], np.zeros((1, 2)), np.zeros((1, 2)))
