"""Monte-Carlo forward simulation of sensing, over-the-air aggregation and fronthaul.

Class labels are 0-based indices into ``FeatureStatistics.class_means``.
Every function accepts a batch of ``n`` draws; arrays carry the batch on the
leading axis.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import ChannelSet, DesignSolution, FeatureStatistics, SystemConfig, _frozen
from .sca import transmit_scalars

AUDIT_TOL = 1e-7


@dataclass(frozen=True)
class ForwardSample:
    """One draw (or a batch of draws) of the end-to-end chain."""

    true_class: np.ndarray  # (n,)
    ground_truth: np.ndarray  # (n, D)
    received: np.ndarray  # (n, D)

    def __post_init__(self):
        object.__setattr__(self, "true_class", _frozen(np.atleast_1d(self.true_class), dtype=int))
        object.__setattr__(self, "ground_truth", _frozen(np.atleast_2d(self.ground_truth)))
        object.__setattr__(self, "received", _frozen(np.atleast_2d(self.received)))
        if self.ground_truth.shape != self.received.shape:
            raise ValueError("ground truth and received features must have the same shape")
        if self.true_class.shape != (self.received.shape[0],):
            raise ValueError("one class label per draw is required")


def sample_local_features(stats: FeatureStatistics, sensing_noise, label, rng: np.random.Generator,
                          n: int | None = None):
    """Draw the ground-truth feature and every device's noisy local copy.

    Returns ``(x, local)`` with x of shape (D,) and local (K, D) when ``n`` is
    None, else (n, D) and (n, K, D).  ``label`` may be an int or an (n,) array.
    """
    eps2 = np.atleast_1d(np.asarray(sensing_noise, dtype=float))
    if np.any(eps2 < 0):
        raise ValueError("sensing noise powers must be >= 0")
    single = n is None
    count = 1 if single else int(n)
    labels = np.broadcast_to(np.asarray(label, dtype=int), (count,))
    if np.any((labels < 0) | (labels >= stats.L)):
        raise ValueError(f"class label outside 0..{stats.L - 1}")
    D, K = stats.D, len(eps2)
    x = stats.class_means[labels] + np.sqrt(stats.feature_variances) * rng.standard_normal((count, D))
    local = x[:, None, :] + np.sqrt(eps2)[None, :, None] * rng.standard_normal((count, K, D))
    if single:
        return x[0], local[0]
    return x, local


def _complex_normal(rng, shape, var):
    return np.sqrt(np.asarray(var) / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def forward_pass(sol: DesignSolution, local, channels: ChannelSet, cfg: SystemConfig,
                 rng: np.random.Generator) -> np.ndarray:
    """Received aggregate features for local features of shape (K, D) or (n, K, D).

    Each device sends b_k(d) s_k(d); every RRH antenna adds AWGN, then the
    fronthaul adds Gaussian quantization noise with variances ``q``; the CP
    applies m_d^H and keeps the real part.
    """
    local = np.asarray(local, dtype=float)
    single = local.ndim == 2
    s = local[None] if single else local
    n, K, D = s.shape
    b = transmit_scalars(sol, channels)  # K x D
    H = channels.concatenated  # K x MN
    tx = b[None, :, :] * s  # n x K x D
    y = np.einsum("ki,nkd->ndi", H, tx)
    y = y + _complex_normal(rng, y.shape, cfg.awgn_power)
    y = y + _complex_normal(rng, y.shape, sol.quantization_diag[None, None, :])
    s_hat = np.einsum("di,ndi->nd", sol.beamformers.conj(), y).real
    return s_hat[0] if single else s_hat


def simulate_class(sol: DesignSolution, stats: FeatureStatistics, channels: ChannelSet,
                   cfg: SystemConfig, label, n: int, rng: np.random.Generator) -> ForwardSample:
    labels = np.broadcast_to(np.asarray(label, dtype=int), (n,))
    x, local = sample_local_features(stats, cfg.sensing_noise_power, labels, rng, n)
    return ForwardSample(labels, x, forward_pass(sol, local, channels, cfg, rng))


@dataclass(frozen=True)
class PowerAudit:
    power: np.ndarray  # K x D, |b_k(d)|^2
    flags: np.ndarray  # K x D, True where the power limit is exceeded

    @property
    def ok(self) -> bool:
        return not bool(np.any(self.flags))


def transmit_power_audit(sol: DesignSolution, channels: ChannelSet, cfg: SystemConfig) -> PowerAudit:
    power = np.abs(transmit_scalars(sol, channels)) ** 2
    limit = np.asarray(cfg.max_precoding_power, dtype=float)[:, None]
    return PowerAudit(_frozen(power), _frozen(power > limit * (1.0 + AUDIT_TOL), dtype=bool))


@dataclass(frozen=True)
class EnergyAudit:
    energy: float
    budget: float

    @property
    def ok(self) -> bool:
        return self.energy <= self.budget * (1.0 + AUDIT_TOL)


def energy_audit(sol: DesignSolution, channels: ChannelSet, cfg: SystemConfig) -> EnergyAudit:
    """Total transmit energy sum_{k,d} |b_k(d)|^2 E[s_k^2] T against the budget."""
    power = np.abs(transmit_scalars(sol, channels)) ** 2
    w = np.asarray(cfg.signal_second_moment, dtype=float)[:, None]
    return EnergyAudit(float(np.sum(power * w) * cfg.slot_duration), float(cfg.energy_budget))


DUMP_HEADER = ("trial", "class", "d", "s_hat")


def write_sample_dump(path, trial: int, sample: ForwardSample, append: bool = False) -> None:
    """Long-format CSV, one row per (draw, dimension)."""
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if not append:
            w.writerow(DUMP_HEADER)
        for label, row in zip(sample.true_class, sample.received):
            for d, v in enumerate(row):
                w.writerow([trial, int(label), d, repr(float(v))])
