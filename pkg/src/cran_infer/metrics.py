"""Discriminant gain, post-aggregation statistics and fronthaul rate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import (AggregateStatistics, ChannelSet, DesignSolution, FeatureStatistics,
                    SystemConfig, _frozen)

LN2 = np.log(2.0)


class InactiveDimensionError(ValueError):
    """All class means coincide on a dimension, so it carries no discriminant gain."""


@dataclass(frozen=True)
class ConstraintConstants:
    """Fixed data of the optimization constraints.

    kappa: per-dimension mean pairwise squared class-mean distance (length D).
    A: P * sum_k h_k h_k^H + sigma_z^2 I, the fixed part of the fronthaul-rate numerator.
    """

    kappa: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "kappa", _frozen(self.kappa))
        object.__setattr__(self, "A", _frozen(self.A, dtype=complex))

    @property
    def active(self) -> np.ndarray:
        return self.kappa > 0


def class_separation(means: np.ndarray) -> np.ndarray:
    """Average over class pairs of the squared mean difference, per dimension."""
    means = np.asarray(means, dtype=float)
    L = means.shape[0]
    i, j = np.triu_indices(L, k=1)
    return 2.0 / (L * (L - 1)) * np.sum((means[i] - means[j]) ** 2, axis=0)


def fronthaul_matrix(cfg: SystemConfig, channels: ChannelSet) -> np.ndarray:
    H = channels.concatenated
    A = cfg.fronthaul_power * (H.T @ H.conj()) + cfg.awgn_power * np.eye(H.shape[1])
    return 0.5 * (A + A.conj().T)


def constraint_constants(cfg: SystemConfig, stats: FeatureStatistics,
                         channels: ChannelSet) -> ConstraintConstants:
    return ConstraintConstants(class_separation(stats.class_means), fronthaul_matrix(cfg, channels))


def _gain_terms(means, variances):
    num = class_separation(means)
    variances = np.asarray(variances, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(num > 0, num / variances, 0.0)
    return g


def per_dimension_gain(stats: FeatureStatistics) -> np.ndarray:
    return _gain_terms(stats.class_means, stats.feature_variances)


def pairwise_discriminant_gain(stats: FeatureStatistics, l: int, lp: int) -> float:
    """Symmetric KL divergence between classes ``l`` and ``lp``."""
    if l == lp:
        raise ValueError("need two distinct classes")
    diff = stats.class_means[l] - stats.class_means[lp]
    return float(np.sum(diff ** 2 / stats.feature_variances))


def overall_discriminant_gain(stats: FeatureStatistics) -> float:
    return float(np.sum(per_dimension_gain(stats)))


def equivalent_noise(sol: DesignSolution, cfg: SystemConfig) -> np.ndarray:
    """Variance of Re(m_d^H (z + q)) for every slot d."""
    power = cfg.awgn_power + sol.quantization_diag
    return 0.5 * np.sum(np.abs(sol.beamformers) ** 2 * power[None, :], axis=1)


def aggregate_statistics(sol: DesignSolution, stats: FeatureStatistics,
                         cfg: SystemConfig) -> AggregateStatistics:
    c = sol.receive_strength
    total = c.sum(axis=0)
    noise = equivalent_noise(sol, cfg)
    var = (total ** 2 * stats.feature_variances
           + np.sum(c ** 2 * cfg.sensing_noise_power[:, None], axis=0)
           + noise)
    return AggregateStatistics(total[None, :] * stats.class_means, var, noise)


def received_discriminant_gain(sol: DesignSolution, stats: FeatureStatistics,
                               cfg: SystemConfig) -> float:
    agg = aggregate_statistics(sol, stats, cfg)
    return float(np.sum(_gain_terms(agg.post_means, agg.post_variances)))


def received_gain_per_dimension(sol: DesignSolution, stats: FeatureStatistics,
                                cfg: SystemConfig) -> np.ndarray:
    agg = aggregate_statistics(sol, stats, cfg)
    return _gain_terms(agg.post_means, agg.post_variances)


def _check_q(q):
    q = np.asarray(q, dtype=float)
    if np.any(~(q > 0)):
        raise ValueError("quantization noise variances must be strictly positive")
    return q


def fronthaul_rate(q, constants: ConstraintConstants | np.ndarray) -> float:
    """log2 det(A + diag(q)) - sum_i log2 q_i, in bits per channel use."""
    q = _check_q(q)
    A = constants.A if isinstance(constants, ConstraintConstants) else np.asarray(constants)
    chol = scipy.linalg.cholesky(A + np.diag(q), lower=True)
    logdet = 2.0 * np.sum(np.log(np.abs(np.diag(chol))))
    return float((logdet - np.sum(np.log(q))) / LN2)


def lambda_value(c_col, m_d, q, stats: FeatureStatistics, cfg: SystemConfig, d: int) -> float:
    """Aggregate variance of slot ``d`` divided by its class separation."""
    kappa = class_separation(stats.class_means)[d]
    if kappa <= 0:
        raise InactiveDimensionError(f"dimension {d} has coincident class means")
    c_col = np.asarray(c_col, dtype=float)
    m_d = np.asarray(m_d, dtype=complex)
    noise = 0.5 * np.sum(np.abs(m_d) ** 2 * (cfg.awgn_power + np.asarray(q, dtype=float)))
    num = (c_col.sum() ** 2 * stats.feature_variances[d]
           + np.sum(c_col ** 2 * cfg.sensing_noise_power) + noise)
    return float(num / kappa)


def gamma1(alpha_d: float, c_col) -> float:
    """(sum_k c_k)^2 / alpha."""
    if alpha_d <= 0:
        raise ValueError("alpha must be positive")
    return float(np.sum(c_col) ** 2 / alpha_d)


def gamma2(m_lift: np.ndarray, H_lift: np.ndarray) -> float:
    """Real quadratic form m~^T H~ m~, equal to |m^H h|^2."""
    return float(m_lift @ H_lift @ m_lift)


def alpha_from_equality(sol: DesignSolution, stats: FeatureStatistics, cfg: SystemConfig) -> np.ndarray:
    """Per-slot gain alpha that makes the Lambda <= Gamma_1 constraint tight."""
    return received_gain_per_dimension(sol, stats, cfg)


def uniform_quantization_lambda(constants: ConstraintConstants | np.ndarray, capacity: float,
                                tol_bits: float = 1e-8) -> float:
    """Level ``lam`` with ``fronthaul_rate(lam * ones) == capacity`` (to ``tol_bits``).

    The rate is ``sum_i log2(1 + e_i / lam)`` over the eigenvalues ``e_i`` of A,
    strictly decreasing in ``lam``, so bisection on ``log(lam)`` applies.  The
    upper end of the final bracket is returned, so the rate never exceeds the
    capacity.
    """
    if not capacity > 0:
        raise ValueError(f"capacity must be > 0 (got {capacity!r})")
    A = constants.A if isinstance(constants, ConstraintConstants) else np.asarray(constants)
    e = np.clip(np.linalg.eigvalsh(A), 0.0, None)
    if not np.any(e > 0):
        raise ValueError("fronthaul matrix is zero; every level gives rate 0")

    def rate(lam):
        return float(np.sum(np.log1p(e / lam)) / LN2)

    lo, hi = 1.0, 1.0
    while rate(lo) <= capacity:
        lo *= 0.5
    while rate(hi) > capacity:
        hi *= 2.0
    for _ in range(400):
        mid = np.sqrt(lo * hi)
        if rate(mid) > capacity:
            lo = mid
        else:
            hi = mid
        if capacity - rate(hi) <= 0.1 * tol_bits or hi / lo - 1.0 < 1e-15:
            break
    return float(hi)
