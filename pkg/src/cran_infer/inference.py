"""Classification of received features and Monte-Carlo accuracy estimation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .metrics import aggregate_statistics
from .model import AggregateStatistics, ChannelSet, DesignSolution, FeatureStatistics, SystemConfig
from .scenario import fit_mixture
from .simulate import simulate_class

MAP_AGGREGATE = "map-aggregate"
LINEAR_ON_CLEAN = "linear-on-clean"


@dataclass(frozen=True)
class Classifier:
    """Either the Bayes rule on the received mixture or a linear rule on rescaled features.

    ``map-aggregate`` uses the post-aggregation means and variances of the
    design it is applied to.  ``linear-on-clean`` scores ``features @ weights.T
    + bias`` after dividing each received dimension by sum_k c_k(d).
    """

    kind: str
    weights: np.ndarray | None = None  # L x D
    bias: np.ndarray | None = None  # L

    def __post_init__(self):
        if self.kind not in (MAP_AGGREGATE, LINEAR_ON_CLEAN):
            raise ValueError(f"unknown classifier kind {self.kind!r}")
        if self.kind == LINEAR_ON_CLEAN and (self.weights is None or self.bias is None):
            raise ValueError("linear classifier needs weights and bias")


def _map_scores(s_hat, means, variances):
    s = np.atleast_2d(s_hat)
    if np.any(~(np.asarray(variances) > 0)):
        raise ValueError("MAP classification needs strictly positive variances")
    diff = s[:, None, :] - means[None, :, :]
    return -np.sum(diff ** 2 / variances, axis=-1)


def map_classify(s_hat, agg: AggregateStatistics):
    """Index of the class with the largest equal-prior Gaussian log-likelihood.

    Ties go to the smallest index.  Accepts one vector (returns an int) or an
    (n, D) batch (returns an (n,) array).
    """
    scores = _map_scores(s_hat, agg.post_means, agg.post_variances)
    labels = np.argmax(scores, axis=1)
    return int(labels[0]) if np.ndim(s_hat) == 1 else labels


def rescale_to_clean(s_hat, sol: DesignSolution, active=None) -> np.ndarray:
    """Divide each dimension by sum_k c_k(d); inactive dimensions become 0."""
    scale = sol.receive_strength.sum(axis=0)
    active = scale > 0 if active is None else np.asarray(active, dtype=bool)
    if np.any(active & ~(scale > 0)):
        raise ValueError("zero aggregation scale on an active dimension")
    safe = np.where(active, scale, 1.0)
    return np.where(active, np.asarray(s_hat, dtype=float) / safe, 0.0)


def fit_linear_classifier(features, labels, L: int) -> Classifier:
    """Linear discriminant from clean samples (shared diagonal covariance, equal priors)."""
    stats = fit_mixture(features, labels, L)
    W = stats.class_means / stats.feature_variances
    bias = -0.5 * np.sum(stats.class_means * W, axis=1)
    return Classifier(LINEAR_ON_CLEAN, W, bias)


def classify(clf: Classifier, s_hat, sol: DesignSolution, stats: FeatureStatistics,
             cfg: SystemConfig) -> np.ndarray:
    s = np.atleast_2d(s_hat)
    if clf.kind == MAP_AGGREGATE:
        return map_classify(s, aggregate_statistics(sol, stats, cfg))
    clean = rescale_to_clean(s, sol)
    return np.argmax(clean @ clf.weights.T + clf.bias, axis=1)


@dataclass(frozen=True)
class AccuracyEstimate:
    accuracy: float
    stderr: float
    n: int


def _balanced_counts(n: int, L: int) -> np.ndarray:
    counts = np.full(L, n // L)
    counts[: n % L] += 1
    return counts


def estimate_accuracy(clf: Classifier, sol: DesignSolution, stats: FeatureStatistics,
                      channels: ChannelSet, cfg: SystemConfig, n_samples: int,
                      rng: np.random.Generator, chunk: int = 20000) -> AccuracyEstimate:
    """Monte-Carlo accuracy over balanced classes, with its binomial standard error."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    correct = 0
    for label, count in enumerate(_balanced_counts(n_samples, stats.L)):
        done = 0
        while done < count:
            size = min(chunk, count - done)
            sample = simulate_class(sol, stats, channels, cfg, label, size, rng)
            correct += int(np.sum(classify(clf, sample.received, sol, stats, cfg) == label))
            done += size
    p = correct / n_samples
    return AccuracyEstimate(p, float(np.sqrt(p * (1.0 - p) / n_samples)), n_samples)


def two_class_accuracy(gain: float) -> float:
    """Bayes accuracy of two equal-prior Gaussians with symmetric-KL gain ``gain``."""
    return float(norm.cdf(np.sqrt(gain) / 2.0))
