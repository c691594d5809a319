"""Random network geometry, channels and feature statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ChannelSet, FeatureStatistics, SystemConfig, _frozen

VARIANCE_FLOOR = 1e-9


@dataclass(frozen=True)
class GeometryParams:
    inner_radius: float = 100.0
    outer_radius: float = 500.0


@dataclass(frozen=True)
class Placements:
    device_positions: np.ndarray  # K x 2, meters
    rrh_positions: np.ndarray  # M x 2, meters

    def __post_init__(self):
        object.__setattr__(self, "device_positions", _frozen(self.device_positions))
        object.__setattr__(self, "rrh_positions", _frozen(self.rrh_positions))

    def distances(self) -> np.ndarray:
        """K x M device-to-RRH Euclidean distances."""
        diff = self.device_positions[:, None, :] - self.rrh_positions[None, :, :]
        return np.sqrt(np.sum(diff ** 2, axis=-1))


@dataclass(frozen=True)
class PcaBasis:
    U: np.ndarray  # S x D, orthonormal columns
    explained_variance_ratio: float
    eigenvalues: np.ndarray  # all S eigenvalues, non-increasing
    mean: np.ndarray

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) @ self.U


class RankDeficientError(ValueError):
    def __init__(self, requested: int, achievable: int):
        super().__init__(f"data has rank {achievable} < requested dimension {requested}")
        self.requested = requested
        self.achievable = achievable


def noise_power_from_psd(psd_dbm_hz: float = -169.0, noise_figure_db: float = 7.0,
                         bandwidth_hz: float = 1e6) -> float:
    """Thermal noise power in watts over ``bandwidth_hz``."""
    return 10.0 ** ((psd_dbm_hz + noise_figure_db) / 10.0) * bandwidth_hz * 1e-3


def _annulus_points(n, inner, outer, rng):
    # area-uniform radius by inverse CDF
    r = np.sqrt(rng.uniform(inner ** 2, outer ** 2, size=n))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def sample_geometry(cfg: SystemConfig, params: GeometryParams, rng: np.random.Generator) -> Placements:
    """Place devices and RRHs independently and uniformly over an annulus."""
    if not 0.0 < params.inner_radius < params.outer_radius:
        raise ValueError(f"need 0 < inner_radius < outer_radius, got {params}")
    devices = _annulus_points(cfg.K, params.inner_radius, params.outer_radius, rng)
    rrhs = _annulus_points(cfg.M, params.inner_radius, params.outer_radius, rng)
    return Placements(devices, rrhs)


def path_loss_db(distance_m) -> np.ndarray:
    return 30.6 + 36.7 * np.log10(distance_m)


def path_loss_amplitude(distance_m) -> np.ndarray:
    return 10.0 ** (-path_loss_db(distance_m) / 20.0)


def generate_channels(placements: Placements, cfg: SystemConfig, rng: np.random.Generator) -> ChannelSet:
    """Rayleigh fading scaled by the distance path loss, i.i.d. across antennas."""
    dist = placements.distances()
    if np.any(dist <= 0):
        raise ValueError("device and RRH positions coincide (zero distance)")
    shape = (cfg.K, cfg.M, cfg.N)
    fading = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return ChannelSet(path_loss_amplitude(dist)[:, :, None] * fading)


def synthesize_feature_statistics(L: int, D: int, separation: float,
                                  rng: np.random.Generator) -> FeatureStatistics:
    """Random class means with a prescribed mean pairwise squared distance per dimension.

    Variances are log-uniform on [0.5, 2].
    """
    if separation < 0:
        raise ValueError("separation must be >= 0")
    mu = rng.standard_normal((L, D))
    i, j = np.triu_indices(L, k=1)
    avg = np.mean((mu[i] - mu[j]) ** 2)
    mu = mu * (separation / np.sqrt(avg)) if avg > 0 else np.zeros_like(mu)
    var = np.exp(rng.uniform(np.log(0.5), np.log(2.0), size=D))
    return FeatureStatistics(mu, var)


def fit_pca(data: np.ndarray, D: int, rank_tol: float = 1e-10) -> PcaBasis:
    """Top-D principal subspace of the sample covariance of ``data`` (n x S)."""
    data = np.asarray(data, dtype=float)
    n, S = data.shape
    if n < D or S < D:
        raise ValueError(f"need n >= D and S >= D (n={n}, S={S}, D={D})")
    mean = data.mean(axis=0)
    X = data - mean
    cov = X.T @ X / max(n - 1, 1)
    cov = 0.5 * (cov + cov.T)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    rank = int(np.sum(evals > rank_tol * max(evals[0], 1e-300)))
    if rank < D:
        raise RankDeficientError(D, rank)
    U = evecs[:, :D]
    # deterministic sign: largest-magnitude entry of each column is positive
    pivots = np.argmax(np.abs(U), axis=0)
    U = U * np.sign(U[pivots, np.arange(D)])
    total = evals.sum()
    ratio = float(evals[:D].sum() / total) if total > 0 else 1.0
    return PcaBasis(U=_frozen(U), explained_variance_ratio=ratio,
                    eigenvalues=_frozen(evals), mean=_frozen(mean))


def fit_mixture(features: np.ndarray, labels: np.ndarray, L: int) -> FeatureStatistics:
    """Plug-in Gaussian mixture: per-class means and pooled per-dimension variance.

    Samples are put in a canonical order first so the result does not depend on
    the order in which they were supplied.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("features must be n x D with one label per row")
    order = np.lexsort(tuple(X.T[::-1]) + (y,))
    X, y = X[order], y[order]
    counts = np.bincount(y, minlength=L)
    if len(counts) > L or np.any(counts[:L] == 0):
        raise ValueError(f"every class 0..{L - 1} needs samples (counts={counts.tolist()})")
    if np.any(counts < 2):
        raise ValueError("at least two samples per class are required")
    D = X.shape[1]
    means = np.zeros((L, D))
    ss = np.zeros(D)
    for ell in range(L):
        Xl = X[y == ell]
        means[ell] = Xl.sum(axis=0) / len(Xl)
        ss += ((Xl - means[ell]) ** 2).sum(axis=0)
    var = np.maximum(ss / (len(X) - L), VARIANCE_FLOOR)
    return FeatureStatistics(means, var)


def read_labeled_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read ``label,f1,...,fS`` rows; returns (label_index, features, label_values)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if header[0].strip() != "label":
        raise ValueError(f"{path}: first column must be 'label'")
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if np.any(np.isnan(raw)):
        raise ValueError(f"{path}: missing values")
    values, index = np.unique(raw[:, 0], return_inverse=True)
    return index, raw[:, 1:], values
