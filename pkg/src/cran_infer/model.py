"""Shared domain types for the Cloud-RAN edge inference model.

All containers are frozen dataclasses whose array fields are made read-only
on construction, so instances can be handed to worker processes or threads
without copying.
"""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib


class ConfigError(ValueError):
    """Raised when a configuration violates a model invariant."""


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


PER_DEVICE_FIELDS = ("max_precoding_power", "signal_second_moment", "sensing_noise_power")


@dataclass(frozen=True)
class SystemConfig:
    """Scalar network and resource parameters.

    Per-device fields accept a scalar, which is broadcast to all ``K`` devices.
    Powers are in watts, energy in joules, ``slot_duration`` in seconds and the
    fronthaul capacity in bits per channel use (base-2 logarithm).
    """

    K: int
    M: int
    N: int
    D: int
    L: int
    fronthaul_capacity: float
    max_precoding_power: Any
    energy_budget: float
    slot_duration: float = 1.0
    signal_second_moment: Any = 1.0
    awgn_power: float = 1.0
    sensing_noise_power: Any = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        for name in PER_DEVICE_FIELDS:
            value = np.asarray(getattr(self, name), dtype=float)
            if value.ndim == 0 and isinstance(self.K, (int, np.integer)) and self.K >= 1:
                value = np.full(int(self.K), float(value))
            object.__setattr__(self, name, _frozen(value))

    @property
    def n_antennas(self) -> int:
        """Length of a concatenated channel / beamforming vector (M*N)."""
        return self.M * self.N

    @property
    def fronthaul_power(self) -> float:
        """Single power level used in the fronthaul-rate bound (max over devices)."""
        return float(np.max(self.max_precoding_power))

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)


def validate_config(cfg: SystemConfig) -> SystemConfig:
    """Return ``cfg`` unchanged if every invariant holds, else raise ConfigError."""
    problems = []
    for name in ("K", "M", "N", "D"):
        v = getattr(cfg, name)
        if not isinstance(v, (int, np.integer)) or v < 1:
            problems.append(f"{name} must be an integer >= 1 (got {v!r})")
    if not isinstance(cfg.L, (int, np.integer)) or cfg.L < 2:
        problems.append(f"L must be an integer >= 2 (got {cfg.L!r})")
    for name in ("fronthaul_capacity", "energy_budget", "slot_duration"):
        v = getattr(cfg, name)
        if not np.isfinite(v) or v <= 0:
            problems.append(f"{name} must be finite and > 0 (got {v!r})")
    if not np.isfinite(cfg.awgn_power) or cfg.awgn_power <= 0:
        problems.append(f"awgn_power must be finite and > 0 (got {cfg.awgn_power!r})")
    if not problems:
        for name in PER_DEVICE_FIELDS:
            v = getattr(cfg, name)
            if v.shape != (cfg.K,):
                problems.append(f"{name} must have length K={cfg.K} (got shape {v.shape})")
            elif not np.all(np.isfinite(v)):
                problems.append(f"{name} must be finite")
            elif name == "sensing_noise_power" and np.any(v < 0):
                problems.append(f"{name} must be >= 0")
            elif name != "sensing_noise_power" and np.any(v <= 0):
                problems.append(f"{name} must be > 0")
    if problems:
        raise ConfigError("invalid SystemConfig: " + "; ".join(problems))
    e = normalized_energy(cfg)
    if not (np.isfinite(e) and e > 0):
        raise ConfigError(f"invalid SystemConfig: normalized energy {e!r} is not finite and positive")
    return cfg


def normalized_energy(cfg: SystemConfig) -> float:
    """Energy budget per slot, E/T.

    The auxiliary energy variables are bounds on ``c^2 * E[s^2] / |m^H h|^2``,
    i.e. they already carry the per-device signal second moment, so the only
    remaining normalization is the slot duration.
    """
    return float(cfg.energy_budget) / float(cfg.slot_duration)


CONFIG_FIELDS = tuple(f.name for f in dataclasses.fields(SystemConfig))


def config_from_mapping(values: Mapping[str, Any]) -> SystemConfig:
    unknown = set(values) - set(CONFIG_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = [f.name for f in dataclasses.fields(SystemConfig)
               if f.default is dataclasses.MISSING and f.name not in values]
    if missing:
        raise ConfigError(f"missing config keys: {missing}")
    return validate_config(SystemConfig(**dict(values)))


def load_config(path) -> SystemConfig:
    """Read a flat TOML config file whose keys are SystemConfig field names."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return config_from_mapping(data)


@dataclass(frozen=True)
class FeatureStatistics:
    """Gaussian-mixture model of the ground-truth feature vector.

    ``class_means`` is L x D; ``feature_variances`` is the diagonal of the shared
    class-conditional covariance.
    """

    class_means: np.ndarray
    feature_variances: np.ndarray

    def __post_init__(self):
        mu = _frozen(self.class_means)
        var = _frozen(self.feature_variances)
        if mu.ndim != 2 or var.shape != (mu.shape[1],):
            raise ValueError("class_means must be L x D and feature_variances length D")
        if not np.all(np.isfinite(mu)):
            raise ValueError("class_means must be finite")
        if not np.all(var > 0):
            raise ValueError("feature_variances must be strictly positive")
        object.__setattr__(self, "class_means", mu)
        object.__setattr__(self, "feature_variances", var)

    @property
    def L(self) -> int:
        return self.class_means.shape[0]

    @property
    def D(self) -> int:
        return self.class_means.shape[1]


@dataclass(frozen=True)
class ChannelSet:
    """Uplink channels, ``h[k, m]`` is the length-N vector from device k to RRH m."""

    h: np.ndarray

    def __post_init__(self):
        h = _frozen(self.h, dtype=complex)
        if h.ndim != 3:
            raise ValueError("h must have shape (K, M, N)")
        if not np.all(np.isfinite(h)):
            raise ValueError("channel coefficients must be finite")
        object.__setattr__(self, "h", h)

    @property
    def K(self) -> int:
        return self.h.shape[0]

    @property
    def concatenated(self) -> np.ndarray:
        """K x (M*N) view; entry ``m*N + n`` is RRH m, antenna n (RRH-major)."""
        K, M, N = self.h.shape
        return self.h.reshape(K, M * N)


@dataclass(frozen=True)
class DesignSolution:
    """Optimization variables of the joint transceiver design.

    receive_strength: K x D, real, >= 0.
    beamformers: D x (M*N) complex; row d is the receive beamformer of slot d.
    quantization_diag: length M*N, > 0.
    aux_gain: length D.
    aux_energy: K x D.
    """

    receive_strength: np.ndarray
    beamformers: np.ndarray
    quantization_diag: np.ndarray
    aux_gain: np.ndarray
    aux_energy: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "receive_strength", _frozen(self.receive_strength))
        object.__setattr__(self, "beamformers", _frozen(self.beamformers, dtype=complex))
        object.__setattr__(self, "quantization_diag", _frozen(self.quantization_diag))
        object.__setattr__(self, "aux_gain", _frozen(self.aux_gain))
        object.__setattr__(self, "aux_energy", _frozen(self.aux_energy))
        K, D = self.receive_strength.shape
        if self.beamformers.shape[0] != D or self.aux_gain.shape != (D,):
            raise ValueError("beamformers / aux_gain do not match D")
        if self.aux_energy.shape != (K, D):
            raise ValueError("aux_energy must be K x D")
        if self.quantization_diag.shape != (self.beamformers.shape[1],):
            raise ValueError("quantization_diag must have length M*N")

    def replace(self, **changes) -> "DesignSolution":
        return dataclasses.replace(self, **changes)

    def effective_gains(self, channels: ChannelSet) -> np.ndarray:
        """K x D complex array of ``m_d^H h_k``."""
        return np.einsum("di,ki->kd", self.beamformers.conj(), channels.concatenated)


@dataclass(frozen=True)
class AggregateStatistics:
    """Per-dimension mixture statistics of the aggregated feature at the CP."""

    post_means: np.ndarray
    post_variances: np.ndarray
    equivalent_noise: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "post_means", _frozen(self.post_means))
        object.__setattr__(self, "post_variances", _frozen(self.post_variances))
        object.__setattr__(self, "equivalent_noise", _frozen(self.equivalent_noise))


# --- interchange format -----------------------------------------------------
#
# One block per array: a header line ``<name> <dtype> <ndim> <dim...>`` followed
# by one line holding the values in column-major order.  Complex values are
# written as consecutive real/imaginary tokens.  ``repr`` of a float round-trips
# exactly, so a save/load cycle is bitwise lossless.

_SOLUTION_FIELDS = ("receive_strength", "beamformers", "quantization_diag", "aux_gain", "aux_energy")
_MAGIC = "# cran_infer design-solution v1"


def write_matrix(fh, name: str, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    kind = "complex128" if np.iscomplexobj(arr) else "float64"
    fh.write(f"{name} {kind} {arr.ndim} {' '.join(str(s) for s in arr.shape)}\n")
    flat = arr.ravel(order="F")
    if kind == "complex128":
        tokens = [repr(float(v)) for z in flat for v in (z.real, z.imag)]
    else:
        tokens = [repr(float(v)) for v in flat]
    fh.write(" ".join(tokens) + "\n")


def read_matrix(fh) -> tuple[str, np.ndarray]:
    header = fh.readline().split()
    if not header:
        raise EOFError
    name, kind, ndim = header[0], header[1], int(header[2])
    shape = tuple(int(s) for s in header[3:3 + ndim])
    values = np.array([float(t) for t in fh.readline().split()])
    if kind == "complex128":
        values = values[0::2] + 1j * values[1::2]
    elif kind != "float64":
        raise ValueError(f"unsupported dtype {kind!r}")
    return name, values.reshape(shape, order="F")


def save_solution(sol: DesignSolution, path) -> None:
    with open(path, "w") as fh:
        fh.write(_MAGIC + "\n")
        for name in _SOLUTION_FIELDS:
            write_matrix(fh, name, getattr(sol, name))


def load_solution(path) -> DesignSolution:
    arrays = {}
    with open(path) as fh:
        if fh.readline().strip() != _MAGIC:
            raise ValueError(f"{path}: not a design-solution file")
        while True:
            try:
                name, arr = read_matrix(fh)
            except EOFError:
                break
            arrays[name] = arr
    return DesignSolution(**{name: arrays[name] for name in _SOLUTION_FIELDS})
