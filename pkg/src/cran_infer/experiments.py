"""Plan-driven sweeps over fronthaul capacity, energy budget or power.

A plan is a TOML file holding the flat ``SystemConfig`` keys plus a ``[plan]``
table.  Each trial draws one geometry, one channel realization and one set of
feature statistics; every scheme and every sweep value of that trial reuses
them, so scheme comparisons are paired.

Within a trial each scheme walks the sweep values in order.  At every value it
solves from the default initial point and, when the previous value's design is
feasible here, also from that design, keeping the better of the two.  Both
runs are deterministic, so the chain is too.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .baselines import run_baseline
from .convex.barrier import SolverOptions
from .inference import MAP_AGGREGATE, Classifier, estimate_accuracy
from .metrics import received_discriminant_gain
from .model import CONFIG_FIELDS, ChannelSet, ConfigError, FeatureStatistics, SystemConfig, \
    config_from_mapping, tomllib
from .sca import OptimizerError, run_algorithm1
from .scenario import GeometryParams, generate_channels, noise_power_from_psd, sample_geometry, \
    synthesize_feature_statistics

log = logging.getLogger(__name__)

SWEEP_AXES = ("fronthaul_capacity", "energy_budget", "power")
SCHEMES = {
    "proposed": None,
    "baseline1": "uniform-quantization",
    "baseline2": "uniform-beamforming",
    "baseline3": "fixed-precoding",
}
RESULT_HEADER = ("trial", "sweep_axis", "sweep_value", "scheme", "disc_gain", "accuracy",
                 "acc_stderr", "iterations", "wall_ms", "status")
SUMMARY_HEADER = ("sweep_axis", "sweep_value", "scheme", "n", "failures", "gain_mean", "gain_stderr",
                  "accuracy_mean", "accuracy_stderr")

STATUS_OK = "ok"
STATUS_UNCONVERGED = "unconverged"  # hit max_iters; the design is still feasible


@dataclass(frozen=True)
class ExperimentPlan:
    base: SystemConfig
    sweep_axis: str
    sweep_values: tuple
    schemes: tuple = ("proposed", "baseline1", "baseline2", "baseline3")
    n_trials: int = 10
    n_inference_samples: int = 10000
    output: str = "results.csv"
    class_separation: float = 1.0
    eps_stop: float = 1e-3
    max_iters: int = 50
    continuation: bool = True
    geometry: GeometryParams = field(default_factory=GeometryParams)

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"sweep_axis must be one of {SWEEP_AXES}, got {self.sweep_axis!r}")
        if len(self.sweep_values) == 0:
            raise ConfigError("sweep_values must be non-empty")
        if any(not (math.isfinite(v) and v > 0) for v in self.sweep_values):
            raise ConfigError("sweep values must be finite and positive")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ConfigError(f"unknown schemes {bad}; choose from {sorted(SCHEMES)}")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if self.n_inference_samples < 0:
            raise ConfigError("n_inference_samples must be >= 0")

    def config_at(self, value: float) -> SystemConfig:
        key = "max_precoding_power" if self.sweep_axis == "power" else self.sweep_axis
        return self.base.replace(**{key: value})

    def replace(self, **changes) -> "ExperimentPlan":
        return dataclasses.replace(self, **changes)


PLAN_KEYS = {f.name for f in dataclasses.fields(ExperimentPlan)} - {"base", "geometry"}


def plan_from_mapping(data: dict[str, Any]) -> ExperimentPlan:
    data = dict(data)
    plan_keys = dict(data.pop("plan", {}))
    geometry = GeometryParams(**plan_keys.pop("geometry", {}))
    bandwidth = plan_keys.pop("bandwidth_hz", None)
    unknown = set(plan_keys) - PLAN_KEYS
    if unknown:
        raise ConfigError(f"unknown plan keys: {sorted(unknown)}")
    if "awgn_power" not in data:
        data["awgn_power"] = noise_power_from_psd(bandwidth_hz=1e6 if bandwidth is None else bandwidth)
    elif bandwidth is not None:
        raise ConfigError("give either awgn_power or plan.bandwidth_hz, not both")
    base = config_from_mapping({k: v for k, v in data.items() if k in CONFIG_FIELDS})
    extra = set(data) - set(CONFIG_FIELDS)
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    for key in ("sweep_values", "schemes"):
        if key in plan_keys:
            plan_keys[key] = tuple(plan_keys[key])
    if "sweep_axis" not in plan_keys or "sweep_values" not in plan_keys:
        raise ConfigError("plan needs sweep_axis and sweep_values")
    return ExperimentPlan(base=base, geometry=geometry, **plan_keys)


def load_plan(path) -> ExperimentPlan:
    with open(path, "rb") as fh:
        return plan_from_mapping(tomllib.load(fh))


# --- per-trial instance -----------------------------------------------------------

@dataclass(frozen=True)
class TrialInstance:
    channels: ChannelSet
    stats: FeatureStatistics


def trial_instance(plan: ExperimentPlan, seed: int, trial: int) -> TrialInstance:
    """Geometry, channels and feature statistics of one trial (independent of the sweep)."""
    rng = np.random.default_rng([seed, trial])
    placements = sample_geometry(plan.base, plan.geometry, rng)
    channels = generate_channels(placements, plan.base, rng)
    stats = synthesize_feature_statistics(plan.base.L, plan.base.D, plan.class_separation, rng)
    return TrialInstance(channels, stats)


def run_scheme(scheme: str, cfg: SystemConfig, inst: TrialInstance, eps_stop=1e-3, max_iters=50,
               start=None, options: SolverOptions | None = None):
    kind = SCHEMES[scheme]
    if kind is None:
        return run_algorithm1(cfg, inst.channels, inst.stats, eps_stop, max_iters, options, start)
    return run_baseline(kind, cfg, inst.channels, inst.stats, eps_stop, max_iters, options, start)


@dataclass(frozen=True)
class CellResult:
    trial: int
    sweep_axis: str
    sweep_value: float
    scheme: str
    disc_gain: float
    accuracy: float
    acc_stderr: float
    iterations: int
    wall_ms: float
    status: str

    @property
    def failed(self) -> bool:
        return self.status not in (STATUS_OK, STATUS_UNCONVERGED)

    def row(self) -> list:
        return [self.trial, self.sweep_axis, repr(float(self.sweep_value)), self.scheme,
                repr(float(self.disc_gain)), repr(float(self.accuracy)), repr(float(self.acc_stderr)),
                self.iterations, f"{self.wall_ms:.3f}", self.status]


def _better(a, b):
    """Pick the run with the larger final gain; ``a`` wins ties."""
    if b is None:
        return a
    if a is None:
        return b
    return a if a[1].objectives[-1] >= b[1].objectives[-1] else b


def run_chain(plan: ExperimentPlan, seed: int, trial: int, scheme: str, timing: bool = True,
              emit=None, keep=None) -> list[CellResult]:
    """All sweep values of one (trial, scheme), in sweep order.

    ``keep``, if given, is called as ``keep(cell, solution, cfg, instance)`` for
    every successful cell (used by audits that need the designs themselves).
    """
    inst = trial_instance(plan, seed, trial)
    s_index = list(SCHEMES).index(scheme)
    results = []
    prev = None
    for j, value in enumerate(plan.sweep_values):
        cfg = plan.config_at(value)
        t0 = time.perf_counter()
        iterations, gain, acc, err = 0, math.nan, math.nan, math.nan
        try:
            runs = []
            for start in ([None, prev] if plan.continuation and prev is not None else [None]):
                try:
                    runs.append(run_scheme(scheme, cfg, inst, plan.eps_stop, plan.max_iters, start))
                except OptimizerError:
                    if start is None:
                        raise
                    log.debug("warm start failed at trial %d %s value %g", trial, scheme, value)
            best = None
            for r in runs:
                best = _better(best, r)
            sol, state = best
            prev = sol
            iterations = state.iteration
            gain = received_discriminant_gain(sol, inst.stats, cfg)
            status = STATUS_OK if state.converged else STATUS_UNCONVERGED
            if plan.n_inference_samples > 0:
                rng = np.random.default_rng([seed, trial, j, s_index, 7])
                est = estimate_accuracy(Classifier(MAP_AGGREGATE), sol, inst.stats, inst.channels, cfg,
                                        plan.n_inference_samples, rng)
                acc, err = est.accuracy, est.stderr
            if keep is not None:
                keep(CellResult(trial, plan.sweep_axis, float(value), scheme, gain, acc, err, iterations, 0.0,
                                status), sol, cfg, inst)
        except Exception as exc:  # a failed cell is recorded, the run goes on
            log.warning("cell trial=%d %s=%g scheme=%s failed: %s", trial, plan.sweep_axis, value, scheme, exc)
            status = f"error:{type(exc).__name__}"
            prev = None
        wall = (time.perf_counter() - t0) * 1e3 if timing else 0.0
        cell = CellResult(trial, plan.sweep_axis, float(value), scheme, gain, acc, err, iterations, wall, status)
        results.append(cell)
        if emit is not None:
            emit(cell)
    return results


# --- result files -------------------------------------------------------------------

class RowWriter:
    """Appends whole rows and flushes after each, so an interrupted run keeps every finished cell."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w", newline="")
        self._csv = csv.writer(self._fh, lineterminator="\n")
        self._csv.writerow(RESULT_HEADER)
        self._fh.flush()

    def __call__(self, cell: CellResult) -> None:
        self._csv.writerow(cell.row())
        self._fh.flush()

    def close(self):
        self._fh.close()


def _sort_key(cell: CellResult, plan: ExperimentPlan):
    return (cell.trial, plan.sweep_values.index(cell.sweep_value), list(SCHEMES).index(cell.scheme))


def write_results(path, cells, plan: ExperimentPlan) -> None:
    """Rewrite ``path`` with all rows in canonical order, atomically."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".csv.tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_HEADER)
        for cell in sorted(cells, key=lambda c: _sort_key(c, plan)):
            w.writerow(cell.row())
    os.replace(tmp, path)


def read_results(path) -> list[CellResult]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [CellResult(int(r["trial"]), r["sweep_axis"], float(r["sweep_value"]), r["scheme"],
                           float(r["disc_gain"]), float(r["accuracy"]), float(r["acc_stderr"]),
                           int(r["iterations"]), float(r["wall_ms"]), r["status"]) for r in reader]


def run_plan(plan: ExperimentPlan, seed: int = 0, workers: int = 1, out=None,
             timing: bool = True) -> list[CellResult]:
    """Run every (trial, sweep value, scheme) cell and write the result CSV.

    Chains (one per trial and scheme) are the unit of parallel work.  Rows are
    appended as cells finish; on normal completion the file is rewritten in
    canonical (trial, sweep value, scheme) order.
    """
    out = plan.output if out is None else out
    chains = [(trial, scheme) for trial in range(plan.n_trials) for scheme in plan.schemes]
    writer = RowWriter(out)
    cells: list[CellResult] = []

    def emit(cell):
        cells.append(cell)
        writer(cell)

    try:
        if workers <= 1:
            for trial, scheme in chains:
                run_chain(plan, seed, trial, scheme, timing, emit)
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(run_chain, plan, seed, trial, scheme, timing) for trial, scheme in chains]
                for fut in as_completed(futures):
                    for cell in fut.result():
                        emit(cell)
    finally:
        writer.close()
    write_results(out, cells, plan)
    return sorted(cells, key=lambda c: _sort_key(c, plan))


# --- summary --------------------------------------------------------------------

@dataclass(frozen=True)
class SummaryRow:
    sweep_axis: str
    sweep_value: float
    scheme: str
    n: int
    failures: int
    gain_mean: float
    gain_stderr: float
    accuracy_mean: float
    accuracy_stderr: float


def _mean_stderr(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def summarize(cells) -> list[SummaryRow]:
    """Mean and standard error over trials per (sweep value, scheme); failed rows only counted."""
    cells = list(cells)
    if not any(not c.failed for c in cells):
        raise ValueError("summarize needs at least one successful row")
    groups: dict = {}
    for c in cells:
        groups.setdefault((c.sweep_axis, c.sweep_value, c.scheme), []).append(c)
    order = list(SCHEMES)
    rows = []
    for (axis, value, scheme) in sorted(groups, key=lambda k: (k[0], k[1], order.index(k[2]) if k[2] in order else 99)):
        group = groups[(axis, value, scheme)]
        good = [c for c in group if not c.failed]
        gm, gs = _mean_stderr([c.disc_gain for c in good])
        am, as_ = _mean_stderr([c.accuracy for c in good])
        rows.append(SummaryRow(axis, value, scheme, len(good), len(group) - len(good), gm, gs, am, as_))
    return rows


def write_summary(rows, fh=None) -> None:
    w = csv.writer(fh or sys.stdout, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for r in rows:
        w.writerow([r.sweep_axis, repr(r.sweep_value), r.scheme, r.n, r.failures, repr(r.gain_mean),
                    repr(r.gain_stderr), repr(r.accuracy_mean), repr(r.accuracy_stderr)])
