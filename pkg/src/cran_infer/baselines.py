"""Comparison schemes that each freeze part of the joint design.

* ``uniform-quantization``: q = lam * 1 with lam set by bisection so the
  fronthaul constraint is met with equality; only (c, m, alpha, beta) move.
* ``uniform-beamforming``: every receive beamformer is the all-ones vector.
* ``fixed-precoding``: every device transmits with the same precoder magnitude
  b0 in every slot; c is then induced by the beamformers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convex.barrier import SolverOptions
from .convex.program import AffineLE, ConvexProgram, ConvexQuadLE, QuadOverLinLE, VariableLayout
from .metrics import uniform_quantization_lambda
from .model import ChannelSet, DesignSolution, FeatureStatistics, SystemConfig
from .sca import (ALPHA_FLOOR, Iterate, ScaProblem, ScaState, Subproblem, alternate,
                  build_subproblem1, build_subproblem2, initial_iterate, interior_start, linearize_gamma1, shrink_alpha,
                  lift_vector, unlift_vector, warm_iterate)

__all__ = ["BaselineSpec", "BASELINE_KINDS", "uniform_quantization_lambda", "fixed_precoding_level",
           "run_baseline"]

BASELINE_KINDS = ("uniform-quantization", "uniform-beamforming", "fixed-precoding")
FIXED_LEVEL_MARGIN = 0.9


@dataclass(frozen=True)
class BaselineSpec:
    kind: str
    fixed_level: float | None = None  # b0 for fixed-precoding; None picks the default

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ValueError(f"unknown baseline kind {self.kind!r}; expected one of {BASELINE_KINDS}")
        if self.fixed_level is not None and not self.fixed_level > 0:
            raise ValueError("fixed_level must be positive")


def fixed_precoding_level(cfg: SystemConfig) -> float:
    """Largest common |b| meeting every power limit and 90% of the energy budget."""
    P = np.asarray(cfg.max_precoding_power, dtype=float)
    w = np.asarray(cfg.signal_second_moment, dtype=float)
    energy = cfg.energy_budget / cfg.slot_duration
    return float(np.sqrt(min(P.min(), FIXED_LEVEL_MARGIN * energy / (cfg.D * w.sum()))))


def _check_level(cfg: SystemConfig, b0: float) -> None:
    P = np.asarray(cfg.max_precoding_power, dtype=float)
    w = np.asarray(cfg.signal_second_moment, dtype=float)
    if b0 ** 2 > P.min() or cfg.D * b0 ** 2 * w.sum() > cfg.energy_budget / cfg.slot_duration:
        raise ValueError(f"fixed precoding level {b0} violates the power or energy budget")


# --- uniform beamforming --------------------------------------------------------

def _ones_start(problem: ScaProblem) -> Iterate:
    m = np.ones((problem.Da, problem.n), dtype=complex)
    g = np.abs(problem.effective(m))
    full = problem.Da * float(np.sum(problem.power * problem.second_moment))
    gamma2 = 0.5 * min(1.0, problem.energy / full)
    c = np.sqrt(gamma2 * problem.power)[:, None] * g
    q = np.full(problem.n, uniform_quantization_lambda(problem.A, problem.capacity))
    return problem.refresh(c, m, q)


def _sp1_fixed_m(it: Iterate, problem: ScaProblem) -> Subproblem:
    return build_subproblem1(it, problem, fixed_beamformer=True)


# --- fixed precoding ------------------------------------------------------------

class _FixedLevel:
    def __init__(self, b0: float):
        self.b0 = b0

    def induced_c(self, problem: ScaProblem, m: np.ndarray) -> np.ndarray:
        return self.b0 * np.abs(problem.effective(m))

    def start(self, problem: ScaProblem) -> Iterate:
        base = initial_iterate(problem)
        return problem.refresh(self.induced_c(problem, base.m), base.m, base.q)

    def subproblem(self, it: Iterate, problem: ScaProblem) -> Subproblem:
        """Program over (alpha, t, m~) with q fixed.

        ``t_kd >= |m_d^H h_k|`` is an epigraph variable for the induced
        magnitudes; the sum inside (sum_k c_k)^2 / alpha is bounded below by
        the tangent of the (convex) sum of norms.
        """
        K, Da, n2 = problem.K, problem.Da, 2 * problem.n
        b0 = self.b0
        layout = VariableLayout()
        layout.add("alpha", Da)
        layout.add("t", (K, Da))
        layout.add("m", (Da, n2))
        nv = layout.size
        ia, it_idx, im = layout.indices("alpha"), layout.indices("t"), layout.indices("m")
        prog = ConvexProgram.empty(layout)
        prog.objective[ia] = 1.0
        eye = np.eye(nv)
        prog.add(AffineLE(-eye[ia], -ALPHA_FLOOR), "alpha-floor")
        m_lift = lift_vector(it.m)
        mags = np.linalg.norm(np.einsum("kai,di->kda", problem.rows, m_lift), axis=-1)  # K x Da
        for d in range(Da):
            for k in range(K):
                U = np.zeros((2, nv))
                U[:, im[d]] = problem.rows[k]
                prog.add(QuadOverLinLE(U, np.zeros(2), eye[it_idx[k, d]], 0.0, eye[it_idx[k, d]], 0.0),
                         "magnitude")
            c_t = b0 * mags[:, d]
            minor = linearize_gamma1(it.alpha[d], c_t)
            kap = problem.kappa[d]
            rows = []
            r = np.zeros(nv)
            r[it_idx[:, d]] = b0 * np.sqrt(problem.feature_var[d] / kap)
            rows.append(r)
            for k in range(K):
                if problem.sensing[k] > 0:
                    block = np.zeros((2, nv))
                    block[:, im[d]] = b0 * np.sqrt(problem.sensing[k] / kap) * problem.rows[k]
                    rows.extend(block)
            noise = np.concatenate([1.0 + it.q, 1.0 + it.q])
            diag_rows = np.zeros((n2, nv))
            diag_rows[np.arange(n2), im[d]] = np.sqrt(0.5 * noise / kap)
            F = np.vstack([np.array(rows), diag_rows])
            a = np.zeros(nv)
            a[ia[d]] = minor.coef_alpha
            # tangent of b0 * sum_k ||R_k m~|| at the anchor, a global minorant
            for k in range(K):
                if mags[k, d] > 0:
                    grad = problem.rows[k].T @ (problem.rows[k] @ m_lift[d]) / mags[k, d]
                    a[im[d]] += minor.coef_c * b0 * grad
            prog.add(ConvexQuadLE(F, np.zeros(nv), a, minor.const), "lambda")

        anchor = layout.pack(alpha=it.alpha, t=mags, m=m_lift)
        S_t = b0 * mags.sum(axis=0)
        ratio = S_t / it.alpha

        def interior(f):
            t_in = mags * (1.0 + f) + f * max(mags.max(), 1e-300)
            lam = ((b0 * t_in.sum(axis=0)) ** 2 * problem.feature_var
                   + b0 ** 2 * (mags ** 2 * problem.sensing[:, None]).sum(axis=0)
                   + problem.noise(it.m, it.q)) / problem.kappa
            alpha_in = shrink_alpha((2.0 * ratio * S_t - lam) / ratio ** 2, f)
            return layout.pack(alpha=alpha_in, t=t_in, m=m_lift)

        start = interior_start(prog, interior)

        def decode(x):
            m = unlift_vector(layout.unpack(x, "m"))
            c = self.induced_c(problem, m)
            return Iterate(c, m, it.q.copy(), layout.unpack(x, "alpha").copy(), it.beta.copy())

        return Subproblem("sp1", prog, anchor, decode, start)


# --- driver ---------------------------------------------------------------------

def run_baseline(kind: str | BaselineSpec, cfg: SystemConfig, channels: ChannelSet,
                 stats: FeatureStatistics, eps_stop: float = 1e-3, max_iters: int = 50,
                 options: SolverOptions | None = None,
                 start: DesignSolution | None = None) -> tuple[DesignSolution, ScaState]:
    """Run one comparison scheme.

    ``start`` (optional) is a previous solution of the same scheme on the same
    channels; its free variables are reused when the frozen ones can be reset
    to this instance's values without breaking feasibility.
    """
    spec = kind if isinstance(kind, BaselineSpec) else BaselineSpec(kind)
    problem = ScaProblem(cfg, stats, channels)
    warm = warm_iterate(problem, start)
    if spec.kind == "uniform-quantization":
        it = initial_iterate(problem)
        if warm is not None:
            cand = problem.refresh(warm.c, warm.m, it.q)
            it = cand if problem.feasible(cand) else it
        return alternate(problem, it, [build_subproblem1], eps_stop, max_iters, options)
    if spec.kind == "uniform-beamforming":
        ones = np.ones(problem.n, dtype=complex)
        it = _ones_start(problem)
        if warm is not None and np.allclose(warm.m, 1.0):
            it = warm
        return alternate(problem, it, [_sp1_fixed_m, build_subproblem2], eps_stop, max_iters, options,
                         fill_beamformer=ones)
    b0 = spec.fixed_level if spec.fixed_level is not None else fixed_precoding_level(cfg)
    _check_level(cfg, b0)
    level = _FixedLevel(b0)
    it = level.start(problem)
    if start is not None:
        prev = problem.from_solution(start)
        if np.all(prev.q > 0):
            cand = problem.refresh(level.induced_c(problem, prev.m), prev.m, prev.q)
            it = cand if problem.feasible(cand) else it
    return alternate(problem, it, [level.subproblem, build_subproblem2], eps_stop, max_iters, options)
