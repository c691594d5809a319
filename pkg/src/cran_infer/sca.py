"""Alternating successive convex approximation for the joint transceiver design.

Each iteration solves two convex programs:

* subproblem 1 over (alpha, beta, c, m~) with q fixed, where the beamformer
  gains |m_d^H h_k|^2 and the ratio (sum_k c_k)^2 / alpha are replaced by their
  first-order minorants at the current point;
* subproblem 2 over (alpha, q) with (c, m) fixed, where only alpha enters
  through a minorant.

Internally every amplitude is divided by the AWGN standard deviation so the
programs are well scaled.  The map (h, c, q, sigma_z^2) -> (h/s, c/s, q/s^2, 1)
leaves every constraint and the objective unchanged.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .convex.barrier import OPTIMAL, CompiledProgram, SolveReport, SolverOptions, solve
from .convex.program import (AffineLE, ConvexProgram, ConvexQuadLE, LogDetRatioLE, QuadOverLinLE,
                             VariableLayout)
from .metrics import (InactiveDimensionError, class_separation,
                      uniform_quantization_lambda)
from .model import ChannelSet, DesignSolution, FeatureStatistics, SystemConfig, normalized_energy

log = logging.getLogger(__name__)

ALPHA_FLOOR = 1e-8
SHRINK = 1e-2
INTERIOR_SHRINKS = tuple(SHRINK * 10.0 ** -k for k in range(7))
BETA_FLOOR = 1e-12
Q_FLOOR = 1e-9  # in units of the AWGN power
Q_CAP = 1e6


class OptimizerError(RuntimeError):
    """A subproblem could not be solved; ``state`` holds the trace so far."""

    def __init__(self, message: str, state: "ScaState"):
        super().__init__(message)
        self.state = state


# --- real lift ----------------------------------------------------------------

def lift_vector(m: np.ndarray) -> np.ndarray:
    """[Re m; Im m] along the last axis."""
    m = np.asarray(m, dtype=complex)
    return np.concatenate([m.real, m.imag], axis=-1)


def unlift_vector(m_lift: np.ndarray) -> np.ndarray:
    m_lift = np.asarray(m_lift, dtype=float)
    n = m_lift.shape[-1] // 2
    return m_lift[..., :n] + 1j * m_lift[..., n:]


def lift_hermitian(G: np.ndarray) -> np.ndarray:
    """Real symmetric matrix with ``lift(m)^T out lift(m) == m^H G m``."""
    G = np.asarray(G, dtype=complex)
    top = np.concatenate([G.real, -G.imag], axis=-1)
    bottom = np.concatenate([G.imag, G.real], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


@dataclass(frozen=True)
class RealLift:
    beamformers: np.ndarray  # D x 2n
    gain_matrices: np.ndarray  # K x 2n x 2n, lift of h_k h_k^H
    quantization: np.ndarray  # 2n x 2n, lift of diag(q)


def complex_to_real_lift(channels: ChannelSet, q, beamformers=None) -> RealLift:
    H = channels.concatenated
    outer = H[:, :, None] * H[:, None, :].conj()
    q = np.asarray(q, dtype=float)
    if np.any(~(q > 0)):
        raise ValueError("q must be strictly positive")
    m = np.zeros((0, 2 * H.shape[1])) if beamformers is None else lift_vector(beamformers)
    return RealLift(m, lift_hermitian(outer), lift_hermitian(np.diag(q).astype(complex)))


def gain_rows(h: np.ndarray) -> np.ndarray:
    """2 x 2n matrix R with R @ lift(m) = [Re(h^H m), Im(h^H m)]; R^T R = lift(h h^H)."""
    h = np.asarray(h, dtype=complex)
    return np.array([np.concatenate([h.real, h.imag]),
                     np.concatenate([-h.imag, h.real])])


# --- minorants ----------------------------------------------------------------

@dataclass(frozen=True)
class Gamma1Minorant:
    """Affine ``const + coef_alpha * alpha + coef_c * sum(c)``, below (sum c)^2 / alpha."""

    const: float
    coef_alpha: float
    coef_c: float

    def __call__(self, alpha, c) -> float:
        return self.const + self.coef_alpha * alpha + self.coef_c * float(np.sum(c))


def linearize_gamma1(alpha_t: float, c_t) -> Gamma1Minorant:
    if not alpha_t > 0:
        raise ValueError(f"expansion point needs alpha > 0 (got {alpha_t!r})")
    S = float(np.sum(c_t))
    ratio = S / alpha_t
    value = S * S / alpha_t
    const = value + ratio ** 2 * alpha_t - 2.0 * ratio * S
    return Gamma1Minorant(const, -ratio ** 2, 2.0 * ratio)


@dataclass(frozen=True)
class Gamma2Minorant:
    """Affine ``coef @ m_lift + const``, below m_lift^T H m_lift."""

    coef: np.ndarray
    const: float

    def __call__(self, m_lift) -> float:
        return float(self.coef @ np.asarray(m_lift, dtype=float) + self.const)


def linearize_gamma2(m_lift_t, H_lift) -> Gamma2Minorant:
    m_t = np.asarray(m_lift_t, dtype=float)
    Hm = np.asarray(H_lift, dtype=float) @ m_t
    return Gamma2Minorant(2.0 * Hm, -float(m_t @ Hm))


# --- problem data -------------------------------------------------------------

@dataclass
class Iterate:
    """Design variables on the active dimensions, in internal units."""

    c: np.ndarray  # K x Da
    m: np.ndarray  # Da x n complex
    q: np.ndarray  # n
    alpha: np.ndarray  # Da
    beta: np.ndarray  # K x Da

    def copy(self) -> "Iterate":
        return Iterate(self.c.copy(), self.m.copy(), self.q.copy(), self.alpha.copy(), self.beta.copy())


class ScaProblem:
    """Normalized constants shared by all subproblems of one instance."""

    def __init__(self, cfg: SystemConfig, stats: FeatureStatistics, channels: ChannelSet):
        if channels.h.shape != (cfg.K, cfg.M, cfg.N):
            raise ValueError(f"channels have shape {channels.h.shape}, expected {(cfg.K, cfg.M, cfg.N)}")
        if stats.D != cfg.D or stats.L != cfg.L:
            raise ValueError("feature statistics do not match D and L of the config")
        self.cfg, self.stats, self.channels = cfg, stats, channels
        self.scale = float(np.sqrt(cfg.awgn_power))
        self.H = channels.concatenated / self.scale
        if not np.any(np.abs(self.H) > 0):
            raise ValueError("all channel coefficients are zero")
        self.K, self.n = self.H.shape
        kappa = class_separation(stats.class_means)
        self.active = np.flatnonzero(kappa > 0)
        if len(self.active) == 0:
            raise InactiveDimensionError("every dimension has coincident class means")
        self.Da = len(self.active)
        self.kappa = kappa[self.active]
        self.feature_var = stats.feature_variances[self.active]
        self.power = np.asarray(cfg.max_precoding_power, dtype=float)
        self.second_moment = np.asarray(cfg.signal_second_moment, dtype=float)
        self.sensing = np.asarray(cfg.sensing_noise_power, dtype=float)
        self.energy = normalized_energy(cfg)
        self.capacity = float(cfg.fronthaul_capacity)
        A = cfg.fronthaul_power * (self.H.T @ self.H.conj()) + np.eye(self.n)
        self.A = 0.5 * (A + A.conj().T)
        self.rows = np.stack([gain_rows(h) for h in self.H])  # K x 2 x 2n
        self.H_lift = np.einsum("kai,kaj->kij", self.rows, self.rows)

    # evaluation ------------------------------------------------------------

    def effective(self, m: np.ndarray) -> np.ndarray:
        """K x Da complex ``m_d^H h_k``."""
        return np.einsum("di,ki->kd", m.conj(), self.H)

    def noise(self, m, q) -> np.ndarray:
        return 0.5 * np.sum(np.abs(m) ** 2 * (1.0 + q)[None, :], axis=1)

    def gains(self, c, m, q) -> np.ndarray:
        """Received per-dimension discriminant gain on the active dimensions."""
        S = c.sum(axis=0)
        var = S ** 2 * self.feature_var + (c ** 2 * self.sensing[:, None]).sum(axis=0) + self.noise(m, q)
        return self.kappa * S ** 2 / var

    def beta_equality(self, c, m) -> np.ndarray:
        g2 = np.abs(self.effective(m)) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            beta = np.where(c > 0, c ** 2 * self.second_moment[:, None] / g2, 0.0)
        return beta

    def refresh(self, c, m, q) -> Iterate:
        """Point with alpha and beta at their equality values."""
        alpha = self.gains(c, m, q)
        return Iterate(c.copy(), m.copy(), q.copy(), alpha, self.beta_equality(c, m))

    def objective(self, it: Iterate) -> float:
        return float(np.sum(self.gains(it.c, it.m, it.q)))

    def violations(self, it: Iterate) -> dict:
        """Residuals (internal units) of the power, energy and fronthaul constraints; <= 0 is feasible."""
        g2 = np.abs(self.effective(it.m)) ** 2
        rate = _rate(self.A, it.q) if np.all(it.q > 0) else np.inf
        return {
            "power": float(np.max(it.c ** 2 - self.power[:, None] * g2)),
            "energy": float(np.sum(self.beta_equality(it.c, it.m)) - self.energy),
            "fronthaul": rate - self.capacity,
        }

    def feasible(self, it: Iterate) -> bool:
        if np.any(it.c < 0) or not np.all(np.isfinite(it.c)):
            return False
        return all(v <= 0 for v in self.violations(it).values())

    # conversion ------------------------------------------------------------

    def to_solution(self, it: Iterate, fill_beamformer=None) -> DesignSolution:
        D = self.cfg.D
        c = np.zeros((self.K, D))
        c[:, self.active] = it.c * self.scale
        m = np.zeros((D, self.n), dtype=complex)
        default = it.m[0] if fill_beamformer is None else fill_beamformer
        m[:] = default
        m[self.active] = it.m
        alpha = np.zeros(D)
        alpha[self.active] = it.alpha
        beta = np.zeros((self.K, D))
        beta[:, self.active] = it.beta
        return DesignSolution(c, m, it.q * self.scale ** 2, alpha, beta)

    def from_solution(self, sol: DesignSolution) -> Iterate:
        a = self.active
        return Iterate(np.array(sol.receive_strength[:, a]) / self.scale, np.array(sol.beamformers[a]),
                       np.array(sol.quantization_diag) / self.scale ** 2, np.array(sol.aux_gain[a]),
                       np.array(sol.aux_energy[:, a]))


def _rate(A, q) -> float:
    chol = np.linalg.cholesky(A + np.diag(q))
    return float((2.0 * np.sum(np.log(np.abs(np.diag(chol)))) - np.sum(np.log(q))) / np.log(2.0))


# --- initial point ------------------------------------------------------------

def initial_iterate(problem: ScaProblem) -> Iterate:
    H = problem.H
    total = H.sum(axis=0)
    if np.linalg.norm(total) <= 1e-12 * np.max(np.abs(H)):
        # the channels cancel; fall back to the strongest device
        total = H[np.argmax(np.linalg.norm(H, axis=1))]
    m_vec = total / np.linalg.norm(total)
    m = np.tile(m_vec, (problem.Da, 1))
    g = np.abs(problem.effective(m))
    # uniform scaling of the full-power profile c = sqrt(P) |m^H h|, with half of
    # both the power and the energy budget left unused
    full_energy = problem.Da * float(np.sum(problem.power * problem.second_moment))
    gamma2 = 0.5 * min(1.0, problem.energy / full_energy)
    c = np.sqrt(gamma2 * problem.power)[:, None] * g
    lam = uniform_quantization_lambda(problem.A, problem.capacity)
    q = np.full(problem.n, lam)
    return problem.refresh(c, m, q)


def initial_feasible_point(cfg: SystemConfig, channels: ChannelSet, stats: FeatureStatistics) -> DesignSolution:
    problem = ScaProblem(cfg, stats, channels)
    return problem.to_solution(initial_iterate(problem))


# --- subproblems --------------------------------------------------------------

def shrink_alpha(alpha_max, shrink: float = SHRINK):
    """Pull an alpha bound back toward ALPHA_FLOOR so both alpha constraints keep slack."""
    return ALPHA_FLOOR + (1.0 - shrink) * (np.asarray(alpha_max, dtype=float) - ALPHA_FLOOR)


def interior_start(program: ConvexProgram, make: Callable[[float], np.ndarray]) -> np.ndarray | None:
    """First strictly feasible ``make(f)`` over shrinking factors f, or None.

    A large shrink can cost more objective slack than a dimension pinned near
    ALPHA_FLOOR has, so smaller factors are tried before giving up (the
    solver then runs its feasibility phase from the anchor).
    """
    comp = CompiledProgram(program)
    for f in INTERIOR_SHRINKS:
        x = make(f)
        if np.all(np.isfinite(x)) and comp.strictly_feasible(x):
            return x
    return None


@dataclass
class Subproblem:
    """A convex program with its anchor, a nearby strictly feasible start and a decoder.

    The anchor (current point) is feasible but usually sits on the boundary;
    ``start`` is a slightly shrunk copy that lies in the interior, which
    spares the solver a feasibility phase.
    """

    name: str
    program: ConvexProgram
    anchor: np.ndarray
    decode: Callable[[np.ndarray], Iterate]
    start: np.ndarray | None = None


def _lambda_quad(problem: ScaProblem, layout: VariableLayout, d: int, q, minor: Gamma1Minorant,
                 c_idx, m_idx, alpha_idx) -> ConvexQuadLE:
    """Lambda_d(c, m~) <= Gamma1-minorant(alpha_d, c) as a convex quadratic."""
    n = layout.size
    kap = problem.kappa[d]
    rows = []
    r = np.zeros(n)
    r[c_idx] = problem.feature_var[d] ** 0.5 / kap ** 0.5
    rows.append(r)
    for k in range(problem.K):
        if problem.sensing[k] > 0:
            r = np.zeros(n)
            r[c_idx[k]] = np.sqrt(problem.sensing[k] / kap)
            rows.append(r)
    diag_rows = np.zeros((len(m_idx), n))
    if len(m_idx):
        noise = np.concatenate([1.0 + q, 1.0 + q])
        diag_rows[np.arange(len(m_idx)), m_idx] = np.sqrt(0.5 * noise / kap)
    F = np.vstack([np.array(rows), diag_rows])
    a = np.zeros(n)
    a[alpha_idx] = minor.coef_alpha
    a[c_idx] = minor.coef_c
    return ConvexQuadLE(F, np.zeros(n), a, minor.const)


def build_subproblem1(it: Iterate, problem: ScaProblem, fixed_beamformer: bool = False) -> Subproblem:
    """Program over (alpha, beta, c, m~) with q fixed.

    With ``fixed_beamformer`` the beamformers are constants and the gains
    |m^H h|^2 enter exactly (no minorant needed).
    """
    K, Da, n2 = problem.K, problem.Da, 2 * problem.n
    layout = VariableLayout()
    layout.add("alpha", Da)
    layout.add("beta", (K, Da))
    layout.add("c", (K, Da))
    if not fixed_beamformer:
        layout.add("m", (Da, n2))
    nv = layout.size
    prog = ConvexProgram.empty(layout)
    prog.objective[layout.slice("alpha")] = 1.0
    ia, ib, ic = layout.indices("alpha"), layout.indices("beta"), layout.indices("c")
    eye = np.eye(nv)
    prog.add(AffineLE(-eye[ia], -ALPHA_FLOOR), "alpha-floor")
    prog.add(AffineLE(-eye[ib.ravel()], -BETA_FLOOR), "beta-floor")
    prog.add(AffineLE(-eye[ic.ravel()], 0.0), "c-nonneg")
    budget = np.zeros(nv)
    budget[ib.ravel()] = 1.0
    prog.add(AffineLE(budget, problem.energy), "energy")

    m_lift = lift_vector(it.m)
    g2_fixed = np.abs(problem.effective(it.m)) ** 2
    for d in range(Da):
        for k in range(K):
            if fixed_beamformer:
                l_vec, l0 = np.zeros(nv), float(g2_fixed[k, d])
            else:
                minor = linearize_gamma2(m_lift[d], problem.H_lift[k])
                l_vec = np.zeros(nv)
                l_vec[layout.indices("m")[d]] = minor.coef
                l0 = minor.const
            F = np.zeros((1, nv))
            F[0, ic[k, d]] = 1.0 / np.sqrt(problem.power[k])
            prog.add(ConvexQuadLE(F, np.zeros(nv), l_vec, l0), "power")
            U = np.zeros((1, nv))
            U[0, ic[k, d]] = np.sqrt(problem.second_moment[k])
            prog.add(QuadOverLinLE(U, np.zeros(1), eye[ib[k, d]], 0.0, l_vec, l0), "energy-aux")
        minor1 = linearize_gamma1(it.alpha[d], it.c[:, d])
        if fixed_beamformer:
            # the m-dependent noise term is a constant moved into the bound
            noise = problem.noise(it.m[d:d + 1], it.q)[0] / problem.kappa[d]
            minor1 = Gamma1Minorant(minor1.const - noise, minor1.coef_alpha, minor1.coef_c)
            m_idx = np.zeros(0, dtype=int)
        else:
            m_idx = layout.indices("m")[d]
        prog.add(_lambda_quad(problem, layout, d, it.q, minor1, ic[:, d], m_idx, ia[d]), "lambda")

    values = dict(alpha=it.alpha, beta=np.maximum(it.beta, BETA_FLOOR), c=it.c)
    if not fixed_beamformer:
        values["m"] = m_lift
    anchor = layout.pack(**values)
    start = interior_start(prog, lambda f: _interior_sp1(it, problem, layout, fixed_beamformer, f))

    def decode(x):
        c = np.maximum(layout.unpack(x, "c"), 0.0)
        m = it.m if fixed_beamformer else unlift_vector(layout.unpack(x, "m"))
        out = Iterate(c, m.copy(), it.q.copy(), layout.unpack(x, "alpha").copy(),
                      layout.unpack(x, "beta").copy())
        return out

    return Subproblem("sp1", prog, anchor, decode, start)


def _interior_sp1(it: Iterate, problem: ScaProblem, layout: VariableLayout, fixed_beamformer: bool,
                  shrink: float = SHRINK):
    """Shrink c, then pick beta and alpha with slack in every constraint."""
    c = (1.0 - shrink) * it.c
    beta = np.maximum(problem.beta_equality(c, it.m) / (1.0 - shrink), 2.0 * BETA_FLOOR)
    S_t = it.c.sum(axis=0)
    S = c.sum(axis=0)
    lam = (S ** 2 * problem.feature_var + (c ** 2 * problem.sensing[:, None]).sum(axis=0)
           + problem.noise(it.m, it.q)) / problem.kappa
    r = S_t / it.alpha
    alpha = shrink_alpha((2.0 * r * S - lam) / r ** 2, shrink)
    values = dict(alpha=alpha, beta=beta, c=c)
    if not fixed_beamformer:
        values["m"] = lift_vector(it.m)
    return layout.pack(**values)


def build_subproblem2(it: Iterate, problem: ScaProblem) -> Subproblem:
    """Program over (alpha, q) with (c, m) fixed."""
    Da, n = problem.Da, problem.n
    layout = VariableLayout()
    layout.add("alpha", Da)
    layout.add("q", n)
    nv = layout.size
    prog = ConvexProgram.empty(layout)
    prog.objective[layout.slice("alpha")] = 1.0
    ia, iq = layout.indices("alpha"), layout.indices("q")
    eye = np.eye(nv)
    prog.add(AffineLE(-eye[ia], -ALPHA_FLOOR), "alpha-floor")
    prog.add(AffineLE(-eye[iq], -Q_FLOOR), "q-floor")
    prog.add(AffineLE(eye[iq], Q_CAP), "q-cap")
    prog.add(LogDetRatioLE(problem.A, iq, problem.capacity), "fronthaul")
    S = it.c.sum(axis=0)
    fixed = (S ** 2 * problem.feature_var + (it.c ** 2 * problem.sensing[:, None]).sum(axis=0)
             + problem.noise(it.m, np.zeros(n)))
    rows, bounds = [], []
    for d in range(Da):
        minor = linearize_gamma1(it.alpha[d], it.c[:, d])
        row = np.zeros(nv)
        row[iq] = 0.5 * np.abs(it.m[d]) ** 2 / problem.kappa[d]
        row[ia[d]] = -minor.coef_alpha
        rows.append(row)
        bounds.append(minor.const + minor.coef_c * S[d] - fixed[d] / problem.kappa[d])
    prog.add(AffineLE(np.array(rows), np.array(bounds)), "lambda")
    anchor = layout.pack(alpha=it.alpha, q=it.q)
    # raising q lowers the rate strictly; alpha then absorbs the extra noise
    rows, bounds = np.array(rows), np.array(bounds)

    def interior(f):
        q_in = np.minimum(it.q * (1.0 + f), Q_CAP * (1.0 - f))
        alpha_in = (bounds - rows[:, iq] @ q_in) / rows[np.arange(Da), ia]
        return layout.pack(alpha=shrink_alpha(alpha_in, f), q=q_in)

    start = interior_start(prog, interior)

    def decode(x):
        return Iterate(it.c.copy(), it.m.copy(), np.maximum(layout.unpack(x, "q"), Q_FLOOR),
                       layout.unpack(x, "alpha").copy(), it.beta.copy())

    return Subproblem("sp2", prog, anchor, decode, start)


# --- driver -------------------------------------------------------------------

@dataclass
class TraceRow:
    iter: int
    half: int
    objective: float
    subproblem: str
    newton_steps: int
    violation: float


@dataclass
class ScaState:
    solution: DesignSolution
    iteration: int = 0
    trace: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    converged: bool = False

    @property
    def objectives(self) -> np.ndarray:
        return np.array([row.objective for row in self.trace])


Step = Callable[[Iterate, ScaProblem], Subproblem]


def alternate(problem: ScaProblem, start: Iterate, steps: list[Step], eps_stop: float = 1e-3,
              max_iters: int = 50, options: SolverOptions | None = None,
              fill_beamformer=None) -> tuple[DesignSolution, ScaState]:
    """Cycle through ``steps`` until a full cycle gains less than ``eps_stop``.

    After every solve, alpha and beta are reset to their equality values; a
    candidate that lowers the received gain (possible only by solver
    tolerance) is discarded, so the trace never decreases.
    """
    if not eps_stop > 0:
        raise ValueError("eps_stop must be positive")
    options = options or SolverOptions()
    it = start
    G = problem.objective(it)
    state = ScaState(problem.to_solution(it, fill_beamformer))
    state.trace.append(TraceRow(0, 0, G, "init", 0, 0.0))
    for t in range(1, max_iters + 1):
        G_prev = G
        for half, step in enumerate(steps, start=1):
            sub = step(it, problem)
            warm = sub.anchor if sub.start is None else sub.start
            report: SolveReport = solve(sub.program, warm_start=warm, options=options)
            state.reports.append(report)
            if report.status != OPTIMAL:
                state.solution = problem.to_solution(it, fill_beamformer)
                raise OptimizerError(f"{sub.name} at iteration {t}: {report.status}", state)
            cand = sub.decode(report.x)
            cand = problem.refresh(cand.c, cand.m, cand.q)
            G_cand = problem.objective(cand)
            if np.isfinite(G_cand) and G_cand >= G:
                it, G = cand, G_cand
            state.trace.append(TraceRow(t, half, G, sub.name, report.newton_steps, report.max_violation))
        state.iteration = t
        if G - G_prev < eps_stop:
            state.converged = True
            break
    state.solution = problem.to_solution(it, fill_beamformer)
    return state.solution, state


def warm_iterate(problem: ScaProblem, start: DesignSolution | None) -> Iterate | None:
    """``start`` as an iterate of ``problem`` if it is feasible there, else None."""
    if start is None:
        return None
    it = problem.from_solution(start)
    if np.any(it.c.sum(axis=0) <= 0):
        return None
    it = problem.refresh(it.c, it.m, it.q)
    return it if problem.feasible(it) else None


def run_algorithm1(cfg: SystemConfig, channels: ChannelSet, stats: FeatureStatistics,
                   eps_stop: float = 1e-3, max_iters: int = 50, options: SolverOptions | None = None,
                   start: DesignSolution | None = None) -> tuple[DesignSolution, ScaState]:
    """Alternate subproblems 1 and 2 from the default initial point.

    ``start``, when given and feasible for this instance, replaces the default
    initial point (used to continue a sweep from its previous value).
    """
    problem = ScaProblem(cfg, stats, channels)
    it = warm_iterate(problem, start) or initial_iterate(problem)
    return alternate(problem, it, [build_subproblem1, build_subproblem2], eps_stop, max_iters, options)


def transmit_scalars(sol: DesignSolution, channels: ChannelSet) -> np.ndarray:
    """Zero-forcing precoders b_k(d) = c_k(d) (m_d^H h_k)^* / |m_d^H h_k|^2."""
    g = sol.effective_gains(channels)
    c = sol.receive_strength
    if np.any((c > 0) & (g == 0)):
        raise ValueError("vanishing effective channel for a device with c > 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(c > 0, c * g.conj() / np.abs(g) ** 2, 0.0)
    return b


TRACE_HEADER = ("iter", "half", "objective", "subproblem", "newton_steps", "violation")


def write_trace(target, rows, scheme: str | None = None) -> None:
    """Write trace rows to a path or an open text stream."""
    if hasattr(target, "write"):
        _write_trace_rows(target, rows, scheme)
        return
    with open(target, "w", newline="") as fh:
        _write_trace_rows(fh, rows, scheme)


def _write_trace_rows(fh, rows, scheme):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_HEADER + (("scheme",) if scheme else ()))
    for r in rows:
        w.writerow([r.iter, r.half, repr(r.objective), r.subproblem, r.newton_steps,
                    repr(r.violation)] + ([scheme] if scheme else []))
