"""Logarithmic-barrier interior-point method for :class:`ConvexProgram`.

Constraint records are compiled into dense stacked blocks so that barrier
values, gradients and Hessians are evaluated with a handful of matrix
products per Newton step.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .program import AffineLE, ConvexProgram, ConvexQuadLE, LogDetRatioLE, QuadOverLinLE

log = logging.getLogger(__name__)

LN2 = np.log(2.0)

# Constraint values are formed in extended precision: late in the barrier
# schedule the slacks are ~1e-10 of the terms that cancel inside them.
XP = np.longdouble

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical-failure"

PHASE1_MARGIN = 1.0
PHASE1_T0 = 1.0


@dataclass(frozen=True)
class SolverOptions:
    mu: float = 10.0
    gap_tol: float = 1e-8
    newton_tol: float = 1e-10
    ls_alpha: float = 0.3
    ls_beta: float = 0.8
    max_newton: int = 200
    max_outer: int = 60
    t0: float | None = None
    regularization: float = 1e-12
    kkt_tol: float = 1e-6
    violation_tol: float = 1e-7


DEFAULT_OPTIONS = SolverOptions()


@dataclass
class SolveReport:
    x: np.ndarray
    objective: float
    barrier_iterations: int
    newton_steps: int
    max_violation: float
    status: str
    kkt_residual: float = np.inf
    duality_gap: float = np.inf
    objective_trace: list = field(default_factory=list)
    phase1_newton_steps: int = 0

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def logdet_gradient_hessian(A, q):
    """Value, gradient and Hessian over ``q`` of ``log2 det(A + diag q) - sum log2 q``."""
    q = np.asarray(q, dtype=float)
    if np.any(~(q > 0)):
        raise ValueError("q must be strictly positive")
    X = np.asarray(A) + np.diag(q)
    cf = scipy.linalg.cho_factor(X, lower=True)
    logdet = 2.0 * np.sum(np.log(np.abs(np.diag(cf[0]))))
    Xinv = scipy.linalg.cho_solve(cf, np.eye(len(q), dtype=X.dtype))
    value = (logdet - np.sum(np.log(q))) / LN2
    grad = (np.real(np.diag(Xinv)) - 1.0 / q) / LN2
    hess = (np.diag(1.0 / q ** 2) - np.abs(Xinv) ** 2) / LN2
    return float(value), grad, 0.5 * (hess + hess.T)


# --- compiled blocks --------------------------------------------------------

class _Affine:
    def __init__(self, records):
        rows = [r.rows() for r in records]
        self.G = np.vstack([a for a, _ in rows])
        self.h = np.concatenate([b for _, b in rows])
        self.theta = self.G.shape[0]
        self._G = self.G.astype(XP)
        self._h = self.h.astype(XP)

    def residual(self, x):
        return (self._G @ np.asarray(x, dtype=XP) - self._h).astype(float)

    def value(self, x):
        f = self.residual(x)
        if np.any(f >= 0):
            return np.inf
        return -np.sum(np.log(-f))

    def derivs(self, x):
        f = self.residual(x)
        inv = 1.0 / (-f)
        return (-np.sum(np.log(-f)), self.G.T @ inv, (self.G.T * inv ** 2) @ self.G)

    def abs_grad(self, x):
        return np.abs(self.G).T @ (1.0 / np.abs(self.residual(x)))

    def required_slack(self, x):
        return self.residual(x)


class _Quad:
    # f_i(x) = ||F_i x||^2 + g_i x - b_i
    def __init__(self, records, n):
        Fs = [np.atleast_2d(np.asarray(r.F, dtype=float)).reshape(-1, n) for r in records]
        self.F = np.vstack(Fs) if Fs else np.zeros((0, n))
        group = np.concatenate([np.full(len(F), i) for i, F in enumerate(Fs)]).astype(int)
        self.S = np.zeros((len(records), len(group)))
        self.S[group, np.arange(len(group))] = 1.0
        self.group = group
        self.g = np.vstack([np.asarray(r.r, dtype=float) - np.asarray(r.a, dtype=float) for r in records])
        self.b = np.array([float(r.b) for r in records])
        self.theta = len(records)
        self.starts = np.searchsorted(group, np.arange(len(records)))
        self._F, self._g, self._b = self.F.astype(XP), self.g.astype(XP), self.b.astype(XP)

    def residual(self, x):
        xe = np.asarray(x, dtype=XP)
        z = self._F @ xe
        return (np.add.reduceat(z * z, self.starts) + self._g @ xe - self._b).astype(float)

    def value(self, x):
        f = self.residual(x)
        if np.any(f >= 0):
            return np.inf
        return -np.sum(np.log(-f))

    def derivs(self, x):
        z = self.F @ np.asarray(x, dtype=float)
        f = self.residual(x)
        inv = 1.0 / (-f)
        J = self.g + 2.0 * self.S @ (z[:, None] * self.F)
        w_row = inv[self.group]
        H = (J.T * inv ** 2) @ J + 2.0 * (self.F.T * w_row) @ self.F
        return -np.sum(np.log(-f)), J.T @ inv, H

    def abs_grad(self, x):
        z = self.F @ np.asarray(x, dtype=float)
        f = self.residual(x)
        J = self.g + 2.0 * self.S @ (z[:, None] * self.F)
        return np.abs(J).T @ (1.0 / np.abs(f))

    def required_slack(self, x):
        return self.residual(x)


class _QuadOverLin:
    # s = v*l - ||u||^2 > 0, v > 0, l > 0
    def __init__(self, records, n):
        Us = [np.atleast_2d(np.asarray(r.U, dtype=float)).reshape(-1, n) for r in records]
        self.U = np.vstack(Us)
        self.u0 = np.concatenate([np.atleast_1d(np.asarray(r.u0, dtype=float)) for r in records])
        group = np.concatenate([np.full(len(U), i) for i, U in enumerate(Us)]).astype(int)
        self.S = np.zeros((len(records), len(group)))
        self.S[group, np.arange(len(group))] = 1.0
        self.group = group
        self.V = np.vstack([np.asarray(r.v, dtype=float) for r in records])
        self.v0 = np.array([float(r.v0) for r in records])
        self.Lm = np.vstack([np.asarray(r.l, dtype=float) for r in records])
        self.l0 = np.array([float(r.l0) for r in records])
        self.theta = 4 * len(records)
        self.starts = np.searchsorted(group, np.arange(len(records)))
        self._ext = [a.astype(XP) for a in (self.U, self.u0, self.V, self.v0, self.Lm, self.l0)]

    def _parts(self, x):
        U, u0, V, v0, Lm, l0 = self._ext
        xe = np.asarray(x, dtype=XP)
        u = U @ xe + u0
        v = V @ xe + v0
        l = Lm @ xe + l0
        s = v * l - np.add.reduceat(u * u, self.starts)
        return u.astype(float), v.astype(float), l.astype(float), s.astype(float)

    def residual(self, x):
        u, v, l, s = self._parts(x)
        return np.concatenate([-s, -v, -l])

    def value(self, x):
        u, v, l, s = self._parts(x)
        if np.any(s <= 0) or np.any(v <= 0) or np.any(l <= 0):
            return np.inf
        return -np.sum(np.log(s) + np.log(v) + np.log(l))

    def derivs(self, x):
        u, v, l, s = self._parts(x)
        Js = l[:, None] * self.V + v[:, None] * self.Lm - 2.0 * self.S @ (u[:, None] * self.U)
        inv_s = 1.0 / s
        grad = -(Js.T @ inv_s) - self.V.T @ (1.0 / v) - self.Lm.T @ (1.0 / l)
        cross = (self.V.T * inv_s) @ self.Lm
        H = ((Js.T * inv_s ** 2) @ Js - (cross + cross.T)
             + 2.0 * (self.U.T * inv_s[self.group]) @ self.U
             + (self.V.T / v ** 2) @ self.V + (self.Lm.T / l ** 2) @ self.Lm)
        val = -np.sum(np.log(s) + np.log(v) + np.log(l))
        return val, grad, H

    def abs_grad(self, x):
        u, v, l, s = self._parts(x)
        Js = l[:, None] * self.V + v[:, None] * self.Lm - 2.0 * self.S @ (u[:, None] * self.U)
        return np.abs(Js).T @ (1.0 / s) + np.abs(self.V).T @ (1.0 / v) + np.abs(self.Lm).T @ (1.0 / l)

    def required_slack(self, x):
        # smallest sigma with (v+sigma)(l+sigma) >= ||u||^2 and v+sigma, l+sigma >= 0
        u, v, l, _ = self._parts(x)
        uu = self.S @ (u * u)
        root = 0.5 * (-(v + l) + np.sqrt((v - l) ** 2 + 4.0 * uu))
        return np.maximum(root, np.maximum(-v, -l))


def _log_det_ratio_xp(A, q):
    """ln det(A + diag q) - sum ln q by Hermitian elimination in extended precision.

    Returns inf outside the domain (q <= 0 or a non-positive pivot).
    """
    q = np.asarray(q, dtype=XP)
    if np.any(q <= 0):
        return np.inf
    X = np.array(A, dtype=np.clongdouble)
    X[np.diag_indices_from(X)] += q
    total = XP(0.0)
    for j in range(len(q)):
        pivot = X[j, j].real
        if not pivot > 0:
            return XP(np.inf)
        total += np.log(pivot / q[j])
        col = X[j + 1:, j]
        X[j + 1:, j + 1:] -= np.outer(col, col.conj()) / pivot
    return total


class _LogDet:
    def __init__(self, record: LogDetRatioLE, n):
        self.A = np.asarray(record.A)
        self.index = np.asarray(record.index, dtype=int)
        self.bound = float(record.bound)
        self.slack = record.slack
        self.n = n
        self.theta = 1

    def _q(self, x):
        return np.asarray(x[self.index], dtype=float)

    def _slack(self, x):
        """rate - bound, formed in extended precision."""
        q = np.asarray(x[self.index], dtype=XP)
        return float(_log_det_ratio_xp(self.A, q) / XP(LN2) - XP(self.bound))

    def residual(self, x):
        f = self._slack(x)
        if self.slack is not None:
            f = float(f - x[self.slack])
        return np.array([f])

    def value(self, x):
        f = self.residual(x)[0]
        if not f < 0:
            return np.inf
        return -np.log(-f)

    def derivs(self, x):
        _, gq, Hq = logdet_gradient_hessian(self.A, self._q(x))
        f = self.residual(x)[0]
        grad_f = np.zeros(self.n)
        grad_f[self.index] = gq
        if self.slack is not None:
            grad_f[self.slack] = -1.0
        inv = 1.0 / (-f)
        H = np.outer(grad_f, grad_f) * inv ** 2
        H[np.ix_(self.index, self.index)] += Hq * inv
        return -np.log(-f), grad_f * inv, H

    def abs_grad(self, x):
        _, g, _ = self.derivs(x)
        return np.abs(g)

    def required_slack(self, x):
        f = self._slack(x)
        return np.array([f])

    def project_domain(self, x, floor):
        q = x[self.index]
        x = x.copy()
        x[self.index] = np.maximum(q, floor)
        return x


class CompiledProgram:
    """Barrier function of a :class:`ConvexProgram`."""

    def __init__(self, prog: ConvexProgram):
        prog.validate()
        n = prog.n
        self.n = n
        self.c = np.asarray(prog.objective, dtype=float)
        kinds = {AffineLE: [], ConvexQuadLE: [], QuadOverLinLE: [], LogDetRatioLE: []}
        for rec in prog.constraints:
            kinds[type(rec)].append(rec)
        self.blocks = []
        if kinds[AffineLE]:
            self.blocks.append(_Affine(kinds[AffineLE]))
        if kinds[ConvexQuadLE]:
            self.blocks.append(_Quad(kinds[ConvexQuadLE], n))
        if kinds[QuadOverLinLE]:
            self.blocks.append(_QuadOverLin(kinds[QuadOverLinLE], n))
        self.logdets = [_LogDet(r, n) for r in kinds[LogDetRatioLE]]
        self.blocks.extend(self.logdets)
        self.theta = sum(b.theta for b in self.blocks)

    def barrier(self, x) -> float:
        total = 0.0
        for b in self.blocks:
            v = b.value(x)
            if not np.isfinite(v):
                return np.inf
            total += v
        return total

    def derivs(self, x):
        val, g, H = 0.0, np.zeros(self.n), np.zeros((self.n, self.n))
        for b in self.blocks:
            bv, bg, bH = b.derivs(x)
            val += bv
            g += bg
            H += bH
        return val, g, H

    def residuals(self, x) -> np.ndarray:
        parts = [b.residual(x) for b in self.blocks]
        return np.concatenate(parts) if parts else np.zeros(0)

    def max_violation(self, x) -> float:
        r = self.residuals(x)
        return float(max(0.0, r.max(initial=-np.inf))) if np.all(np.isfinite(r)) else np.inf

    def strictly_feasible(self, x) -> bool:
        return np.isfinite(self.barrier(x))

    def required_slack(self, x) -> float:
        parts = [b.required_slack(x) for b in self.blocks]
        return float(np.concatenate(parts).max(initial=-np.inf)) if parts else -np.inf


# --- Newton machinery ---------------------------------------------------------

def _newton_direction(H, g, reg0):
    n = len(g)
    scale = max(1.0, float(np.max(np.abs(np.diag(H))))) if n else 1.0
    reg = 0.0
    for _ in range(12):
        try:
            cf = scipy.linalg.cho_factor(H + reg * np.eye(n), lower=True, check_finite=False)
            return scipy.linalg.cho_solve(cf, -g, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            reg = reg0 * scale if reg == 0.0 else reg * 100.0
    return np.linalg.lstsq(H, -g, rcond=None)[0]


def _center(comp: CompiledProgram, x, t, opts: SolverOptions, stop=None):
    """Minimize t*(-c x) + barrier(x) from strictly feasible x.

    Returns (x, newton_steps, stalled, decrement).
    """
    steps = 0
    lam2 = np.inf
    for _ in range(opts.max_newton):
        bval, bg, H = comp.derivs(x)
        g = -t * comp.c + bg
        dx = _newton_direction(H, g, opts.regularization)
        slope = float(g @ dx)
        lam2 = -slope
        if lam2 / 2.0 <= opts.newton_tol:
            return x, steps, False, lam2
        if slope >= 0:
            return x, steps, True, lam2
        # the linear term is differenced analytically; t * c @ x is huge late in
        # the schedule and would swamp the decrease in rounding error
        lin = -t * float(comp.c @ dx)
        s = 1.0
        while s > 1e-20 and not comp.strictly_feasible(x + s * dx):
            s *= opts.ls_beta
        while s > 1e-20:
            xn = x + s * dx
            change = s * lin + (comp.barrier(xn) - bval)
            if change <= opts.ls_alpha * s * slope:
                break
            s *= opts.ls_beta
        steps += 1
        if s <= 1e-20:
            return x, steps, True, lam2
        x = xn
        if stop is not None and stop(x):
            return x, steps, False, lam2
    return x, steps, True, lam2


def _barrier_loop(comp: CompiledProgram, x, opts: SolverOptions, stop_after_center=None):
    stop = stop_after_center
    theta = max(comp.theta, 1)
    obj0 = abs(float(comp.c @ x))
    t = opts.t0 if opts.t0 is not None else max(1e-6, theta / max(1.0, obj0))
    trace, newton, outer = [], 0, 0
    stalled_last = False
    lam2 = np.inf
    while True:
        x, steps, stalled, lam2 = _center(comp, x, t, opts, stop)
        newton += steps
        outer += 1
        stalled_last = stalled
        trace.append(float(comp.c @ x))
        if stop_after_center is not None and stop_after_center(x):
            break
        if theta / t <= opts.gap_tol or outer >= opts.max_outer:
            break
        t *= opts.mu
    return x, t, newton, outer, trace, stalled_last, lam2


def _polish(comp: CompiledProgram, x, t, opts: SolverOptions, max_steps: int = 5):
    """Undamped Newton steps at fixed t, kept while the gradient norm shrinks.

    Near the central point Newton converges quadratically, but the decrease in
    the barrier objective is lost in rounding, so acceptance is decided on the
    gradient instead of the function value.
    """
    steps = 0
    _, bg, H = comp.derivs(x)
    g = -t * comp.c + bg
    for _ in range(max_steps):
        dx = _newton_direction(H, g, opts.regularization)
        xn = x + dx
        if not comp.strictly_feasible(xn):
            break
        _, bgn, Hn = comp.derivs(xn)
        gn = -t * comp.c + bgn
        if not np.linalg.norm(gn) < np.linalg.norm(g):
            break
        x, g, H = xn, gn, Hn
        steps += 1
    return x, steps


def _kkt_residual(comp: CompiledProgram, x, t):
    """Largest stationarity error, each coordinate relative to the terms that cancel in it.

    The multiplier estimates are ``1 / (t * -f_i)``; coordinate j of
    ``c - sum_i lambda_i grad f_i`` is divided by ``max(1, |c_j|, sum_i |lambda_i grad_j f_i|)``.
    """
    _, bg, _ = comp.derivs(x)
    r = -comp.c + bg / t
    scale = sum(b.abs_grad(x) for b in comp.blocks) / t if comp.blocks else 0.0
    denom = np.maximum(np.maximum(1.0, np.abs(comp.c)), scale)
    return float(np.max(np.abs(r) / denom, initial=0.0))


# --- feasibility phase --------------------------------------------------------

@dataclass
class FeasibilityResult:
    feasible: bool
    x: np.ndarray
    slack: float
    newton_steps: int


def _phase1_program(prog: ConvexProgram, s_floor: float, center, radius) -> tuple[ConvexProgram, int]:
    layout = prog.layout.copy()
    layout.add("__phase1_slack", 1)
    n = layout.size
    js = n - 1

    def ext(v, last=0.0):
        v = np.asarray(v, dtype=float)
        if v.ndim == 2:
            out = np.zeros((v.shape[0], n))
            out[:, :-1] = v
            out[:, -1] = last
            return out
        return np.append(v, last)

    aux = ConvexProgram.empty(layout)
    aux.objective[js] = -1.0
    for rec, tag in zip(prog.constraints, prog.tags):
        if isinstance(rec, AffineLE):
            a, b = rec.rows()
            aux.add(AffineLE(ext(a, -1.0), b), tag)
        elif isinstance(rec, ConvexQuadLE):
            aux.add(ConvexQuadLE(ext(np.atleast_2d(rec.F)), ext(rec.r), ext(rec.a, 1.0), rec.b), tag)
        elif isinstance(rec, QuadOverLinLE):
            aux.add(QuadOverLinLE(ext(np.atleast_2d(rec.U)), rec.u0, ext(rec.v, 1.0), rec.v0,
                                  ext(rec.l, 1.0), rec.l0), tag)
        elif isinstance(rec, LogDetRatioLE):
            aux.add(LogDetRatioLE(rec.A, rec.index, rec.bound, slack=js), tag)
    bound = np.zeros(n)
    bound[js] = -1.0
    aux.add(AffineLE(bound, s_floor), "phase1-floor")
    # box around the start keeps directions that no constraint limits from
    # running off to infinity while the slack is driven down
    eye = np.eye(n)[:-1]
    aux.add(AffineLE(np.vstack([eye, -eye]),
                     np.concatenate([center + radius, radius - center])), "phase1-box")
    return aux, js


def feasibility_phase(prog: ConvexProgram, x0=None, options: SolverOptions = DEFAULT_OPTIONS,
                      domain_floor: float = 1e-9, box_scale: float = 1e4) -> FeasibilityResult:
    """Find a strictly feasible point, or certify that none exists.

    Minimizes a common slack ``s`` added to every constraint, with every
    coordinate kept within ``box_scale * (1 + |x0_i|)`` of the start.  The
    certificate is therefore relative to that box.  A strictly feasible warm
    start is returned as is, without Newton iterations.
    """
    comp = CompiledProgram(prog)
    x = np.zeros(prog.n) if x0 is None else np.array(x0, dtype=float)
    for ld in comp.logdets:
        x = ld.project_domain(x, domain_floor)
    if comp.strictly_feasible(x):
        return FeasibilityResult(True, x, comp.required_slack(x), 0)
    s_req = comp.required_slack(x)
    if not np.isfinite(s_req):
        raise ValueError("warm start outside the domain of a constraint")
    s0 = s_req + PHASE1_MARGIN * max(1.0, abs(s_req))
    radius = box_scale * (1.0 + np.abs(x))
    aux, js = _phase1_program(prog, max(1.0, abs(s0)), x, radius)
    aux_comp = CompiledProgram(aux)
    xa = np.append(x, s0)
    if not aux_comp.strictly_feasible(xa):
        raise ValueError("could not build a strictly feasible start for the feasibility phase")
    opts = SolverOptions(**{**options.__dict__, "t0": PHASE1_T0 / (s0 - s_req)})
    xa, t, newton, outer, trace, stalled, _ = _barrier_loop(
        aux_comp, xa, opts, stop_after_center=lambda z: z[js] < 0 and comp.strictly_feasible(z[:-1]))
    x = xa[:-1]
    if comp.strictly_feasible(x):
        return FeasibilityResult(True, x, float(xa[js]), newton)
    return FeasibilityResult(False, x, float(xa[js]), newton)


# --- main entry ---------------------------------------------------------------

def solve(prog: ConvexProgram, warm_start=None, options: SolverOptions = DEFAULT_OPTIONS) -> SolveReport:
    """Maximize ``prog.objective @ x`` with the barrier method."""
    comp = CompiledProgram(prog)
    feas = feasibility_phase(prog, warm_start, options)
    if not feas.feasible:
        x = feas.x
        return SolveReport(x, float(comp.c @ x), 0, feas.newton_steps, comp.max_violation(x),
                           INFEASIBLE, phase1_newton_steps=feas.newton_steps)
    # the iterate is carried in extended precision: near the end of the schedule
    # a float64 rounding of x moves constraint values by more than their slack
    x, t, newton, outer, trace, stalled, lam2 = _barrier_loop(comp, feas.x.astype(XP), options)
    # a few extra Newton steps at the final t; convergence is quadratic here,
    # so this drives the stationarity residual well below the decrement test
    x, steps = _polish(comp, x, t, options)
    newton += steps
    kkt = _kkt_residual(comp, x, t)
    x = x.astype(float)
    gap = comp.theta / t
    viol = comp.max_violation(x)
    status = OPTIMAL
    if not (np.all(np.isfinite(x)) and kkt <= options.kkt_tol and viol <= options.violation_tol):
        status = NUMERICAL_FAILURE
        log.warning("barrier method ended without a certified optimum "
                    "(stalled=%s, kkt=%.3e, gap=%.3e, violation=%.3e)", stalled, kkt, gap, viol)
    return SolveReport(x=x, objective=float(comp.c @ x), barrier_iterations=outer,
                       newton_steps=newton + feas.newton_steps, max_violation=viol, status=status,
                       kkt_residual=kkt, duality_gap=gap, objective_trace=trace,
                       phase1_newton_steps=feas.newton_steps)
