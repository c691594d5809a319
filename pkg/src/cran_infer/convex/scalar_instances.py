"""Small programs (at most three scalar variables) with a search box.

They exercise every constraint family on data that a brute-force grid can
check independently of the barrier method.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .program import AffineLE, ConvexProgram, ConvexQuadLE, LogDetRatioLE, QuadOverLinLE, VariableLayout


@dataclass(frozen=True)
class ScalarInstance:
    name: str
    program: ConvexProgram
    lower: np.ndarray  # search box for the grid oracle
    upper: np.ndarray


def _layout(*names):
    layout = VariableLayout()
    for name in names:
        layout.add(name, 1)
    return layout


def affine_line() -> ScalarInstance:
    prog = ConvexProgram.empty(_layout("x"))
    prog.objective[0] = 1.0
    prog.add(AffineLE(np.array([1.0]), 1.0))
    prog.add(AffineLE(np.array([-1.0]), 5.0))
    return ScalarInstance("affine-line", prog, np.array([-5.0]), np.array([2.0]))


def gain_vs_variance(sigma2=1.0, eps2=0.1, noise=0.5, kappa=2.0, power=1.0,
                     alpha_t=0.8, c_t=0.6) -> ScalarInstance:
    """max alpha over (alpha, c): one-device variance bound against the tangent of c^2/alpha."""
    prog = ConvexProgram.empty(_layout("alpha", "c"))
    prog.objective[0] = 1.0
    ratio = c_t / alpha_t
    F = np.array([[0.0, np.sqrt((sigma2 + eps2) / kappa)]])
    a = np.array([-ratio ** 2, 2.0 * ratio])
    b = -noise / kappa  # (noise/kappa) + F-term <= a.x + (Gamma1 - grad.anchor = 0)
    prog.add(ConvexQuadLE(F, np.zeros(2), a, b), "variance")
    prog.add(ConvexQuadLE(np.array([[0.0, 1.0]]), np.zeros(2), np.zeros(2), power), "power")
    prog.add(AffineLE(np.array([[0.0, -1.0], [-1.0, 0.0]]), np.array([0.0, -1e-8])), "bounds")
    return ScalarInstance("gain-vs-variance", prog, np.array([0.0, 0.0]), np.array([3.0, 1.0]))


def scalar_logdet(w=1.0, a=3.0, tau=2.0, capacity=1.0) -> ScalarInstance:
    """max alpha s.t. q w <= a - alpha / tau and log2((1 + q) / q) <= capacity; optimum q = 1."""
    prog = ConvexProgram.empty(_layout("alpha", "q"))
    prog.objective[0] = 1.0
    prog.add(AffineLE(np.array([1.0 / tau, w]), a), "budget")
    prog.add(LogDetRatioLE(np.array([[1.0]]), np.array([1]), capacity), "rate")
    return ScalarInstance("scalar-logdet", prog, np.array([0.0, 0.01]), np.array([6.0, 3.0]))


def energy_epigraph(gain=1.0, budget=2.0, price=0.1) -> ScalarInstance:
    """max alpha over (alpha, c, beta): alpha <= c - price*beta, c^2 <= beta*gain, beta <= budget."""
    prog = ConvexProgram.empty(_layout("alpha", "c", "beta"))
    prog.objective[0] = 1.0
    prog.add(AffineLE(np.array([1.0, -1.0, price]), 0.0), "gain")
    prog.add(QuadOverLinLE(np.array([[0.0, 1.0, 0.0]]), np.zeros(1), np.array([0.0, 0.0, 1.0]), 0.0,
                           np.zeros(3), gain), "energy")
    prog.add(AffineLE(np.array([[0.0, 0.0, 1.0], [0.0, -1.0, 0.0]]), np.array([budget, 0.0])), "bounds")
    return ScalarInstance("energy-epigraph", prog, np.array([-1.0, 0.0, 0.0]), np.array([2.0, 2.0, 2.5]))


def rotated_cone() -> ScalarInstance:
    """max x + y s.t. x^2 + y^2 <= z * 1 and z <= 1."""
    prog = ConvexProgram.empty(_layout("x", "y", "z"))
    prog.objective[:2] = 1.0
    U = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    prog.add(QuadOverLinLE(U, np.zeros(2), np.array([0.0, 0.0, 1.0]), 0.0, np.zeros(3), 1.0), "cone")
    prog.add(AffineLE(np.array([0.0, 0.0, 1.0]), 1.0), "cap")
    return ScalarInstance("rotated-cone", prog, np.array([-1.2, -1.2, 0.0]), np.array([1.2, 1.2, 1.2]))


def shipped_instances() -> list[ScalarInstance]:
    return [affine_line(), gain_vs_variance(), scalar_logdet(), energy_epigraph(), rotated_cone()]
