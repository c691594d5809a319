"""Canonical form for the convex programs emitted by the SCA steps.

Every program maximizes a linear objective over a vector ``x`` subject to a
list of constraint records.  Records hold dense coefficient vectors over the
whole variable vector; :class:`VariableLayout` maps named blocks to offsets.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np


class VariableLayout:
    """Named blocks of a flat variable vector, in insertion order."""

    def __init__(self):
        self._blocks: dict[str, tuple[int, tuple[int, ...]]] = {}
        self.size = 0

    def add(self, name: str, shape) -> slice:
        if name in self._blocks:
            raise ValueError(f"duplicate block {name!r}")
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        self._blocks[name] = (self.size, shape)
        self.size += int(np.prod(shape, dtype=int))
        return self.slice(name)

    def slice(self, name: str) -> slice:
        start, shape = self._blocks[name]
        return slice(start, start + int(np.prod(shape, dtype=int)))

    def shape(self, name: str) -> tuple[int, ...]:
        return self._blocks[name][1]

    def index(self, name: str, *idx) -> int:
        start, shape = self._blocks[name]
        return start + int(np.ravel_multi_index(idx, shape)) if idx else start

    def indices(self, name: str) -> np.ndarray:
        start, shape = self._blocks[name]
        return start + np.arange(int(np.prod(shape, dtype=int))).reshape(shape)

    def names(self) -> list[str]:
        return list(self._blocks)

    def unpack(self, x: np.ndarray, name: str) -> np.ndarray:
        return np.asarray(x)[self.slice(name)].reshape(self.shape(name))

    def pack(self, **values) -> np.ndarray:
        x = np.zeros(self.size)
        for name, v in values.items():
            x[self.slice(name)] = np.asarray(v, dtype=float).ravel()
        return x

    def zeros(self) -> np.ndarray:
        return np.zeros(self.size)

    def copy(self) -> "VariableLayout":
        other = VariableLayout()
        other._blocks = dict(self._blocks)
        other.size = self.size
        return other

    def items(self):
        return [(name, start, shape) for name, (start, shape) in self._blocks.items()]


@dataclass(frozen=True)
class AffineLE:
    """``a @ x <= b``; ``a`` may be a matrix to pack several rows in one record."""

    a: np.ndarray
    b: Union[float, np.ndarray]

    def rows(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        return a, np.broadcast_to(b, (a.shape[0],))


@dataclass(frozen=True)
class ConvexQuadLE:
    """``x^T P x + r @ x <= a @ x + b`` with ``P = F^T F`` stored through its factor F."""

    F: np.ndarray
    r: np.ndarray
    a: np.ndarray
    b: float

    @property
    def P(self) -> np.ndarray:
        F = np.atleast_2d(self.F)
        return F.T @ F

    @classmethod
    def from_matrix(cls, P, r, a, b, tol: float = 1e-10) -> "ConvexQuadLE":
        P = 0.5 * (np.asarray(P, dtype=float) + np.asarray(P, dtype=float).T)
        w, V = np.linalg.eigh(P)
        if w.min(initial=0.0) < -tol * max(1.0, abs(w).max(initial=0.0)):
            raise ValueError("P is not positive semidefinite")
        keep = w > tol * max(1.0, abs(w).max(initial=0.0))
        F = (V[:, keep] * np.sqrt(w[keep])).T
        return cls(F, np.asarray(r, dtype=float), np.asarray(a, dtype=float), float(b))


@dataclass(frozen=True)
class QuadOverLinLE:
    """``||U x + u0||^2 <= (v @ x + v0) * (l @ x + l0)`` with both factors >= 0.

    With a single row in ``U`` this is the scalar quadratic-over-linear
    constraint; with several rows it is a rotated second-order cone.
    """

    U: np.ndarray
    u0: np.ndarray
    v: np.ndarray
    v0: float
    l: np.ndarray
    l0: float


@dataclass(frozen=True)
class LogDetRatioLE:
    """``log2 det(A + diag(q)) - sum log2 q <= bound`` where ``q = x[index]``.

    ``slack``, when set, is the index of a variable added to the bound (used by
    the feasibility phase).
    """

    A: np.ndarray
    index: np.ndarray
    bound: float
    slack: int | None = None


Constraint = Union[AffineLE, ConvexQuadLE, QuadOverLinLE, LogDetRatioLE]


@dataclass
class ConvexProgram:
    layout: VariableLayout
    objective: np.ndarray
    constraints: list = field(default_factory=list)
    tags: list = field(default_factory=list)

    @classmethod
    def empty(cls, layout: VariableLayout) -> "ConvexProgram":
        return cls(layout, np.zeros(layout.size))

    @property
    def n(self) -> int:
        return self.layout.size

    def add(self, constraint: Constraint, tag: str = "") -> None:
        self.constraints.append(constraint)
        self.tags.append(tag)

    def extend(self, constraints: Sequence[Constraint], tag: str = "") -> None:
        for c in constraints:
            self.add(c, tag)

    def count(self, kind: type) -> int:
        total = 0
        for c in self.constraints:
            if isinstance(c, kind):
                total += c.rows()[0].shape[0] if isinstance(c, AffineLE) else 1
        return total

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.objective @ x)

    def validate(self, psd_tol: float = 1e-10) -> None:
        n = self.n
        if self.objective.shape != (n,):
            raise ValueError("objective length does not match layout")
        for c in self.constraints:
            if isinstance(c, AffineLE):
                a, _ = c.rows()
                if a.shape[1] != n:
                    raise ValueError("affine row length mismatch")
            elif isinstance(c, ConvexQuadLE):
                F = np.atleast_2d(c.F)
                if F.shape[1] != n or np.shape(c.r) != (n,) or np.shape(c.a) != (n,):
                    raise ValueError("quadratic constraint dimension mismatch")
            elif isinstance(c, QuadOverLinLE):
                if np.atleast_2d(c.U).shape[1] != n or np.shape(c.v) != (n,) or np.shape(c.l) != (n,):
                    raise ValueError("quad-over-linear constraint dimension mismatch")
            elif isinstance(c, LogDetRatioLE):
                A = np.asarray(c.A)
                if not np.allclose(A, A.conj().T, atol=1e-12 * max(1.0, np.abs(A).max())):
                    raise ValueError("log-det matrix is not Hermitian")
                if np.linalg.eigvalsh(A).min() < -psd_tol * max(1.0, np.abs(A).max()):
                    raise ValueError("log-det matrix is not PSD")
                idx = np.asarray(c.index)
                if idx.min() < 0 or idx.max() >= n or len(idx) != A.shape[0]:
                    raise ValueError("log-det selector outside the layout")
            else:
                raise TypeError(f"unknown constraint record {type(c).__name__}")


def _fmt_vec(v) -> str:
    v = np.asarray(v, dtype=float).ravel()
    nz = np.flatnonzero(v)
    return " ".join(f"{i}:{v[i]:.17e}" for i in nz) or "-"


def dump_program(prog: ConvexProgram) -> str:
    """Line-oriented text dump, one constraint per line."""
    lines = [f"program n={prog.n} m={len(prog.constraints)}"]
    for name, start, shape in prog.layout.items():
        lines.append(f"var {name} offset={start} shape={'x'.join(map(str, shape))}")
    lines.append(f"maximize {_fmt_vec(prog.objective)}")
    for c, tag in zip(prog.constraints, prog.tags):
        tag = tag or "-"
        if isinstance(c, AffineLE):
            a, b = c.rows()
            for row, bi in zip(a, b):
                lines.append(f"affine {tag} b={bi:.17e} a= {_fmt_vec(row)}")
        elif isinstance(c, ConvexQuadLE):
            F = np.atleast_2d(c.F)
            frows = " | ".join(_fmt_vec(row) for row in F)
            lines.append(f"quad {tag} b={c.b:.17e} r= {_fmt_vec(c.r)} a= {_fmt_vec(c.a)} F= {frows}")
        elif isinstance(c, QuadOverLinLE):
            U = np.atleast_2d(c.U)
            urows = " | ".join(_fmt_vec(row) for row in U)
            u0 = " ".join(f"{x:.17e}" for x in np.atleast_1d(c.u0))
            lines.append(f"qol {tag} U= {urows} u0= {u0} v= {_fmt_vec(c.v)} v0={c.v0:.17e} "
                         f"l= {_fmt_vec(c.l)} l0={c.l0:.17e}")
        elif isinstance(c, LogDetRatioLE):
            A = np.asarray(c.A)
            entries = " ".join(f"{z.real:.17e}{z.imag:+.17e}j" for z in A.ravel())
            lines.append(f"logdet {tag} bound={c.bound:.17e} index={','.join(map(str, c.index))} "
                         f"A= {entries}")
    return "\n".join(lines) + "\n"
