"""Optimal sampled-data control problems and their finite control parameterization."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import ConstraintViolation, DimensionMismatch, InvalidRange, ParseError, PointNotInScale
from .timescale import TOL, Grid, TimeScale, build_grid, phi

OMEGA_TOL = 1e-12


# ---------------------------------------------------------------------------
# dynamics templates
# ---------------------------------------------------------------------------

class Dynamics:
    """Base class of the template registry.

    Subclasses provide ``f``, ``f0`` and their exact first partials.  Every
    method takes ``q`` of shape ``(n,)`` and ``u`` of shape ``(m,)``.
    """

    id: str = ""
    n: int = 1
    m: int = 1

    def rhs(self, t: float, q: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, float]:
        raise NotImplementedError

    def partials(self, t, q, u):
        """``(df_dq (n,n), df_du (n,m), df0_dq (n,), df0_du (m,))``."""
        raise NotImplementedError

    def params(self) -> dict:
        return {}


class Consumption(Dynamics):
    """Reinvestment model ``q^Δ = u q`` with running cost ``(u - 1) q``.

    Minimizing the cost maximizes the consumption ``∫ (1 - u) q Δτ``.
    """

    id = "consumption"
    n = 1
    m = 1

    def rhs(self, t, q, u):
        return u * q, float((u[0] - 1.0) * q[0])

    def partials(self, t, q, u):
        return (
            np.array([[u[0]]]),
            np.array([[q[0]]]),
            np.array([u[0] - 1.0]),
            np.array([q[0]]),
        )


class LinearQuadratic(Dynamics):
    """``f = A q + B u + c`` with running cost ``½ qᵀQq + ½ uᵀRu``."""

    id = "linear_quadratic"

    def __init__(self, A, B, Q=None, R=None, c=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.n, self.m = self.B.shape
        if self.A.shape != (self.n, self.n):
            raise DimensionMismatch(f"A has shape {self.A.shape}, expected {(self.n, self.n)}")
        self.Q = np.eye(self.n) if Q is None else np.atleast_2d(np.asarray(Q, dtype=float))
        self.R = np.eye(self.m) if R is None else np.atleast_2d(np.asarray(R, dtype=float))
        self.c = np.zeros(self.n) if c is None else np.asarray(c, dtype=float).reshape(self.n)
        if self.Q.shape != (self.n, self.n) or self.R.shape != (self.m, self.m):
            raise DimensionMismatch("Q must be (n,n) and R must be (m,m)")
        # only the symmetric part contributes to the quadratic forms
        self.Q = 0.5 * (self.Q + self.Q.T)
        self.R = 0.5 * (self.R + self.R.T)

    def rhs(self, t, q, u):
        return self.A @ q + self.B @ u + self.c, float(0.5 * q @ self.Q @ q + 0.5 * u @ self.R @ u)

    def partials(self, t, q, u):
        return self.A, self.B, self.Q @ q, self.R @ u

    def params(self):
        return {"A": self.A.tolist(), "B": self.B.tolist(), "Q": self.Q.tolist(),
                "R": self.R.tolist(), "c": self.c.tolist()}


TEMPLATES = {"consumption": Consumption, "linear_quadratic": LinearQuadratic}


def make_dynamics(template_id: str, params: dict | None = None) -> Dynamics:
    try:
        cls = TEMPLATES[template_id]
    except KeyError:
        raise ParseError(f"unknown dynamics template {template_id!r}") from None
    return cls(**(params or {}))


# ---------------------------------------------------------------------------
# constraints and terminal conditions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ControlBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape:
            raise DimensionMismatch("lo and hi must have the same length")
        if np.any(lo > hi):
            raise InvalidRange("control box needs lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def m(self) -> int:
        return len(self.lo)

    def project(self, u) -> np.ndarray:
        return np.clip(np.asarray(u, dtype=float), self.lo, self.hi)

    def contains(self, u, tol: float = OMEGA_TOL) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lo - tol) and np.all(u <= self.hi + tol))

    def grid(self, points: int = 101) -> np.ndarray:
        """Uniform tensor grid of the box, shape ``(points**m, m)``."""
        axes = [np.linspace(l, h, points) for l, h in zip(self.lo, self.hi)]
        return np.array(list(itertools.product(*axes)))

    def samples(self) -> np.ndarray:
        """All vertices plus the center."""
        verts = np.array(list(itertools.product(*zip(self.lo, self.hi))))
        return np.vstack([verts, 0.5 * (self.lo + self.hi)])


FIXED_INITIAL = "fixed_initial_free_final"
FIXED_BOTH = "fixed_both"
PERIODIC = "periodic"


@dataclass(frozen=True)
class TerminalSpec:
    kind: str
    q_a: np.ndarray | None = None
    q_b: np.ndarray | None = None
    free_final_time: bool = False

    def __post_init__(self):
        if self.kind not in (FIXED_INITIAL, FIXED_BOTH, PERIODIC):
            raise ParseError(f"unknown terminal kind {self.kind!r}")
        for name in ("q_a", "q_b"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.atleast_1d(np.asarray(v, dtype=float)))
        if self.kind in (FIXED_INITIAL, FIXED_BOTH) and self.q_a is None:
            raise ParseError(f"terminal kind {self.kind} needs q_a")
        if self.kind == FIXED_BOTH and self.q_b is None:
            raise ParseError("fixed_both needs q_b")


# ---------------------------------------------------------------------------
# the problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ControlProblem:
    """Sampled-data problem: state on ``state_scale``, control on ``control_scale``.

    The control scale is extended with ``b`` when it is missing (a controlling
    time at ``b`` never influences the dynamics on ``[a, b)``).
    """

    state_scale: TimeScale
    control_scale: TimeScale
    dynamics: Dynamics
    omega: ControlBox
    terminal: TerminalSpec

    def __post_init__(self):
        ts, ts1 = self.state_scale, self.control_scale
        if ts1.b < ts.b:
            ts1 = ts1.with_point(ts.b)
            object.__setattr__(self, "control_scale", ts1)
        if abs(ts.a - ts1.a) > TOL:
            raise InvalidRange("state and control scales must start at the same time a")
        if ts1.b > ts.b + TOL:
            raise InvalidRange("control scale extends beyond the state window")
        if not ts1.issubset(ts):
            raise InvalidRange("control scale must be contained in the state scale")
        if self.omega.m != self.dynamics.m:
            raise DimensionMismatch(f"box has dimension {self.omega.m}, dynamics expects m={self.dynamics.m}")
        for v in (self.terminal.q_a, self.terminal.q_b):
            if v is not None and len(v) != self.dynamics.n:
                raise DimensionMismatch(f"terminal data has length {len(v)}, expected n={self.dynamics.n}")
        # right-scattered controlling times in [a, b) and their clipped jumps
        rs = [r for (_, r) in ts1.segments[:-1]]
        nxt = [min(ts1.segments[i + 1][0], ts.b) for i in range(len(ts1.segments) - 1)]
        object.__setattr__(self, "_rs", np.array(rs, dtype=float))
        object.__setattr__(self, "_rs_next", np.array(nxt, dtype=float))

    @property
    def a(self) -> float:
        return self.state_scale.a

    @property
    def b(self) -> float:
        return self.state_scale.b

    @property
    def n(self) -> int:
        return self.dynamics.n

    @property
    def m(self) -> int:
        return self.dynamics.m

    @property
    def scattered_times(self) -> np.ndarray:
        """Right-scattered controlling times in ``[a, b)``."""
        return self._rs

    def sigma1(self, r: float) -> float:
        """``min(sigma_1(r), b)`` for a right-scattered controlling time."""
        i = self.scattered_index(r)
        return float(self._rs_next[i])

    def scattered_index(self, r: float) -> int:
        i = int(np.searchsorted(self._rs, r - TOL))
        if i >= len(self._rs) or abs(self._rs[i] - r) > TOL:
            raise PointNotInScale(f"{r} is not a right-scattered controlling time")
        return i

    def dense_segments(self) -> list[tuple[float, float]]:
        """Continuous stretches ``[l, r)`` of the control scale."""
        return self.control_scale.dense_segments()

    def is_dense_controlling(self, t: float) -> bool:
        return any(l - TOL <= t < r - TOL for l, r in self.dense_segments())

    def grid(self, h: float, ctrl: "SampledControl | None" = None) -> Grid:
        breaks = ctrl.breaks() if ctrl is not None else ()
        return build_grid(self.state_scale, self.control_scale, h, breaks)

    def default_step(self) -> float:
        return 1e-3 * (self.b - self.a)

    def phi(self, t: float) -> float:
        return phi(self.state_scale, self.control_scale, t)


class DynamicsEval(NamedTuple):
    f: np.ndarray
    f0: float
    df_dq: np.ndarray
    df_du: np.ndarray
    df0_dq: np.ndarray
    df0_du: np.ndarray


def _vec(x, size: int, name: str) -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.shape != (size,):
        raise DimensionMismatch(f"{name} has shape {v.shape}, expected ({size},)")
    return v


def eval_dynamics(p: ControlProblem, t: float, q, u) -> DynamicsEval:
    """Dynamics, running cost and all first partials at ``(t, q, u)``."""
    q = _vec(q, p.n, "q")
    u = _vec(u, p.m, "u")
    if not p.omega.contains(u):
        raise ConstraintViolation(f"control {u} outside [{p.omega.lo}, {p.omega.hi}]")
    f, f0 = p.dynamics.rhs(t, q, u)
    return DynamicsEval(np.asarray(f, dtype=float), float(f0), *p.dynamics.partials(t, q, u))


# ---------------------------------------------------------------------------
# sampled controls
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DenseTable:
    """Piecewise-constant control on a continuous stretch ``[l, r)``.

    ``values[j]`` holds on ``[nodes[j], nodes[j+1])`` with ``nodes[0] = l``.
    """

    l: float
    r: float
    nodes: np.ndarray
    values: np.ndarray

    def lookup(self, t: float) -> np.ndarray:
        j = int(np.searchsorted(self.nodes, t + TOL, side="right")) - 1
        return self.values[max(j, 0)]

    def cell_ends(self) -> np.ndarray:
        return np.append(self.nodes[1:], self.r)


@dataclass(frozen=True)
class SampledControl:
    """Control values at the scattered controlling times plus dense tables.

    Instances are values: every modification returns a new object.
    """

    scattered_times: np.ndarray
    scattered_values: np.ndarray
    dense: tuple[DenseTable, ...] = field(default=())

    @classmethod
    def build(cls, problem: ControlProblem, scattered_values, dense=None, project: bool = True):
        """Create a control for ``problem``.

        ``scattered_values`` is ``(k, m)`` (one row per scattered time) and
        ``dense`` a list of ``(nodes, values)`` pairs, one per continuous
        stretch of the control scale.
        """
        rs = problem.scattered_times
        sv = np.asarray(scattered_values, dtype=float).reshape(len(rs), problem.m)
        segs = problem.dense_segments()
        dense = dense or []
        if len(dense) != len(segs):
            raise DimensionMismatch(f"expected {len(segs)} dense tables, got {len(dense)}")
        tables = []
        for (l, r), (nodes, vals) in zip(segs, dense):
            nodes = np.asarray(nodes, dtype=float)
            vals = np.asarray(vals, dtype=float).reshape(len(nodes), problem.m)
            if abs(nodes[0] - l) > TOL or np.any(np.diff(nodes) <= 0) or nodes[-1] >= r:
                raise InvalidRange(f"dense table nodes must start at {l}, increase, and stay below {r}")
            tables.append(DenseTable(l, r, nodes, problem.omega.project(vals) if project else vals))
        if project:
            sv = problem.omega.project(sv)
        return cls(rs.copy(), sv, tuple(tables))

    @classmethod
    def constant(cls, problem: ControlProblem, value, cell: float | None = None):
        """Constant control; dense stretches are split into cells of length <= ``cell``."""
        v = np.broadcast_to(np.asarray(value, dtype=float), (problem.m,))
        dense = []
        for l, r in problem.dense_segments():
            nodes = _cells(l, r, cell)
            dense.append((nodes, np.tile(v, (len(nodes), 1))))
        return cls.build(problem, np.tile(v, (len(problem.scattered_times), 1)), dense)

    def breaks(self) -> np.ndarray:
        if not self.dense:
            return np.empty(0)
        return np.concatenate([tb.nodes for tb in self.dense])

    def scattered_value(self, r: float) -> np.ndarray:
        i = int(np.searchsorted(self.scattered_times, r - TOL))
        if i >= len(self.scattered_times) or abs(self.scattered_times[i] - r) > TOL:
            raise PointNotInScale(f"{r} is not a scattered controlling time")
        return self.scattered_values[i]

    def with_scattered(self, r: float, value) -> "SampledControl":
        i = int(np.searchsorted(self.scattered_times, r - TOL))
        if i >= len(self.scattered_times) or abs(self.scattered_times[i] - r) > TOL:
            raise PointNotInScale(f"{r} is not a scattered controlling time")
        sv = self.scattered_values.copy()
        sv[i] = value
        return replace(self, scattered_values=sv)

    def split_dense(self, t: float, value=None) -> "SampledControl":
        """Insert a cell boundary at ``t`` (optionally setting the new cell's value)."""
        tables = list(self.dense)
        for i, tb in enumerate(tables):
            if tb.l - TOL <= t < tb.r - TOL:
                j = int(np.searchsorted(tb.nodes, t + TOL, side="right")) - 1
                if abs(tb.nodes[j] - t) <= TOL:
                    nodes, vals = tb.nodes, tb.values.copy()
                    k = j
                else:
                    nodes = np.insert(tb.nodes, j + 1, t)
                    vals = np.insert(tb.values, j + 1, tb.values[j], axis=0)
                    k = j + 1
                if value is not None:
                    vals[k] = value
                tables[i] = DenseTable(tb.l, tb.r, nodes, vals)
                return replace(self, dense=tuple(tables))
        raise PointNotInScale(f"{t} is not inside a continuous stretch of the control scale")

    # flat parameter view used by the direct solver
    def params(self) -> np.ndarray:
        parts = [self.scattered_values] + [tb.values for tb in self.dense]
        return np.concatenate(parts, axis=0)

    def with_params(self, x: np.ndarray) -> "SampledControl":
        x = np.asarray(x, dtype=float).reshape(-1, self.scattered_values.shape[1])
        k = len(self.scattered_times)
        sv = x[:k].copy()
        tables, pos = [], k
        for tb in self.dense:
            c = len(tb.nodes)
            tables.append(DenseTable(tb.l, tb.r, tb.nodes, x[pos:pos + c].copy()))
            pos += c
        return SampledControl(self.scattered_times, sv, tuple(tables))

    def param_intervals(self, problem: ControlProblem) -> list[tuple[float, float]]:
        """``[start, end)`` support of each parameter row."""
        out = [(r, problem.sigma1(r)) for r in self.scattered_times]
        for tb in self.dense:
            out.extend(zip(tb.nodes, tb.cell_ends()))
        return out


def _cells(l: float, r: float, cell: float | None) -> np.ndarray:
    if cell is None:
        return np.array([l])
    n = max(1, int(math.ceil((r - l) / cell - 1e-9)))
    return l + (r - l) * np.arange(n) / n


def control_value(p: ControlProblem, ctrl: SampledControl, t: float) -> np.ndarray:
    """``u(Phi(t))``: the held control seen by the state at time ``t``."""
    if t > p.b - TOL or t < p.a - TOL:
        raise PointNotInScale(f"control is defined on [a, b), got t={t}")
    s = p.phi(t)
    rs = ctrl.scattered_times
    i = int(np.searchsorted(rs, s - TOL))
    if i < len(rs) and abs(rs[i] - s) <= TOL:
        return ctrl.scattered_values[i]
    for tb in ctrl.dense:
        if tb.l - TOL <= s < tb.r - TOL:
            return tb.lookup(s)
    raise PointNotInScale(f"no control is attached to controlling time {s}")


def step_controls(p: ControlProblem, ctrl: SampledControl, grid: Grid) -> np.ndarray:
    """Control held on each grid step, shape ``(len(grid) - 1, m)``."""
    return np.array([control_value(p, ctrl, t) for t in grid.t[:-1]]).reshape(len(grid) - 1, p.m)
