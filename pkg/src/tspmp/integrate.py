"""Hybrid forward/backward integration on a time-scale grid.

All integrators work on the augmented state ``x = (q, q0)`` where ``q0``
accumulates the running cost.  A jump step applies the exact Δ-update
``x(σ(t)) = x(t) + μ(t) f̄(t, x(t), u)``; a continuous step is one classical
RK4 step with the control frozen (grids never straddle a control switch).

Mid-step states needed by the adjoint and the variational equations come
from the cubic Hermite interpolant of the stored endpoint values and
rates, which keeps every derived quantity fourth-order accurate.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property
from typing import TextIO

import numpy as np

from .errors import ConstraintViolation, GridMismatch, NonFiniteState, PointNotInScale, WrongPointClass
from .problem import ControlProblem, SampledControl, step_controls
from .timescale import Grid


def _hermite_mid(x0, x1, d0, d1, dt):
    """Value at the midpoint of the cubic Hermite interpolant."""
    return 0.5 * (x0 + x1) + 0.125 * dt * (d0 - d1)


class Trajectory:
    """Augmented state sampled on a grid.

    Attributes
    ----------
    grid : Grid
    x : ndarray, shape (N, n+1)
        ``x[:, :n]`` is the state, ``x[:, n]`` the accumulated cost.
    u : ndarray, shape (N-1, m)
        Control held on each step.
    """

    def __init__(self, problem: ControlProblem, control: SampledControl, grid: Grid, x: np.ndarray, u: np.ndarray):
        self.problem = problem
        self.control = control
        self.grid = grid
        self.x = x
        self.u = u

    @property
    def q(self) -> np.ndarray:
        return self.x[:, : self.problem.n]

    @property
    def q0(self) -> np.ndarray:
        return self.x[:, self.problem.n]

    @property
    def cost(self) -> float:
        return float(self.x[-1, -1])

    def at(self, t: float) -> np.ndarray:
        return self.q[self.grid.index(t)]

    def fbar(self, t: float, q: np.ndarray, u: np.ndarray) -> np.ndarray:
        f, f0 = self.problem.dynamics.rhs(t, q, u)
        return np.append(f, f0)

    @cached_property
    def rates(self) -> tuple[np.ndarray, np.ndarray]:
        """``f̄`` at the left and right end of every step (step control)."""
        n = self.problem.n
        g = self.grid
        left = np.empty((len(g) - 1, n + 1))
        right = np.empty_like(left)
        for k in range(len(g) - 1):
            left[k] = self.fbar(g.t[k], self.x[k, :n], self.u[k])
            right[k] = self.fbar(g.t[k + 1], self.x[k + 1, :n], self.u[k])
        return left, right

    @cached_property
    def midpoints(self) -> np.ndarray:
        """Hermite mid-step augmented states (left state on jump steps)."""
        left, right = self.rates
        mid = _hermite_mid(self.x[:-1], self.x[1:], left, right, self.grid.dt[:, None])
        mid[self.grid.jump[:-1]] = self.x[:-1][self.grid.jump[:-1]]
        return mid

    @cached_property
    def jacobians(self) -> tuple[np.ndarray, np.ndarray]:
        """Augmented Jacobians at the left, mid and right point of each step.

        Returns ``A`` of shape (N-1, 3, n+1, n+1) and ``B`` of shape
        (N-1, 3, n+1, m).  The last column of ``A`` is zero because neither
        ``f`` nor ``f0`` depends on the cost coordinate.
        """
        p = self.problem
        n, m = p.n, p.m
        g = self.grid
        N = len(g) - 1
        A = np.zeros((N, 3, n + 1, n + 1))
        B = np.zeros((N, 3, n + 1, m))
        mids = self.midpoints
        for k in range(N):
            tm = 0.5 * (g.t[k] + g.t[k + 1])
            pts = ((g.t[k], self.x[k, :n]), (tm, mids[k, :n]), (g.t[k + 1], self.x[k + 1, :n]))
            for j, (t, q) in enumerate(pts):
                fq, fu, f0q, f0u = p.dynamics.partials(t, q, self.u[k])
                A[k, j, :n, :n] = fq
                A[k, j, n, :n] = f0q
                B[k, j, :n, :] = fu
                B[k, j, n, :] = f0u
        assert not np.any(A[:, :, :, n]), "augmented dynamics must not depend on the cost coordinate"
        return A, B


@dataclass
class AdjointArc:
    """Adjoint covector ``p`` on the trajectory grid and the constant ``p0``."""

    grid: Grid
    p: np.ndarray
    p0: float
    rates: tuple[np.ndarray, np.ndarray]

    @property
    def pbar(self) -> np.ndarray:
        """``(p, p0)`` at each node, shape (N, n+1)."""
        return np.hstack([self.p, np.full((len(self.p), 1), self.p0)])

    def at(self, t: float) -> np.ndarray:
        return self.p[self.grid.index(t)]

    @cached_property
    def midpoints(self) -> np.ndarray:
        left, right = self.rates
        mid = _hermite_mid(self.p[:-1], self.p[1:], left, right, self.grid.dt[:, None])
        mid[self.grid.jump[:-1]] = self.p[1:][self.grid.jump[:-1]]
        return mid


@dataclass(frozen=True)
class Scattered:
    """Value swap ``u(r) -> y`` at a right-scattered controlling time."""

    r: float
    y: np.ndarray


@dataclass(frozen=True)
class Dense:
    """Needle ``u = z`` on ``[s, s + α)`` at a right-dense controlling time."""

    s: float
    z: np.ndarray


@dataclass(frozen=True)
class Initial:
    """Perturbation of the initial state in direction ``dq``."""

    dq: np.ndarray


VariationRequest = Scattered | Dense | Initial


# ---------------------------------------------------------------------------

def forward(p: ControlProblem, ctrl: SampledControl, q_a, h: float, grid: Grid | None = None) -> Trajectory:
    """Integrate the augmented state from ``q(a) = q_a``, ``q0(a) = 0``."""
    q_a = np.atleast_1d(np.asarray(q_a, dtype=float))
    if q_a.shape != (p.n,) or not np.all(np.isfinite(q_a)):
        raise ValueError(f"q_a must be a finite vector of length {p.n}")
    if grid is None:
        grid = p.grid(h, ctrl)
    U = step_controls(p, ctrl, grid)
    if not all(p.omega.contains(u) for u in U):
        raise ConstraintViolation("control takes values outside the box")
    n = p.n
    rhs = p.dynamics.rhs

    def fb(t, x, u):
        f, f0 = rhs(t, x[:n], u)
        return np.append(f, f0)

    x = np.zeros((len(grid), n + 1))
    x[0, :n] = q_a
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(len(grid) - 1):
            t, u, xk = grid.t[k], U[k], x[k]
            if grid.jump[k]:
                x[k + 1] = xk + grid.mu[k] * fb(t, xk, u)
            else:
                dt = grid.dt[k]
                k1 = fb(t, xk, u)
                k2 = fb(t + 0.5 * dt, xk + 0.5 * dt * k1, u)
                k3 = fb(t + 0.5 * dt, xk + 0.5 * dt * k2, u)
                k4 = fb(t + dt, xk + dt * k3, u)
                x[k + 1] = xk + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(x[k + 1])):
                raise NonFiniteState(f"state blew up on [{t}, {grid.t[k + 1]}]")
    return Trajectory(p, ctrl, grid, x, U)


def check_same_grid(p: ControlProblem, ctrl: SampledControl, traj: Trajectory) -> None:
    if traj.problem is not p:
        raise GridMismatch("trajectory was produced for a different problem")
    if ctrl is not traj.control:
        U = step_controls(p, ctrl, traj.grid)
        if not np.array_equal(U, traj.u):
            raise GridMismatch("trajectory was produced with a different control")
    for t in ctrl.breaks():
        try:
            traj.grid.index(t)
        except PointNotInScale:
            raise GridMismatch(f"control break {t} is not a node of the trajectory grid") from None


def _adjoint_rate(A: np.ndarray, p: np.ndarray, p0: float) -> np.ndarray:
    """``-∂H/∂q = -(Āᵀ p̄)[:n]`` for one augmented Jacobian."""
    n = len(p)
    return -(A[:n, :n].T @ p + p0 * A[n, :n])


def backward_adjoint(p: ControlProblem, ctrl: SampledControl, traj: Trajectory, p_b, p0: float) -> AdjointArc:
    """Solve the shifted adjoint equation backward from ``p(b) = p_b``."""
    if p0 > 0:
        raise ValueError("p0 must be nonpositive")
    check_same_grid(p, ctrl, traj)
    g = traj.grid
    A, _ = traj.jacobians
    n = p.n
    P = np.zeros((len(g), n))
    P[-1] = np.atleast_1d(np.asarray(p_b, dtype=float))
    left = np.zeros((len(g) - 1, n))
    right = np.zeros_like(left)
    for k in range(len(g) - 2, -1, -1):
        pk1 = P[k + 1]
        if g.jump[k]:
            # p(t) = p(σ(t)) + μ ∂H/∂q(t, q(t), p(σ(t)))
            rate = _adjoint_rate(A[k, 0], pk1, p0)
            P[k] = pk1 - g.mu[k] * rate
            left[k] = right[k] = rate
        else:
            dt = g.dt[k]
            k1 = _adjoint_rate(A[k, 2], pk1, p0)
            k2 = _adjoint_rate(A[k, 1], pk1 - 0.5 * dt * k1, p0)
            k3 = _adjoint_rate(A[k, 1], pk1 - 0.5 * dt * k2, p0)
            k4 = _adjoint_rate(A[k, 0], pk1 - dt * k3, p0)
            P[k] = pk1 - dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            right[k] = k1
            left[k] = _adjoint_rate(A[k, 0], P[k], p0)
    return AdjointArc(g, P, float(p0), (left, right))


# ---------------------------------------------------------------------------
# variation vectors

def _propagate(traj: Trajectory, k_start: int, w_start: np.ndarray, force_until: int = -1, dv=None) -> np.ndarray:
    """Linearized augmented dynamics from node ``k_start`` to the last node.

    On steps ``k < force_until`` the forcing ``B̄ dv`` is added.
    """
    g = traj.grid
    A, B = traj.jacobians
    W = np.zeros((len(g) - k_start, len(w_start)))
    W[0] = w_start
    for k in range(k_start, len(g) - 1):
        w = W[k - k_start]
        if k < force_until:
            c = B[k] @ dv  # (3, n+1)
        else:
            c = np.zeros((3, len(w)))
        if g.jump[k]:
            W[k + 1 - k_start] = w + g.mu[k] * (A[k, 0] @ w + c[0])
        else:
            dt = g.dt[k]
            k1 = A[k, 0] @ w + c[0]
            k2 = A[k, 1] @ (w + 0.5 * dt * k1) + c[1]
            k3 = A[k, 1] @ (w + 0.5 * dt * k2) + c[1]
            k4 = A[k, 2] @ (w + dt * k3) + c[2]
            W[k + 1 - k_start] = w + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return W


def variation_path(p: ControlProblem, ctrl: SampledControl, traj: Trajectory, req: VariationRequest):
    """Variation vector on the grid from its start node to ``b``.

    Returns
    -------
    k_start : int
        Grid index where the variation starts (``r``, ``s`` or ``a``).
    k_homog : int
        Index from which the homogeneous equation holds (``σ₁*(r)`` for a
        scattered swap, ``k_start`` otherwise).
    W : ndarray, shape (N - k_start, n+1)
    """
    check_same_grid(p, ctrl, traj)
    g = traj.grid
    n = p.n
    if isinstance(req, Scattered):
        y = np.atleast_1d(np.asarray(req.y, dtype=float))
        if not p.omega.contains(y):
            raise ConstraintViolation(f"y={y} is outside the control box")
        if p.is_dense_controlling(req.r):
            raise WrongPointClass(f"{req.r} is right-dense in the control scale")
        i = p.scattered_index(req.r)
        r = p.scattered_times[i]
        k0, k1 = g.index(r), g.index(p.sigma1(r))
        dv = y - ctrl.scattered_values[i]
        return k0, k1, _propagate(traj, k0, np.zeros(n + 1), force_until=k1, dv=dv)
    if isinstance(req, Dense):
        z = np.atleast_1d(np.asarray(req.z, dtype=float))
        if not p.omega.contains(z):
            raise ConstraintViolation(f"z={z} is outside the control box")
        if not p.is_dense_controlling(req.s):
            raise WrongPointClass(f"{req.s} is not a right-dense controlling time")
        k0 = g.index(req.s)
        q = traj.x[k0, :n]
        w0 = traj.fbar(g.t[k0], q, z) - traj.fbar(g.t[k0], q, traj.u[k0])
        return k0, k0, _propagate(traj, k0, w0)
    if isinstance(req, Initial):
        dq = np.atleast_1d(np.asarray(req.dq, dtype=float))
        if dq.shape != (n,):
            raise ValueError(f"dq must have length {n}")
        return 0, 0, _propagate(traj, 0, np.append(dq, 0.0))
    raise TypeError(f"unknown variation request {req!r}")


def variation_endpoint(p: ControlProblem, ctrl: SampledControl, traj: Trajectory, req: VariationRequest):
    """``(w(b), w0(b))``: first-order change of ``(q(b), q0(b))`` along ``req``."""
    _, _, W = variation_path(p, ctrl, traj, req)
    return W[-1, : p.n].copy(), float(W[-1, p.n])


# ---------------------------------------------------------------------------

def write_csv(out: TextIO, traj: Trajectory, adj: AdjointArc | None = None) -> None:
    """Columns ``t, class, q1..qn, q0, p1..pn, p0``; floats with 17 significant digits."""
    n = traj.problem.n
    qs = [f"q{i + 1}" for i in range(n)] if n > 1 else ["q"]
    ps = [f"p{i + 1}" for i in range(n)] if n > 1 else ["p"]
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["t", "class", *qs, "q0", *ps, "p0"])
    g = traj.grid
    for k in range(len(g)):
        row = [f"{g.t[k]:.17g}", "RS" if g.jump[k] else "RD"]
        row += [f"{v:.17g}" for v in traj.x[k]]
        if adj is not None:
            row += [f"{v:.17g}" for v in adj.p[k]] + [f"{adj.p0:.17g}"]
        else:
            row += [""] * (n + 1)
        w.writerow(row)


def trajectory_csv(traj: Trajectory, adj: AdjointArc | None = None) -> str:
    buf = io.StringIO()
    write_csv(buf, traj, adj)
    return buf.getvalue()
