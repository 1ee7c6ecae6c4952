"""Hamiltonian, sampled-interval gradients and the necessary-condition report."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, GridMismatch, WrongPointClass
from .integrate import AdjointArc, Trajectory, check_same_grid
from .problem import FIXED_INITIAL, PERIODIC, ControlProblem, SampledControl, eval_dynamics
from .timescale import TOL


def hamiltonian(p: ControlProblem, t: float, q, pvec, p0: float, u):
    """``H = <p, f> + p0 f0`` with its partials in ``q`` and ``u``.

    Returns
    -------
    H : float
    dH_dq : ndarray, shape (n,)
    dH_du : ndarray, shape (m,)
    """
    ev = eval_dynamics(p, t, q, u)
    pvec = np.atleast_1d(np.asarray(pvec, dtype=float))
    if pvec.shape != (p.n,):
        raise DimensionMismatch(f"p has shape {pvec.shape}, expected ({p.n},)")
    H = float(pvec @ ev.f + p0 * ev.f0)
    return H, ev.df_dq.T @ pvec + p0 * ev.df0_dq, ev.df_du.T @ pvec + p0 * ev.df0_du


def _check_grids(traj: Trajectory, adj: AdjointArc) -> None:
    if adj.grid is not traj.grid and adj.grid != traj.grid:
        raise GridMismatch("trajectory and adjoint live on different grids")


def hu_step_integrals(traj: Trajectory, adj: AdjointArc) -> np.ndarray:
    """``∫ ∂H/∂u(τ, q, p^σ, p0, u) Δτ`` over every grid step, shape (N-1, m).

    Jump steps contribute ``μ ∂H/∂u`` at the left node with ``p(σ(t))``;
    continuous steps use Simpson's rule with Hermite mid-step values.
    """
    _check_grids(traj, adj)
    g = traj.grid
    _, B = traj.jacobians
    pbar = adj.pbar
    pmid = np.hstack([adj.midpoints, np.full((len(g) - 1, 1), adj.p0)])
    gl = np.einsum("kim,ki->km", B[:, 0], pbar[:-1])
    gm = np.einsum("kim,ki->km", B[:, 1], pmid)
    gr = np.einsum("kim,ki->km", B[:, 2], pbar[1:])
    out = g.dt[:, None] / 6.0 * (gl + 4.0 * gm + gr)
    jump = g.jump[:-1]
    out[jump] = g.mu[:-1][jump, None] * np.einsum("kim,ki->km", B[jump, 0], pbar[1:][jump])
    return out


def interval_gradient(traj: Trajectory, adj: AdjointArc, c: float, d: float, steps: np.ndarray | None = None) -> np.ndarray:
    """``∫_{[c,d)} ∂H/∂u Δτ`` for grid nodes ``c < d``."""
    if steps is None:
        steps = hu_step_integrals(traj, adj)
    k0, k1 = traj.grid.index(c), traj.grid.index(d)
    return steps[k0:k1].sum(axis=0)


def scattered_gradient(p: ControlProblem, ctrl: SampledControl, traj: Trajectory, adj: AdjointArc, r: float,
                       steps: np.ndarray | None = None) -> np.ndarray:
    """``G(r)``: the integrated control gradient over ``[r, σ₁*(r))``."""
    if p.is_dense_controlling(r):
        raise WrongPointClass(f"{r} is right-dense in the control scale")
    i = p.scattered_index(r)
    r = p.scattered_times[i]
    return interval_gradient(traj, adj, r, p.sigma1(r), steps)


def parameter_gradients(p: ControlProblem, ctrl: SampledControl, traj: Trajectory, adj: AdjointArc) -> np.ndarray:
    """Integrated ``∂H/∂u`` over the support of every control parameter, rows as in ``ctrl.params()``."""
    steps = hu_step_integrals(traj, adj)
    csum = np.vstack([np.zeros((1, p.m)), np.cumsum(steps, axis=0)])
    idx = [(traj.grid.index(c), traj.grid.index(d)) for c, d in ctrl.param_intervals(p)]
    return np.array([csum[k1] - csum[k0] for k0, k1 in idx]).reshape(-1, p.m)


# ---------------------------------------------------------------------------

@dataclass
class Tolerances:
    """Absolute/relative thresholds for each condition.

    ``extremal`` and ``maximization`` are relative: the effective bound is
    ``extremal * (1 + max|p|)`` and ``maximization * (1 + max|H|)``.
    """

    extremal: float = 1e-3
    maximization: float = 1e-5
    transversality: float = 1e-6
    final_time: float = 1e-6
    z_points: int = 101

    @classmethod
    def from_dict(cls, d: dict | None) -> "Tolerances":
        return cls(**(d or {}))

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class PMPReport:
    extremal_residual: float
    dense_max_residual: float
    scattered_grad_residual: float
    transversality_residual: float
    final_time_H_residual: float | None
    normal: bool
    nontrivial: bool
    tolerances: dict = field(default_factory=dict)

    @property
    def checks(self) -> list[tuple[str, float, float, bool]]:
        """``(name, residual, tolerance, pass)`` per condition."""
        rows = []
        for name in ("extremal_residual", "dense_max_residual", "scattered_grad_residual",
                     "transversality_residual", "final_time_H_residual"):
            val = getattr(self, name)
            if val is None:
                continue
            tol = self.tolerances[name]
            rows.append((name, float(val), float(tol), bool(val <= tol)))
        rows.append(("nontriviality", 0.0 if self.nontrivial else 1.0, 0.0, self.nontrivial))
        return rows

    @property
    def passed(self) -> bool:
        return all(ok for *_, ok in self.checks)

    @property
    def max_ratio(self) -> float:
        """Largest residual-to-tolerance ratio (``inf`` if a zero tolerance is exceeded)."""
        worst = 0.0
        for name, val, tol, _ in self.checks:
            if name == "nontriviality":
                continue
            if tol > 0:
                worst = max(worst, val / tol)
            elif val > 0:
                worst = np.inf
        return worst

    def to_text(self) -> str:
        lines = []
        for name, val, tol, ok in self.checks:
            lines.append(f"{name} = {val:.17g}")
            lines.append(f"{name}_tolerance = {tol:.17g}")
            lines.append(f"{name}_pass = {str(ok).lower()}")
        lines.append(f"normal = {str(self.normal).lower()}")
        lines.append(f"pass = {str(self.passed).lower()}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "residual", "tolerance", "pass"])
        for name, val, tol, ok in self.checks:
            w.writerow([name, f"{val:.17g}", f"{tol:.17g}", str(ok).lower()])
        return buf.getvalue()


def _extremal_residual(traj: Trajectory, adj: AdjointArc) -> float:
    """Sup-norm defect of the state and adjoint equations over all steps.

    Jump steps compare difference quotients with the exact right-hand
    sides.  Continuous steps use the Hermite-Simpson defect divided by the
    step length, which vanishes to fourth order on an exact solution.
    """
    g = traj.grid
    n = traj.problem.n
    A, _ = traj.jacobians
    FL, FR = traj.rates
    x, P, p0 = traj.x, adj.p, adj.p0
    worst = 0.0
    xm = traj.midpoints
    for k in range(len(g) - 1):
        if g.jump[k]:
            mu = g.mu[k]
            dx = (x[k + 1] - x[k]) / mu - FL[k]
            rate = -(A[k, 0][:n, :n].T @ P[k + 1] + p0 * A[k, 0][n, :n])
            dp = (P[k + 1] - P[k]) / mu - rate
        else:
            dt = g.dt[k]
            tm = 0.5 * (g.t[k] + g.t[k + 1])
            fm = traj.fbar(tm, xm[k, :n], traj.u[k])
            dx = (x[k + 1] - x[k] - dt / 6.0 * (FL[k] + 4.0 * fm + FR[k])) / dt
            pl, pr = adj.rates[0][k], adj.rates[1][k]
            pm = adj.midpoints[k]
            rm = -(A[k, 1][:n, :n].T @ pm + p0 * A[k, 1][n, :n])
            dp = (P[k + 1] - P[k] - dt / 6.0 * (pl + 4.0 * rm + pr)) / dt
        worst = max(worst, float(np.max(np.abs(dx))), float(np.max(np.abs(dp))))
    return worst


def dense_check_nodes(p: ControlProblem, traj: Trajectory) -> list[int]:
    """Right-dense controlling grid nodes away from segment ends and control switches."""
    g = traj.grid
    ends = {x for seg in p.control_scale.segments for x in seg}
    breaks = set(traj.control.breaks().tolist())
    out = []
    for k in range(1, len(g) - 1):
        t = g.t[k]
        if g.jump[k] or not p.is_dense_controlling(t):
            continue
        if any(abs(t - e) <= TOL for e in ends) or any(abs(t - b) <= TOL for b in breaks):
            continue
        if not np.array_equal(traj.u[k], traj.u[k - 1]):
            continue
        out.append(k)
    return out


def dense_gaps(p: ControlProblem, traj: Trajectory, adj: AdjointArc, points: int = 101):
    """Per checked node: ``(k, H at each z, H at u*)``."""
    Z = p.omega.grid(points)
    rhs = p.dynamics.rhs
    out = []
    for k in dense_check_nodes(p, traj):
        t, q, pk = traj.grid.t[k], traj.x[k, : p.n], adj.p[k]

        def H(z):
            f, f0 = rhs(t, q, z)
            return float(pk @ f + adj.p0 * f0)

        out.append((k, np.array([H(z) for z in Z]), H(traj.u[k])))
    return out


def scattered_inequalities(p: ControlProblem, ctrl: SampledControl, traj: Trajectory, adj: AdjointArc) -> np.ndarray:
    """``<G(r), y - u(r)>`` for every scattered ``r`` (rows) and sampled ``y`` (columns)."""
    Y = p.omega.samples()
    steps = hu_step_integrals(traj, adj)
    rows = []
    for i, r in enumerate(p.scattered_times):
        G = scattered_gradient(p, ctrl, traj, adj, r, steps)
        rows.append((Y - ctrl.scattered_values[i]) @ G)
    return np.array(rows).reshape(len(p.scattered_times), len(Y))


def evaluate_report(p: ControlProblem, ctrl: SampledControl, traj: Trajectory, adj: AdjointArc,
                    tolerances: Tolerances | None = None) -> PMPReport:
    """Residual of every necessary condition on a candidate extremal."""
    tol = tolerances or Tolerances()
    _check_grids(traj, adj)
    if traj.control is not ctrl:
        check_same_grid(p, ctrl, traj)
    g = traj.grid
    n = p.n
    pmax = float(np.max(np.abs(adj.p))) if adj.p.size else 0.0

    ext = _extremal_residual(traj, adj)

    # H along the extremal, used to scale the maximization tolerance
    Hs = [hamiltonian(p, g.t[k], traj.x[k, :n], adj.p[k + 1] if g.jump[k] else adj.p[k], adj.p0, traj.u[k])[0]
          for k in range(len(g) - 1)]
    Hmax = float(np.max(np.abs(Hs))) if Hs else 0.0

    dense = 0.0
    for _, Hz, Hu in dense_gaps(p, traj, adj, tol.z_points):
        dense = max(dense, float(np.max(Hz)) - Hu)
    dense = max(dense, 0.0)

    ineq = scattered_inequalities(p, ctrl, traj, adj)
    scat = max(float(np.max(ineq)) if ineq.size else 0.0, 0.0)

    kind = p.terminal.kind
    if kind == FIXED_INITIAL:
        trans = max(float(np.max(np.abs(adj.p[-1]))), abs(adj.p0 + 1.0))
    elif kind == PERIODIC:
        trans = float(np.max(np.abs(adj.p[0] - adj.p[-1])))
    else:
        trans = 0.0

    final = None
    last_l, last_r = p.state_scale.segments[-1]
    if p.terminal.free_final_time and last_r > last_l:
        final = abs(hamiltonian(p, g.t[-1], traj.x[-1, :n], adj.p[-1], adj.p0, traj.u[-1])[0])

    nontrivial = bool(np.any(adj.p != 0.0) or adj.p0 != 0.0)
    tols = {
        "extremal_residual": tol.extremal * (1.0 + pmax),
        "dense_max_residual": tol.maximization * (1.0 + Hmax),
        "scattered_grad_residual": tol.maximization * (1.0 + Hmax),
        "transversality_residual": tol.transversality,
        "final_time_H_residual": tol.final_time,
    }
    return PMPReport(ext, dense, scat, trans, final, adj.p0 != 0.0, nontrivial, tols)
