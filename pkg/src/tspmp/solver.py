"""Optimal sampled-data controls: closed-form backward sweep and a direct gradient solver.

The sweep is specific to the consumption template (``f = u q``,
``f0 = (u - 1) q``, ``Ω = [0, 1]``) on a continuous window or on the unit
integer grid.  Going backward from ``b`` with ``p(b) = 0``, each sampling
interval ``[r, σ₁(r))`` is decided from the sign pattern of a scalar kernel
(``gamma_r`` or ``lambda_r``) and ``p`` is pushed across the interval in
closed form.  Right-dense stretches of the control scale follow the
bang-bang law ``u = 1`` iff ``p > 1``.

``direct_solve`` is problem-agnostic: projected gradient descent on the
cost with the integrated ``∂H/∂u`` as exact gradient.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import optimize

from .errors import OutOfDomain, SolveError, UnsupportedScenario
from .integrate import AdjointArc, Trajectory, backward_adjoint, forward
from .pmp import PMPReport, Tolerances, evaluate_report, parameter_gradients
from .problem import FIXED_INITIAL, Consumption, ControlProblem, SampledControl

log = logging.getLogger(__name__)

#: below this value of |μ x| the kernels switch to their Taylor expansion
SERIES_CUTOFF = 1e-2


# ---------------------------------------------------------------------------
# scalar kernels

def _check_x(x: float) -> None:
    if not (-1e-12 <= x <= 1.0 + 1e-12):
        raise OutOfDomain(f"x must lie in [0, 1], got {x}")


def gamma_r(x: float, mu1: float, p_next: float) -> float:
    """Continuous-scale decision kernel on one sampling interval.

    ``[e^{-μx} - (1 + μx(x(1-P) - 1))] / x²``, extended continuously by
    ``μ(P + μ/2 - 1)`` at ``x = 0``.  Its sign is the sign of the
    derivative, in ``x``, of the value collected over the interval.
    """
    _check_x(x)
    if mu1 <= 0:
        raise OutOfDomain("mu1 must be positive")
    mu, P = float(mu1), float(p_next)
    if abs(mu * x) < SERIES_CUTOFF:
        # N / x² = μ²/2 - μ(1-P) + Σ_{j≥3} (-μ)^j x^{j-2} / j!
        tail = sum((-mu) ** j * x ** (j - 2) / math.factorial(j) for j in range(3, 16))
        return mu * mu / 2.0 - mu * (1.0 - P) + tail
    return (math.exp(-mu * x) - (1.0 + mu * x * (x * (1.0 - P) - 1.0))) / (x * x)


def _lambda_poly(mu: int, P: float) -> np.ndarray:
    """Coefficients of the polynomial ``lambda_r(·, mu, P)`` (increasing degree)."""
    a = npoly.polypow([1.0, 1.0], mu - 1)
    b = [1.0, 1.0 - mu, mu * (1.0 - P)]
    num = npoly.polysub([1.0], npoly.polymul(a, b))
    num = np.pad(num, (0, max(0, 3 - len(num))))
    return num[2:]


def lambda_r(x: float, mu1: int, p_next: float) -> float:
    """Discrete-scale decision kernel on one sampling interval.

    ``[1 - (1+x)^{μ-1}(1 + μx(x(1-P) - 1) + x)] / x²`` with value
    ``μ(P + (μ-3)/2)`` at ``x = 0``.  For integer ``μ`` the numerator is a
    polynomial divisible by ``x²``, so the quotient is evaluated exactly as
    a polynomial; no cancellation arises near ``x = 0``.
    """
    _check_x(x)
    if mu1 < 1 or int(mu1) != mu1:
        raise OutOfDomain(f"mu1 must be a positive integer, got {mu1}")
    return float(npoly.polyval(x, _lambda_poly(int(mu1), float(p_next))))


def interval_value_continuous(x: float, mu1: float, p_next: float) -> float:
    """Value per unit state at ``r`` when ``u(r) = x``: consumption over ``[r, σ₁(r))`` plus ``P q(σ₁(r))``."""
    growth = math.exp(x * mu1)
    ratio = mu1 if x == 0 else math.expm1(x * mu1) / x
    return (1.0 - x) * ratio + p_next * growth


def interval_value_discrete(x: float, mu1: int, p_next: float) -> float:
    """Discrete counterpart of :func:`interval_value_continuous` (unit steps)."""
    growth = (1.0 + x) ** mu1
    ratio = float(mu1) if x == 0 else math.expm1(mu1 * math.log1p(x)) / x
    return (1.0 - x) * ratio + p_next * growth


@dataclass
class Decision:
    value: float
    rule: str  # "lower", "upper", "root" or "fallback"
    sign_changes: int


def decide_scattered_control(kernel: Callable[[float], float], objective: Callable[[float], float] | None = None,
                             samples: int = 1001) -> Decision:
    """Pick ``u(r)`` in ``[0, 1]`` from the sign pattern of ``kernel``.

    * kernel < 0 on ``(0, 1]`` → 0;
    * kernel > 0 on ``[0, 1)`` → 1;
    * kernel(0) > 0 > kernel(1) → bisection root (tolerance 1e-10);
    * otherwise ``objective`` (the interval value) is maximized by a
      bounded scalar search seeded at the best sample, and a warning is logged.
    """
    xs = np.linspace(0.0, 1.0, samples)
    vals = np.array([kernel(x) for x in xs])
    signs = np.sign(vals)
    nz = signs[signs != 0]
    changes = int(np.count_nonzero(np.diff(nz)))
    if changes > 1:
        log.warning("kernel changes sign %d times on [0, 1]", changes)
    if np.all(vals[1:] < 0):
        return Decision(0.0, "lower", changes)
    if np.all(vals[:-1] > 0):
        return Decision(1.0, "upper", changes)
    if vals[0] > 0 and vals[-1] < 0:
        root = optimize.bisect(kernel, 0.0, 1.0, xtol=1e-10)
        return Decision(float(root), "root", changes)
    if objective is None:
        best = float(xs[np.argmin(np.abs(vals))])
    else:
        obj = np.array([objective(x) for x in xs])
        i = int(np.argmax(obj))
        lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, samples - 1)]
        res = optimize.minimize_scalar(lambda x: -objective(x), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-10})
        best = float(res.x) if -res.fun >= obj[i] else float(xs[i])
    log.warning("kernel sign pattern matches no rule; value chosen by direct maximization: %.6g", best)
    return Decision(best, "fallback", changes)


# ---------------------------------------------------------------------------
# results

@dataclass
class SolveResult:
    control: SampledControl
    trajectory: Trajectory
    adjoint: AdjointArc
    report: PMPReport
    method: str
    diagnostics: list[str] = field(default_factory=list)
    checkpoints: dict[float, float] = field(default_factory=dict)
    iterations: int = 0
    converged: bool = True

    @property
    def cost(self) -> float:
        """Final value of the accumulated running cost ``q0(b)``."""
        return self.trajectory.cost

    @property
    def consumption(self) -> float:
        """``C = -q0(b)`` under the consumption sign convention."""
        return -self.trajectory.cost


def _finish(p: ControlProblem, ctrl: SampledControl, h: float, tol: Tolerances | None, method: str, **kw) -> SolveResult:
    traj = forward(p, ctrl, p.terminal.q_a, h)
    adj = backward_adjoint(p, ctrl, traj, np.zeros(p.n), -1.0)
    rep = evaluate_report(p, ctrl, traj, adj, tol)
    return SolveResult(ctrl, traj, adj, rep, method, **kw)


# ---------------------------------------------------------------------------
# backward sweep for the consumption family

@dataclass
class SweepState:
    """Mutable bookkeeping of the backward recursion."""

    p_next: float
    scattered: dict[float, float] = field(default_factory=dict)
    dense: dict[float, tuple[list[float], list[float]]] = field(default_factory=dict)
    checkpoints: dict[float, float] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)

    def record(self, t: float, p: float) -> None:
        if p < -1e-12:
            raise SolveError(f"adjoint became negative ({p}) at t={t}")
        self.p_next = p
        self.checkpoints[float(t)] = p


def _check_consumption(p: ControlProblem) -> str:
    if not isinstance(p.dynamics, Consumption):
        raise UnsupportedScenario("the backward sweep only handles the consumption template")
    if p.terminal.kind != FIXED_INITIAL:
        raise UnsupportedScenario("the backward sweep needs a fixed initial state and free final state")
    if not (np.allclose(p.omega.lo, 0.0) and np.allclose(p.omega.hi, 1.0)):
        raise UnsupportedScenario("the backward sweep needs Ω = [0, 1]")
    ts = p.state_scale
    if ts.is_interval:
        return "continuous"
    if ts.is_purely_discrete:
        pts = np.array([l for l, _ in ts.segments])
        if np.allclose(np.diff(pts), 1.0, atol=1e-12, rtol=0):
            return "discrete"
    raise UnsupportedScenario("the state scale must be a single interval or a unit-step integer grid")


def _dense_backward(state: SweepState, l: float, r: float) -> None:
    """Bang-bang law on a right-dense stretch ``[l, r)`` of the control scale.

    Backward from ``r``: while ``p < 1`` the control is 0 and ``p`` grows
    linearly; once ``p`` reaches 1 the control is 1 and ``p`` grows
    exponentially, so at most one switch occurs.
    """
    P = state.p_next
    if P < 1.0:
        p_zero = lambda t: P + (r - t) - 1.0
        if p_zero(l) > 0:
            ts = optimize.bisect(p_zero, l, r, xtol=1e-10)
        else:
            ts = l
        if ts > l:
            nodes, vals = [l, ts], [1.0, 0.0]
            p_l = 1.0 * math.exp(ts - l)
            state.diagnostics.append(f"switch from 1 to 0 at t={ts:.12g}")
        else:
            nodes, vals = [l], [0.0]
            p_l = P + (r - l)
    else:
        nodes, vals = [l], [1.0]
        p_l = P * math.exp(r - l)
    # p is strictly decreasing on the stretch, so a second crossing is impossible
    assert p_l >= P - 1e-12
    state.dense[l] = (nodes, vals)
    state.record(l, p_l)


def sweep_closed_form(p: ControlProblem) -> SweepState:
    """Backward recursion only: decisions and closed-form adjoint checkpoints.

    ``state.checkpoints[a] * q_a`` is the optimal consumption.
    """
    kind = _check_consumption(p)
    ts1 = p.control_scale
    if kind == "discrete" and not ts1.is_purely_discrete:
        raise UnsupportedScenario("a discrete state scale needs a discrete control scale")
    state = SweepState(0.0)
    state.record(p.b, 0.0)
    segs = ts1.segments
    last_l, last_r = segs[-1]
    if last_r > last_l:
        _dense_backward(state, last_l, last_r)
    for i in range(len(segs) - 2, -1, -1):
        l, r = segs[i]
        mu1 = p.sigma1(r) - r
        P = state.p_next
        if kind == "continuous":
            dec = decide_scattered_control(lambda x: gamma_r(x, mu1, P),
                                           lambda x: interval_value_continuous(x, mu1, P))
            p_r = interval_value_continuous(dec.value, mu1, P)
        else:
            mu_int = int(round(mu1))
            dec = decide_scattered_control(lambda x: lambda_r(x, mu_int, P),
                                           lambda x: interval_value_discrete(x, mu_int, P))
            p_r = P
            for _ in range(mu_int):
                p_r = (1.0 + dec.value) * p_r + 1.0 - dec.value
        if dec.rule == "fallback" or dec.sign_changes > 1:
            state.diagnostics.append(f"u({r:.12g}) = {dec.value:.12g} by {dec.rule} "
                                     f"({dec.sign_changes} sign changes)")
        state.scattered[r] = dec.value
        state.record(r, p_r)
        if r > l:
            _dense_backward(state, l, r)
    return state


def backward_sweep_consumption(p: ControlProblem, h: float | None = None, tolerances: Tolerances | None = None) -> SolveResult:
    """Optimal control of the consumption problem by backward recursion.

    The closed-form decisions are then integrated forward on the grid and
    certified with :func:`evaluate_report`.

    Raises
    ------
    UnsupportedScenario
        For other templates, boxes or state scales.
    """
    state = sweep_closed_form(p)
    sv = [state.scattered[r] for r in p.scattered_times]
    dense = [state.dense[l] for l, _ in p.dense_segments()]
    ctrl = SampledControl.build(p, np.array(sv).reshape(-1, 1), dense)
    h = p.default_step() if h is None else h
    res = _finish(p, ctrl, h, tolerances, "sweep", diagnostics=state.diagnostics,
                  checkpoints=dict(sorted(state.checkpoints.items())))
    if not res.report.passed:
        res.diagnostics.append("PMP report does not pass")
    return res


# ---------------------------------------------------------------------------
# direct solver

@dataclass
class DirectOptions:
    gtol: float = 1e-8
    max_iter: int = 10_000
    armijo: float = 1e-4
    stall_iter: int = 30
    cell: float | None = 0.5


def direct_solve(p: ControlProblem, init: SampledControl, h: float | None = None,
                 opts: DirectOptions | None = None, tolerances: Tolerances | None = None) -> SolveResult:
    """Projected gradient descent on the cost over the control parameters.

    The gradient of ``q0(b)`` with respect to a parameter held on ``I`` is
    ``-∫_I ∂H/∂u Δτ`` (adjoint with ``p(b) = 0``, ``p0 = -1``).  Steps are
    preconditioned by the Δ-measure of ``I``, sized by Barzilai-Borwein,
    safeguarded by Armijo backtracking along the projection arc, and
    projected onto the box.

    Stationarity is measured as ``max |Π(v - g̃) - v|`` with ``g̃`` the
    preconditioned gradient divided by ``1 + |J|``; iteration stops when it
    falls below ``gtol``, when the cost has not improved for
    ``stall_iter`` consecutive iterations, or after ``max_iter``.
    """
    if p.terminal.kind != FIXED_INITIAL:
        raise UnsupportedScenario("direct_solve needs a fixed initial state and free final state")
    opts = opts or DirectOptions()
    h = p.default_step() if h is None else h
    lo, hi = p.omega.lo, p.omega.hi
    meas = np.array([d - c for c, d in init.param_intervals(p)])[:, None]

    def evaluate(v):
        ctrl = init.with_params(v)
        traj = forward(p, ctrl, p.terminal.q_a, h)
        adj = backward_adjoint(p, ctrl, traj, np.zeros(p.n), -1.0)
        grad = -parameter_gradients(p, ctrl, traj, adj)
        return traj.cost, grad

    v = np.clip(init.params(), lo, hi)
    J, g = evaluate(v)
    best = (J, v)
    alpha = 1.0 / max(float(np.max(np.abs(g / meas))), 1e-300)
    stall, it, reason = 0, 0, "max_iter"
    for it in range(1, opts.max_iter + 1):
        d = -g / meas
        pg = np.max(np.abs(np.clip(v + d / (1.0 + abs(J)), lo, hi) - v))
        if pg <= opts.gtol:
            reason = "stationary"
            break
        a = alpha
        while True:
            v_new = np.clip(v + a * d, lo, hi)
            step = v_new - v
            if not np.any(step):
                a = 0.0
                break
            J_new, g_new = evaluate(v_new)
            if J_new <= J + opts.armijo * float(np.sum(g * step)):
                break
            a *= 0.5
            if a * float(np.max(np.abs(d))) < 1e-16:
                a = 0.0
                break
        if a == 0.0:
            reason = "line search failed"
            break
        s, y = v_new - v, g_new - g
        sy = float(np.sum(s * y))
        alpha = float(np.sum(s * s * meas)) / sy if sy > 0 else 2.0 * a
        improved = J_new < best[0] - 1e-15 * abs(best[0])
        v, J, g = v_new, J_new, g_new
        if improved:
            best, stall = (J, v), 0
        else:
            stall += 1
            if stall >= opts.stall_iter:
                reason = "stall"
                break
    v = best[1]
    ctrl = init.with_params(v)
    converged = reason in ("stationary", "stall", "line search failed")
    diag = [f"stopped after {it} iterations: {reason}"]
    log.info("direct_solve: %s", diag[0])
    return _finish(p, ctrl, h, tolerances, "direct", diagnostics=diag, iterations=it, converged=converged)
