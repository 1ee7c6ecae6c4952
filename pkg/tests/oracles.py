"""Finite-difference oracles for variation vectors, shared by several test modules."""

import numpy as np

from tspmp.integrate import Dense, Initial, Scattered, forward, variation_endpoint
from tspmp.problem import SampledControl, control_value
from tspmp.timescale import TimeScale, build_grid

from conftest import CONT, DISC, HYBRID, consumption

H = 0.012


def random_instance(rng):
    """A consumption problem on a random pair of scales with an interior control."""
    kind = rng.integers(0, 3)
    if kind == 0:
        choice = rng.integers(0, 3)
        if choice == 2:
            ts1 = HYBRID
        else:
            ts1 = TimeScale.uniform(0, [1, 2, 3, 4, 6][rng.integers(0, 5)], 12)
        p = consumption(ts1, CONT)
    elif kind == 1:
        p = consumption(TimeScale.uniform(0, [1, 2, 3, 4, 6][rng.integers(0, 5)], 12), DISC)
    else:
        p = consumption(HYBRID, HYBRID)
    ctrl = SampledControl.constant(p, 0.5, cell=1.0)
    ctrl = ctrl.with_params(rng.uniform(0.1, 0.9, ctrl.params().shape))
    return p, ctrl


def _far_from(rng, u):
    while True:
        y = rng.uniform(0.0, 1.0)
        if abs(y - u) >= 0.2:
            return y


def random_request(rng, p, ctrl):
    kinds = ["scattered", "initial"] + (["dense"] * 2 if p.dense_segments() else [])
    kind = kinds[rng.integers(0, len(kinds))]
    if kind == "scattered":
        i = rng.integers(0, len(p.scattered_times))
        return Scattered(float(p.scattered_times[i]), [_far_from(rng, ctrl.scattered_values[i, 0])])
    if kind == "initial":
        return Initial([float(rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0))])
    g = p.grid(H, ctrl)
    marks = list(ctrl.breaks()) + [e for seg in p.control_scale.segments for e in seg]
    nodes = [t for k, t in enumerate(g.t[:-1])
             if p.is_dense_controlling(t) and not g.jump[k] and all(abs(t - m) > 0.05 for m in marks)]
    s = float(nodes[rng.integers(0, len(nodes))])
    return Dense(s, [_far_from(rng, control_value(p, ctrl, s)[0])])


def fd_derivative(p, ctrl, req):
    """Richardson-extrapolated finite-difference derivative of ``q0(b)`` along ``req``.

    Scattered swaps and initial perturbations use central differences;
    dense needles are one-sided.  Returns ``(fd, w0)`` where ``w0`` comes
    from the variation vector on the same grid.
    """
    q_a = p.terminal.q_a
    if isinstance(req, Scattered):
        u = ctrl.scattered_value(req.r)[0]
        dv = req.y[0] - u
        J = lambda a: forward(p, ctrl.with_scattered(req.r, u + a * dv), q_a, H).cost
        D = lambda a: (J(a) - J(-a)) / (2 * a)
        fd = (4 * D(5e-4) - D(1e-3)) / 3
        tr = forward(p, ctrl, q_a, H)
        return fd, variation_endpoint(p, ctrl, tr, req)[1]
    if isinstance(req, Initial):
        J = lambda a: forward(p, ctrl, q_a + a * np.asarray(req.dq), H).cost
        D = lambda a: (J(a) - J(-a)) / (2 * a)
        fd = (4 * D(5e-4) - D(1e-3)) / 3
        tr = forward(p, ctrl, q_a, H)
        return fd, variation_endpoint(p, ctrl, tr, req)[1]
    a = 2e-3
    s = req.s
    grid = build_grid(p.state_scale, p.control_scale, H, list(ctrl.breaks()) + [s, s + a, s + a / 2])
    base_ctrl = ctrl.split_dense(s).split_dense(s + a).split_dense(s + a / 2)
    base = forward(p, base_ctrl, q_a, H, grid=grid)

    def needle_cost(alpha):
        c = base_ctrl
        for t in (s, s + a / 2, s + a):
            if t < s + alpha - 1e-12:
                c = c.split_dense(t, req.z)
        return forward(p, c, q_a, H, grid=grid).cost

    D = lambda alpha: (needle_cost(alpha) - base.cost) / alpha
    fd = 2 * D(a / 2) - D(a)
    return fd, variation_endpoint(p, base_ctrl, base, req)[1]
