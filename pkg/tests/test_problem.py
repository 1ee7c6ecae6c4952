import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tspmp.errors import ConstraintViolation, DimensionMismatch, InvalidRange, PointNotInScale
from tspmp.problem import (FIXED_INITIAL, ControlBox, ControlProblem, LinearQuadratic, SampledControl, TerminalSpec,
                           control_value, eval_dynamics)
from tspmp.timescale import TimeScale

from conftest import CONT, DISC, HYBRID, consumption, every


def test_consumption_at_unit_point():
    ev = eval_dynamics(every(2), 3.0, [1.0], [1.0])
    assert ev.f[0] == 1 and ev.f0 == 0
    assert ev.df_dq[0, 0] == 1 and ev.df_du[0, 0] == 1 and ev.df0_dq[0] == 0 and ev.df0_du[0] == 1


def test_consumption_no_reinvestment():
    q = math.exp(10)
    ev = eval_dynamics(every(2), 10.0, [q], [0.0])
    assert ev.f[0] == 0 and ev.f0 == -q


def test_control_outside_box():
    with pytest.raises(ConstraintViolation):
        eval_dynamics(every(2), 0.0, [1.0], [1.0 + 1e-9])
    eval_dynamics(every(2), 0.0, [1.0], [1.0 + 1e-13])


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        eval_dynamics(every(2), 0.0, [1.0, 2.0], [0.5])


def test_control_scale_must_be_inside_state_scale():
    with pytest.raises(InvalidRange):
        consumption(TimeScale.points([0, 0.5, 12]), DISC)


def test_control_scale_extended_with_b():
    p = every(9)
    assert p.control_scale.b == 12
    assert list(p.scattered_times) == [0, 9]
    assert p.sigma1(9) == 12


class TestControlValue:
    def test_hold(self):
        p = every(2)
        ctrl = SampledControl.constant(p, 0.0).with_scattered(4, 1.0)
        assert control_value(p, ctrl, 5.7)[0] == 1.0
        assert control_value(p, ctrl, 6.0)[0] == 0.0

    def test_hybrid_gap_uses_last_controlling_time(self):
        p = consumption(HYBRID)
        ctrl = SampledControl.constant(p, 0.2, cell=1.0).with_scattered(6, 0.7).split_dense(2.0, 0.9)
        # 6 is the right end of [0,6] and right-scattered, so its stored value holds on [6,10)
        assert control_value(p, ctrl, 8.0)[0] == 0.7
        assert control_value(p, ctrl, 2.5)[0] == 0.9
        assert control_value(p, ctrl, 11.7)[0] == 0.2

    def test_end_of_window(self):
        p = every(2)
        with pytest.raises(PointNotInScale):
            control_value(p, SampledControl.constant(p, 0.5), 12.0)

    def test_projection_on_construction(self):
        p = every(4)
        ctrl = SampledControl.build(p, [[1.7], [-0.2], [0.4]])
        assert ctrl.scattered_values[:, 0].tolist() == [1.0, 0.0, 0.4]

    def test_params_roundtrip(self):
        p = consumption(HYBRID)
        ctrl = SampledControl.constant(p, 0.3, cell=0.5)
        v = np.linspace(0, 1, len(ctrl.params()))[:, None]
        assert np.array_equal(ctrl.with_params(v).params(), v)
        widths = [d - c for c, d in ctrl.param_intervals(p)]
        assert sum(widths) == pytest.approx(12.0)


@settings(max_examples=100, deadline=None)
@given(data=st.data())
def test_control_value_piecewise_constant(data):
    p = every(3)
    vals = data.draw(st.lists(st.floats(0, 1), min_size=4, max_size=4))
    ctrl = SampledControl.build(p, np.array(vals)[:, None])
    t = data.draw(st.floats(0, 11.999))
    r = 3 * math.floor(t / 3 + 1e-12)
    assert control_value(p, ctrl, t)[0] == vals[r // 3]


@settings(max_examples=100, deadline=None)
@given(u=st.floats(-5, 5), lo=st.floats(-2, 0), hi=st.floats(0, 2))
def test_projection_idempotent_and_lipschitz(u, lo, hi):
    box = ControlBox([lo], [hi])
    pu = box.project([u])
    assert np.array_equal(box.project(pu), pu)
    assert abs(pu[0] - box.project([u + 0.3])[0]) <= 0.3 + 1e-15


def _fd_partials(dyn, t, q, u, eps=1e-5):
    def stack(qq, uu):
        f, f0 = dyn.rhs(t, qq, uu)
        return np.append(f, f0)

    n, m = len(q), len(u)
    Jq = np.column_stack([(stack(q + eps * e, u) - stack(q - eps * e, u)) / (2 * eps) for e in np.eye(n)])
    Ju = np.column_stack([(stack(q, u + eps * e) - stack(q, u - eps * e)) / (2 * eps) for e in np.eye(m)])
    return Jq, Ju


@pytest.mark.parametrize("template", ["consumption", "linear_quadratic"])
def test_partials_match_central_differences(template, rng):
    if template == "consumption":
        p = every(2)
    else:
        dyn = LinearQuadratic(A=[[0.2, -1.0], [0.5, 0.1]], B=[[1.0], [0.3]], Q=[[2.0, 0.1], [0.1, 1.0]], R=[[0.5]],
                              c=[0.1, -0.2])
        p = ControlProblem(CONT, TimeScale.uniform(0, 1, 12), dyn, ControlBox([-5.0], [5.0]),
                           TerminalSpec(FIXED_INITIAL, [0.0, 0.0]))
    for _ in range(100):
        t = rng.uniform(0, 12)
        q = rng.normal(size=p.n) * 3
        u = rng.uniform(p.omega.lo, p.omega.hi)
        ev = eval_dynamics(p, t, q, u)
        Jq, Ju = _fd_partials(p.dynamics, t, q, u)
        exact_q = np.vstack([ev.df_dq, ev.df0_dq[None, :]])
        exact_u = np.vstack([ev.df_du, ev.df0_du[None, :]])
        np.testing.assert_allclose(exact_q, Jq, rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(exact_u, Ju, rtol=1e-6, atol=1e-9)
