import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tspmp.errors import EmptyPredecessor, InvalidRange, InvalidStep, ParseError, PointNotInScale
from tspmp.timescale import Kind, TimeScale, build_grid, delta_integral, exp_generalized, jump, phi

from conftest import CONT, DISC, HYBRID


class TestJump:
    def test_integer_point(self):
        s, mu, cls = jump(DISC, 3)
        assert (s, mu) == (4, 1)
        assert cls.kind is Kind.RIGHT_SCATTERED and cls.graininess == 1

    def test_interval_interior(self):
        assert jump(CONT, 5.5)[:2] == (5.5, 0.0)
        assert jump(CONT, 5.5)[2].kind is Kind.RIGHT_DENSE

    def test_gap_between_segments(self):
        s, mu, cls = jump(HYBRID, 6)
        assert (s, mu) == (10, 4) and cls.scattered

    def test_window_end_is_right_dense(self):
        assert jump(DISC, 12)[:2] == (12, 0.0)
        assert jump(HYBRID, 12)[:2] == (12, 0.0)

    def test_outside(self):
        with pytest.raises(PointNotInScale):
            jump(HYBRID, 8)


class TestPhi:
    def test_sampling_hold(self):
        assert phi(CONT, TimeScale.uniform(0, 2, 12), 5.3) == 4

    def test_fixed_points(self):
        ts1 = TimeScale.uniform(0, 2, 12)
        for t in ts1.segments:
            assert phi(CONT, ts1, t[0]) == t[0]

    def test_hybrid_control_scale(self):
        assert phi(CONT, HYBRID, 11.0) == 10
        assert phi(CONT, HYBRID, 8.0) == 6
        assert phi(CONT, HYBRID, 3.7) == 3.7

    def test_empty_predecessor(self):
        with pytest.raises(EmptyPredecessor):
            phi(CONT, TimeScale.interval(1, 12), 0.5)


class TestDeltaIntegral:
    def test_counting_measure(self):
        assert delta_integral(DISC, lambda t: 1.0, 0, 3) == 3

    def test_ordinary_integral(self):
        assert delta_integral(CONT, lambda t: t, 0, 2) == pytest.approx(2.0, abs=1e-12)

    def test_point_plus_interval(self):
        ts = TimeScale.union(TimeScale.points([0]), TimeScale.interval(1, 2))
        assert delta_integral(ts, lambda t: 1.0, 0, 2) == pytest.approx(2.0, abs=1e-12)

    def test_vector_valued(self):
        val = delta_integral(HYBRID, lambda t: np.array([1.0, t]), 0, 12)
        assert val[0] == pytest.approx(12.0, abs=1e-12)
        # ∫₀⁶ t + 4·6 + ∫_{11.5}^{12} t  (10 is scattered with μ = 1.5)
        assert val[1] == pytest.approx(18 + 24 + 15 + 5.875, abs=1e-10)

    def test_reversed(self):
        with pytest.raises(InvalidRange):
            delta_integral(CONT, lambda t: 1.0, 3, 2)


class TestExponential:
    def test_empty_range(self):
        assert exp_generalized(HYBRID, 3.0, 10, 10) == 1.0

    def test_continuous(self):
        assert exp_generalized(CONT, 2.0, 0, 1) == pytest.approx(math.exp(2), rel=1e-12)

    def test_discrete_product(self):
        assert exp_generalized(DISC, 1.0, 0, 3) == pytest.approx(8.0, rel=1e-14)

    def test_hybrid(self):
        # e^{6L} (1 + 4L) (1 + 1.5L) e^{0.5L}
        L = 0.3
        expected = math.exp(6.5 * L) * (1 + 4 * L) * (1 + 1.5 * L)
        assert exp_generalized(HYBRID, L, 0, 12) == pytest.approx(expected, rel=1e-12)


class TestGrid:
    def test_discrete(self):
        g = build_grid(DISC, DISC, 0.1)
        assert np.array_equal(g.t, np.arange(13.0))
        assert np.all(g.mu[:-1] == 1) and g.mu[-1] == 0

    def test_uniform_subdivision(self):
        g = build_grid(TimeScale.interval(0, 1), TimeScale.points([0]), 0.25)
        assert np.allclose(g.t, [0, 0.25, 0.5, 0.75, 1])
        assert not g.jump.any()

    def test_hybrid_counts(self):
        g = build_grid(HYBRID, HYBRID, 0.5)
        for t in (6, 10, 11.5):
            g.index(t)
        assert np.sum((g.t >= 0) & (g.t < 6)) == 12
        assert np.sum((g.t >= 11.5) & (g.t < 12)) == 1
        assert len(g) == 16
        assert g.mu[g.index(6)] == 4 and g.mu[g.index(10)] == 1.5

    def test_breaks_become_nodes(self):
        g = build_grid(CONT, TimeScale.uniform(0, 3, 12), 0.7, breaks=[1.234])
        for t in (0, 3, 6, 9, 12, 1.234):
            g.index(t)
        assert np.max(np.diff(g.t)) <= 0.7 + 1e-12

    def test_bad_step(self):
        with pytest.raises(InvalidStep):
            build_grid(CONT, CONT, 0.0)


class TestConstruction:
    def test_overlapping_segments_rejected(self):
        with pytest.raises(InvalidRange):
            TimeScale(((0.0, 2.0), (1.0, 3.0)))

    def test_union_merges(self):
        ts = TimeScale.union(TimeScale.interval(0, 2), TimeScale.interval(1, 3), TimeScale.points([5]))
        assert ts.segments == ((0.0, 3.0), (5.0, 5.0))

    @pytest.mark.parametrize("spec", [
        {"kind": "interval", "l": 0, "r": 12},
        {"kind": "uniform", "start": 0, "period": 2},
        {"kind": "union", "parts": [{"kind": "interval", "l": 0, "r": 6}, {"kind": "points", "values": [10, 11.5]}]},
    ])
    def test_spec_roundtrip(self, spec):
        ts = TimeScale.from_spec(spec, (0, 12))
        assert TimeScale.from_spec(ts.to_spec(), (0, 12)) == ts

    def test_spec_clips_to_window(self):
        ts = TimeScale.from_spec({"kind": "points", "values": [-1, 3, 20]}, (0, 12))
        assert ts.segments == ((3.0, 3.0),)

    @pytest.mark.parametrize("spec", [{"kind": "spiral"}, {"kind": "interval", "l": 0}, {"kind": "points", "values": [50]}])
    def test_bad_spec(self, spec):
        with pytest.raises(ParseError):
            TimeScale.from_spec(spec, (0, 12))


# ---------------------------------------------------------------------------
# properties

@st.composite
def time_scales(draw):
    """Random finite unions of intervals and points inside [0, 20]."""
    cuts = sorted(set(draw(st.lists(st.integers(0, 80), min_size=1, max_size=12))))
    segs = []
    i = 0
    while i < len(cuts):
        if i + 1 < len(cuts) and draw(st.booleans()):
            segs.append((cuts[i] / 4, cuts[i + 1] / 4))
            i += 2
        else:
            segs.append((cuts[i] / 4, cuts[i] / 4))
            i += 1
    return TimeScale(tuple(segs))


def members(ts, data, n=1):
    out = []
    for _ in range(n):
        l, r = data.draw(st.sampled_from(ts.segments))
        out.append(data.draw(st.floats(l, r)) if r > l else l)
    return out


@settings(max_examples=100, deadline=None)
@given(ts=time_scales(), data=st.data())
def test_sigma_properties(ts, data):
    (t,) = members(ts, data)
    s, mu, cls = jump(ts, t)
    assert s >= t and mu >= 0 and ts.contains(s)
    assert mu == s - t or abs(mu - (s - t)) <= 1e-12
    assert cls.scattered == (mu > 0)


@settings(max_examples=100, deadline=None)
@given(ts=time_scales(), data=st.data())
def test_phi_properties(ts, data):
    ts1 = TimeScale(ts.segments[: data.draw(st.integers(1, len(ts.segments)))])
    t1, t2 = sorted(members(ts, data, 2))
    f1, f2 = phi(ts, ts1, t1), phi(ts, ts1, t2)
    assert f1 <= f2
    assert f1 <= t1 + 1e-9
    assert phi(ts, ts1, f1) == f1
    assert (f1 == t1) == ts1.contains(t1) or abs(f1 - t1) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(ts=time_scales(), data=st.data())
def test_integral_additivity_and_measure(ts, data):
    c, d, e = sorted(members(ts, data, 3))
    f = lambda t: 1.0
    assert abs(delta_integral(ts, f, c, d) - (d - c)) <= 1e-12
    # Simpson is exact on cubics, so additivity holds up to rounding
    g = lambda t: t ** 3 - 2.0 * t + 1.0
    total = delta_integral(ts, g, c, e)
    assert abs(delta_integral(ts, g, c, d) + delta_integral(ts, g, d, e) - total) <= 1e-12 * max(1.0, abs(total))


@settings(max_examples=100, deadline=None)
@given(ts=time_scales(), data=st.data(), L=st.floats(0, 2))
def test_exponential_properties(ts, data, L):
    c, d, t = sorted(members(ts, data, 3))
    e_tc = exp_generalized(ts, L, c, t)
    assert e_tc >= 1.0
    assert exp_generalized(ts, L, c, d) <= e_tc * (1 + 1e-12)
    assert e_tc == pytest.approx(exp_generalized(ts, L, d, t) * exp_generalized(ts, L, c, d), rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(L=st.floats(0, 3), c=st.integers(0, 12), k=st.integers(0, 12))
def test_exponential_closed_forms(L, c, k):
    t = min(c + k, 12)
    assert exp_generalized(DISC, L, c, t) == pytest.approx((1 + L) ** (t - c), rel=1e-12)
    assert exp_generalized(CONT, L, c, t) == pytest.approx(math.exp(L * (t - c)), rel=1e-10)
