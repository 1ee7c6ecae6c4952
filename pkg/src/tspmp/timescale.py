"""Bounded time scales and the Δ-calculus primitives built on them.

A time scale is stored as an ordered tuple of disjoint closed segments
``[l_i, r_i]``; a degenerate segment (``l_i == r_i``) is an isolated point.
The working window is ``[a, b]`` with ``a = l_1`` and ``b = r_last``.  By
convention ``sigma(b) = b`` so the right end of the window is treated as
right-dense.

Right-scattered points are exactly the right endpoints of all segments but
the last one, with graininess ``mu(r_i) = l_{i+1} - r_i``.
"""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import EmptyPredecessor, InvalidRange, InvalidStep, ParseError, PointNotInScale

#: absolute tolerance for membership tests on user-supplied times
TOL = 1e-9


class Kind(str, enum.Enum):
    RIGHT_DENSE = "RD"
    RIGHT_SCATTERED = "RS"


@dataclass(frozen=True)
class PointClass:
    kind: Kind
    graininess: float

    @property
    def scattered(self) -> bool:
        return self.kind is Kind.RIGHT_SCATTERED


@dataclass(frozen=True)
class GridNode:
    t: float
    cls: PointClass
    is_controlling: bool


def _merge(segments: Iterable[tuple[float, float]]) -> tuple[tuple[float, float], ...]:
    segs = sorted((float(l), float(r)) for l, r in segments)
    out: list[list[float]] = []
    for l, r in segs:
        if r < l:
            raise InvalidRange(f"segment [{l}, {r}] has r < l")
        if out and l <= out[-1][1] + TOL:
            out[-1][1] = max(out[-1][1], r)
        else:
            out.append([l, r])
    return tuple((l, r) for l, r in out)


@dataclass(frozen=True)
class TimeScale:
    """Finite union of closed intervals and isolated points.

    Build instances with the class-method generators (``interval``,
    ``points``, ``uniform``, ``union``) or :meth:`from_spec`.
    """

    segments: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.segments:
            raise InvalidRange("a time scale needs at least one point")
        prev_r = -math.inf
        for l, r in self.segments:
            if not (l <= r):
                raise InvalidRange(f"segment [{l}, {r}] has r < l")
            if not (l > prev_r):
                raise InvalidRange("segments must be disjoint and strictly increasing")
            prev_r = r
        object.__setattr__(self, "_lefts", [l for l, _ in self.segments])

    # -- generators -------------------------------------------------------
    @classmethod
    def interval(cls, l: float, r: float) -> "TimeScale":
        return cls(((float(l), float(r)),))

    @classmethod
    def points(cls, values: Iterable[float]) -> "TimeScale":
        return cls(_merge((v, v) for v in values))

    @classmethod
    def uniform(cls, start: float, period: float, end: float) -> "TimeScale":
        """``{start + k*period}`` clipped to ``[start, end]``."""
        if period <= 0:
            raise InvalidStep("period must be positive")
        k_max = int(math.floor((end - start) / period + TOL))
        return cls.points(start + k * period for k in range(k_max + 1))

    @classmethod
    def union(cls, *parts: "TimeScale") -> "TimeScale":
        return cls(_merge(s for p in parts for s in p.segments))

    @classmethod
    def from_spec(cls, spec: dict, window: Sequence[float]) -> "TimeScale":
        """Expand a generator dictionary and clip it to ``window``.

        Grammar: ``{"kind": "interval", "l": 0, "r": 12}``,
        ``{"kind": "uniform", "start": 0, "period": 2}``,
        ``{"kind": "points", "values": [10, 11.5]}`` and
        ``{"kind": "union", "parts": [...]}``.
        """
        a, b = float(window[0]), float(window[1])
        try:
            kind = spec["kind"]
            if kind == "interval":
                ts = cls.interval(max(a, spec["l"]), min(b, spec["r"]))
            elif kind == "uniform":
                ts = cls.uniform(spec["start"], spec["period"], b)
            elif kind == "points":
                vals = [v for v in spec["values"] if a - TOL <= v <= b + TOL]
                ts = cls.points(vals)
            elif kind == "union":
                ts = cls.union(*(cls.from_spec(p, window) for p in spec["parts"]))
            else:
                raise ParseError(f"unknown time-scale generator kind {kind!r}")
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed time-scale generator {spec!r}: {exc}") from exc
        except InvalidRange as exc:
            raise ParseError(f"time-scale generator {spec!r} is empty in window {window}") from exc
        return ts

    # -- basic queries ----------------------------------------------------
    @property
    def a(self) -> float:
        return self.segments[0][0]

    @property
    def b(self) -> float:
        return self.segments[-1][1]

    def __contains__(self, t: float) -> bool:
        return self.contains(t)

    def contains(self, t: float, tol: float = TOL) -> bool:
        return self._locate(t, tol) is not None

    def _locate(self, t: float, tol: float = TOL):
        i = bisect.bisect_right(self._lefts, t + tol) - 1
        if i < 0:
            return None
        l, r = self.segments[i]
        if t <= r + tol:
            return i
        return None

    def segment_index(self, t: float) -> int:
        i = self._locate(t)
        if i is None:
            raise PointNotInScale(f"{t} is not a point of the time scale")
        return i

    def snap(self, t: float) -> float:
        """Return ``t`` snapped onto a segment endpoint if within tolerance."""
        i = self.segment_index(t)
        l, r = self.segments[i]
        if abs(t - r) <= TOL:
            return r
        if abs(t - l) <= TOL:
            return l
        return float(t)

    def sigma(self, t: float) -> float:
        return jump(self, t)[0]

    def mu(self, t: float) -> float:
        return jump(self, t)[1]

    def rho(self, t: float) -> float:
        """Backward jump ``sup{s < t}`` (``a`` at ``t = a``)."""
        i = self.segment_index(t)
        t = self.snap(t)
        l, _ = self.segments[i]
        if t > l or i == 0:
            return t
        return self.segments[i - 1][1]

    def is_right_scattered(self, t: float) -> bool:
        return jump(self, t)[1] > 0.0

    def right_scattered(self, c: float | None = None, d: float | None = None) -> np.ndarray:
        """Right-scattered points in ``[c, d)``."""
        c = self.a if c is None else c
        d = self.b if d is None else d
        return np.array([r for (_, r) in self.segments[:-1] if c - TOL <= r < d - TOL])

    def dense_segments(self) -> list[tuple[float, float]]:
        return [(l, r) for l, r in self.segments if r > l]

    @property
    def is_purely_discrete(self) -> bool:
        return all(l == r for l, r in self.segments)

    @property
    def is_interval(self) -> bool:
        return len(self.segments) == 1 and self.a < self.b

    def issubset(self, other: "TimeScale") -> bool:
        for l, r in self.segments:
            i = other._locate(l)
            if i is None or other.segments[i][1] < r - TOL:
                return False
        return True

    def with_point(self, t: float) -> "TimeScale":
        return TimeScale.union(self, TimeScale.points([t]))

    def to_spec(self) -> dict:
        parts = []
        for l, r in self.segments:
            if l == r:
                parts.append({"kind": "points", "values": [l]})
            else:
                parts.append({"kind": "interval", "l": l, "r": r})
        return parts[0] if len(parts) == 1 else {"kind": "union", "parts": parts}


def jump(ts: TimeScale, t: float) -> tuple[float, float, PointClass]:
    """Forward jump ``sigma(t)``, graininess ``mu(t)`` and the point class."""
    i = ts.segment_index(t)
    l, r = ts.segments[i]
    snapped = ts.snap(t)
    if snapped < r or i == len(ts.segments) - 1:
        # a right-dense point is its own successor; only clamp it into the segment
        return min(max(float(t), l), r), 0.0, PointClass(Kind.RIGHT_DENSE, 0.0)
    t = snapped
    s = ts.segments[i + 1][0]
    mu = s - t
    return s, mu, PointClass(Kind.RIGHT_SCATTERED, mu)


def phi(ts: TimeScale, ts1: TimeScale, t: float) -> float:
    """Latest controlling time ``sup{s in ts1 | s <= t}``."""
    ts.segment_index(t)
    i = bisect.bisect_right(ts1._lefts, t + TOL) - 1
    if i < 0:
        raise EmptyPredecessor(f"no controlling time at or before {t}")
    l, r = ts1.segments[i]
    if t <= r + TOL:
        return ts1.snap(t) if abs(t - l) <= TOL or abs(t - r) <= TOL else float(t)
    return r


def _simpson_nodes(lo: float, hi: float, h: float) -> tuple[np.ndarray, np.ndarray]:
    n = max(2, int(math.ceil((hi - lo) / h - 1e-12)))
    n += n % 2
    x = np.linspace(lo, hi, n + 1)
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return x, w * (hi - lo) / (3.0 * n)


def delta_integral(
    ts: TimeScale,
    f: Callable[[float], float],
    c: float,
    d: float,
    h: float | None = None,
):
    """``∫_{[c,d) ∩ ts} f Δτ``: Lebesgue part over the segments plus ``Σ mu(r) f(r)``.

    The Lebesgue part uses composite Simpson with spacing at most ``h``
    (default ``1e-3 * (b - a)``).
    """
    ts.segment_index(c)
    ts.segment_index(d)
    if c > d + TOL:
        raise InvalidRange(f"c={c} > d={d}")
    if h is None:
        h = 1e-3 * max(ts.b - ts.a, 1.0)
    total = 0.0
    for l, r in ts.segments:
        lo, hi = max(l, c), min(r, d)
        if hi - lo > TOL:
            x, w = _simpson_nodes(lo, hi, h)
            vals = np.array([np.asarray(f(xi), dtype=float) for xi in x])
            total = total + np.tensordot(w, vals, axes=(0, 0))
    for i, (_, r) in enumerate(ts.segments[:-1]):
        if c - TOL <= r < d - TOL:
            mu = ts.segments[i + 1][0] - r
            total = total + mu * np.asarray(f(r), dtype=float)
    return total if np.ndim(total) else float(total)


def exp_generalized(ts: TimeScale, L: float, c: float, t: float) -> float:
    """Generalized exponential ``e_L(t, c)``.

    ``e^{L * length}`` over continuous stretches and a factor ``1 + L mu(r)``
    for each right-scattered ``r`` in ``[c, t)``.
    """
    if L < 0:
        raise InvalidRange("L must be nonnegative")
    ts.segment_index(c)
    ts.segment_index(t)
    if c > t + TOL:
        raise InvalidRange(f"c={c} > t={t}")
    log_e = 0.0
    for i, (l, r) in enumerate(ts.segments):
        lo, hi = max(l, c), min(r, t)
        if hi > lo:
            log_e += L * (hi - lo)
        if i < len(ts.segments) - 1 and c - TOL <= r < t - TOL:
            log_e += math.log1p(L * (ts.segments[i + 1][0] - r))
    return math.exp(log_e)


class Grid:
    """Evaluation grid: strictly increasing nodes with their graininess.

    Step ``k`` runs from ``t[k]`` to ``t[k+1]``; it is a jump step when
    ``mu[k] > 0`` (then ``t[k+1] = sigma(t[k])``) and a continuous step
    otherwise.
    """

    def __init__(self, t: np.ndarray, mu: np.ndarray, controlling: np.ndarray):
        self.t = np.asarray(t, dtype=float)
        self.mu = np.asarray(mu, dtype=float)
        self.controlling = np.asarray(controlling, dtype=bool)
        self.jump = self.mu > 0.0
        self.dt = np.diff(self.t)

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, k: int) -> GridNode:
        mu = float(self.mu[k])
        kind = Kind.RIGHT_SCATTERED if mu > 0 else Kind.RIGHT_DENSE
        return GridNode(float(self.t[k]), PointClass(kind, mu), bool(self.controlling[k]))

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    def __eq__(self, other) -> bool:
        return isinstance(other, Grid) and len(self) == len(other) and np.array_equal(self.t, other.t)

    def index(self, t: float) -> int:
        k = int(np.searchsorted(self.t, t - TOL))
        if k >= len(self.t) or abs(self.t[k] - t) > TOL:
            raise PointNotInScale(f"{t} is not a grid node")
        return k


def build_grid(
    ts: TimeScale,
    ts1: TimeScale,
    h: float,
    breaks: Iterable[float] = (),
) -> Grid:
    """Integration grid for state scale ``ts`` and control scale ``ts1``.

    Contains every segment endpoint of both scales, the extra ``breaks``
    (control-table cell boundaries) and a uniform subdivision of each
    continuous stretch with spacing at most ``h``.
    """
    if not (h > 0):
        raise InvalidStep(f"step must be positive, got {h}")
    marks = sorted({x for seg in ts1.segments for x in seg} | {float(x) for x in breaks})
    nodes: list[float] = []
    for l, r in ts.segments:
        if l == r:
            nodes.append(l)
            continue
        inner = [x for x in marks if l + TOL < x < r - TOL]
        pts = [l, *inner, r]
        for lo, hi in zip(pts[:-1], pts[1:]):
            n = max(1, int(math.ceil((hi - lo) / h - 1e-9)))
            nodes.extend(lo + (hi - lo) * k / n for k in range(n))
        nodes.append(r)
    t = np.array(nodes)
    mu = np.zeros_like(t)
    seg_ends = {r: ts.segments[i + 1][0] - r for i, (_, r) in enumerate(ts.segments[:-1])}
    for k, tk in enumerate(t):
        if tk in seg_ends:
            mu[k] = seg_ends[tk]
    controlling = np.array([ts1.contains(x) for x in t])
    return Grid(t, mu, controlling)
