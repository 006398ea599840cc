"""Grid-sampled cadlag paths and their delay-window segments.

A path is stored as uniform-grid samples plus explicit jump marks: node values
are the actual (post-jump) path values, and each mark records the exact time
and size of a discontinuity inside the span.  Between nodes the continuous
part is treated as piecewise linear; marks keep jumps from being smeared by
that interpolation wherever exactness matters (quadratic variation, path
distances).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SpanError

JumpMark = tuple[float, float]

_REL_TOL = 1e-9


def _snap_index(x: float, tol: float = _REL_TOL) -> int:
    k = round(x)
    if abs(x - k) > tol * max(1.0, abs(x)):
        raise SpanError(f"value {x} is not grid aligned")
    return int(k)


@dataclass(frozen=True, eq=False)
class Segment:
    """Window of a path over [-alpha, 0] on a uniform grid.

    values[k] is the path value at u_k = -alpha + k*h.  Jump marks carry the
    exact in-window discontinuities as (location, size) with locations in
    (-alpha, 0]; a mark exactly at -alpha belongs to the preceding window.
    """

    alpha: float
    values: np.ndarray
    jumps: tuple[JumpMark, ...] = ()

    def __post_init__(self):
        if self.alpha <= 0:
            raise SpanError("segment span must be positive")
        if len(self.values) < 2:
            raise SpanError("segment needs at least two grid nodes")

    @property
    def h(self) -> float:
        return self.alpha / (len(self.values) - 1)

    @property
    def n_steps(self) -> int:
        return len(self.values) - 1

    def grid(self) -> np.ndarray:
        return np.linspace(-self.alpha, 0.0, len(self.values))

    def __call__(self, u):
        """Piecewise-linear evaluation at u in [-alpha, 0] (clamped)."""
        return np.interp(u, self.grid(), self.values)

    @property
    def end_value(self) -> float:
        return float(self.values[-1])

    @property
    def end_left_limit(self) -> float:
        """Value just before the window end (drops a mark sitting exactly at 0)."""
        v = float(self.values[-1])
        for u, s in self.jumps:
            if u == 0.0:
                v -= s
        return v

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def continuous_node_values(self) -> np.ndarray:
        """Node values of the continuous remainder (marks subtracted cumulatively)."""
        out = np.array(self.values, dtype=float)
        if self.jumps:
            g = self.grid()
            for u, s in self.jumps:
                out[g >= u - _REL_TOL * self.alpha] -= s
        return out


def constant_segment(alpha: float, value: float, h: float) -> Segment:
    n = _snap_index(alpha / h)
    return Segment(alpha, np.full(n + 1, float(value)))


def zero_segment(alpha: float, h: float) -> Segment:
    return constant_segment(alpha, 0.0, h)


def segment_from_function(alpha: float, fn, h: float) -> Segment:
    n = _snap_index(alpha / h)
    u = np.linspace(-alpha, 0.0, n + 1)
    return Segment(alpha, np.asarray([float(fn(x)) for x in u]))


def indicator_segment(alpha: float, jump_at: float, h: float) -> Segment:
    """Step initial condition 1_{[jump_at, 0]} with an exact mark at the edge."""
    if not -alpha < jump_at <= 0.0:
        raise SpanError("indicator edge must lie in (-alpha, 0]")
    n = _snap_index(alpha / h)
    u = np.linspace(-alpha, 0.0, n + 1)
    values = (u >= jump_at - _REL_TOL * alpha).astype(float)
    return Segment(alpha, values, jumps=((float(jump_at), 1.0),))


@dataclass(frozen=True, eq=False)
class GridPath:
    """Uniform-grid path on [t0, t0 + h*len] with exact jump marks.

    Marks are ordered (time, size) pairs; a mark at time tau is attributed to
    the grid cell (t_{k}, t_{k+1}] containing it, and node values already
    include all marks up to and including the node time.
    """

    t0: float
    h: float
    values: np.ndarray
    jumps: tuple[JumpMark, ...] = ()
    seed: int | None = None

    @property
    def t_end(self) -> float:
        return self.t0 + self.h * (len(self.values) - 1)

    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(len(self.values))

    def value_at(self, t) -> float:
        return float(np.interp(t, self.times(), self.values))

    def index_of(self, t: float) -> int:
        k = _snap_index((t - self.t0) / self.h)
        if not 0 <= k < len(self.values):
            raise SpanError(f"time {t} outside path span")
        return k

    def segment(self, t: float, alpha: float) -> Segment:
        """Window copy over [t-alpha, t]; marks in (t-alpha, t] are preserved."""
        i_end = self.index_of(t)
        n = _snap_index(alpha / self.h)
        i_start = i_end - n
        if i_start < 0:
            raise SpanError(f"window [t-alpha, t] leaves the path span at t={t}")
        lo = t - alpha
        marks = tuple(
            (tau - t, s)
            for tau, s in self.jumps
            if lo + _REL_TOL * self.h < tau <= t + _REL_TOL * self.h
        )
        return Segment(alpha, self.values[i_start : i_end + 1], marks)
