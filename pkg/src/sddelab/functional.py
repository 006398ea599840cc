"""Path-dependent diffusion coefficients evaluated predictably on grid paths.

Each functional maps a delay window to a scalar using pre-window-end
information only (the left limit at the window end), and is autonomous: its
value depends on the window content, never on absolute time.  Inner scalar
maps come from a small closed family with known Lipschitz constants, so the
Lipschitz/bound metadata on every functional is derived, never asserted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SpanError
from .paths import Segment

_REL_TOL = 1e-9


# -- inner scalar maps ---------------------------------------------------------


@dataclass(frozen=True)
class AffineMap:
    a: float
    b: float = 0.0

    def __call__(self, x: float) -> float:
        return self.a * x + self.b

    @property
    def lipschitz(self) -> float:
        return abs(self.a)

    @property
    def bound(self) -> float | None:
        return abs(self.b) if self.a == 0.0 else None

    def config(self) -> dict:
        return {"f": "affine", "f.a": self.a, "f.b": self.b}


@dataclass(frozen=True)
class ClampMap:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("clamp needs lo < hi")

    def __call__(self, x: float) -> float:
        return min(max(x, self.lo), self.hi)

    @property
    def lipschitz(self) -> float:
        return 1.0

    @property
    def bound(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    def config(self) -> dict:
        return {"f": "clamp", "f.lo": self.lo, "f.hi": self.hi}


@dataclass(frozen=True)
class SqrtClampMap:
    """sqrt of the input clamped to [lo, hi], lo > 0."""

    lo: float
    hi: float

    def __post_init__(self):
        if not 0.0 < self.lo < self.hi:
            raise ValueError("sqrt-clamp needs 0 < lo < hi")

    def __call__(self, x: float) -> float:
        return math.sqrt(min(max(x, self.lo), self.hi))

    @property
    def lipschitz(self) -> float:
        return 0.5 / math.sqrt(self.lo)

    @property
    def bound(self) -> float:
        return math.sqrt(self.hi)

    def config(self) -> dict:
        return {"f": "sqrt_clamp", "f.lo": self.lo, "f.hi": self.hi}


@dataclass(frozen=True)
class TanhMap:
    scale: float
    amplitude: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("tanh scale must be positive")

    def __call__(self, x: float) -> float:
        return self.amplitude * math.tanh(x / self.scale)

    @property
    def lipschitz(self) -> float:
        return abs(self.amplitude) / self.scale

    @property
    def bound(self) -> float:
        return abs(self.amplitude)

    def config(self) -> dict:
        return {"f": "tanh", "f.scale": self.scale, "f.amp": self.amplitude}


INNER_MAPS = {
    "affine": AffineMap,
    "clamp": ClampMap,
    "sqrt_clamp": SqrtClampMap,
    "tanh": TanhMap,
}


# -- functional kinds ----------------------------------------------------------


class DiffusionFunctional:
    """Base: subclasses implement evaluate(segment) -> float.

    ``lipschitz_K`` is None when no Lipschitz constant is known (the clamped
    quadratic-variation kind is measurable but not continuous).  ``sup_bound``
    is None when unbounded or unknown; ``known_unbounded`` distinguishes the
    two for the assumption gate.
    """

    lipschitz_K: float | None = None
    sup_bound: float | None = None
    known_unbounded: bool = False

    def evaluate(self, seg: Segment) -> float:
        raise NotImplementedError

    def make_stepper(self, h: float, init: Segment):
        """Optional O(1)-per-step evaluator for the simulation loop."""
        return None

    def config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantFunctional(DiffusionFunctional):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "lipschitz_K", 0.0)
        object.__setattr__(self, "sup_bound", abs(self.value))

    def evaluate(self, seg: Segment) -> float:
        return self.value

    def config(self) -> dict:
        return {"kind": "constant", "m": self.value}


@dataclass(frozen=True)
class NoDelayFunctional(DiffusionFunctional):
    """f applied to the left limit at the window end."""

    f: object

    def __post_init__(self):
        object.__setattr__(self, "lipschitz_K", self.f.lipschitz)
        object.__setattr__(self, "sup_bound", self.f.bound)
        object.__setattr__(self, "known_unbounded", self.f.bound is None)

    def evaluate(self, seg: Segment) -> float:
        return self.f(seg.end_left_limit)

    def config(self) -> dict:
        return {"kind": "no_delay", **self.f.config()}


@dataclass(frozen=True)
class PointDelayFunctional(DiffusionFunctional):
    """f of a weighted sum of lagged window values: f(sum_j w_j phi(-l_j)).

    Lags live in [0, window span]; off-grid lags are linearly interpolated.
    """

    f: object
    lags: tuple[float, ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.lags:
            raise ValueError("need at least one lag")
        if any(l < 0 for l in self.lags):
            raise ValueError("lags must be nonnegative")
        w = self.weights if self.weights is not None else tuple(1.0 for _ in self.lags)
        if len(w) != len(self.lags):
            raise ValueError("weights must match lags")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))
        wsum = sum(abs(x) for x in self.weights)
        object.__setattr__(self, "lipschitz_K", self.f.lipschitz * wsum)
        object.__setattr__(self, "sup_bound", self.f.bound)
        object.__setattr__(self, "known_unbounded", self.f.bound is None)

    def evaluate(self, seg: Segment) -> float:
        if max(self.lags) > seg.alpha + _REL_TOL:
            raise SpanError("lag exceeds the window span")
        grid = seg.grid()
        acc = 0.0
        for lag, w in zip(self.lags, self.weights):
            if lag == 0.0:
                acc += w * seg.end_left_limit
            else:
                acc += w * float(np.interp(-lag, grid, seg.values))
        return self.f(acc)

    def config(self) -> dict:
        return {
            "kind": "point_delay",
            "lags": ",".join(repr(l) for l in self.lags),
            "weights": ",".join(repr(w) for w in self.weights),
            **self.f.config(),
        }


@dataclass(frozen=True, eq=False)
class DistributedFunctional(DiffusionFunctional):
    """f of the kernel average f(integral phi(u) c(u) du) over [-alpha, 0]."""

    f: object
    kernel: np.ndarray
    alpha: float

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=float)
        if k.ndim != 1 or len(k) < 2:
            raise ValueError("kernel must be a 1-d grid with >= 2 nodes")
        object.__setattr__(self, "kernel", k)
        kgrid = np.linspace(-self.alpha, 0.0, len(k))
        l1 = float(np.trapezoid(np.abs(k), kgrid))
        object.__setattr__(self, "lipschitz_K", self.f.lipschitz * l1)
        object.__setattr__(self, "sup_bound", self.f.bound)
        object.__setattr__(self, "known_unbounded", self.f.bound is None)

    def evaluate(self, seg: Segment) -> float:
        if abs(seg.alpha - self.alpha) > _REL_TOL * self.alpha:
            raise SpanError("segment span does not match the kernel span")
        grid = seg.grid()
        kv = np.interp(grid, np.linspace(-self.alpha, 0.0, len(self.kernel)), self.kernel)
        return self.f(float(np.trapezoid(kv * seg.values, grid)))

    def config(self) -> dict:
        return {"kind": "distributed", **self.f.config()}


@dataclass(frozen=True)
class RunningSupFunctional(DiffusionFunctional):
    """Running supremum of the window (left limit at the end)."""

    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "lipschitz_K", 1.0)
        object.__setattr__(self, "known_unbounded", True)

    def evaluate(self, seg: Segment) -> float:
        if abs(seg.alpha - self.alpha) > _REL_TOL * self.alpha:
            raise SpanError("segment span does not match the functional window")
        interior = float(np.max(seg.values[:-1]))
        return max(interior, seg.end_left_limit)

    def config(self) -> dict:
        return {"kind": "running_sup"}


@dataclass(frozen=True)
class ClampedQVFunctional(DiffusionFunctional):
    """sqrt(max(1, min((2/alpha) * QV over [end-alpha, end-alpha/2], 2))).

    QV is the realized quadratic variation on the grid: squared continuous
    increments plus squared jump marks, cell by cell, over the first half of
    the window.  Values always land in [1, sqrt(2)].  Measurable but not
    continuous; no Lipschitz constant is declared.
    """

    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "sup_bound", math.sqrt(2.0))

    def _check(self, seg: Segment):
        if abs(seg.alpha - self.alpha) > _REL_TOL * self.alpha:
            raise SpanError("segment span does not match the functional window")
        n = seg.n_steps
        if n % 2 != 0:
            raise SpanError("step must divide alpha/2 for the half-window")
        if seg.h > self.alpha / 4 + _REL_TOL:
            raise SpanError("window under-resolved: need h <= alpha/4")
        return n

    def realized_qv(self, seg: Segment) -> float:
        """Realized quadratic variation over the half-window [-alpha, -alpha/2]."""
        n = self._check(seg)
        n_half = n // 2
        h = seg.h
        diffs = np.diff(seg.values[: n_half + 1])
        cell_jumps: dict[int, list[float]] = {}
        for u, s in seg.jumps:
            pos = (u + seg.alpha) / h
            cell = math.ceil(pos - _REL_TOL) - 1
            if 0 <= cell < n_half:
                cell_jumps.setdefault(cell, []).append(s)
        qv = 0.0
        for j in range(n_half):
            d = diffs[j]
            js = cell_jumps.get(j)
            if js:
                d -= sum(js)
                qv += sum(s * s for s in js)
            qv += d * d
        return qv

    def from_qv(self, qv: float) -> float:
        return math.sqrt(max(1.0, min(2.0 / self.alpha * qv, 2.0)))

    def evaluate(self, seg: Segment) -> float:
        return self.from_qv(self.realized_qv(seg))

    def make_stepper(self, h: float, init: Segment):
        return ClampedQvStepper(self, h, init)

    def config(self) -> dict:
        return {"kind": "clamped_qv"}


class ClampedQvStepper:
    """O(1)-per-step evaluator of the clamped-QV functional during simulation.

    Keeps a ring of per-cell realized-QV contributions; the half-window sum is
    updated incrementally as the solution advances one grid cell at a time.
    """

    def __init__(self, F: ClampedQVFunctional, h: float, init: Segment):
        n = F._check(init)
        if abs(init.h - h) > _REL_TOL * h:
            raise SpanError("initial segment grid does not match the solver grid")
        self.F = F
        self.n = n
        self.n_half = n // 2
        diffs = np.diff(init.values)
        cell_jumps: dict[int, float] = {}
        cell_jump_sq: dict[int, float] = {}
        for u, s in init.jumps:
            pos = (u + init.alpha) / h
            cell = math.ceil(pos - _REL_TOL) - 1
            if 0 <= cell < n:
                cell_jumps[cell] = cell_jumps.get(cell, 0.0) + s
                cell_jump_sq[cell] = cell_jump_sq.get(cell, 0.0) + s * s
        self._ring = np.empty(n)
        for j in range(n):
            d = diffs[j] - cell_jumps.get(j, 0.0)
            self._ring[j] = d * d + cell_jump_sq.get(j, 0.0)
        self._head = 0  # ring slot holding the oldest cell (window start)
        self._window_sum = float(self._ring[: self.n_half].sum())

    def qv(self) -> float:
        return self._window_sum

    def value(self) -> float:
        return self.F.from_qv(self._window_sum)

    def advance(self, cont_increment: float, jump_sq_sum: float = 0.0):
        """Push the newest completed cell and slide the half-window."""
        newest = cont_increment * cont_increment + jump_sq_sum
        leaving = self._ring[self._head]
        entering = self._ring[(self._head + self.n_half) % self.n]
        self._window_sum += entering - leaving
        self._ring[self._head] = newest
        self._head = (self._head + 1) % self.n
