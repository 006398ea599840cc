"""Certified path-distance bounds on delay windows and the shift-discontinuity demo.

The cadlag distance  inf over time changes of (sup|phi o lam - psi| + sup|lam - id|)
is bounded above by restricting the infimum to piecewise-linear time changes
whose breakpoints align jump marks (exact for pairs of pure-jump step
functions); every returned bound comes with its time change as a certificate,
and a complementary lower bound certifies separation claims.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SpanError
from .levy import sample_path
from .paths import GridPath, Segment, indicator_segment
from .solver import SddeProblem, solve_euler

_REL_TOL = 1e-9


@dataclass(frozen=True)
class TimeChange:
    """Increasing piecewise-linear homeomorphism of [a, b] fixing the endpoints."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        xs = [p[0] for p in self.points]
        ys = [p[1] for p in self.points]
        if len(self.points) < 2:
            raise ConfigError("a time change needs at least the two endpoints")
        if any(x2 <= x1 for x1, x2 in zip(xs, xs[1:])) or any(
            y2 <= y1 for y1, y2 in zip(ys, ys[1:])
        ):
            raise ConfigError("time change must be strictly increasing")
        if xs[0] != ys[0] or xs[-1] != ys[-1]:
            raise ConfigError("time change must fix the endpoints")

    def __call__(self, x):
        xs = [p[0] for p in self.points]
        ys = [p[1] for p in self.points]
        return np.interp(x, xs, ys)

    def inverse(self, y):
        xs = [p[0] for p in self.points]
        ys = [p[1] for p in self.points]
        return np.interp(y, ys, xs)

    def sup_deviation(self) -> float:
        return max(abs(y - x) for x, y in self.points)


def identity_change(a: float, b: float) -> TimeChange:
    return TimeChange(((a, a), (b, b)))


# -- one-sided evaluation -------------------------------------------------------


def _step_parts(seg: Segment):
    cont = seg.continuous_node_values()
    marks = sorted(seg.jumps)
    return seg.grid(), cont, marks


def _eval_sided(grid, cont, marks, u: float, side: str) -> float:
    val = float(np.interp(u, grid, cont))
    for loc, s in marks:
        if loc < u - 1e-14 or (side == "right" and abs(loc - u) <= 1e-14):
            val += s
    return val


def _sup_diff(phi: Segment, psi: Segment, lam: TimeChange) -> float:
    """Exact sup |phi(lam(x)) - psi(x)| for piecewise-linear parts plus marks."""
    g1, c1, m1 = _step_parts(phi)
    g2, c2, m2 = _step_parts(psi)
    bps = set(g2.tolist())
    bps.update(loc for loc, _ in m2)
    bps.update(x for x, _ in lam.points)
    bps.update(float(lam.inverse(x)) for x in g1.tolist())
    bps.update(float(lam.inverse(loc)) for loc, _ in m1)
    best = 0.0
    for x in sorted(bps):
        y = float(lam(x))
        for side in ("right", "left"):
            d = abs(_eval_sided(g1, c1, m1, y, side) - _eval_sided(g2, c2, m2, x, side))
            if d > best:
                best = d
    return best


# -- matchings -------------------------------------------------------------------


def _order_preserving_matchings(na: int, nb: int, cap: int = 4096):
    """All order-preserving partial matchings of two ordered mark lists."""
    out = []

    def rec(i, j, acc):
        if len(out) >= cap:
            return
        if i == na or j == nb:
            out.append(tuple(acc))
            return
        rec(i + 1, j + 1, acc + [(i, j)])  # match
        rec(i + 1, j, acc)  # leave phi mark i unmatched
        rec(i, j + 1, acc)  # leave psi mark j unmatched
    rec(0, 0, [])
    return {m for m in out}


def evaluate_bound(phi: Segment, psi: Segment, lam: TimeChange) -> float:
    """Objective sup|phi o lam - psi| + sup|lam - id| for a given time change.

    Any admissible lam certifies an upper bound; this is the evaluator used to
    validate returned certificates and to compose bounds along triangles.
    """
    return _sup_diff(phi, psi, lam) + lam.sup_deviation()


def compose_changes(outer: TimeChange, inner: TimeChange) -> TimeChange:
    """outer o inner, again piecewise linear; breakpoints are inner's plus the
    preimages of outer's."""
    xs = sorted(
        {p[0] for p in inner.points} | {float(inner.inverse(x)) for x, _ in outer.points}
    )
    return TimeChange(tuple((x, float(outer(inner(x)))) for x in xs))


@dataclass(frozen=True)
class SkorokhodBound:
    value: float
    time_change: TimeChange
    uniform_bound: float


def skorokhod_distance(phi: Segment, psi: Segment) -> SkorokhodBound:
    """Certified upper bound on the cadlag distance of two windows.

    Minimizes over piecewise-linear time changes aligning jump marks; the
    returned value is exactly sup|phi o lam - psi| + sup|lam - id| for the
    returned lam, and never exceeds the uniform bound (identity candidate).
    """
    if abs(phi.alpha - psi.alpha) > _REL_TOL * max(phi.alpha, psi.alpha):
        raise SpanError("segments must share the window span")
    a, b = -phi.alpha, 0.0
    ident = identity_change(a, b)
    best_val = _sup_diff(phi, psi, ident)
    uniform = best_val
    best_lam = ident
    m1 = sorted(phi.jumps)
    m2 = sorted(psi.jumps)
    if m1 and m2:
        for matching in _order_preserving_matchings(len(m1), len(m2)):
            if not matching:
                continue
            pts = [(a, a)]
            ok = True
            for i, j in matching:
                y_loc = m1[i][0]  # phi mark to be hit
                x_loc = m2[j][0]  # at psi mark position
                if not (a < x_loc <= b and a < y_loc <= b):
                    ok = False
                    break
                if x_loc == b or y_loc == b:
                    if x_loc != y_loc:
                        ok = False
                        break
                    continue
                pts.append((x_loc, y_loc))
            if not ok:
                continue
            pts.append((b, b))
            pts.sort()
            xs = [p[0] for p in pts]
            ys = [p[1] for p in pts]
            if any(x2 <= x1 for x1, x2 in zip(xs, xs[1:])) or any(
                y2 <= y1 for y1, y2 in zip(ys, ys[1:])
            ):
                continue
            lam = TimeChange(tuple(pts))
            val = _sup_diff(phi, psi, lam) + lam.sup_deviation()
            if val < best_val:
                best_val = val
                best_lam = lam
    return SkorokhodBound(best_val, best_lam, uniform)


def skorokhod_lower_bound(phi: Segment, psi: Segment) -> float:
    """Certified lower bound on the cadlag distance.

    Endpoint values transfer through any admissible time change, and an
    unmatched jump either moves (time cost) or survives in the difference
    (half its residual size in sup norm).
    """
    a = -phi.alpha
    g1, c1, m1 = _step_parts(phi)
    g2, c2, m2 = _step_parts(psi)
    lb = max(
        abs(_eval_sided(g1, c1, m1, a, "right") - _eval_sided(g2, c2, m2, a, "right")),
        abs(_eval_sided(g1, c1, m1, 0.0, "right") - _eval_sided(g2, c2, m2, 0.0, "right")),
    )
    for own, other in ((m1, m2), (m2, m1)):
        for loc, s in own:
            unmatched = abs(s) / 2.0
            cands = [unmatched]
            for loc2, s2 in other:
                cands.append(abs(loc - loc2) + abs(s - s2) / 2.0)
            lb = max(lb, min(cands))
    return lb


# -- shift-discontinuity demonstration ---------------------------------------------


@dataclass(frozen=True)
class FellerFailureReport:
    n: int
    beta: float
    d_upper_initial: float
    d_lower_initial: float
    gap_before_alpha: float  # |f(X^n) - f(X^inf)| at t = alpha - beta
    gap_at_alpha: float
    gap_after_alpha: float  # at t = alpha + beta: shrinks with n


def feller_counterexample(
    mu, F, levy, beta: float, n: int, h: float, seed: int
) -> FellerFailureReport:
    """Nearby step histories, shared noise, and the bounded test functional
    f(psi) = min(|psi(-alpha)|, 1) evaluated before and at the delay horizon.

    The two step histories 1_{[-beta(1-1/n), 0]} and 1_{[-beta, 0]} are close
    in the path metric (the jumps align at time cost beta/n), yet before time
    alpha the test functional separates the solution windows by exactly one:
    the window endpoint still reads the unperturbed initial values.  At the
    delay horizon the endpoint reads the common initial value and the gap
    collapses.
    """
    alpha = mu.alpha
    if not 0.0 < beta < alpha:
        raise ConfigError("need 0 < beta < alpha")
    if n < 2:
        raise ConfigError("need n >= 2")
    edge_n = -beta * (1.0 - 1.0 / n)
    phi_n = indicator_segment(alpha, edge_n, h)
    phi_inf = indicator_segment(alpha, -beta, h)
    d_up = skorokhod_distance(phi_n, phi_inf).value
    d_lo = skorokhod_lower_bound(phi_n, phi_inf)
    T = alpha + beta
    noise = sample_path(levy, T, h, seed)
    p1 = SddeProblem(mu=mu, F=F, levy=levy, phi=phi_n, T=T, h=h)
    p2 = SddeProblem(mu=mu, F=F, levy=levy, phi=phi_inf, T=T, h=h)
    x1 = solve_euler(p1, noise=noise)
    x2 = solve_euler(p2, noise=noise)

    def f_gap(t):
        s1 = x1.segment(t, alpha)
        s2 = x2.segment(t, alpha)
        return abs(min(abs(s1.values[0]), 1.0) - min(abs(s2.values[0]), 1.0))

    return FellerFailureReport(
        n=n,
        beta=beta,
        d_upper_initial=d_up,
        d_lower_initial=d_lo,
        gap_before_alpha=f_gap(alpha - beta),
        gap_at_alpha=f_gap(alpha),
        gap_after_alpha=f_gap(alpha + beta),
    )
