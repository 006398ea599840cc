"""Signed finite delay measures: drift integrals, characteristic function, stability.

A measure on [-alpha, 0] is a finite list of atoms plus an optional density
sampled on its own uniform grid.  The three jobs of this module are the drift
integral of a path window against the measure, the entire function

    chi(z) = z - sum_i w_i exp(z*u_i) - integral exp(z*s) b(s) ds,

and the stability abscissa: the largest real part of any zero of chi, found by
argument-principle counting on rectangles, bisection on the half-plane edge,
and Newton polish of the located roots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RootCountError, SpanError
from .paths import Segment

_REL_TOL = 1e-9

# Contour jitter offsets used when a rectangle edge lands on (or too near) a
# root; scaled by (1 + |edge position|).  Purely deterministic.
_JITTERS = (0.0, 3e-9, 1.1e-8, 4.3e-8, 1.7e-7, 6.1e-7)

_MIN_DENSITY_NODES = 64


@dataclass(frozen=True, eq=False)
class DelayMeasure:
    """Signed finite measure on [-alpha, 0]: atoms plus optional density samples.

    ``atoms`` is a tuple of (location, weight) with locations in [-alpha, 0].
    ``density`` holds samples of a mass-per-unit-time density b(s) on the
    uniform grid linspace(-alpha, 0, len(density)); at least 64 nodes so the
    quadrature is never coarser than the solvers it feeds.
    """

    alpha: float
    atoms: tuple[tuple[float, float], ...] = ()
    density: np.ndarray | None = None

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError("alpha must be positive and finite")
        atoms = tuple((float(u), float(w)) for u, w in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        tol = _REL_TOL * self.alpha
        for u, w in atoms:
            if not (-self.alpha - tol <= u <= tol):
                raise ValueError(f"atom location {u} outside [-alpha, 0]")
            if not math.isfinite(w):
                raise ValueError("atom weights must be finite")
        if self.density is not None:
            d = np.asarray(self.density, dtype=float)
            if d.ndim != 1 or len(d) < _MIN_DENSITY_NODES:
                raise ValueError(
                    f"density needs a 1-d grid with >= {_MIN_DENSITY_NODES} nodes"
                )
            if not np.all(np.isfinite(d)):
                raise ValueError("density samples must be finite")
            object.__setattr__(self, "density", d)

    # -- basic functionals ------------------------------------------------

    def density_grid(self) -> np.ndarray:
        return np.linspace(-self.alpha, 0.0, len(self.density))

    @property
    def total_variation(self) -> float:
        tv = sum(abs(w) for _, w in self.atoms)
        if self.density is not None:
            tv += float(np.trapezoid(np.abs(self.density), self.density_grid()))
        return tv

    @property
    def total_mass(self) -> float:
        m = sum(w for _, w in self.atoms)
        if self.density is not None:
            m += float(np.trapezoid(self.density, self.density_grid()))
        return m

    def single_atom_at_zero(self) -> float | None:
        """Weight w when the measure is exactly w*delta_0, else None."""
        if self.density is None and len(self.atoms) == 1:
            u, w = self.atoms[0]
            if abs(u) <= _REL_TOL * self.alpha:
                return w
        return None


def measures_equal(a: DelayMeasure, b: DelayMeasure, tol: float = 1e-12) -> bool:
    if abs(a.alpha - b.alpha) > tol * max(1.0, a.alpha):
        return False
    if len(a.atoms) != len(b.atoms):
        return False
    for (ua, wa), (ub, wb) in zip(a.atoms, b.atoms):
        if abs(ua - ub) > tol or abs(wa - wb) > tol * max(1.0, abs(wa)):
            return False
    if (a.density is None) != (b.density is None):
        return False
    if a.density is not None:
        if len(a.density) != len(b.density) or not np.allclose(
            a.density, b.density, rtol=tol, atol=tol
        ):
            return False
    return True


# -- drift integral --------------------------------------------------------


def apply(mu: DelayMeasure, seg: Segment) -> float:
    """Drift integral  sum_i w_i seg(u_i) + integral seg(s) b(s) ds.

    The segment must span exactly [-alpha, 0]; atoms at off-grid locations are
    evaluated by linear interpolation, and the density part uses the trapezoid
    rule on the union of the segment grid and the density grid.
    """
    if abs(seg.alpha - mu.alpha) > _REL_TOL * max(1.0, mu.alpha):
        raise SpanError(
            f"segment span {seg.alpha} does not match the measure horizon {mu.alpha}"
        )
    if not np.all(np.isfinite(seg.values)):
        raise ValueError("segment values must be finite")
    total = 0.0
    if mu.atoms:
        grid = seg.grid()
        for u, w in mu.atoms:
            total += w * float(np.interp(u, grid, seg.values))
    if mu.density is not None:
        union = np.union1d(seg.grid(), mu.density_grid())
        b_u = np.interp(union, mu.density_grid(), mu.density)
        s_u = np.interp(union, seg.grid(), seg.values)
        total += float(np.trapezoid(b_u * s_u, union))
    return total


class GridDrift:
    """Fast repeated drift evaluation on a solver grid.

    Collapses the whole measure to interpolation weights relative to the
    current grid index, so each call is O(atoms) plus one dot product for the
    density part.  Callers must guarantee the window [k - n_alpha, k] is
    inside the array (pad the prehistory with zeros where the convention is
    r = 0 before time 0).
    """

    def __init__(self, mu: DelayMeasure, h: float):
        self.h = h
        self.n_alpha = _grid_steps(mu.alpha, h)
        self._atom_terms = []
        for u, w in mu.atoms:
            pos = u / h  # in [-n_alpha, 0]
            j = math.floor(pos + _REL_TOL)
            frac = pos - j
            if frac < _REL_TOL:
                frac = 0.0
            j = max(j, -self.n_alpha)
            self._atom_terms.append((j, frac, w))
        self._dense = None
        if mu.density is not None:
            n = self.n_alpha
            seg_grid = np.linspace(-mu.alpha, 0.0, n + 1)
            union = np.union1d(seg_grid, mu.density_grid())
            b_u = np.interp(union, mu.density_grid(), mu.density)
            tw = np.zeros_like(union)
            dx = np.diff(union)
            tw[:-1] += 0.5 * dx
            tw[1:] += 0.5 * dx
            coeff = np.zeros(n + 1)
            # distribute each union node's quadrature weight onto the two
            # bracketing segment nodes (linear interpolation is linear in the
            # node values, so the integral is a fixed dot product).
            pos = (union + mu.alpha) / h
            j = np.clip(np.floor(pos + _REL_TOL).astype(int), 0, n)
            frac = np.clip(pos - j, 0.0, 1.0)
            np.add.at(coeff, j, tw * b_u * (1.0 - frac))
            np.add.at(coeff, np.minimum(j + 1, n), tw * b_u * frac)
            self._dense = coeff

    def __call__(
        self,
        values: np.ndarray,
        k: int,
        end_override: float | None = None,
        zero_at: int | None = None,
    ) -> float:
        """Drift at grid index k.

        ``end_override`` substitutes the value read at index k (predictor
        stages).  ``zero_at`` makes exact atom reads at that index return the
        left limit 0; integrating the fundamental solution needs this at the
        origin, where the zero prehistory jumps to r(0) = 1 and the drift is
        a cadlag function of time.
        """
        total = 0.0
        for j, frac, w in self._atom_terms:
            i = k + j
            if frac == 0.0:
                if i == zero_at:
                    v = 0.0
                elif end_override is not None and i == k:
                    v = end_override
                else:
                    v = values[i]
            else:
                vb = values[i + 1]
                if end_override is not None and i + 1 == k:
                    vb = end_override
                v = (1.0 - frac) * values[i] + frac * vb
            total += w * v
        if self._dense is not None:
            n = self.n_alpha
            window = values[k - n : k + 1]
            total += float(np.dot(self._dense, window))
            if end_override is not None:
                total += self._dense[-1] * (end_override - values[k])
        return total


def _grid_steps(span: float, h: float) -> int:
    n = round(span / h)
    if n < 1 or abs(n * h - span) > _REL_TOL * max(1.0, span):
        raise SpanError(f"step {h} does not divide the span {span}")
    return n


# -- characteristic function ------------------------------------------------


def char_function(mu: DelayMeasure, z):
    """chi(z) = z - integral exp(z*u) mu(du); entire, vectorized over z."""
    z = np.asarray(z, dtype=complex)
    out = z.copy()
    for u, w in mu.atoms:
        out = out - w * np.exp(z * u)
    if mu.density is not None:
        s = mu.density_grid()
        ez = np.exp(np.multiply.outer(z, s))
        out = out - np.trapezoid(ez * mu.density, s, axis=-1)
    if out.ndim == 0:
        return complex(out)
    return out


def char_function_derivative(mu: DelayMeasure, z):
    z = np.asarray(z, dtype=complex)
    out = np.ones_like(z)
    for u, w in mu.atoms:
        out = out - w * u * np.exp(z * u)
    if mu.density is not None:
        s = mu.density_grid()
        ez = np.exp(np.multiply.outer(z, s))
        out = out - np.trapezoid(ez * (s * mu.density), s, axis=-1)
    if out.ndim == 0:
        return complex(out)
    return out


# -- winding numbers ---------------------------------------------------------


class _ContourUnstable(Exception):
    pass


def _edge_arg_sum(f, a: complex, b: complex, max_points: int) -> float:
    """Total argument change of f along the straight edge a -> b.

    Refines adaptively until consecutive phase steps stay below ~pi/3; raises
    _ContourUnstable when the budget runs out or f nearly vanishes on the edge.
    """
    ts = np.linspace(0.0, 1.0, 33)
    for _ in range(300):
        zs = a + (b - a) * ts
        vals = f(zs)
        mags = np.abs(vals)
        if np.any(mags < 1e-13 * (1.0 + np.abs(zs))):
            raise _ContourUnstable("contour passes too near a root")
        dphi = np.angle(vals[1:] / vals[:-1])
        bad = np.abs(dphi) > 1.05
        if not bad.any():
            return float(dphi.sum())
        if len(ts) + bad.sum() > max_points:
            raise _ContourUnstable("refinement budget exhausted")
        mids = 0.5 * (ts[:-1][bad] + ts[1:][bad])
        ts = np.sort(np.concatenate([ts, mids]))
    raise _ContourUnstable("edge refinement did not settle")


def _winding_number(f, re_lo, re_hi, im_lo, im_hi, max_points=200_000) -> int:
    corners = [
        complex(re_lo, im_lo),
        complex(re_hi, im_lo),
        complex(re_hi, im_hi),
        complex(re_lo, im_hi),
        complex(re_lo, im_lo),
    ]
    total = 0.0
    for a, b in zip(corners[:-1], corners[1:]):
        total += _edge_arg_sum(f, a, b, max_points)
    w = total / (2.0 * math.pi)
    if abs(w - round(w)) > 0.25:
        raise _ContourUnstable(f"winding number {w} not settled")
    return int(round(w))


def _count_in_rect(mu, re_lo, re_hi, im_lo, im_hi) -> int:
    """Zero count of chi inside a rectangle, with deterministic outward jitter
    retries when the contour sits on a root."""
    f = lambda zs: char_function(mu, zs)
    last = None
    for jit in _JITTERS:
        dl = jit * (1.0 + abs(re_lo))
        dr = jit * (1.0 + abs(re_hi))
        dv = jit * (1.0 + abs(im_hi))
        try:
            return _winding_number(f, re_lo - dl, re_hi + dr, im_lo - dv, im_hi + dv)
        except _ContourUnstable as exc:  # retry with a nudged contour
            last = exc
    raise RootCountError(f"zero counting unstable after retries: {last}")


def _imag_bound(mu: DelayMeasure, s: float) -> float:
    """Height bound for the root box: a zero with Re z >= s satisfies
    |z| = |integral exp(z u) mu(du)| <= sum |w_i| e^{|u_i| max(0,-s)} + density part."""
    grow = max(0.0, -s)
    out = sum(abs(w) * math.exp(abs(u) * grow) for u, w in mu.atoms)
    if mu.density is not None:
        sg = mu.density_grid()
        out += float(np.trapezoid(np.abs(mu.density) * np.exp(np.abs(sg) * grow), sg))
    return out + 1.0


def _count_right_of(mu: DelayMeasure, s: float, re_hi: float) -> int:
    im = _imag_bound(mu, s)
    return _count_in_rect(mu, s, re_hi, -im, im)


# -- root localisation -------------------------------------------------------


def _newton(mu, z0: complex, cap: float) -> complex | None:
    z = complex(z0)
    for _ in range(80):
        fz = char_function(mu, z)
        fpz = char_function_derivative(mu, z)
        if fpz == 0:
            return None
        step = fz / fpz
        if abs(step) > cap:
            step *= cap / abs(step)
        z -= step
        if abs(step) <= 1e-14 * (1.0 + abs(z)):
            break
    if abs(char_function(mu, z)) <= 1e-9 * (1.0 + abs(z)):
        return z
    return None


def _roots_in_rect(mu, re_lo, re_hi, im_lo, im_hi, depth=0) -> list[complex]:
    n = _count_in_rect(mu, re_lo, re_hi, im_lo, im_hi)
    if n == 0:
        return []
    diag = math.hypot(re_hi - re_lo, im_hi - im_lo)
    if n <= 3 or diag < 1e-3:
        cx, cy = 0.5 * (re_lo + re_hi), 0.5 * (im_lo + im_hi)
        starts = [complex(cx, cy)]
        for fx in (0.25, 0.75):
            for fy in (0.25, 0.75):
                starts.append(
                    complex(re_lo + fx * (re_hi - re_lo), im_lo + fy * (im_hi - im_lo))
                )
        found: list[complex] = []
        pad = 1e-6 * (1.0 + diag)
        for z0 in starts:
            z = _newton(mu, z0, cap=2.0 * diag + 1.0)
            if z is None:
                continue
            if not (re_lo - pad <= z.real <= re_hi + pad and im_lo - pad <= z.imag <= im_hi + pad):
                continue
            if all(abs(z - r) > 1e-7 * (1.0 + abs(z)) for r in found):
                found.append(z)
            if len(found) == n:
                return found
        if len(found) == n:
            return found
    if depth >= 48 or diag < 1e-9:
        raise RootCountError("could not isolate roots inside a counting cell")
    if re_hi - re_lo >= im_hi - im_lo:
        mid = 0.5 * (re_lo + re_hi)
        return _roots_in_rect(mu, re_lo, mid, im_lo, im_hi, depth + 1) + _roots_in_rect(
            mu, mid, re_hi, im_lo, im_hi, depth + 1
        )
    mid = 0.5 * (im_lo + im_hi)
    return _roots_in_rect(mu, re_lo, re_hi, im_lo, mid, depth + 1) + _roots_in_rect(
        mu, re_lo, re_hi, mid, im_hi, depth + 1
    )


def rightmost_roots(mu: DelayMeasure, tol: float = 1e-8, R: float | None = None):
    """Roots of chi in the thin strip containing the stability abscissa.

    Returns (roots, searched_to) where roots is a possibly-empty list of
    complex zeros whose maximal real part is v0 to Newton precision; an empty
    list means every zero satisfies Re z < -searched_to... i.e. v0 < -R.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if R is None:
        R = 10.0 / mu.alpha
    tv = mu.total_variation
    re_hi = tv + 1.0
    # geometric descent of the half-plane edge until it captures a root;
    # no zero has Re z > TV, so the upper bracket starts at re_hi.
    s_hi = re_hi
    depth = 1.0
    s_lo = None
    while True:
        s = max(re_hi - depth, -R)
        c = _count_right_of(mu, s, re_hi)
        if c > 0:
            s_lo = s
            break
        s_hi = s
        if s <= -R:
            return [], R
        depth *= 2.0
    width_target = max(tol, 1e-4)
    while s_hi - s_lo > width_target:
        mid = 0.5 * (s_lo + s_hi)
        if _count_right_of(mu, mid, re_hi) > 0:
            s_lo = mid
        else:
            s_hi = mid
    pad = max(tol, 1e-7)
    im = _imag_bound(mu, s_lo)
    roots = _roots_in_rect(mu, s_lo - pad, re_hi, -im, im)
    if not roots:
        raise RootCountError("bracketed strip lost its roots during localisation")
    return roots, R


def v0(mu: DelayMeasure, tol: float = 1e-8, R: float | None = None) -> float:
    """Stability abscissa sup{Re z : chi(z) = 0}, to within tol.

    Searches the half-plane Re z >= -R (default R = 10/alpha); when no zero
    lives there the result is -inf, meaning only that v0 < -R.
    """
    roots, _ = rightmost_roots(mu, tol=tol, R=R)
    if not roots:
        return -math.inf
    return max(z.real for z in roots)


# -- text serialization ------------------------------------------------------


def to_text(mu: DelayMeasure, density_file: str | None = None) -> str:
    lines = [f"alpha={mu.alpha!r}"]
    for u, w in mu.atoms:
        lines.append(f"atom={u!r},{w!r}")
    if mu.density is not None:
        if density_file is None:
            raise ValueError("a density_file path is required to serialize the density")
        lines.append(f"density_file={density_file}")
    return "\n".join(lines) + "\n"


def write_density_csv(path, grid: np.ndarray, values: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("s,b\n")
        for s, b in zip(grid, values):
            fh.write(f"{float(s)!r},{float(b)!r}\n")


def read_density_csv(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    s, b = data[:, 0], data[:, 1]
    dif = np.diff(s)
    if len(s) < _MIN_DENSITY_NODES:
        raise ValueError(f"density file needs >= {_MIN_DENSITY_NODES} rows")
    if not np.allclose(dif, dif[0], rtol=1e-6):
        raise ValueError("density file grid must be uniform")
    return b


def from_text(text: str, base_dir=".") -> DelayMeasure:
    import os

    alpha = None
    atoms = []
    density = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        key = key.strip()
        if key == "alpha":
            alpha = float(val)
        elif key == "atom":
            u, w = val.split(",")
            atoms.append((float(u), float(w)))
        elif key == "density_file":
            density = read_density_csv(os.path.join(base_dir, val.strip()))
        else:
            raise ValueError(f"unknown delay-measure key: {key}")
    if alpha is None:
        raise ValueError("missing alpha")
    return DelayMeasure(alpha, tuple(atoms), density)
