"""Strong-solution simulation with exact jump times.

The scheme is explicit Euler with left-point (predictable) evaluation of the
diffusion functional: over each grid cell the drift coefficient is frozen at
the left node, the Gaussian-plus-drift increment of the driver multiplies the
left-point functional value, and every compound-Poisson jump is applied at its
exact sampled time with the functional evaluated on strictly pre-jump
information.  When the drift is a pure point mass at lag zero and the driver
has no continuous part, the between-jump flow is applied as an exact
exponential decay, so pure-jump dynamics carry no discretization error at all.

Configurations whose per-step work is state-free (constant functional, or the
clamped-QV functional whose window ends half a delay in the past) are routed
through vectorized recursions; the generic Python loop is the reference
implementation and handles every functional kind.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

from .delay_measure import DelayMeasure, GridDrift, _grid_steps, measures_equal
from .errors import BlowUpError, ConfigError, SpanError
from .functional import ClampedQVFunctional, ConstantFunctional, DiffusionFunctional
from .fundamental import FundamentalSolution, deterministic_solution
from .levy import LevyIncrements, LevyTriplet, sample_path
from .paths import GridPath, Segment

_REL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SddeProblem:
    """Full data of one delay equation: drift measure, diffusion functional,
    driver triplet, initial segment, horizon and step."""

    mu: DelayMeasure
    F: DiffusionFunctional
    levy: LevyTriplet
    phi: Segment
    T: float
    h: float

    def __post_init__(self):
        if self.h <= 0:
            raise ConfigError("h must be positive")
        if self.h > self.mu.alpha / 8 + 1e-12:
            raise ConfigError(f"need h <= alpha/8 = {self.mu.alpha / 8}, got h = {self.h}")
        _grid_steps(self.mu.alpha, self.h)
        if abs(self.phi.alpha - self.mu.alpha) > _REL_TOL * self.mu.alpha:
            raise SpanError("initial segment must span [-alpha, 0]")
        if abs(self.phi.h - self.h) > _REL_TOL * self.h:
            raise SpanError("initial segment grid must match the solver step")
        if round(self.T / self.h) < 1 or abs(
            round(self.T / self.h) * self.h - self.T
        ) > _REL_TOL * max(1.0, self.T):
            raise ConfigError("h must divide the horizon T")
        f_alpha = getattr(self.F, "alpha", None)
        if f_alpha is not None and abs(f_alpha - self.mu.alpha) > _REL_TOL * self.mu.alpha:
            raise ConfigError("functional window must match the delay horizon")
        lags = getattr(self.F, "lags", None)
        if lags is not None and max(lags) > self.mu.alpha + _REL_TOL:
            raise ConfigError("functional lag exceeds the delay horizon")

    @property
    def n_alpha(self) -> int:
        return _grid_steps(self.mu.alpha, self.h)

    @property
    def n_steps(self) -> int:
        return round(self.T / self.h)


def segment_at(path: GridPath, t: float, alpha: float) -> Segment:
    """Window of the path over [t - alpha, t] with jump marks preserved."""
    return path.segment(t, alpha)


def stationary_ou_segment(a: float, sigma: float, alpha: float, h: float, seed: int) -> Segment:
    """Exactly stationary discrete OU history on [-alpha, 0].

    The left endpoint is drawn from N(0, sigma^2/(2a)) and successive nodes
    follow the exact OU transition, so every node is marginally stationary.
    """
    if a <= 0:
        raise ConfigError("mean reversion rate must be positive")
    n = _grid_steps(alpha, h)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    x0 = sigma / math.sqrt(2.0 * a) * rng.standard_normal()
    rho = math.exp(-a * h)
    s = sigma * math.sqrt((1.0 - rho * rho) / (2.0 * a))
    shocks = s * rng.standard_normal(n)
    vals = lfilter([1.0], [1.0, -rho], shocks, zi=np.array([rho * x0]))[0]
    return Segment(alpha, np.concatenate([[x0], vals]))


# -- dispatch ------------------------------------------------------------------


def _exact_decay(p: SddeProblem, w0: float | None) -> bool:
    # exact exponential between jumps only in the genuinely pure-jump regime
    return (
        w0 is not None
        and p.levy.sigma2 == 0.0
        and p.levy.path_drift() == 0.0
    )


def _grid_lag_atoms(p: SddeProblem):
    """Atoms as integer step lags >= 1, or None when not representable."""
    if p.mu.density is not None:
        return None
    lags, weights = [], []
    for u, w in p.mu.atoms:
        pos = -u / p.h
        L = round(pos)
        if abs(pos - L) > 1e-9 * max(1.0, pos) or L < 1:
            return None
        lags.append(int(L))
        weights.append(w)
    return lags, weights


def solve_euler(p: SddeProblem, seed: int | None = None, noise: LevyIncrements | None = None) -> GridPath:
    """Simulate one strong-solution path; deterministic given (p, seed).

    An explicit noise realization may be passed instead of a seed (paired
    runs, refinement studies); it must live on the problem grid.
    """
    if noise is None:
        if seed is None:
            raise ConfigError("provide a seed or an explicit noise realization")
        noise = sample_path(p.levy, p.T, p.h, seed)
    if abs(noise.h - p.h) > _REL_TOL * p.h or noise.n_steps < p.n_steps:
        raise ConfigError("noise realization does not match the problem grid")
    w0 = p.mu.single_atom_at_zero()
    if isinstance(p.F, ConstantFunctional):
        if p.F.value == 0.0:
            # zero diffusion: the problem is deterministic, use the
            # second-order integrator directly
            det = deterministic_solution(p.mu, p.phi, p.T, p.h, check=False)
            return GridPath(det.t0, det.h, det.values, det.jumps, noise.seed)
        if w0 is not None:
            return _solve_const_atom0(p, noise, w0)
        lagged = _grid_lag_atoms(p)
        if lagged is not None:
            return _solve_const_lagged(p, noise, *lagged)
    if isinstance(p.F, ClampedQVFunctional) and w0 is not None:
        return _solve_qv_atom0(p, noise, w0)
    return _solve_generic(p, noise)


def _finalize(p: SddeProblem, X: np.ndarray, marks, seed) -> GridPath:
    bad = ~np.isfinite(X)
    if bad.any():
        k = int(np.argmax(bad))
        raise BlowUpError(
            f"non-finite state at t = {-p.mu.alpha + k * p.h}", t=-p.mu.alpha + k * p.h
        )
    X.flags.writeable = False
    return GridPath(t0=-p.mu.alpha, h=p.h, values=X, jumps=tuple(marks), seed=seed)


# -- generic reference loop ----------------------------------------------------


def _solve_generic(p: SddeProblem, noise: LevyIncrements) -> GridPath:
    n, N, h, alpha = p.n_alpha, p.n_steps, p.h, p.mu.alpha
    X = np.empty(n + N + 1)
    X[: n + 1] = p.phi.values
    w0 = p.mu.single_atom_at_zero()
    exact = _exact_decay(p, w0)
    drift = None if w0 is not None else GridDrift(p.mu, h)
    stepper = p.F.make_stepper(h, p.phi)
    F = p.F
    cont = noise.cont
    jt, js, jk = noise.jump_times, noise.jump_sizes, noise.step_of_jump()
    marks = list(p.phi.jumps)
    jptr = 0
    M = len(jt)
    eh = math.exp(w0 * h) if exact else None
    for k in range(N):
        i = n + k
        if stepper is not None:
            Fk = stepper.value()
        else:
            Fk = F.evaluate(Segment(alpha, X[i - n : i + 1], ()))
        x = X[i]
        gk = (w0 * x) if (w0 is not None and not exact) else None
        if drift is not None:
            gk = drift(X, i)
        jump_sum = 0.0
        jump_sq = 0.0
        if jptr < M and jk[jptr] == k:
            t_left = k * h
            while jptr < M and jk[jptr] == k:
                tau = jt[jptr]
                if exact:
                    xpre = x * math.exp(w0 * (tau - t_left))
                else:
                    xpre = x + gk * (tau - t_left)
                if stepper is not None:
                    Fj = stepper.value()
                else:
                    vals = np.array(X[i - n : i + 1])
                    vals[-1] = xpre
                    Fj = F.evaluate(Segment(alpha, vals, ()))
                size = Fj * js[jptr]
                x = xpre + size
                marks.append((tau, size))
                jump_sum += size
                jump_sq += size * size
                t_left = tau
                jptr += 1
            if exact:
                x *= math.exp(w0 * ((k + 1) * h - t_left))
            else:
                x += gk * ((k + 1) * h - t_left)
        else:
            x = x * eh if exact else x + gk * h
        x += Fk * cont[k]
        if not math.isfinite(x):
            raise BlowUpError(f"non-finite state at t = {(k + 1) * h}", t=(k + 1) * h)
        X[i + 1] = x
        if stepper is not None:
            stepper.advance(X[i + 1] - X[i] - jump_sum, jump_sq)
    return _finalize(p, X, marks, noise.seed)


# -- vectorized recursions -------------------------------------------------------


def _jump_inputs(p, noise, w0, exact, fvals=None):
    """Per-step additive jump contributions and the output marks.

    In the exact-decay regime a jump at tau inside cell k enters the node
    recursion scaled by exp(w0 (t_{k+1} - tau)); under Euler drift it enters
    unscaled.  ``fvals`` gives the per-step functional values (constant
    functional passes a scalar).
    """
    N = p.n_steps
    inputs = np.zeros(N)
    jump_sum = np.zeros(N)
    jump_sq = np.zeros(N)
    marks = []
    if len(noise.jump_times) == 0:
        return inputs, jump_sum, jump_sq, marks
    ks = noise.step_of_jump()
    fv = fvals[ks] if isinstance(fvals, np.ndarray) else np.full(len(ks), fvals)
    sizes = fv * noise.jump_sizes
    if exact:
        wts = np.exp(w0 * ((ks + 1) * p.h - noise.jump_times))
    else:
        wts = np.ones(len(ks))
    np.add.at(inputs, ks, sizes * wts)
    np.add.at(jump_sum, ks, sizes)
    np.add.at(jump_sq, ks, sizes * sizes)
    marks = list(zip(noise.jump_times.tolist(), sizes.tolist()))
    return inputs, jump_sum, jump_sq, marks


def _solve_const_atom0(p: SddeProblem, noise: LevyIncrements, w0: float) -> GridPath:
    n, N, h = p.n_alpha, p.n_steps, p.h
    exact = _exact_decay(p, w0)
    gamma = math.exp(w0 * h) if exact else 1.0 + w0 * h
    Fm = p.F.value
    inputs, _, _, marks = _jump_inputs(p, noise, w0, exact, Fm)
    inputs += Fm * noise.cont[:N]
    x0 = p.phi.end_value
    y = lfilter([1.0], [1.0, -gamma], inputs, zi=np.array([gamma * x0]))[0]
    X = np.concatenate([p.phi.values, y])
    return _finalize(p, X, list(p.phi.jumps) + marks, noise.seed)


def _solve_const_lagged(p: SddeProblem, noise: LevyIncrements, lags, weights) -> GridPath:
    n, N, h = p.n_alpha, p.n_steps, p.h
    Fm = p.F.value
    inputs, _, _, marks = _jump_inputs(p, noise, None, False, Fm)
    inputs += Fm * noise.cont[:N]
    X = np.empty(n + N + 1)
    X[: n + 1] = p.phi.values
    block = min(lags) if lags else N
    k = 0
    while k < N:
        m = min(block, N - k)
        i0 = n + k
        d = inputs[k : k + m].copy()
        for L, w in zip(lags, weights):
            d += (h * w) * X[i0 - L : i0 - L + m]
        X[i0 + 1 : i0 + m + 1] = X[i0] + np.cumsum(d)
        k += m
    return _finalize(p, X, list(p.phi.jumps) + marks, noise.seed)


def _solve_qv_atom0(p: SddeProblem, noise: LevyIncrements, w0: float) -> GridPath:
    """Blocked recursion for the clamped-QV functional over a lag-zero drift.

    The QV window ends half a delay behind the present, so functional values
    for a whole block of n/2 steps depend only on cells completed before the
    block; each block is then a linear recursion solved in one filter call.
    """
    F: ClampedQVFunctional = p.F
    n, N, h = p.n_alpha, p.n_steps, p.h
    n_half = n // 2
    exact = _exact_decay(p, w0)
    gamma = math.exp(w0 * h) if exact else 1.0 + w0 * h

    q = np.empty(n + N)
    stepper_probe = F.make_stepper(h, p.phi)
    q[:n] = stepper_probe._ring  # per-cell contributions of the initial segment
    csum = np.empty(n + N + 1)
    csum[0] = 0.0
    np.cumsum(q[:n], out=csum[1 : n + 1])

    cont = noise.cont
    jt, js, jk = noise.jump_times, noise.jump_sizes, noise.step_of_jump()
    X = np.empty(n + N + 1)
    X[: n + 1] = p.phi.values
    marks = list(p.phi.jumps)
    jlo = 0
    k = 0
    scale = 2.0 / F.alpha
    while k < N:
        m = min(n_half, N - k)
        W = csum[k + n_half : k + m + n_half] - csum[k : k + m]
        fvals = np.sqrt(np.clip(scale * W, 1.0, 2.0))
        inputs = fvals * cont[k : k + m]
        jump_sum = np.zeros(m)
        jump_sq = np.zeros(m)
        jhi = jlo
        while jhi < len(jt) and jk[jhi] < k + m:
            jhi += 1
        for idx in range(jlo, jhi):
            kk = jk[idx]
            size = fvals[kk - k] * js[idx]
            wt = math.exp(w0 * ((kk + 1) * h - jt[idx])) if exact else 1.0
            inputs[kk - k] += size * wt
            jump_sum[kk - k] += size
            jump_sq[kk - k] += size * size
            marks.append((float(jt[idx]), float(size)))
        jlo = jhi
        i0 = n + k
        y = lfilter([1.0], [1.0, -gamma], inputs, zi=np.array([gamma * X[i0]]))[0]
        X[i0 + 1 : i0 + m + 1] = y
        d = np.diff(X[i0 : i0 + m + 1]) - jump_sum
        q[n + k : n + k + m] = d * d + jump_sq
        csum[n + k + 1 : n + k + m + 1] = csum[n + k] + np.cumsum(q[n + k : n + k + m])
        k += m
    return _finalize(p, X, marks, noise.seed)


# -- stochastic convolution route -------------------------------------------------


def solve_voc(p: SddeProblem, noise: LevyIncrements, fs: FundamentalSolution) -> GridPath:
    """Path from the convolution identity
    X(t) = x(t, phi) + int_0^t r(t-s) F(X)(s-) dL(s).

    Must be fed the same noise realization as a paired direct run and a
    fundamental solution computed for the same measure on the same grid; the
    stochastic convolution uses left-point functional values on grid cells and
    exact jump terms r(t - tau) F(X)(tau-) dL(tau).
    """
    if not measures_equal(fs.mu, p.mu):
        raise ConfigError("fundamental solution was computed for a different measure")
    if abs(fs.h - p.h) > _REL_TOL * p.h:
        raise ConfigError("fundamental solution grid does not match the problem grid")
    if fs.T < p.T - _REL_TOL:
        raise ConfigError("fundamental solution horizon too short")
    if abs(noise.h - p.h) > _REL_TOL * p.h or noise.n_steps < p.n_steps:
        raise ConfigError("noise realization does not match the problem grid")
    n, N, h, alpha = p.n_alpha, p.n_steps, p.h, p.mu.alpha
    det = deterministic_solution(p.mu, p.phi, p.T, p.h, fs=fs, check=True)
    xdet = det.values[n:]
    r = fs.r
    rgrid = fs.grid()
    X = np.empty(n + N + 1)
    X[: n + 1] = p.phi.values
    D = np.zeros(N)
    tgrid = h * np.arange(N + 1)
    jt, js, jk = noise.jump_times, noise.jump_sizes, noise.step_of_jump()
    mark_t: list[float] = []
    mark_s: list[float] = []
    all_marks = list(p.phi.jumps)
    jptr = 0
    F = p.F

    def window_marks(t):
        lo = t - alpha
        return tuple(
            (tm - t, s) for tm, s in all_marks if lo + _REL_TOL * h < tm <= t + _REL_TOL * h
        )

    for k in range(N):
        i = n + k
        seg = Segment(alpha, X[i - n : i + 1], window_marks(k * h))
        D[k] = F.evaluate(seg) * noise.cont[k]
        while jptr < len(jt) and jk[jptr] == k:
            tau = jt[jptr]
            xm = float(np.interp(tau, det.times(), det.values))
            xm += float(np.dot(np.interp(tau - tgrid[: k + 1], rgrid, r), D[: k + 1]))
            if mark_t:
                mt = np.asarray(mark_t)
                ms = np.asarray(mark_s)
                xm += float(np.dot(np.interp(tau - mt, rgrid, r, left=0.0), ms))
            vals = np.array(X[i - n : i + 1])
            vals[-1] = xm
            Fj = F.evaluate(Segment(alpha, vals, window_marks(k * h)))
            size = Fj * js[jptr]
            mark_t.append(float(tau))
            mark_s.append(float(size))
            all_marks.append((float(tau), float(size)))
            jptr += 1
        acc = xdet[k + 1] + float(np.dot(r[1 : k + 2][::-1], D[: k + 1]))
        if mark_t:
            mt = np.asarray(mark_t)
            ms = np.asarray(mark_s)
            acc += float(np.dot(np.interp(tgrid[k + 1] - mt, rgrid, r, left=0.0), ms))
        if not math.isfinite(acc):
            raise BlowUpError(f"non-finite state at t = {(k + 1) * h}", t=(k + 1) * h)
        X[i + 1] = acc
    return _finalize(p, X, all_marks, noise.seed)


def coupled_pair(
    p: SddeProblem, phi1: Segment, phi2: Segment, seed: int
) -> tuple[GridPath, GridPath]:
    """Two solutions driven by the identical noise realization."""
    noise = sample_path(p.levy, p.T, p.h, seed)
    a = solve_euler(replace(p, phi=phi1), noise=noise)
    b = solve_euler(replace(p, phi=phi2), noise=noise)
    return a, b
