"""Invariant-measure estimation and second-order analysis of stationary solutions.

Time-average (occupation) estimates of the invariant law from replicate runs
started at the zero history; closed-form variance, autocovariance and spectral
density built from the fundamental solution; their empirical counterparts with
batch-means standard errors; the compound-Poisson power-law fit of the
invariant density near zero; growth diagnostics that surrogate tightness; and
the multiple-stationary-regimes demonstration for the clamped-QV coefficient.

Spectral convention throughout: c(h) = (1/2pi) integral exp(i h xi) S(xi) dxi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import partial

import numpy as np

from .delay_measure import DelayMeasure, char_function
from .errors import ConfigError, DivergenceError
from .functional import ClampedQVFunctional, ConstantFunctional
from .fundamental import FundamentalSolution
from .levy import LevyTriplet, check_assumptions, derive_seed, sample_path
from .parallel import run_indexed
from .paths import Segment, zero_segment
from .solver import SddeProblem, solve_euler, stationary_ou_segment

DEFAULT_BATCHES = 30


# -- empirical measure ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Occupation-average samples of the (approximately) stationary law."""

    series: tuple[np.ndarray, ...]
    spacing: float
    burn_in: float
    warnings: tuple[str, ...] = ()
    segments: tuple[Segment, ...] = ()

    @property
    def samples(self) -> np.ndarray:
        return np.concatenate(self.series)

    @property
    def size(self) -> int:
        return sum(len(s) for s in self.series)

    def variance_with_se(self, n_batches: int = DEFAULT_BATCHES):
        return variance_with_se(self.series, n_batches=n_batches)


def _split_batches(series, n_batches):
    """Contiguous batches, never straddling replicate boundaries."""
    reps = len(series)
    per = max(1, math.ceil(n_batches / reps))
    batches = []
    for s in series:
        size = len(s) // per
        if size == 0:
            batches.append(s)
            continue
        for j in range(per):
            chunk = s[j * size : (j + 1) * size] if j < per - 1 else s[j * size :]
            if len(chunk):
                batches.append(chunk)
    return batches


def variance_with_se(series, n_batches: int = DEFAULT_BATCHES):
    """Pooled variance and its batch-means standard error."""
    series = [np.asarray(s, dtype=float) for s in series]
    pooled = np.concatenate(series)
    if len(pooled) < 2:
        raise ConfigError("need at least two samples")
    m = float(pooled.mean())
    batches = _split_batches(series, n_batches)
    stats = np.array([float(np.mean((b - m) ** 2)) for b in batches])
    est = float(stats.mean())
    se = float(stats.std(ddof=1) / math.sqrt(len(stats))) if len(stats) > 1 else math.inf
    return est, se, len(stats)


def estimate_autocovariance(series, lags, n_batches: int = DEFAULT_BATCHES):
    """Empirical autocovariance at integer sample lags, batch-means errors.

    Returns a list of (lag, estimate, se).  The plain product estimator is
    computed per contiguous batch around the pooled mean.
    """
    series = [np.asarray(s, dtype=float) for s in series]
    pooled = np.concatenate(series)
    m = float(pooled.mean())
    batches = _split_batches(series, n_batches)
    out = []
    for lag in lags:
        lag = int(lag)
        if lag < 0:
            raise ConfigError("lags must be nonnegative")
        vals = []
        for b in batches:
            if len(b) <= lag + 1:
                raise ConfigError(
                    f"too few samples per batch ({len(b)}) for lag {lag}"
                )
            x = b - m
            vals.append(float(np.mean(x[: len(x) - lag] * x[lag:])) if lag else float(np.mean(x * x)))
        vals = np.array(vals)
        se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.inf
        out.append((lag, float(vals.mean()), se))
    return out


# -- occupation-average construction ---------------------------------------------


def _kb_worker(problem, master_seed, start_idx, step_idx, count, collect, idx):
    path = solve_euler(problem, seed=derive_seed(master_seed, idx))
    n = problem.n_alpha
    pick = n + start_idx + step_idx * (1 + np.arange(count))
    samples = np.array(path.values[pick])
    segs = []
    for j in range(collect):
        t = (start_idx + step_idx * (count - j)) * problem.h
        segs.append(path.segment(t, problem.mu.alpha))
    return samples, tuple(segs)


def krylov_bogoliubov(
    p: SddeProblem,
    burn_in: float,
    horizon: float,
    spacing: float,
    replicates: int,
    seed: int,
    workers: int = 1,
    initial: Segment | None = None,
    collect_segments: int = 0,
) -> EmpiricalMeasure:
    """Estimate the invariant marginal by time averaging replicate runs.

    Each replicate starts from the zero history (or ``initial``), runs to
    burn_in + horizon, and contributes marginal samples every ``spacing`` time
    units after burn-in.  The stationarity prerequisites are checked first;
    failures are attached as warnings and the computation still runs, so
    counterexample studies remain possible.
    """
    gate = check_assumptions(p.mu, p.levy, p.F)
    warnings = tuple(gate.messages)
    h = p.h
    step_idx = max(1, round(spacing / h))
    start_idx = round(burn_in / h)
    count = int(math.floor(round(horizon / h) / step_idx))
    if count < 1:
        raise ConfigError("horizon too short for the requested spacing")
    total_T = (start_idx + step_idx * count) * h
    phi = initial if initial is not None else zero_segment(p.mu.alpha, h)
    prob = replace(p, phi=phi, T=total_T)
    worker = partial(_kb_worker, prob, seed, start_idx, step_idx, count, collect_segments)
    results = run_indexed(worker, replicates, workers)
    series = tuple(r[0] for r in results)
    segments = tuple(s for r in results for s in r[1])
    return EmpiricalMeasure(
        series=series,
        spacing=step_idx * h,
        burn_in=start_idx * h,
        warnings=warnings,
        segments=segments,
    )


def default_burn_in(v0_value: float) -> float:
    """20 relaxation times of the drift when it is stable."""
    if v0_value >= 0 or not math.isfinite(v0_value):
        raise ConfigError("default burn-in needs a stable drift (v0 < 0)")
    return 20.0 / (-v0_value)


# -- closed-form second-order quantities ------------------------------------------


def analytic_variance(
    fs: FundamentalSolution, triplet: LevyTriplet, ef2: float, recenter: bool = False
) -> float:
    """Var X(0) = E[F(X)(0)]^2 * (sigma^2 + int x^2 nu(dx)) * ||r||^2.

    Requires a centered driver (martingale); pass recenter=True to accept the
    martingale-part convention when the mean rate is nonzero.
    """
    smr = triplet.second_moment_rate()
    if math.isinf(smr):
        raise DivergenceError("driver has infinite second moment")
    mr = triplet.mean_rate()
    if abs(mr) > 1e-9 * (1.0 + abs(triplet.b)) and not recenter:
        raise ConfigError(
            f"driver mean rate {mr} is nonzero; pass recenter=True to use the "
            "martingale part"
        )
    return ef2 * smr * fs.l2_norm_sq()


def analytic_covariance(fs: FundamentalSolution, var0: float, lag: float) -> float:
    """c(lag) = var0 * int r(s) r(s+lag) ds / ||r||^2."""
    return var0 * fs.conv_rr(lag) / fs.l2_norm_sq()


def analytic_spectral_density(fs: FundamentalSolution, mu: DelayMeasure, ex2: float, xi):
    """S(xi) = E[X(0)^2] / (||r||^2 |chi(i xi)|^2)."""
    l2 = fs.l2_norm_sq()
    chi = char_function(mu, 1j * np.asarray(xi, dtype=float))
    mod2 = np.abs(chi) ** 2
    if np.any(mod2 < 1e-20):
        raise DivergenceError("characteristic function vanishes on the imaginary axis")
    out = ex2 / (l2 * mod2)
    return float(out) if out.ndim == 0 else out


def invert_spectral_density(
    fs: FundamentalSolution,
    mu: DelayMeasure,
    ex2: float,
    lags,
    xi_max: float | None = None,
    base_step: float | None = None,
) -> np.ndarray:
    """Numerical inverse transform c(lag) = (1/pi) int_0^inf cos(lag xi) S(xi) d xi.

    The quadrature grid is refined around near-zeros of chi(i xi) (spectral
    resonances), whose width is set by the distance of the rightmost roots to
    the imaginary axis.
    """
    lags = np.atleast_1d(np.asarray(lags, dtype=float))
    l2 = fs.l2_norm_sq()
    if xi_max is None:
        xi_max = max(200.0, 1.0 / (l2 * math.pi * 2e-4))
    if base_step is None:
        base_step = min(2e-3, math.pi / (50.0 * (1.0 + float(lags.max()))))
    grid = np.arange(0.0, xi_max, base_step)
    mod = np.abs(char_function(mu, 1j * grid))
    pieces = [grid]
    interior = np.arange(1, len(grid) - 1)
    is_min = (mod[interior] < mod[interior - 1]) & (mod[interior] <= mod[interior + 1])
    floor = 0.25 * float(np.median(mod))
    for i in interior[is_min]:
        if mod[i] >= floor:
            continue
        width = max(float(mod[i]), 1e-6)
        step = max(width / 25.0, 1e-7)
        lo = max(0.0, grid[i] - 0.5)
        pieces.append(np.arange(lo, grid[i] + 0.5, step))
    xs = np.unique(np.concatenate(pieces))
    S = analytic_spectral_density(fs, mu, ex2, xs)
    out = np.empty(len(lags))
    for j, lag in enumerate(lags):
        out[j] = float(np.trapezoid(np.cos(lag * xs) * S, xs)) / math.pi
    return out


def periodogram(values, h_samp: float, segments: int = 16):
    """Averaged (Bartlett) periodogram of a stationary sample path.

    Returns (xi, S_hat) on xi_j = 2 pi j / (L h) for j = 1..L/2, normalized so
    that c(h) = (1/2pi) integral exp(i h xi) S(xi) dxi; the sample mean is
    removed first.
    """
    values = np.asarray(values, dtype=float)
    L = len(values) // segments
    if L < 8:
        raise ConfigError("too few samples per periodogram segment")
    x = values[: L * segments].reshape(segments, L) - values.mean()
    spec = np.abs(np.fft.rfft(x, axis=1)) ** 2 * (h_samp / L)
    S = spec.mean(axis=0)
    j = np.arange(1, L // 2 + 1)
    xi = 2.0 * math.pi * j / (L * h_samp)
    return xi, S[1 : L // 2 + 1]


# -- compound-Poisson power law ----------------------------------------------------


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    se: float
    n_window: int
    window_hi: float


def cp_cdf_exponent(a: float, lam: float) -> float:
    """Predicted power of the invariant CDF near zero for dX = -aX dt + F dL."""
    return lam / a


def cp_density_exponent(a: float, lam: float) -> float:
    return lam / a - 1.0


def cp_power_law_fit(
    samples, window_hi: float, drop_quantile: float = 0.02, min_count: int = 200
) -> PowerLawFit:
    """Log-log regression of the empirical CDF on (0, window_hi].

    The fitted slope estimates the CDF exponent lambda/a (density exponent
    plus one); the multiplicative constant is absorbed by the intercept.
    """
    if hasattr(samples, "samples"):
        samples = samples.samples
    x = np.sort(np.asarray(samples, dtype=float))
    w = x[(x > 0) & (x <= window_hi)]
    n_w = len(w)
    if n_w < min_count:
        raise ConfigError(f"only {n_w} samples in the fit window (need {min_count})")
    lo = int(drop_quantile * n_w)
    xs = np.log(w[lo:])
    ys = np.log((np.arange(lo, n_w) + 1.0) / n_w)
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    denom = float(np.sum((xs - xs.mean()) ** 2))
    se = math.sqrt(float(np.sum(resid**2)) / max(len(xs) - 2, 1) / denom)
    return PowerLawFit(float(slope), se, n_w, window_hi)


# -- tightness surrogate -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TightnessReport:
    checkpoints: tuple[float, ...]
    K_grid: tuple[float, ...]
    marginal: np.ndarray  # exceedance frequency, shape (checkpoints, K)
    segment_sup: np.ndarray
    growth_flag: bool
    monotone_in_K: bool
    replicates: int


def _tightness_worker(problem, master_seed, check_idx, idx):
    path = solve_euler(problem, seed=derive_seed(master_seed, idx))
    n = problem.n_alpha
    marg = np.empty(len(check_idx))
    sup = np.empty(len(check_idx))
    for j, ci in enumerate(check_idx):
        marg[j] = abs(path.values[n + ci])
        lo = n + ci - n  # window [t - alpha, t]
        sup[j] = float(np.max(np.abs(path.values[ci : n + ci + 1])))
    return marg, sup


def tightness_diagnostic(
    p: SddeProblem,
    checkpoints,
    K_grid,
    replicates: int,
    seed: int,
    workers: int = 1,
) -> TightnessReport:
    """Exceedance-frequency table P(|X(t)| > K) and P(sup-window > K).

    A growing exceedance at the largest K across checkpoints is the symptom
    that the marginal laws are not tight (no stationary regime to converge
    to); decay in K at fixed t is the healthy profile.
    """
    checkpoints = tuple(float(c) for c in checkpoints)
    K_grid = tuple(sorted(float(k) for k in K_grid))
    h = p.h
    check_idx = [round(c / h) for c in checkpoints]
    T = max(check_idx) * h
    prob = replace(p, T=T)
    worker = partial(_tightness_worker, prob, seed, check_idx)
    results = run_indexed(worker, replicates, workers)
    marg = np.stack([r[0] for r in results])  # (replicates, checkpoints)
    sup = np.stack([r[1] for r in results])
    marg_freq = np.empty((len(checkpoints), len(K_grid)))
    sup_freq = np.empty_like(marg_freq)
    for j, K in enumerate(K_grid):
        marg_freq[:, j] = (marg > K).mean(axis=0)
        sup_freq[:, j] = (sup > K).mean(axis=0)
    first, last = marg_freq[0, -1], marg_freq[-1, -1]
    se = math.sqrt(
        (first * (1 - first) + last * (1 - last)) / max(replicates, 1) + 1e-12
    )
    growth = bool(last - first > max(0.02, 3.0 * se))
    monotone = bool(np.all(np.diff(marg_freq, axis=1) <= 1e-12))
    return TightnessReport(
        checkpoints, K_grid, marg_freq, sup_freq, growth, monotone, replicates
    )


# -- multiple stationary regimes demo ---------------------------------------------


@dataclass(frozen=True)
class NonUniquenessRow:
    sigma: float
    sup_f_dev: float
    var_hat: float
    var_se: float
    var_predicted: float


@dataclass(frozen=True, eq=False)
class NonUniquenessReport:
    rows: tuple[NonUniquenessRow, ...]
    a: float
    alpha: float
    T: float
    h: float
    replicates: int

    def variance_ratio(self, i: int, j: int) -> float:
        return self.rows[i].var_hat / self.rows[j].var_hat


def _nonuniq_worker(mu, F, levy, a, sigma, alpha, T, h, master_seed, sigma_idx, idx):
    phi = stationary_ou_segment(a, sigma, alpha, h, derive_seed(master_seed, sigma_idx, idx, 0))
    prob = SddeProblem(mu=mu, F=F, levy=levy, phi=phi, T=T, h=h)
    noise = sample_path(levy, T, h, derive_seed(master_seed, sigma_idx, idx, 1))
    path = solve_euler(prob, noise=noise)
    n = prob.n_alpha
    body = path.values[n:]
    out = (float(body.mean()), float(np.mean(body**2)))
    fcurve_sup = None
    if idx == 0:
        # rolling realized QV over the half-window, entirely vectorized
        N = prob.n_steps
        n_half = n // 2
        inc2 = np.diff(path.values) ** 2
        cs = np.concatenate([[0.0], np.cumsum(inc2)])
        W = cs[n_half : n_half + N + 1] - cs[: N + 1]
        f_vals = np.sqrt(np.clip(2.0 / alpha * W, 1.0, 2.0))
        fcurve_sup = float(np.max(np.abs(f_vals - sigma)))
    return out, fcurve_sup


def nonuniqueness_demo(
    sigmas,
    a: float,
    alpha: float,
    T: float,
    h: float,
    replicates: int,
    seed: int,
    workers: int = 1,
) -> NonUniquenessReport:
    """One stationary regime per diffusion level sigma for the clamped-QV coefficient.

    Starting from an exactly stationary OU history with parameter sigma, the
    realized half-window quadratic variation stays pinned at (alpha/2) sigma^2,
    the coefficient stays at sigma, and the path remains the OU process with
    that sigma: distinct sigma values give distinct long-run variances
    sigma^2/(2a) under one and the same equation.
    """
    mu = DelayMeasure(alpha, atoms=((0.0, -a),))
    F = ClampedQVFunctional(alpha)
    levy = LevyTriplet.wiener(1.0)
    rows = []
    for si, sigma in enumerate(sigmas):
        lo = 1.0 - 1e-9
        hi = math.sqrt(2.0) + 1e-9
        if not lo <= sigma <= hi:
            raise ConfigError(f"sigma {sigma} outside the fixed-point range [1, sqrt(2)]")
        worker = partial(_nonuniq_worker, mu, F, levy, a, sigma, alpha, T, h, seed, si)
        results = run_indexed(worker, replicates, workers)
        means = np.array([r[0][0] for r in results])
        m2s = np.array([r[0][1] for r in results])
        pooled_mean = float(means.mean())
        var_per_rep = m2s - pooled_mean**2
        var_hat = float(var_per_rep.mean())
        var_se = (
            float(var_per_rep.std(ddof=1) / math.sqrt(replicates))
            if replicates > 1
            else math.inf
        )
        sup_dev = results[0][1]
        rows.append(
            NonUniquenessRow(float(sigma), sup_dev, var_hat, var_se, sigma**2 / (2 * a))
        )
    return NonUniquenessReport(tuple(rows), a, alpha, T, h, replicates)
