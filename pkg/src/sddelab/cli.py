"""Batch experiment runner: every module as a subcommand with config files.

Configs are plain ``key=value`` text (``#`` comments, dotted sections,
``mu.atom`` repeatable); outputs are CSV files plus a ``manifest.txt`` that
echoes the resolved configuration and can itself be re-run as a config.
Exit codes: 0 ok, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .delay_measure import DelayMeasure, read_density_csv, rightmost_roots, v0
from .errors import ConfigError, NumericsError, SpanError
from .functional import (
    INNER_MAPS,
    ClampedQVFunctional,
    ConstantFunctional,
    DistributedFunctional,
    NoDelayFunctional,
    PointDelayFunctional,
    RunningSupFunctional,
)
from .fundamental import compute_r, default_horizon
from .levy import (
    JUMP_FAMILIES,
    JumpSpec,
    LevyTriplet,
    derive_seed,
    sample_path,
)
from .paths import Segment, constant_segment, indicator_segment, zero_segment
from .solver import (
    SddeProblem,
    coupled_pair,
    solve_euler,
    solve_voc,
    stationary_ou_segment,
)
from .stationary import (
    analytic_spectral_density,
    analytic_variance,
    analytic_covariance,
    cp_cdf_exponent,
    cp_power_law_fit,
    estimate_autocovariance,
    krylov_bogoliubov,
    nonuniqueness_demo,
    periodogram,
    tightness_diagnostic,
)
from .skorokhod import feller_counterexample

COMMANDS = (
    "stability",
    "fundamental",
    "simulate",
    "verify",
    "stationary",
    "covariance",
    "spectrum",
    "powerlaw",
    "nonunique",
    "feller-demo",
)


# -- config handling -----------------------------------------------------------

# the complete config grammar; a key outside this set is rejected no matter
# which subcommand runs, so one config can carry the problem block plus any
# command-specific blocks
KNOWN_KEYS = frozenset(
    {
        "command",
        "seed",
        "threads",
        "mu.alpha",
        "mu.atom",
        "mu.density_file",
        "levy.b",
        "levy.sigma2",
        "levy.pure_compound_poisson",
        "levy.jump.family",
        "levy.jump.lambda",
        "levy.jump.J",
        "levy.jump.mean",
        "levy.jump.mean_pos",
        "levy.jump.mean_neg",
        "levy.jump.p_pos",
        "levy.jump.x_min",
        "levy.jump.tail_index",
        "F.kind",
        "F.m",
        "F.f",
        "F.f.a",
        "F.f.b",
        "F.f.lo",
        "F.f.hi",
        "F.f.scale",
        "F.f.amp",
        "F.lags",
        "F.weights",
        "F.kernel_file",
        "phi.kind",
        "phi.value",
        "phi.edge",
        "phi.a",
        "phi.sigma",
        "problem.T",
        "problem.h",
        "stability.tol",
        "fundamental.T",
        "fundamental.h",
        "fundamental.lags",
        "sim.replicates",
        "verify.hs",
        "verify.T",
        "verify.coupling_T",
        "verify.coupling_replicates",
        "verify.coupling_offset",
        "kb.burn_in",
        "kb.horizon",
        "kb.spacing",
        "kb.replicates",
        "hist.bins",
        "tight.checkpoints",
        "tight.K",
        "tight.replicates",
        "covariance.lags",
        "covariance.ef2",
        "covariance.recenter",
        "covariance.fs_T",
        "spectrum.segments",
        "spectrum.xi_max",
        "powerlaw.window_hi",
        "nonunique.sigmas",
        "nonunique.a",
        "nonunique.alpha",
        "nonunique.T",
        "nonunique.h",
        "nonunique.replicates",
        "feller.beta",
        "feller.n",
        "feller.h",
    }
)


class ConfigView:
    """key=value config; keys outside the documented grammar are rejected."""

    def __init__(self, entries: dict[str, list[str]]):
        self.entries = entries
        self.known: set[str] = {"command", "seed", "threads"}

    @classmethod
    def load(cls, path: str) -> "ConfigView":
        entries: dict[str, list[str]] = {}
        try:
            with open(path) as fh:
                for ln, raw in enumerate(fh, 1):
                    line = raw.strip()
                    if not line or line.startswith("#"):
                        continue
                    if "=" not in line:
                        raise ConfigError(f"{path}:{ln}: expected key=value, got {line!r}")
                    key, _, val = line.partition("=")
                    entries.setdefault(key.strip(), []).append(val.strip())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls(entries)

    def _one(self, key: str):
        self.known.add(key)
        vals = self.entries.get(key)
        if vals is None:
            return None
        if len(vals) > 1:
            raise ConfigError(f"key {key} given {len(vals)} times, expected once")
        return vals[0]

    def get_all(self, key: str) -> list[str]:
        self.known.add(key)
        return self.entries.get(key, [])

    def get_str(self, key, default=None, required=False):
        v = self._one(key)
        if v is None:
            if required:
                raise ConfigError(f"missing required key: {key}")
            return default
        return v

    def _convert(self, key, conv, name, default, required):
        v = self._one(key)
        if v is None:
            if required:
                raise ConfigError(f"missing required key: {key}")
            return default
        try:
            return conv(v)
        except ValueError as exc:
            raise ConfigError(f"key {key}: expected {name}, got {v!r}") from exc

    def get_float(self, key, default=None, required=False):
        return self._convert(key, float, "a number", default, required)

    def get_int(self, key, default=None, required=False):
        return self._convert(key, int, "an integer", default, required)

    def get_bool(self, key, default=False):
        v = self._one(key)
        if v is None:
            return default
        if v.lower() in ("true", "1", "yes"):
            return True
        if v.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"key {key}: expected true/false, got {v!r}")

    def get_floats(self, key, default=None, required=False):
        v = self._one(key)
        if v is None:
            if required:
                raise ConfigError(f"missing required key: {key}")
            return list(default) if default is not None else None
        try:
            return [float(t) for t in v.split(",") if t.strip() != ""]
        except ValueError as exc:
            raise ConfigError(f"key {key}: expected comma-separated numbers") from exc

    def finish(self):
        unknown = sorted(set(self.entries) - KNOWN_KEYS)
        if unknown:
            raise ConfigError("unknown config keys: " + ", ".join(unknown))


# -- object builders -------------------------------------------------------------


def build_mu(cfg: ConfigView, base_dir: str) -> DelayMeasure:
    alpha = cfg.get_float("mu.alpha", required=True)
    atoms = []
    for spec in cfg.get_all("mu.atom"):
        parts = spec.split(",")
        if len(parts) != 2:
            raise ConfigError(f"mu.atom: expected 'location,weight', got {spec!r}")
        atoms.append((float(parts[0]), float(parts[1])))
    density = None
    dfile = cfg.get_str("mu.density_file")
    if dfile is not None:
        try:
            density = read_density_csv(os.path.join(base_dir, dfile))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"mu.density_file: {exc}") from exc
    try:
        return DelayMeasure(alpha, tuple(atoms), density)
    except ValueError as exc:
        raise ConfigError(f"mu: {exc}") from exc


def build_levy(cfg: ConfigView) -> LevyTriplet:
    family_name = cfg.get_str("levy.jump.family")
    jump = None
    if family_name is not None:
        if family_name not in JUMP_FAMILIES:
            raise ConfigError(
                f"levy.jump.family: unknown family {family_name!r}; "
                f"choose from {sorted(JUMP_FAMILIES)}"
            )
        lam = cfg.get_float("levy.jump.lambda", required=True)
        if family_name == "constant":
            fam = JUMP_FAMILIES[family_name](cfg.get_float("levy.jump.J", required=True))
        elif family_name == "exponential":
            fam = JUMP_FAMILIES[family_name](cfg.get_float("levy.jump.mean", required=True))
        elif family_name == "two_sided_exponential":
            fam = JUMP_FAMILIES[family_name](
                cfg.get_float("levy.jump.mean_pos", required=True),
                cfg.get_float("levy.jump.mean_neg", required=True),
                cfg.get_float("levy.jump.p_pos", required=True),
            )
        elif family_name == "pareto":
            fam = JUMP_FAMILIES[family_name](
                cfg.get_float("levy.jump.x_min", required=True),
                cfg.get_float("levy.jump.tail_index", required=True),
            )
        else:
            fam = JUMP_FAMILIES[family_name]()
        jump = JumpSpec(lam, fam)
    pure_cp = cfg.get_bool("levy.pure_compound_poisson", default=False)
    if pure_cp:
        if jump is None:
            raise ConfigError("levy.pure_compound_poisson requires a jump family")
        if cfg.get_float("levy.b", 0.0) != 0.0 or cfg.get_float("levy.sigma2", 0.0) != 0.0:
            raise ConfigError(
                "levy.pure_compound_poisson fixes b and sigma2; remove those keys"
            )
        return LevyTriplet.compound_poisson(jump)
    return LevyTriplet(
        b=cfg.get_float("levy.b", 0.0), sigma2=cfg.get_float("levy.sigma2", 0.0), jump=jump
    )


def _build_inner_map(cfg: ConfigView):
    name = cfg.get_str("F.f", required=True)
    if name not in INNER_MAPS:
        raise ConfigError(f"F.f: unknown inner map {name!r}; choose from {sorted(INNER_MAPS)}")
    if name == "affine":
        return INNER_MAPS[name](cfg.get_float("F.f.a", required=True), cfg.get_float("F.f.b", 0.0))
    if name in ("clamp", "sqrt_clamp"):
        return INNER_MAPS[name](
            cfg.get_float("F.f.lo", required=True), cfg.get_float("F.f.hi", required=True)
        )
    return INNER_MAPS[name](
        cfg.get_float("F.f.scale", required=True), cfg.get_float("F.f.amp", required=True)
    )


def build_functional(cfg: ConfigView, alpha: float, base_dir: str):
    kind = cfg.get_str("F.kind", required=True)
    try:
        if kind == "constant":
            return ConstantFunctional(cfg.get_float("F.m", required=True))
        if kind == "no_delay":
            return NoDelayFunctional(_build_inner_map(cfg))
        if kind == "point_delay":
            lags = cfg.get_floats("F.lags", required=True)
            weights = cfg.get_floats("F.weights")
            return PointDelayFunctional(
                _build_inner_map(cfg), tuple(lags), tuple(weights) if weights else None
            )
        if kind == "distributed":
            kfile = cfg.get_str("F.kernel_file", required=True)
            kernel = read_density_csv(os.path.join(base_dir, kfile))
            return DistributedFunctional(_build_inner_map(cfg), kernel, alpha)
        if kind == "running_sup":
            return RunningSupFunctional(alpha)
        if kind == "clamped_qv":
            return ClampedQVFunctional(alpha)
    except (ValueError, OSError) as exc:
        raise ConfigError(f"F: {exc}") from exc
    raise ConfigError(f"F.kind: unknown kind {kind!r}")


def build_phi(cfg: ConfigView, alpha: float, h: float, seed: int):
    kind = cfg.get_str("phi.kind", "zero")
    if kind == "zero":
        return zero_segment(alpha, h)
    if kind == "constant":
        return constant_segment(alpha, cfg.get_float("phi.value", required=True), h)
    if kind == "indicator":
        return indicator_segment(alpha, cfg.get_float("phi.edge", required=True), h)
    if kind == "stationary_ou":
        return stationary_ou_segment(
            cfg.get_float("phi.a", required=True),
            cfg.get_float("phi.sigma", required=True),
            alpha,
            h,
            derive_seed(seed, 907),
        )
    raise ConfigError(f"phi.kind: unknown kind {kind!r}")


def build_problem(cfg: ConfigView, base_dir: str, seed: int) -> SddeProblem:
    mu = build_mu(cfg, base_dir)
    levy = build_levy(cfg)
    F = build_functional(cfg, mu.alpha, base_dir)
    T = cfg.get_float("problem.T", required=True)
    h = cfg.get_float("problem.h", required=True)
    phi = build_phi(cfg, mu.alpha, h, seed)
    try:
        return SddeProblem(mu=mu, F=F, levy=levy, phi=phi, T=T, h=h)
    except (ConfigError, SpanError, ValueError) as exc:
        raise ConfigError(f"problem: {exc}") from exc


# -- output helpers -----------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def write_manifest(out_dir, command, cfg: ConfigView, seed, threads):
    lines = [
        "# sddelab manifest",
        f"# version={__version__}",
        f"# numpy={np.__version__}",
        f"command={command}",
    ]
    for key in sorted(cfg.entries):
        if key in ("command", "seed", "threads"):
            continue
        for val in cfg.entries[key]:
            lines.append(f"{key}={val}")
    lines.append(f"seed={seed}")
    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


# -- subcommands ---------------------------------------------------------------------


def cmd_stability(cfg, out_dir, seed, threads, base_dir):
    mu = build_mu(cfg, base_dir)
    tol = cfg.get_float("stability.tol", 1e-8)
    cfg.finish()
    roots, searched = rightmost_roots(mu, tol=tol)
    value = max((z.real for z in roots), default=-math.inf)
    rows = sorted(((z.real, z.imag) for z in roots), key=lambda p: (-p[0], p[1]))
    write_csv(os.path.join(out_dir, "stability.csv"), ["re", "im"], rows)
    write_csv(
        os.path.join(out_dir, "summary.csv"),
        ["name", "value"],
        [
            ("v0", value),
            ("total_variation", mu.total_variation),
            ("searched_halfplane", -searched),
        ],
    )
    print(f"v0={value!r}")
    return 0


def cmd_fundamental(cfg, out_dir, seed, threads, base_dir):
    mu = build_mu(cfg, base_dir)
    h = cfg.get_float("fundamental.h", 1e-3)
    T = cfg.get_float("fundamental.T")
    lags = cfg.get_floats("fundamental.lags", default=[0.0])
    cfg.finish()
    fs = compute_r(mu, T=T, h=h)
    fs.to_csv(os.path.join(out_dir, "fundamental.csv"))
    rows = [
        ("T", fs.T),
        ("h", fs.h),
        ("decay_c", fs.decay_c),
        ("decay_beta", fs.decay_beta),
        ("unstable_growth", int(fs.unstable_growth)),
    ]
    if fs.decay_beta > 0:
        rows.append(("l2_norm_sq", fs.l2_norm_sq()))
        rows.append(("l2_norm_sq_dot", fs.l2_norm_sq_dot()))
    write_csv(os.path.join(out_dir, "norms.csv"), ["name", "value"], rows)
    if fs.decay_beta > 0:
        write_csv(
            os.path.join(out_dir, "conv.csv"),
            ["lag", "value"],
            [(lag, fs.conv_rr(lag)) for lag in lags],
        )
    print(f"decay_beta={fs.decay_beta!r}")
    return 0


def cmd_simulate(cfg, out_dir, seed, threads, base_dir):
    p = build_problem(cfg, base_dir, seed)
    reps = cfg.get_int("sim.replicates", 1)
    cfg.finish()
    for i in range(reps):
        path = solve_euler(p, seed=derive_seed(seed, i))
        flags = np.zeros(len(path.values), dtype=int)
        for tau, _ in path.jumps:
            # flag the node closing the cell that contains the jump
            k = min(len(flags) - 1, int(np.ceil((tau - path.t0) / path.h - 1e-12)))
            flags[k] = 1
        rows = zip(path.times(), path.values, flags)
        write_csv(os.path.join(out_dir, f"path_{i:03d}.csv"), ["t", "X", "jump"], rows)
    print(f"paths={reps}")
    return 0


def cmd_verify(cfg, out_dir, seed, threads, base_dir):
    p = build_problem(cfg, base_dir, seed)
    hs = cfg.get_floats("verify.hs", default=[1e-2, 5e-3, 2.5e-3])
    T = cfg.get_float("verify.T", p.T)
    c_T = cfg.get_float("verify.coupling_T", 20.0)
    c_reps = cfg.get_int("verify.coupling_replicates", 50)
    c_off = cfg.get_float("verify.coupling_offset", 1.0)
    cfg.finish()

    hs = sorted(hs, reverse=True)
    h_min = hs[-1]
    noise_fine = sample_path(p.levy, T, h_min, derive_seed(seed, 0))
    errs = []
    for h in hs:
        factor = round(h / h_min)
        if abs(factor * h_min - h) > 1e-12:
            raise ConfigError("verify.hs must be integer multiples of the finest step")
        noise = noise_fine.coarsen(factor) if factor > 1 else noise_fine
        phi = build_phi(cfg, p.mu.alpha, h, seed)
        p_h = SddeProblem(mu=p.mu, F=p.F, levy=p.levy, phi=phi, T=T, h=h)
        fs = compute_r(p.mu, T=T, h=h)
        a = solve_euler(p_h, noise=noise)
        b = solve_voc(p_h, noise, fs)
        errs.append(float(np.max(np.abs(a.values - b.values))))
    rows = []
    for i, (h, e) in enumerate(zip(hs, errs)):
        ratio = errs[i - 1] / e if i > 0 and e > 0 else float("nan")
        rows.append((h, e, ratio))
    write_csv(os.path.join(out_dir, "refinement.csv"), ["h", "sup_err", "ratio"], rows)

    phi1 = build_phi(cfg, p.mu.alpha, p.h, seed)
    phi2 = Segment(phi1.alpha, phi1.values + c_off, phi1.jumps)
    pc = SddeProblem(mu=p.mu, F=p.F, levy=p.levy, phi=phi1, T=c_T, h=p.h)
    n = pc.n_alpha
    d0s, dTs = [], []
    for i in range(c_reps):
        a, b = coupled_pair(pc, phi1, phi2, derive_seed(seed, 100 + i))
        diff = np.abs(a.values - b.values)
        d0s.append(float(np.max(diff[: n + 1]) ** 2))
        dTs.append(float(np.max(diff[-n - 1 :]) ** 2))
    r0, rT = float(np.mean(d0s)), float(np.mean(dTs))
    write_csv(
        os.path.join(out_dir, "coupling.csv"),
        ["name", "value"],
        [("mean_sup_sq_t0", r0), ("mean_sup_sq_T", rT), ("ratio", rT / r0 if r0 else float("nan"))],
    )
    print(f"refinement_ratios={[round(r[2], 3) for r in rows[1:]]} coupling_ratio={rT / r0 if r0 else float('nan')!r}")
    return 0


def _kb_from_config(cfg, p, seed, threads):
    burn_raw = cfg.get_str("kb.burn_in", "auto")
    if burn_raw == "auto":
        val = v0(p.mu, tol=1e-6)
        if val >= 0 or not math.isfinite(val):
            raise ConfigError("kb.burn_in=auto needs a stable drift; give a number")
        burn_in = 20.0 / (-val)
    else:
        burn_in = float(burn_raw)
    horizon = cfg.get_float("kb.horizon", required=True)
    spacing = cfg.get_float("kb.spacing", p.mu.alpha)
    reps = cfg.get_int("kb.replicates", 1)
    return krylov_bogoliubov(
        p, burn_in, horizon, spacing, reps, seed, workers=threads
    )


def cmd_stationary(cfg, out_dir, seed, threads, base_dir):
    p = build_problem(cfg, base_dir, seed)
    bins = cfg.get_int("hist.bins", 50)
    checkpoints = cfg.get_floats("tight.checkpoints")
    K_grid = cfg.get_floats("tight.K")
    t_reps = cfg.get_int("tight.replicates", 200)
    measure = _kb_from_config(cfg, p, seed, threads)
    cfg.finish()
    var, se, nb = measure.variance_with_se()
    write_csv(
        os.path.join(out_dir, "kb_summary.csv"),
        ["name", "value"],
        [
            ("samples", measure.size),
            ("variance", var),
            ("se", se),
            ("batches", nb),
            ("warnings", ";".join(measure.warnings) or "none"),
        ],
    )
    counts, edges = np.histogram(measure.samples, bins=bins)
    write_csv(
        os.path.join(out_dir, "marginal_hist.csv"),
        ["bin_lo", "bin_hi", "count"],
        zip(edges[:-1], edges[1:], counts),
    )
    if checkpoints and K_grid:
        rep = tightness_diagnostic(p, checkpoints, K_grid, t_reps, derive_seed(seed, 7), threads)
        rows = []
        for i, c in enumerate(rep.checkpoints):
            for j, K in enumerate(rep.K_grid):
                rows.append((c, K, rep.marginal[i, j], rep.segment_sup[i, j]))
        write_csv(
            os.path.join(out_dir, "tightness.csv"),
            ["t", "K", "marginal_exceed", "segment_exceed"],
            rows,
        )
        write_csv(
            os.path.join(out_dir, "tightness_summary.csv"),
            ["name", "value"],
            [("growth_flag", int(rep.growth_flag)), ("monotone_in_K", int(rep.monotone_in_K))],
        )
    print(f"variance={var!r} se={se!r} warnings={len(measure.warnings)}")
    return 0


def _resolve_ef2(cfg, p):
    ef2 = cfg.get_float("covariance.ef2")
    if isinstance(p.F, ConstantFunctional):
        return p.F.value**2, "constant-F"
    if ef2 is None:
        raise ConfigError(
            "covariance.ef2 is required unless the functional is constant "
            "(the variance identity needs E[F(X)(0)]^2)"
        )
    return ef2, "user"


def cmd_covariance(cfg, out_dir, seed, threads, base_dir):
    p = build_problem(cfg, base_dir, seed)
    lags = cfg.get_floats("covariance.lags", default=[0.0])
    recenter = cfg.get_bool("covariance.recenter", False)
    ef2, ef2_source = _resolve_ef2(cfg, p)
    fs = compute_r(p.mu, T=cfg.get_float("covariance.fs_T"), h=p.h)
    measure = _kb_from_config(cfg, p, seed, threads)
    cfg.finish()
    var0 = analytic_variance(fs, p.levy, ef2, recenter=recenter)
    rows = []
    spacing = measure.spacing
    lag_idx = []
    for lag in lags:
        idx = round(lag / spacing)
        if abs(idx * spacing - lag) > 1e-9 * max(1.0, lag):
            raise ConfigError(f"lag {lag} is not a multiple of the sample spacing {spacing}")
        lag_idx.append(idx)
    emp = estimate_autocovariance(measure.series, lag_idx)
    for lag, (idx, est, se) in zip(lags, emp):
        rows.append((lag, analytic_covariance(fs, var0, lag), est, se))
    write_csv(
        os.path.join(out_dir, "covariance.csv"),
        ["lag", "analytic", "empirical", "se"],
        rows,
    )
    write_csv(
        os.path.join(out_dir, "summary.csv"),
        ["name", "value"],
        [("var0_analytic", var0), ("ef2", ef2), ("ef2_source", ef2_source)],
    )
    print(f"var0={var0!r}")
    return 0


def cmd_spectrum(cfg, out_dir, seed, threads, base_dir):
    p = build_problem(cfg, base_dir, seed)
    segments = cfg.get_int("spectrum.segments", 16)
    xi_max = cfg.get_float("spectrum.xi_max", 2.0 * math.pi)
    recenter = cfg.get_bool("covariance.recenter", False)
    ef2, ef2_source = _resolve_ef2(cfg, p)
    fs = compute_r(p.mu, T=cfg.get_float("covariance.fs_T"), h=p.h)
    measure = _kb_from_config(cfg, p, seed, threads)
    cfg.finish()
    if len(measure.series) != 1:
        raise ConfigError("spectrum needs kb.replicates=1 (one long stationary run)")
    var0 = analytic_variance(fs, p.levy, ef2, recenter=recenter)
    xi, S_hat = periodogram(measure.series[0], measure.spacing, segments)
    keep = xi <= xi_max
    S_true = analytic_spectral_density(fs, p.mu, var0, xi[keep])
    write_csv(
        os.path.join(out_dir, "spectrum.csv"),
        ["xi", "analytic", "periodogram"],
        zip(xi[keep], S_true, S_hat[keep]),
    )
    print(f"frequencies={int(keep.sum())}")
    return 0


def cmd_powerlaw(cfg, out_dir, seed, threads, base_dir):
    p = build_problem(cfg, base_dir, seed)
    window_hi = cfg.get_float("powerlaw.window_hi", required=True)
    measure = _kb_from_config(cfg, p, seed, threads)
    cfg.finish()
    w0 = p.mu.single_atom_at_zero()
    if w0 is None or w0 >= 0:
        raise ConfigError("powerlaw needs drift mu = -a*delta_0 with a > 0")
    if p.levy.jump is None:
        raise ConfigError("powerlaw needs a jump family")
    fit = cp_power_law_fit(measure.samples, window_hi)
    predicted = cp_cdf_exponent(-w0, p.levy.jump.intensity)
    write_csv(
        os.path.join(out_dir, "powerlaw.csv"),
        ["name", "value"],
        [
            ("cdf_exponent", fit.exponent),
            ("se", fit.se),
            ("n_window", fit.n_window),
            ("window_hi", fit.window_hi),
            ("predicted", predicted),
            ("rel_err", abs(fit.exponent - predicted) / predicted),
        ],
    )
    print(f"exponent={fit.exponent!r} predicted={predicted!r}")
    return 0


def cmd_nonunique(cfg, out_dir, seed, threads, base_dir):
    sigmas = cfg.get_floats("nonunique.sigmas", required=True)
    a = cfg.get_float("nonunique.a", 1.0)
    alpha = cfg.get_float("nonunique.alpha", required=True)
    T = cfg.get_float("nonunique.T", required=True)
    h = cfg.get_float("nonunique.h", required=True)
    reps = cfg.get_int("nonunique.replicates", required=True)
    cfg.finish()
    rep = nonuniqueness_demo(sigmas, a, alpha, T, h, reps, seed, workers=threads)
    write_csv(
        os.path.join(out_dir, "nonunique.csv"),
        ["sigma", "sup_f_dev", "var_hat", "var_se", "var_predicted"],
        [(r.sigma, r.sup_f_dev, r.var_hat, r.var_se, r.var_predicted) for r in rep.rows],
    )
    print(
        "variances="
        + ",".join(repr(round(r.var_hat, 6)) for r in rep.rows)
    )
    return 0


def cmd_feller_demo(cfg, out_dir, seed, threads, base_dir):
    mu = build_mu(cfg, base_dir)
    levy = build_levy(cfg)
    F = build_functional(cfg, mu.alpha, base_dir)
    beta = cfg.get_float("feller.beta", required=True)
    n = cfg.get_int("feller.n", required=True)
    h = cfg.get_float("feller.h", required=True)
    cfg.finish()
    rep = feller_counterexample(mu, F, levy, beta, n, h, seed)
    write_csv(
        os.path.join(out_dir, "feller.csv"),
        [
            "n",
            "d_upper_initial",
            "d_lower_initial",
            "gap_before_alpha",
            "gap_at_alpha",
            "gap_after_alpha",
        ],
        [
            (
                rep.n,
                rep.d_upper_initial,
                rep.d_lower_initial,
                rep.gap_before_alpha,
                rep.gap_at_alpha,
                rep.gap_after_alpha,
            )
        ],
    )
    print(f"d_upper={rep.d_upper_initial!r} gap_before_alpha={rep.gap_before_alpha!r}")
    return 0


HANDLERS = {
    "stability": cmd_stability,
    "fundamental": cmd_fundamental,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "stationary": cmd_stationary,
    "covariance": cmd_covariance,
    "spectrum": cmd_spectrum,
    "powerlaw": cmd_powerlaw,
    "nonunique": cmd_nonunique,
    "feller-demo": cmd_feller_demo,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sddelab",
        description="Delay-equation simulation and stationary-law experiments",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="key=value config file")
    parser.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument(
        "--threads", type=int, default=None, help="replicate-farm parallelism (default: cores)"
    )
    args = parser.parse_args(argv)
    try:
        cfg = ConfigView.load(args.config)
        recorded = cfg.get_str("command")
        if recorded is not None and recorded != args.command:
            raise ConfigError(
                f"config records command={recorded}, but {args.command} was invoked"
            )
        seed = args.seed
        if seed is None:
            seed = cfg.get_int("seed", 1234)
        threads = args.threads
        if threads is None:
            threads = cfg.get_int("threads", os.cpu_count() or 1)
        os.makedirs(args.out, exist_ok=True)
        base_dir = os.path.dirname(os.path.abspath(args.config))
        status = HANDLERS[args.command](cfg, args.out, seed, threads, base_dir)
        write_manifest(args.out, args.command, cfg, seed, threads)
        return status
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericsError, SpanError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
