import math

import numpy as np
import pytest

from sddelab import (
    ConstantFunctional,
    ConstantJump,
    DelayMeasure,
    JumpSpec,
    LevyTriplet,
    LogHeavyJump,
    ParetoJump,
    SddeProblem,
    compute_r,
)
from sddelab.errors import ConfigError, DivergenceError
from sddelab.paths import constant_segment, zero_segment
from sddelab.stationary import (
    analytic_covariance,
    analytic_spectral_density,
    analytic_variance,
    cp_cdf_exponent,
    cp_density_exponent,
    cp_power_law_fit,
    estimate_autocovariance,
    invert_spectral_density,
    krylov_bogoliubov,
    nonuniqueness_demo,
    periodogram,
    tightness_diagnostic,
    variance_with_se,
)

OU = DelayMeasure(1.0, atoms=((0.0, -1.0),))
WIENER = LevyTriplet.wiener(1.0)
F1 = ConstantFunctional(1.0)


def ou_problem(h=0.01):
    return SddeProblem(mu=OU, F=F1, levy=WIENER, phi=zero_segment(1.0, h), T=1.0, h=h)


class TestOccupationAverages:
    def test_ou_marginal_variance(self):
        m = krylov_bogoliubov(ou_problem(), 20.0, 2000.0, 0.5, replicates=2, seed=1)
        var, se, nb = m.variance_with_se()
        assert abs(var - 0.5) <= 3.0 * se
        assert m.warnings == ()
        assert nb >= 30

    def test_unstable_drift_warns_and_drifts(self):
        mu = DelayMeasure(1.0, atoms=((0.0, 0.25),))
        p = SddeProblem(mu=mu, F=F1, levy=WIENER, phi=zero_segment(1.0, 0.01), T=1.0, h=0.01)
        m = krylov_bogoliubov(p, 1.0, 30.0, 0.5, replicates=4, seed=2)
        assert any("not stable" in w for w in m.warnings)
        # running quantiles drift: late absolute values dominate early ones
        for s in m.series:
            early = np.quantile(np.abs(s[: len(s) // 2]), 0.9)
            late = np.quantile(np.abs(s[len(s) // 2 :]), 0.9)
            assert late > early

    def test_invariant_under_doubling_burn_in(self):
        m1 = krylov_bogoliubov(ou_problem(), 10.0, 1000.0, 0.5, replicates=2, seed=3)
        m2 = krylov_bogoliubov(ou_problem(), 20.0, 1000.0, 0.5, replicates=2, seed=3)
        v1, s1, _ = m1.variance_with_se()
        v2, s2, _ = m2.variance_with_se()
        assert abs(v1 - v2) <= 3.0 * math.hypot(s1, s2)

    def test_invariant_under_restart_from_sampled_segment(self):
        m1 = krylov_bogoliubov(
            ou_problem(), 20.0, 1000.0, 0.5, replicates=1, seed=4, collect_segments=1
        )
        assert len(m1.segments) == 1
        m2 = krylov_bogoliubov(
            ou_problem(), 0.0, 1000.0, 0.5, replicates=1, seed=5, initial=m1.segments[0]
        )
        v1, s1, _ = m1.variance_with_se()
        v2, s2, _ = m2.variance_with_se()
        assert abs(v1 - v2) <= 3.0 * math.hypot(s1, s2)

    def test_parallel_farm_bitwise_deterministic(self):
        a = krylov_bogoliubov(ou_problem(), 5.0, 100.0, 0.5, replicates=4, seed=6, workers=1)
        b = krylov_bogoliubov(ou_problem(), 5.0, 100.0, 0.5, replicates=4, seed=6, workers=3)
        for x, y in zip(a.series, b.series):
            assert np.array_equal(x, y)

    def test_spacing_too_fine_rejected(self):
        with pytest.raises(ConfigError):
            krylov_bogoliubov(ou_problem(), 1.0, 0.1, 1.0, replicates=1, seed=7)


class TestClosedForms:
    def test_variance_identity_ou(self):
        fs = compute_r(OU, T=20.0, h=1e-3)
        assert analytic_variance(fs, WIENER, 1.0) == pytest.approx(0.5, abs=1e-5)
        assert analytic_variance(fs, WIENER, 0.0) == 0.0

    def test_variance_requires_centered_driver(self):
        fs = compute_r(OU, T=20.0, h=1e-3)
        shifted = LevyTriplet(b=0.4, sigma2=1.0)
        with pytest.raises(ConfigError):
            analytic_variance(fs, shifted, 1.0)
        v = analytic_variance(fs, shifted, 1.0, recenter=True)
        assert v == pytest.approx(0.5, abs=1e-5)

    def test_variance_rejects_infinite_second_moment(self):
        fs = compute_r(OU, T=20.0, h=1e-3)
        heavy = LevyTriplet(jump=JumpSpec(1.0, ParetoJump(1.0, 1.5)))
        with pytest.raises(DivergenceError):
            analytic_variance(fs, heavy, 1.0, recenter=True)

    def test_covariance_curve_ou(self):
        fs = compute_r(OU, T=20.0, h=1e-3)
        var0 = analytic_variance(fs, WIENER, 1.0)
        assert analytic_covariance(fs, var0, 0.0) == var0  # exact by construction
        assert analytic_covariance(fs, var0, 1.0) == pytest.approx(
            math.exp(-1.0) / 2.0, abs=1e-4
        )

    def test_spectral_density_ou(self):
        fs = compute_r(OU, T=20.0, h=1e-3)
        assert analytic_spectral_density(fs, OU, 0.5, 0.0) == pytest.approx(1.0, abs=1e-4)
        # quadratic roll-off: S(xi) xi^2 -> EX2 / l2
        hi = analytic_spectral_density(fs, OU, 0.5, 1e3)
        assert hi * 1e6 == pytest.approx(0.5 / fs.l2_norm_sq(), rel=1e-4)

    def test_spectral_singularity_detected(self):
        mu = DelayMeasure(1.0, atoms=((-1.0, -math.pi / 2.0),))
        fs = compute_r(mu, T=20.0, h=1e-3)
        with pytest.raises(DivergenceError):
            analytic_spectral_density(fs, mu, 1.0, math.pi / 2.0)

    def test_duality_ou(self):
        fs = compute_r(OU, T=30.0, h=1e-3)
        var0 = analytic_variance(fs, WIENER, 1.0)
        lags = [0.0, 0.5, 1.0, 2.0, 3.0]
        rec = invert_spectral_density(fs, OU, var0, lags)
        for lag, cr in zip(lags, rec):
            assert abs(cr - analytic_covariance(fs, var0, lag)) <= 0.02 * var0


class TestEstimators:
    def test_iid_autocovariance(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(30_000)
        out = estimate_autocovariance([x], [0, 3, 10])
        assert abs(out[0][1] - 1.0) <= 3 * out[0][2]
        for lag, est, se in out[1:]:
            assert abs(est) <= 3 * se

    def test_autocovariance_needs_enough_samples(self):
        with pytest.raises(ConfigError):
            estimate_autocovariance([np.zeros(50)], [40])

    def test_variance_with_se_batches(self):
        rng = np.random.default_rng(1)
        series = [rng.standard_normal(3000) for _ in range(3)]
        var, se, nb = variance_with_se(series)
        assert abs(var - 1.0) <= 3 * se
        assert nb >= 30

    def test_periodogram_finds_a_cosine(self):
        h = 0.05
        t = h * np.arange(2**14)
        freq = 2.0
        x = np.cos(freq * t)
        xi, S = periodogram(x, h, segments=8)
        assert xi[np.argmax(S)] == pytest.approx(freq, rel=0.02)

    def test_periodogram_white_noise_level(self):
        rng = np.random.default_rng(2)
        h = 0.1
        x = rng.standard_normal(2**15)
        xi, S = periodogram(x, h, segments=64)
        # flat spectrum at variance * h under this normalization
        assert S.mean() == pytest.approx(h, rel=0.05)

    def test_periodogram_matches_shape_for_a_long_run(self):
        # mildly damped delayed feedback; 10% relative L1 accuracy on [0, 2pi]
        mu = DelayMeasure(1.0, atoms=((-1.0, -0.8),))
        fs = compute_r(mu, h=2e-3)
        var0 = analytic_variance(fs, WIENER, 1.0)
        h = 5e-3
        p = SddeProblem(mu=mu, F=F1, levy=WIENER, phi=zero_segment(1.0, h), T=1.0, h=h)
        m = krylov_bogoliubov(p, 100.0, 40000.0, 0.1, replicates=1, seed=11)
        xi, S_hat = periodogram(m.series[0], m.spacing, segments=128)
        keep = xi <= 2 * math.pi
        S_true = analytic_spectral_density(fs, mu, var0, xi[keep])
        l1 = np.trapezoid(np.abs(S_hat[keep] - S_true), xi[keep]) / np.trapezoid(
            S_true, xi[keep]
        )
        assert l1 <= 0.10


class TestPowerLaw:
    def test_predicted_exponents(self):
        assert cp_cdf_exponent(1.0, 2.0) == 2.0
        assert cp_density_exponent(1.0, 2.0) == 1.0
        # lam = a: flat density near zero, unit CDF exponent
        assert cp_cdf_exponent(1.5, 1.5) == 1.0
        assert cp_density_exponent(1.5, 1.5) == 0.0

    def _run(self, a, lam, J, horizon, seed, h=0.05):
        mu = DelayMeasure(1.0, atoms=((0.0, -a),))
        levy = LevyTriplet.compound_poisson(JumpSpec(lam, ConstantJump(J)))
        p = SddeProblem(mu=mu, F=F1, levy=levy, phi=zero_segment(1.0, h), T=1.0, h=h)
        return krylov_bogoliubov(p, 20.0, horizon, 1.0, replicates=1, seed=seed)

    def test_fitted_exponent_near_prediction(self):
        m = self._run(1.0, 2.0, 1.0, 3e4, seed=21)
        fit = cp_power_law_fit(m.samples, 0.9)
        assert fit.exponent == pytest.approx(2.0, rel=0.1)

    def test_exponent_invariant_under_joint_rescaling(self):
        m1 = self._run(1.0, 2.0, 1.0, 2e4, seed=22)
        m2 = self._run(1.0, 2.0, 2.0, 2e4, seed=22)
        f1 = cp_power_law_fit(m1.samples, 0.9)
        f2 = cp_power_law_fit(m2.samples, 1.8)
        assert f1.exponent == pytest.approx(f2.exponent, rel=0.08)

    def test_too_few_samples_rejected(self):
        with pytest.raises(ConfigError):
            cp_power_law_fit(np.linspace(0.01, 0.5, 50), 0.9)


class TestTightnessDiagnostic:
    def test_stable_case_flat_and_tiny_tails(self):
        p = ou_problem(h=0.02)
        rep = tightness_diagnostic(p, [10.0, 20.0, 40.0], [1.0, 3.0, 10.0], 500, seed=31)
        assert not rep.growth_flag
        assert rep.monotone_in_K
        assert np.all(rep.marginal[:, -1] < 1e-3)  # P(|N(0, 0.5)| > 10) ~ 0

    def test_log_moment_violation_grows(self):
        levy = LevyTriplet(jump=JumpSpec(0.5, LogHeavyJump()))
        p = SddeProblem(mu=OU, F=F1, levy=levy, phi=zero_segment(1.0, 0.02), T=1.0, h=0.02)
        rep = tightness_diagnostic(
            p, [50.0, 100.0, 150.0, 200.0], [1.0, 10.0, 100.0], 200, seed=32
        )
        assert rep.growth_flag

    def test_unstable_drift_grows(self):
        mu = DelayMeasure(1.0, atoms=((0.0, 0.3),))
        p = SddeProblem(mu=mu, F=F1, levy=WIENER, phi=zero_segment(1.0, 0.02), T=1.0, h=0.02)
        rep = tightness_diagnostic(p, [5.0, 15.0, 30.0], [1.0, 5.0], 200, seed=33)
        assert rep.growth_flag


class TestMultipleRegimes:
    def test_distinct_levels_distinct_variances(self):
        rep = nonuniqueness_demo(
            [1.0, math.sqrt(2.0)], a=1.0, alpha=8.0, T=30.0, h=2e-3, replicates=16, seed=41
        )
        v1, v2 = rep.rows[0].var_hat, rep.rows[1].var_hat
        assert v1 < v2
        assert rep.rows[0].sup_f_dev < 0.2
        assert rep.variance_ratio(1, 0) == pytest.approx(2.0, rel=0.25)

    def test_sigma_outside_fixed_point_range_rejected(self):
        with pytest.raises(ConfigError):
            nonuniqueness_demo([2.5], 1.0, 8.0, 10.0, 2e-3, 2, seed=42)
