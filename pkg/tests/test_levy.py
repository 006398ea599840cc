import math

import numpy as np
import pytest

from sddelab import (
    ConstantFunctional,
    ConstantJump,
    DelayMeasure,
    ExponentialJump,
    JumpSpec,
    LevyTriplet,
    LogHeavyJump,
    ParetoJump,
    RunningSupFunctional,
    TwoSidedExponentialJump,
    check_assumptions,
    derive_seed,
    sample_path,
)
from sddelab.errors import ConfigError

import oracles


def unit_increments(inc, upto=None):
    """Aggregate a sampled realization into unit-time increments."""
    per = round(1.0 / inc.h)
    n_units = inc.n_steps // per
    if upto:
        n_units = min(n_units, upto)
    out = inc.cont[: n_units * per].reshape(n_units, per).sum(axis=1)
    ks = np.floor(inc.jump_times).astype(int)
    for k, s in zip(ks, inc.jump_sizes):
        if k < n_units:
            out[k] += s
    return out


class TestSampling:
    def test_gaussian_steps_mean_and_variance(self):
        triplet = LevyTriplet.wiener(1.0)
        inc = sample_path(triplet, 1000.0, 1e-3, seed=101)
        n = inc.n_steps
        assert n == 10**6
        assert abs(inc.cont.mean()) < 4.0 * math.sqrt(1e-3 / n)
        assert inc.cont.var() == pytest.approx(1e-3, rel=0.01)
        assert len(inc.jump_times) == 0

    def test_jump_count_near_intensity(self):
        jl = JumpSpec(2.0, ConstantJump(1.0))
        triplet = LevyTriplet(jump=jl)
        inc = sample_path(triplet, 10.0, 0.01, seed=5)
        assert abs(len(inc.jump_times) - 20.0) <= 4.0 * math.sqrt(20.0)
        counts = [
            len(sample_path(triplet, 10.0, 0.01, seed=s).jump_times) for s in range(200)
        ]
        assert np.mean(counts) == pytest.approx(20.0, abs=4.0 * math.sqrt(20.0 / 200))

    def test_unit_increment_variance_matches_rate(self):
        jl = JumpSpec(2.0, ConstantJump(1.0))
        triplet = LevyTriplet(b=0.0, sigma2=1.0, jump=jl)
        assert triplet.second_moment_rate() == pytest.approx(3.0)
        inc = sample_path(triplet, 2000.0, 0.02, seed=42)
        units = unit_increments(inc)
        se = 3.0 * math.sqrt(2.0 / len(units))  # chi-square-ish spread
        assert units.var() == pytest.approx(3.0, abs=3.0 * se)
        assert units.mean() == pytest.approx(
            triplet.mean_rate(), abs=3.0 * math.sqrt(3.0 / len(units))
        )

    def test_reproducible_and_jump_times_ordered(self):
        jl = JumpSpec(5.0, ExponentialJump(0.5))
        triplet = LevyTriplet(b=0.3, sigma2=0.2, jump=jl)
        a = sample_path(triplet, 50.0, 0.01, seed=7)
        b = sample_path(triplet, 50.0, 0.01, seed=7)
        assert np.array_equal(a.cont, b.cont)
        assert np.array_equal(a.jump_times, b.jump_times)
        assert np.array_equal(a.jump_sizes, b.jump_sizes)
        assert np.all(np.diff(a.jump_times) > 0)
        assert a.jump_times[0] > 0 and a.jump_times[-1] < 50.0
        c = sample_path(triplet, 50.0, 0.01, seed=8)
        assert not np.array_equal(a.cont, c.cont)

    def test_coarsen_preserves_total(self):
        triplet = LevyTriplet.wiener(2.0, b=0.1)
        inc = sample_path(triplet, 10.0, 0.0025, seed=3)
        c = inc.coarsen(4)
        assert c.h == pytest.approx(0.01)
        assert c.total() == pytest.approx(inc.total(), rel=1e-12)
        assert np.allclose(c.cont, inc.cont.reshape(-1, 4).sum(axis=1))

    def test_step_of_jump_brackets(self):
        jl = JumpSpec(20.0, ConstantJump(1.0))
        inc = sample_path(LevyTriplet(jump=jl), 5.0, 0.05, seed=9)
        ks = inc.step_of_jump()
        lo = ks * 0.05
        hi = (ks + 1) * 0.05
        assert np.all(inc.jump_times > lo - 1e-12)
        assert np.all(inc.jump_times <= hi + 1e-12)

    def test_derived_seeds_are_stable_and_distinct(self):
        a = derive_seed(123, 0)
        assert a == derive_seed(123, 0)
        assert len({derive_seed(123, i) for i in range(100)}) == 100
        assert derive_seed(123, 1) != derive_seed(124, 1)


class TestMoments:
    def test_pure_wiener(self):
        t = LevyTriplet(b=0.0, sigma2=1.0)
        assert t.mean_rate() == 0.0
        assert t.second_moment_rate() == 1.0

    def test_large_constant_jump_exceeds_truncation(self):
        t = LevyTriplet(b=0.0, sigma2=0.0, jump=JumpSpec(1.0, ConstantJump(2.0)))
        assert t.mean_rate() == pytest.approx(2.0)
        assert t.second_moment_rate() == pytest.approx(4.0)

    def test_unit_constant_jump_is_compensated(self):
        # |J| = 1 sits inside the truncation ball, so b = 0 means EL(1) = 0
        t = LevyTriplet(b=0.0, sigma2=0.0, jump=JumpSpec(2.0, ConstantJump(1.0)))
        assert t.mean_rate() == pytest.approx(0.0)
        assert t.path_drift() == pytest.approx(-2.0)

    def test_heavy_tail_flags_infinity(self):
        t = LevyTriplet(jump=JumpSpec(1.0, ParetoJump(1.0, 1.5)))
        assert t.second_moment_rate() == math.inf

    def test_compound_poisson_constructor_zeroes_path_drift(self):
        for fam in (ConstantJump(1.0), ExponentialJump(0.5), ConstantJump(3.0)):
            t = LevyTriplet.compound_poisson(JumpSpec(2.0, fam))
            assert t.path_drift() == 0.0
            assert t.sigma2 == 0.0

    def test_family_moments_against_sampling(self):
        rng = np.random.default_rng(1)
        fams = [
            ExponentialJump(0.7),
            TwoSidedExponentialJump(0.5, 1.5, 0.3),
            ParetoJump(0.5, 4.0),
        ]
        for fam in fams:
            x = fam.sample(rng, 200_000)
            assert x.mean() == pytest.approx(fam.mean(), abs=4 * x.std() / math.sqrt(len(x)))
            m2 = (x**2).mean()
            assert m2 == pytest.approx(
                fam.second_moment(), abs=4 * (x**2).std() / math.sqrt(len(x))
            )
            inside = x[np.abs(x) <= 1.0]
            est = inside.sum() / len(x)
            assert est == pytest.approx(fam.mean_within_unit(), abs=0.01)


class TestLogMomentOracle:
    def test_all_families_agree_with_quadrature(self):
        cases = [
            (ConstantJump(1.0), None),
            (ExponentialJump(2.0), oracles.exponential_density(2.0)),
            (
                TwoSidedExponentialJump(1.0, 2.0, 0.5),
                oracles.two_sided_abs_density(1.0, 2.0, 0.5),
            ),
            (ParetoJump(1.0, 1.5), oracles.pareto_density(1.0, 1.5)),
            (LogHeavyJump(), oracles.log_heavy_density),
        ]
        for fam, density in cases:
            if density is None:
                verdict = oracles.log_moment_converges(None, 1.0, atom=fam.size)
            else:
                verdict = oracles.log_moment_converges(density, 1.0)
            assert verdict == fam.log_moment_finite, fam


class TestAssumptionGate:
    MU_STABLE = DelayMeasure(1.0, atoms=((0.0, -1.0),))
    F_BOUNDED = ConstantFunctional(1.0)

    def test_all_satisfied(self):
        rep = check_assumptions(
            self.MU_STABLE, LevyTriplet(jump=JumpSpec(1.0, ConstantJump(1.0))), self.F_BOUNDED
        )
        assert rep.all_satisfied
        assert rep.drift_stable and rep.log_moment_finite and rep.functional_bounded
        assert rep.v0_value == pytest.approx(-1.0, abs=1e-6)

    def test_exponential_jumps_pass(self):
        rep = check_assumptions(
            self.MU_STABLE, LevyTriplet(jump=JumpSpec(1.0, ExponentialJump(1.0))), self.F_BOUNDED
        )
        assert rep.log_moment_finite

    def test_log_heavy_fails_log_moment(self):
        rep = check_assumptions(
            self.MU_STABLE, LevyTriplet(jump=JumpSpec(1.0, LogHeavyJump())), self.F_BOUNDED
        )
        assert not rep.log_moment_finite
        assert not rep.all_satisfied
        assert any("log moment" in m for m in rep.messages)

    def test_unstable_drift_reported(self):
        mu = DelayMeasure(1.0, atoms=((0.0, 0.5),))
        rep = check_assumptions(mu, LevyTriplet.wiener(), self.F_BOUNDED)
        assert rep.drift_stable is False

    def test_unbounded_functional_reported(self):
        rep = check_assumptions(self.MU_STABLE, LevyTriplet.wiener(), RunningSupFunctional(1.0))
        assert rep.functional_bounded is False
        assert not rep.all_satisfied


class TestValidation:
    def test_bad_parameters(self):
        with pytest.raises(ConfigError):
            JumpSpec(-1.0, ConstantJump(1.0))
        with pytest.raises(ConfigError):
            ExponentialJump(-2.0)
        with pytest.raises(ConfigError):
            LevyTriplet(sigma2=-1.0)
        with pytest.raises(ConfigError):
            sample_path(LevyTriplet.wiener(), 1.0, 0.3, seed=1)  # h does not divide T
