import math

import numpy as np
import pytest

from sddelab import DelayMeasure, Segment, apply, compute_r, deterministic_solution
from sddelab.errors import DivergenceError, SpanError
from sddelab.fundamental import default_horizon
from sddelab.paths import constant_segment, segment_from_function

from oracles import steps_r, steps_x_const_history

OU = DelayMeasure(1.0, atoms=((0.0, -1.0),))
POINT = DelayMeasure(1.0, atoms=((-1.0, -1.0),))


class TestComputeR:
    def test_exponential_decay_case(self):
        fs = compute_r(OU, T=10.0, h=1e-3)
        err = np.max(np.abs(fs.r - np.exp(-fs.grid())))
        assert err < 1e-6
        assert fs.r[0] == 1.0

    def test_point_delay_matches_step_construction(self):
        fs = compute_r(POINT, T=3.0, h=1e-3)
        exact = np.array([steps_r(-1.0, 1.0, t) for t in fs.grid()])
        assert np.max(np.abs(fs.r - exact)) < 1e-10
        assert fs.r_at(1.5) == pytest.approx(0.5, abs=1e-10)

    def test_zero_measure_constant_solution(self):
        mu = DelayMeasure(1.0)
        fs = compute_r(mu, T=5.0, h=0.1)
        assert np.all(fs.r == 1.0)
        assert np.all(fs.rdot == 0.0)

    def test_refinement_is_second_order(self):
        errs = []
        for h in (1e-2, 5e-3, 2.5e-3):
            fs = compute_r(OU, T=5.0, h=h)
            errs.append(np.max(np.abs(fs.r - np.exp(-fs.grid()))))
        r1, r2 = errs[0] / errs[1], errs[1] / errs[2]
        assert 2.5 < r1 < 6.0 and 2.5 < r2 < 6.0

    def test_point_delay_refinement_bounded_by_h_squared(self):
        # on a longer horizon the solution has higher-degree pieces
        errs = []
        for h in (1e-2, 5e-3, 2.5e-3):
            fs = compute_r(POINT, T=5.0, h=h)
            exact = np.array([steps_r(-1.0, 1.0, t) for t in fs.grid()])
            errs.append(np.max(np.abs(fs.r - exact)))
        assert errs[2] < errs[0]
        assert errs[2] < 4.0 * 2.5e-3**2

    def test_rdot_is_the_drift_of_r(self):
        fs = compute_r(POINT, T=3.0, h=0.01)
        n = round(1.0 / 0.01)
        padded = np.concatenate([np.zeros(n), fs.r])
        for k in (0, 5, n, 2 * n, len(fs.r) - 1):
            seg = Segment(1.0, padded[k : k + n + 1])
            assert fs.rdot[k] == pytest.approx(apply(POINT, seg), abs=1e-12)

    def test_decay_fit_corridor(self):
        from sddelab import v0

        for mu in (OU, POINT, DelayMeasure(1.0, atoms=((-1.0, -1.5),))):
            fs = compute_r(mu, h=5e-3)
            v = v0(mu)
            assert 0.0 < fs.decay_beta <= -v + 0.1
            # the fitted envelope really dominates on the grid
            mask = np.abs(fs.r) > 0
            assert np.all(
                np.abs(fs.r[mask]) <= fs.decay_c * np.exp(-fs.decay_beta * fs.grid()[mask]) * (1 + 1e-9)
            )

    def test_step_too_large_rejected(self):
        with pytest.raises(SpanError):
            compute_r(OU, T=1.0, h=0.2)

    def test_unstable_growth_flagged_and_truncated(self):
        mu = DelayMeasure(1.0, atoms=((0.0, 2.0),))
        fs = compute_r(mu, T=30.0, h=0.05)
        assert fs.unstable_growth
        assert fs.T < 30.0
        assert np.all(np.isfinite(fs.r))

    def test_default_horizon_covers_slow_decay(self):
        mu = DelayMeasure(1.0, atoms=((-1.0, -1.5),))
        T = default_horizon(mu)
        assert T > 1000.0  # 40 / |v0| with v0 ~ -0.033


class TestNorms:
    def test_l2_and_lag_products(self):
        fs = compute_r(OU, T=20.0, h=1e-3)
        assert fs.l2_norm_sq() == pytest.approx(0.5, abs=1e-5)
        assert fs.conv_rr(1.0) == pytest.approx(math.exp(-1.0) / 2.0, abs=1e-5)
        assert fs.conv_rr(0.0) == fs.l2_norm_sq()
        assert fs.l2_norm_sq_dot() == pytest.approx(0.5, abs=1e-3)

    def test_divergence_without_decay(self):
        fs = compute_r(DelayMeasure(1.0), T=5.0, h=0.1)
        with pytest.raises(DivergenceError):
            fs.l2_norm_sq()
        fs2 = compute_r(DelayMeasure(1.0, atoms=((0.0, 0.5),)), T=10.0, h=0.1)
        with pytest.raises(DivergenceError):
            fs2.conv_rr(0.5)

    def test_lag_validation(self):
        fs = compute_r(OU, T=10.0, h=0.01)
        with pytest.raises(ValueError):
            fs.conv_rr(-1.0)
        with pytest.raises(ValueError):
            fs.conv_rr(8.0)

    def test_csv_export(self, tmp_path):
        fs = compute_r(OU, T=1.0, h=0.1)
        out = tmp_path / "r.csv"
        fs.to_csv(out)
        lines = out.read_text().splitlines()
        assert lines[0] == "t,r,rdot"
        assert len(lines) == len(fs.r) + 1
        first = lines[1].split(",")
        assert float(first[0]) == 0.0 and float(first[1]) == 1.0


class TestDeterministicSolution:
    def test_instantaneous_decay(self):
        mu = DelayMeasure(1.0, atoms=((0.0, -1.3),))
        phi = constant_segment(1.0, 2.0, 1e-3)
        path = deterministic_solution(mu, phi, 3.0, 1e-3)
        t = path.times()
        body = t >= 0
        assert np.max(np.abs(path.values[body] - 2.0 * np.exp(-1.3 * t[body]))) < 1e-6

    def test_zero_measure_freezes_endpoint(self):
        mu = DelayMeasure(1.0)
        phi = segment_from_function(1.0, lambda u: math.sin(3 * u) + 5.0, 0.05)
        path = deterministic_solution(mu, phi, 2.0, 0.05)
        body = path.times() >= 0
        assert np.max(np.abs(path.values[body] - phi.end_value)) < 1e-12

    def test_delayed_feedback_linear_start(self):
        b = -0.7
        mu = DelayMeasure(1.0, atoms=((-1.0, b),))
        phi = constant_segment(1.0, 1.0, 1e-3)
        path = deterministic_solution(mu, phi, 2.0, 1e-3)
        t = path.times()
        win = (t >= 0) & (t <= 1.0)
        exact = np.array([steps_x_const_history(b, 1.0, x) for x in t[win]])
        assert np.max(np.abs(path.values[win] - exact)) < 1e-10

    def test_density_drift_self_check_passes(self):
        s = np.linspace(-1.0, 0.0, 96)
        mu = DelayMeasure(1.0, atoms=((-0.5, 0.3),), density=-np.exp(s))
        phi = segment_from_function(1.0, lambda u: math.cos(2.0 * u), 0.01)
        path = deterministic_solution(mu, phi, 4.0, 0.01)  # raises on disagreement
        assert np.all(np.isfinite(path.values))

    def test_span_mismatch_rejected(self):
        with pytest.raises(SpanError):
            deterministic_solution(OU, constant_segment(2.0, 1.0, 0.01), 1.0, 0.01)
