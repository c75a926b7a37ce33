import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flatopt.analysis import (
    BoundInputs,
    StabilityTrace,
    gv_drift_bound,
    gv_stability_series,
    gv_taylor_estimate,
    pac_bayes_bound,
    pac_bayes_terms,
    projection_multiplier,
    reuse_error_std,
    sharpness_estimate,
)
from flatopt.objectives import BasinLandscape, QuadraticObjective
from flatopt.optimizers import (
    BaseStepperConfig,
    ScheduleConfig,
    SharpnessConfig,
    decompose_gradient,
    init_state,
    sam_gradient,
    sam_step,
)
from flatopt.vectors import norm2


def mp_bound(n, delta, dim, w_sq, rho_prime_sq):
    """Arbitrary-precision re-evaluation of the bound formula."""
    import mpmath as mp

    with mp.workdps(60):
        n, delta, dim = mp.mpf(n), mp.mpf(delta), mp.mpf(dim)
        w_sq, rp_sq = mp.mpf(w_sq), mp.mpf(rho_prime_sq)
        inflation = (1 + mp.sqrt(mp.log(n) / dim)) ** 2
        total = (
            dim * mp.log(1 + (w_sq / rp_sq) * inflation)
            + 4 * mp.log(n / delta)
            + 8 * mp.log(6 * n + 3 * dim)
        )
        return float(mp.sqrt(total / (n - 1)))


def constant_bundle(dim=3, seed=0):
    rng = np.random.Generator(np.random.PCG64(seed))
    g = rng.standard_normal(dim)
    g_s = rng.standard_normal(dim)
    return decompose_gradient(g, g_s)


class TestStabilityTrace:
    def test_rejects_non_increasing_steps(self):
        trace = StabilityTrace()
        trace.append(0, constant_bundle())
        with pytest.raises(ValueError, match="strictly increasing"):
            trace.append(0, constant_bundle())

    def test_constant_trace_all_zero_series(self):
        trace = StabilityTrace()
        bundle = constant_bundle()
        for t in range(10):
            trace.append(t, bundle)
        series = gv_stability_series(trace, k=3)
        assert np.all(series.d_gs == 0.0)
        assert np.all(series.d_gh == 0.0)
        assert np.all(series.d_gv == 0.0)
        assert np.all(series.d_gv_norm == 0.0)

    def test_minimal_length_gives_one_entry(self):
        trace = StabilityTrace()
        for t in range(6):
            trace.append(t, constant_bundle(seed=t))
        series = gv_stability_series(trace, k=5)
        assert len(series.d_gs) == 1
        assert len(series.steps) == 1

    def test_too_short_rejected(self):
        trace = StabilityTrace()
        for t in range(5):
            trace.append(t, constant_bundle(seed=t))
        with pytest.raises(ValueError, match="too short"):
            gv_stability_series(trace, k=5)

    def test_raw_differences_match_direct_norms(self):
        trace = StabilityTrace()
        bundles = [constant_bundle(seed=t) for t in range(8)]
        for t, b in enumerate(bundles):
            trace.append(t, b)
        series = gv_stability_series(trace, k=2)
        for i in range(6):
            assert series.d_gv[i] == pytest.approx(
                norm2(bundles[i + 2].g_v - bundles[i].g_v), rel=1e-15
            )

    def test_quadratic_sam_run_gv_stabler_than_gs(self):
        # Reference experiment: 200 full-SAM steps on an anisotropic
        # quadratic; the orthogonal component must drift less (normalized)
        # than the perturbed gradient itself.
        obj = QuadraticObjective.diagonal([1.0, 25.0])
        cfg = SharpnessConfig(rho=0.3)
        sched = ScheduleConfig(peak_lr=0.02, total_steps=1000, decay="constant")
        base = BaseStepperConfig(kind="sgd", momentum=0.0)
        state = init_state(base, 2)
        w = np.array([2.0, 1.3])
        trace = StabilityTrace()
        for t in range(200):
            w, info = sam_step(obj, w, None, cfg, sched, base, state)
            trace.append(t, info.bundle)
        series = gv_stability_series(trace, k=5)
        assert series.d_gv_norm.mean() < series.d_gs_norm.mean()


class TestGvTaylorEstimate:
    def test_identity_hessian(self):
        g = np.array([3.0, 4.0])
        out = gv_taylor_estimate(np.eye(2), g, rho=1.0)
        np.testing.assert_allclose(out, 0.5 * g / 5.0, rtol=1e-15)

    def test_diag_hand_value(self):
        out = gv_taylor_estimate(np.diag([1.0, 4.0]), np.array([1.0, 0.0]), rho=2.0)
        np.testing.assert_allclose(out, [1.0, 0.0], rtol=1e-15)

    def test_accepts_objective_with_hessian_vector(self):
        obj = QuadraticObjective.diagonal([2.0, 3.0])
        g = np.array([1.0, 1.0])
        out = gv_taylor_estimate(obj, g, rho=1.0)
        np.testing.assert_allclose(out, 0.5 * np.array([2.0, 3.0]) / np.sqrt(2), rtol=1e-14)

    def test_zero_gradient_rejected(self):
        with pytest.raises(ValueError, match="zero gradient"):
            gv_taylor_estimate(np.eye(2), np.zeros(2), rho=1.0)

    def test_against_measured_gv_on_quadratics(self):
        # On quadratics the measured orthogonal component equals the
        # projection of rho * H * ghat orthogonal to g; the half-scaled
        # estimate differs from half the measurement only along g.
        rng = np.random.Generator(np.random.PCG64(31))
        for trial in range(50):
            dim = int(rng.integers(2, 6))
            obj = QuadraticObjective.random_psd(dim, seed=trial + 500)
            w = rng.standard_normal(dim)
            rho = float(rng.uniform(0.05, 1.0))
            state = init_state(BaseStepperConfig(), dim)
            bundle = sam_gradient(obj, w, None, SharpnessConfig(rho=rho), state)
            g = bundle.g
            ghat = g / norm2(g)
            curvature = rho * obj.hessian_vector(ghat)
            projected = curvature - np.dot(curvature, ghat) * ghat
            np.testing.assert_allclose(
                bundle.g_v, projected, rtol=1e-10, atol=1e-12 * norm2(curvature)
            )
            estimate = gv_taylor_estimate(obj, g, rho)
            residual = 2.0 * estimate - bundle.g_v
            ortho_residual = residual - np.dot(residual, ghat) * ghat
            assert norm2(ortho_residual) <= 1e-10 * max(norm2(residual), 1.0)


class TestGvDriftBound:
    def test_identical_inputs_zero(self):
        h = np.diag([1.0, 2.0])
        g = np.array([1.0, 1.0])
        assert gv_drift_bound(h, g, h, g, rho=0.5) == 0.0

    def test_linear_in_rho(self):
        h = np.diag([1.0, 2.0])
        g1 = np.array([1.0, 0.2])
        g2 = np.array([1.0, 0.3])
        b1 = gv_drift_bound(h, g1, h, g2, rho=0.5)
        b2 = gv_drift_bound(h, g1, h, g2, rho=1.5)
        assert b2 == pytest.approx(3.0 * b1, rel=1e-12)

    def test_hand_value(self):
        h = np.eye(2)
        g1 = np.array([1.0, 0.0])
        g2 = np.array([0.0, 1.0])
        out = gv_drift_bound(h, g1, h, g2, rho=2.0)
        assert out == pytest.approx(np.sqrt(2.0), rel=1e-12)

    def test_zero_gradient_rejected(self):
        with pytest.raises(ValueError, match="zero gradient"):
            gv_drift_bound(np.eye(2), np.zeros(2), np.eye(2), np.ones(2), 1.0)

    def test_correlates_with_measured_drift_on_quadratic(self):
        # Along a SAM run on a quadratic, the predicted per-pair drift and
        # the measured |g_v(t) - g_v(t+k)| must be positively rank-correlated.
        # Smooth convergence regime (lr well under 2 / lambda_max); the
        # approximation drops third-order terms, so an oscillating
        # trajectory would not be expected to correlate.
        obj = QuadraticObjective.diagonal([1.0, 16.0])
        cfg = SharpnessConfig(rho=0.2)
        sched = ScheduleConfig(peak_lr=0.005, total_steps=500, decay="constant")
        base = BaseStepperConfig(kind="sgd", momentum=0.0)
        state = init_state(base, 2)
        w = np.array([1.7, 0.9])
        gs, gvs = [], []
        for _ in range(120):
            w, info = sam_step(obj, w, None, cfg, sched, base, state)
            gs.append(info.bundle.g)
            gvs.append(info.bundle.g_v)
        k = 5
        predicted = np.array(
            [
                gv_drift_bound(obj.hessian, gs[t], obj.hessian, gs[t + k], cfg.rho)
                for t in range(len(gs) - k)
            ]
        )
        measured = np.array([norm2(gvs[t + k] - gvs[t]) for t in range(len(gs) - k)])
        pr = np.argsort(np.argsort(predicted)).astype(float)
        ms = np.argsort(np.argsort(measured)).astype(float)
        rank_corr = np.corrcoef(pr, ms)[0, 1]
        assert rank_corr > 0.95  # oracle run measured 0.998


class TestSharpnessEstimate:
    def test_isotropic_quadratic_hand_value(self):
        obj = QuadraticObjective(np.eye(2))
        out = sharpness_estimate(obj, np.array([1.0, 0.0]), rho=0.1)
        assert out == pytest.approx(0.105, rel=1e-12)

    def test_zero_at_stationary_point(self):
        obj = QuadraticObjective(np.eye(2), center=[1.0, 1.0])
        assert sharpness_estimate(obj, np.array([1.0, 1.0]), rho=0.1) == 0.0

    def test_quadratic_closed_form(self):
        # rho |g| + 0.5 rho^2 ghat^T H ghat, exactly on quadratics.
        rng = np.random.Generator(np.random.PCG64(9))
        for trial in range(50):
            dim = int(rng.integers(2, 6))
            obj = QuadraticObjective.random_psd(dim, seed=trial + 100)
            w = rng.standard_normal(dim)
            rho = float(rng.uniform(0.01, 1.0))
            _, g = obj.loss_and_grad(w)
            ghat = g / norm2(g)
            expected = rho * norm2(g) + 0.5 * rho**2 * float(
                ghat @ obj.hessian_vector(ghat)
            )
            assert sharpness_estimate(obj, w, rho=rho) == pytest.approx(
                expected, rel=1e-10
            )

    def test_sharp_basin_sharper_than_flat(self):
        basin = BasinLandscape.two_basin_default()
        offset = np.array([0.02, 0.0])
        rho = 0.02
        sharp = sharpness_estimate(basin, basin.sharp_center + offset, rho=rho)
        flat = sharpness_estimate(basin, basin.flat_center + offset, rho=rho)
        assert sharp > flat


class TestProjectionMultiplier:
    def test_identity_hessian_gives_rho(self):
        assert projection_multiplier(np.eye(3), np.array([1.0, 2.0, 2.0]), rho=0.4) == (
            pytest.approx(0.4, rel=1e-12)
        )

    def test_diag_axis_gradient(self):
        out = projection_multiplier(np.diag([1.0, 4.0]), np.array([1.0, 0.0]), rho=0.7)
        assert out == pytest.approx(0.7, rel=1e-12)

    def test_zero_gradient_rejected(self):
        with pytest.raises(ValueError, match="zero gradient"):
            projection_multiplier(np.eye(2), np.zeros(2), 1.0)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_orthogonality_certificate(self, seed):
        rng = np.random.Generator(np.random.PCG64(seed))
        dim = int(rng.integers(2, 8))
        a = rng.standard_normal((dim, dim))
        h = (a + a.T) / 2
        g = rng.standard_normal(dim)
        rho = float(rng.uniform(0.01, 3.0))
        lam = projection_multiplier(h, g, rho)
        ghat = g / norm2(g)
        residual = rho * (h @ ghat) - lam * ghat
        scale = max(norm2(residual) * norm2(g), 1e-30)
        assert abs(np.dot(residual, g)) <= 1e-10 * max(scale, norm2(g))


class TestPacBound:
    def test_zero_weight_norm_drops_first_term(self):
        b = BoundInputs(n=1000, delta=0.1, dim=50, w_norm2_sq=0.0, rho=1.0)
        terms = pac_bayes_terms(b)
        assert terms["complexity"] == 0.0
        expected = np.sqrt((terms["confidence"] + terms["residual"]) / (b.n - 1))
        assert pac_bayes_bound(b) == pytest.approx(expected, rel=1e-15)

    def test_monotone_decreasing_in_rho0(self):
        base = dict(n=10_000, delta=0.05, dim=100, w_norm2_sq=50.0, rho=0.5)
        b1 = pac_bayes_bound(BoundInputs(rho0=0.0, **base))
        b2 = pac_bayes_bound(BoundInputs(rho0=1.0, **base))
        b3 = pac_bayes_bound(BoundInputs(rho0=2.0, **base))
        assert b1 > b2 > b3

    def test_high_precision_oracle_spot_value(self):
        b = BoundInputs(n=10_000, delta=0.1, dim=100, w_norm2_sq=100.0, rho=1.0)
        assert b.rho_prime_sq == 1.0
        expected = mp_bound(10_000, 0.1, 100, 100.0, 1.0)
        assert pac_bayes_bound(b) == pytest.approx(expected, rel=1e-10)

    def test_terms_reproduce_total(self):
        b = BoundInputs(n=5_000, delta=0.2, dim=30, w_norm2_sq=10.0, rho=0.3, rho0=0.4)
        terms = pac_bayes_terms(b)
        total = np.sqrt(sum(terms.values()) / (b.n - 1))
        assert pac_bayes_bound(b) == pytest.approx(total, rel=1e-12)

    def test_rho_prime_sq_derived(self):
        b = BoundInputs(n=100, delta=0.1, dim=5, w_norm2_sq=1.0, rho=0.3, rho0=0.4)
        assert b.rho_prime_sq == pytest.approx(0.25, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError, match="n must be"):
            BoundInputs(n=1, delta=0.1, dim=5, w_norm2_sq=1.0, rho=1.0)
        with pytest.raises(ValueError, match="delta"):
            BoundInputs(n=10, delta=1.5, dim=5, w_norm2_sq=1.0, rho=1.0)
        with pytest.raises(ValueError, match="delta"):
            BoundInputs(n=10, delta=0.0, dim=5, w_norm2_sq=1.0, rho=1.0)
        with pytest.raises(ValueError, match="rho"):
            BoundInputs(n=10, delta=0.1, dim=5, w_norm2_sq=1.0, rho=0.0)


class TestReuseErrorStd:
    def test_constant_samples_zero_spread(self):
        assert reuse_error_std([np.ones(4), np.ones(4)]) == 0.0

    def test_matches_numpy_std(self):
        rng = np.random.Generator(np.random.PCG64(3))
        samples = [rng.standard_normal(10) for _ in range(5)]
        expected = np.concatenate(samples).std()
        assert reuse_error_std(samples) == pytest.approx(expected, rel=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="no error samples"):
            reuse_error_std([])
