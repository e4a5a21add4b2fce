import numpy as np
import pytest

from roughlevy.errors import ConfigurationError, InsufficientDataError, NumericError, ShapeError
from roughlevy.evaluation import FieldEvaluator
from roughlevy.kolmogorov import solve_backward
from roughlevy.levy import LevyConfig, PathEnsemble, sample_paths
from roughlevy.sde import (
    DriftSpec,
    SDEBranching,
    euler_solve,
    holder_moment_bound_check,
    ito_residual,
    lacunary_drift,
    mollify,
)
from roughlevy.spectral import MultiplierSpec, PeriodicField, TimeField


def smooth_drift():
    return PeriodicField.from_function(lambda x: 0.5 * np.sin(2 * np.pi * x) + 0.2 * np.cos(4 * np.pi * x), 6)


class TestEvaluation:
    def test_direct_summation_is_exact(self):
        u = smooth_drift()
        x = np.array([0.1, 0.37, 1.9, -0.4])
        ev = FieldEvaluator(u)
        assert ev.method == "direct"
        np.testing.assert_allclose(ev(x), 0.5 * np.sin(2 * np.pi * x) + 0.2 * np.cos(4 * np.pi * x), atol=1e-14)

    def test_spline_for_many_modes(self):
        rng = np.random.default_rng(0)
        u = PeriodicField.from_values(rng.standard_normal(1024))
        u = u.like(u.coeffs * (1 + u.kabs()) ** -3.0)
        ev = FieldEvaluator(u, max_direct_modes=16)
        assert ev.method == "spline" and ev.interpolation_error < 1e-6
        x = rng.uniform(0, 1, 50)
        exact = FieldEvaluator(u, max_direct_modes=10**6)(x)
        assert np.abs(ev(x) - exact).max() < 10 * ev.interpolation_error + 1e-12


class TestMollify:
    def test_truncation(self):
        V = lacunary_drift(-0.3, 6, k_min=0, period=1.0, grid_log2=9)
        Vn = mollify(V, "fourier_truncation", 3)
        assert Vn.kabs()[Vn.coeffs != 0].max() == 8

    def test_heat_on_time_field(self):
        V = smooth_drift()
        tf = TimeField.from_fields([0.0, 1.0], [V, V * 2])
        out = mollify(tf, "heat", 4)
        assert out.field(1).sup() < 2 * V.sup()

    def test_unknown_method(self):
        with pytest.raises(ConfigurationError):
            mollify(smooth_drift(), "box", 2)


class TestLacunaryDrift:
    def test_modes_and_grid(self):
        V = lacunary_drift(-0.3, 4)
        assert V.period == 16.0 and V.grid_log2 == 10
        assert V.mode(1) == pytest.approx(0.5 * 2 ** (-1.2))
        assert V.mode(256) == pytest.approx(0.5 * 2**1.2)

    def test_bad_period(self):
        with pytest.raises(ConfigurationError):
            lacunary_drift(-0.3, 4, k_min=-4, period=3.0)


class TestEuler:
    def test_decomposition_is_exact(self):
        noise = LevyConfig.isotropic_1d(1.5, 3)
        sol = euler_solve(DriftSpec.from_field(smooth_drift()), 0.2, noise, np.linspace(0, 1, 65), 20)
        np.testing.assert_allclose(sol.X.values, 0.2 + sol.Z.values + sol.L.values, atol=1e-14)

    def test_zero_noise_is_ode(self):
        t = np.linspace(0, 1, 1025)
        zero = PathEnsemble(t, np.zeros((1, t.size, 1)))
        c = PeriodicField.constant(0.7, 4)
        sol = euler_solve(DriftSpec.from_field(c), 0.0, zero)
        np.testing.assert_allclose(sol.Z.values[0, :, 0], 0.7 * t, atol=1e-12)

    def test_noise_reuse_and_thread_independence(self):
        noise = LevyConfig.brownian(1, 5)
        t = np.linspace(0, 0.5, 33)
        a = euler_solve(DriftSpec.from_field(smooth_drift()), 0.0, noise, t, 50, chunk=8, threads=3)
        b = euler_solve(DriftSpec.from_field(smooth_drift()), 0.0, noise, t, 50, chunk=8)
        np.testing.assert_array_equal(a.X.values, b.X.values)

    def test_record_every(self):
        t = np.linspace(0, 1, 17)
        sol = euler_solve(DriftSpec.from_field(smooth_drift()), 0.0, LevyConfig.brownian(), t, 3, record_every=4)
        assert sol.times.size == 5
        with pytest.raises(ConfigurationError):
            euler_solve(DriftSpec.from_field(smooth_drift()), 0.0, LevyConfig.brownian(), t, 3, record_every=3)

    def test_non_finite_drift_reports_path(self):
        bad = PeriodicField.constant(np.nan, 4)
        with pytest.raises(NumericError, match="path 0"):
            euler_solve(DriftSpec.from_field(bad), 0.0, LevyConfig.brownian(), np.linspace(0, 1, 3), 2)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            euler_solve(DriftSpec.from_field(smooth_drift()), 0.0, LevyConfig.brownian(2), np.linspace(0, 1, 3), 2)


class TestHolderFit:
    def test_constant_drift_has_slope_two(self):
        t = np.linspace(0, 1, 1025)
        sol = euler_solve(DriftSpec.from_field(PeriodicField.constant(1.0, 4)), 0.0, LevyConfig.brownian(), t, 4)
        rep = holder_moment_bound_check(sol, 1.0, 2, 2.0)
        assert rep.slope == pytest.approx(2.0, abs=1e-8)

    def test_zero_drift_is_degenerate(self):
        t = np.linspace(0, 1, 1025)
        sol = euler_solve(DriftSpec.from_field(PeriodicField.zeros(4)), 0.0, LevyConfig.brownian(), t, 4)
        assert holder_moment_bound_check(sol, 1.0).degenerate

    def test_too_few_scales(self):
        t = np.linspace(0, 1, 33)
        sol = euler_solve(DriftSpec.from_field(smooth_drift()), 0.0, LevyConfig.brownian(), t, 4)
        with pytest.raises(InsufficientDataError):
            holder_moment_bound_check(sol, 1.0)

    def test_rho_validated(self):
        t = np.linspace(0, 1, 1025)
        sol = euler_solve(DriftSpec.from_field(smooth_drift()), 0.0, LevyConfig.brownian(), t, 2)
        with pytest.raises(ConfigurationError):
            holder_moment_bound_check(sol, 1.0, rho=3)


class TestItoResidual:
    def test_constant_function_has_zero_residual(self):
        t = np.linspace(0, 1, 33)
        sol = euler_solve(DriftSpec.from_field(smooth_drift()), 0.0, LevyConfig.brownian(), t, 10)
        r = ito_residual(PeriodicField.constant(2.0, 6), sol, MultiplierSpec.canonical(1, 2.0))
        assert np.abs(r.samples).max() < 1e-14

    def test_backward_solution_residual_is_centred(self):
        spec = MultiplierSpec.canonical(1, 2.0)
        V = smooth_drift()
        t = np.linspace(0, 0.5, 129)
        uT = PeriodicField.from_function(lambda x: np.cos(2 * np.pi * x), 6)
        u = solve_backward(V, V, uT, spec, 0.5, times=t)
        sol = euler_solve(DriftSpec.from_field(V), 0.1, LevyConfig.brownian(1, 2), t, 2000)
        r = ito_residual(u, sol, spec, f=V)
        assert abs(r.mean) < 4 * r.se
        assert abs(r.dynkin_mean) < 4 * r.dynkin_se

    def test_needs_full_record(self):
        t = np.linspace(0, 1, 9)
        sol = euler_solve(DriftSpec.from_field(smooth_drift()), 0.0, LevyConfig.brownian(), t, 2, record_every=2)
        with pytest.raises(ShapeError):
            ito_residual(smooth_drift(), sol, MultiplierSpec.canonical(1, 2.0))


class TestBranching:
    def test_continuations_start_from_recorded_state(self):
        t = np.linspace(0, 0.25, 17)
        noise = LevyConfig.brownian(1, 8)
        sol = euler_solve(DriftSpec.from_field(PeriodicField.constant(1.0, 4)), 0.0, noise, t, 5)
        br = SDEBranching(sol, noise, outer=3)
        x, z = br.continue_paths(4, 12, 6)
        assert x.shape == (3, 6, 1)
        np.testing.assert_allclose(z, 8 * (t[1] - t[0]), atol=1e-15)
        np.testing.assert_array_equal(br.branch(4, 12, 6), z)

    def test_integrand_accumulates(self):
        t = np.linspace(0, 0.25, 9)
        noise = LevyConfig.brownian(1, 8)
        sol = euler_solve(DriftSpec.from_field(PeriodicField.constant(2.0, 4)), 0.0, noise, t, 2)
        br = SDEBranching(sol, noise)
        _, z, acc = br.continue_paths(0, 8, 3, integrand=lambda r, x: np.ones((x.shape[0], 1, 1)))
        np.testing.assert_allclose(acc[..., 0, 0], z[..., 0])
