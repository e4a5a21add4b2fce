import numpy as np
import pytest

from roughlevy.enhancement import (
    Enhancement,
    LacunaryConfig,
    assemble_zz,
    build_lacunary,
    class_k_diagnostic,
    leibniz_check,
    resonant_limit_check,
    second_order_limit,
)
from roughlevy.errors import ConfigurationError, DependencyError, DomainError, ShapeError
from roughlevy.kolmogorov import backward_representations
from roughlevy.levy import LevyConfig, PathEnsemble
from roughlevy.sde import DriftSpec, euler_solve
from roughlevy.spectral import MultiplierSpec, PeriodicField, besov_norm


class TestLacunaryConfig:
    def test_default_amplitudes(self):
        cfg = LacunaryConfig(6)
        assert [cfg.a(k) for k in range(1, 7)] == [0.0, 2.0, 0.0, 4.0, 0.0, 8.0]

    def test_perturbation_coefficient(self):
        cfg = LacunaryConfig(6, C=2.0)
        assert cfg.c(4) == pytest.approx(4 * (-2j * np.pi * 2.0))

    def test_amplitude_rule_sets_regularity(self):
        from roughlevy.spectral import block_sup_norms

        rough = build_lacunary(LacunaryConfig(12), 15, 12).V
        smooth = build_lacunary(LacunaryConfig(12, amplitude=lambda k: 2.0 ** (-k / 2) if k % 2 == 0 else 0.0), 15, 12).V
        js = np.arange(2, 13, 2)
        np.testing.assert_allclose(block_sup_norms(rough)[js + 1] * 2.0 ** (-js / 2), 1.0, rtol=1e-12)
        np.testing.assert_allclose(block_sup_norms(smooth)[js + 1] * 2.0 ** (js / 2), 1.0, rtol=1e-12)

    def test_k_max_validated(self):
        with pytest.raises(ConfigurationError):
            LacunaryConfig(0)


class TestBuildLacunary:
    def test_single_mode_closed_form(self):
        fl = build_lacunary(LacunaryConfig(2), 6, 2)
        x = np.arange(64) / 64
        np.testing.assert_allclose(fl.V.real_values(), 2.0 * np.cos(2 * np.pi * 4 * x), atol=1e-14)
        np.testing.assert_allclose(fl.F.real_values(), -(2.0 / (4 * np.pi)) * np.sin(2 * np.pi * 4 * x), atol=1e-14)

    def test_perturbation_is_one_mode(self):
        cfg = LacunaryConfig(8, C=1.5)
        fl = build_lacunary(cfg, 11, 6)
        x = np.arange(2**11) / 2**11
        target = np.real(cfg.c(6) * np.exp(2j * np.pi * 64 * x))
        np.testing.assert_allclose((fl.W_n - fl.V_n).real_values(), target, atol=1e-12 * np.abs(target).max())

    def test_perturbation_vanishes_in_negative_norm(self):
        cfg = LacunaryConfig(12)
        norms = [besov_norm(build_lacunary(cfg, 15, n).W_n - build_lacunary(cfg, 15, n).V_n, -0.6) for n in (4, 6, 8, 10, 12)]
        assert np.all(np.diff(norms) < 0)
        assert norms[-1] / norms[0] == pytest.approx(2.0 ** (-0.1 * 8), rel=0.05)

    def test_frequency_overflow(self):
        with pytest.raises(ConfigurationError, match="Nyquist"):
            build_lacunary(LacunaryConfig(8), 9, 4)

    def test_level_range(self):
        with pytest.raises(ConfigurationError):
            build_lacunary(LacunaryConfig(4), 8, 5)


class TestResonantLimit:
    # the offset only appears at even levels, where a_n pairs with the perturbation
    @pytest.fixture(scope="class")
    @classmethod
    def report(cls):
        return resonant_limit_check(LacunaryConfig(10, C=1.0), 13, 0.25, ns=(4, 6, 8, 10))

    def test_odd_levels_carry_no_offset(self):
        rep = resonant_limit_check(LacunaryConfig(8, C=1.0), 11, 0.25, ns=[5, 7])
        np.testing.assert_allclose(rep.zero_mode, 0.0, atol=1e-15)

    def test_zero_mode_equals_offset(self, report):
        np.testing.assert_allclose(report.zero_mode, 1.0, atol=1e-10)

    def test_remainder_is_a_pure_cosine(self, report):
        assert max(report.impurity) <= 1e-10

    def test_norm_matches_single_cosine(self, report):
        for got, pred in zip(report.norm_Dn_minus_C, report.predicted_Dn_norm):
            assert got == pytest.approx(pred, rel=0.05)

    def test_limit_field(self, report):
        assert max(report.limit_field_error) < 1e-10

    def test_no_perturbation_gives_zero(self):
        rep = resonant_limit_check(LacunaryConfig(6, C=1.0, perturbation_scale=0.0), 10, 0.25, ns=[4, 6])
        # D_n = 0, so D_n - C is the constant -C whose lowest block carries weight 2^delta
        np.testing.assert_allclose(rep.norm_Dn_minus_C, 2**0.25, rtol=1e-14)
        assert [r["zero_mode_Dn"] for r in rep.rows()] == [0.0, 0.0]

    def test_delta_range(self):
        with pytest.raises(DomainError):
            resonant_limit_check(LacunaryConfig(4), 8, 0.7)

    def test_second_order_data(self):
        base, offset = second_order_limit(LacunaryConfig(6, C=2.0), 10)
        enh = Enhancement(build_lacunary(LacunaryConfig(6), 10, 6).V, (base, offset), 0.0, -0.55)
        assert not enh.young
        assert enh.resonant_field().mean() == pytest.approx(2.0)


class TestLeibniz:
    def test_laplacian_form_holds(self):
        for n in (2, 4, 6, 8):
            assert leibniz_check(LacunaryConfig(10), 13, n)["laplacian"] < 1e-10

    def test_heat_potential_form_is_off_by_a_factor(self):
        # J^inf = 2 (-Laplace)^{-1} for alpha = 2, so the literal combination leaves half the term
        r = leibniz_check(LacunaryConfig(10), 13, 6)
        assert r["literal"] == pytest.approx(r["scale"], rel=1e-8)


def _deterministic_solution(V, T=0.25, K=256, x0=0.1):
    t = np.linspace(0, T, K + 1)
    zero = PathEnsemble(t, np.zeros((1, K + 1, 1)))
    return euler_solve(DriftSpec.from_field(V), x0, zero), t


class TestAssembleZZ:
    def test_constant_integrand_vanishes(self):
        V = PeriodicField.from_function(lambda x: np.sin(2 * np.pi * x), 5)
        sol, _ = _deterministic_solution(V)
        data = assemble_zz(sol, PeriodicField.constant(3.0, 5), V)
        assert np.abs(data.ZZ(np.array([0, 5]), np.array([256, 100]))).max() == 0.0

    def test_matches_explicit_quadrature(self):
        T, K = 0.25, 256
        V = PeriodicField.from_modes({1: -0.5j, -1: 0.5j}, 5)
        psi = 2 * np.pi**2
        h = T / K
        for x0 in (0.1, 0.6):
            sol, t = _deterministic_solution(V, T, K, x0)
            data = assemble_zz(sol, V, V, T=T)
            x = np.empty(K + 1)
            x[0] = x0
            for k in range(K):
                x[k + 1] = x[k] + h * np.sin(2 * np.pi * x[k])
            a = 2 * np.pi * np.cos(2 * np.pi * x) * (1 - np.exp(-psi * (T - t))) / psi
            zz = np.sum((a[:-1] - a[0]) * h * np.sin(2 * np.pi * x[:-1]))
            assert data.ZZ(0, K)[0, 0, 0] == pytest.approx(zz, abs=1e-12)

    def test_chen_relation(self):
        V = PeriodicField.from_function(lambda x: np.sin(2 * np.pi * x), 5)
        sol = euler_solve(DriftSpec.from_field(V), 0.0, LevyConfig.brownian(1, 3), np.linspace(0, 0.25, 65), 20)
        data = assemble_zz(sol, V, V)
        s, l, t = np.array([0, 4, 10]), np.array([8, 30, 11]), np.array([64, 32, 50])
        assert data.chen_defect(s, l, t) < 1e-15
        np.testing.assert_allclose(data.ZZ(s, t), data.AA(s, t) - data.A[:, s] * data.Z.increments(s, t)[..., None], atol=1e-16)

    def test_norms_are_reported(self):
        V = PeriodicField.from_function(lambda x: np.sin(2 * np.pi * x), 5)
        sol = euler_solve(DriftSpec.from_field(V), 0.0, LevyConfig.brownian(1, 3), np.linspace(0, 0.25, 65), 50)
        data = assemble_zz(sol, V, V, beta=-0.3)
        assert np.isfinite(data.norms["Z"].value) and np.isfinite(data.norms["ZZ"].value)

    def test_mismatched_drift(self):
        V = PeriodicField.from_function(lambda x: np.sin(2 * np.pi * x), 5)
        sol, _ = _deterministic_solution(V)
        with pytest.raises(ShapeError):
            assemble_zz(sol, V, V * 2)
        with pytest.raises(ShapeError):
            assemble_zz(sol, V, mesh=[(0, 999)])


class TestClassK:
    def test_zero_drift_is_degenerate(self):
        V = PeriodicField.zeros(5)
        t = np.linspace(0, 0.25, 33)
        sol = euler_solve(DriftSpec.from_field(V), 0.0, LevyConfig.brownian(1, 2), t, 10)
        reps = backward_representations(V, 0.25, MultiplierSpec.canonical(1, 2.0), [0.25], include_times=t, hmax=1 / 256)
        rep = class_k_diagnostic(sol, reps, beta=-0.3)
        assert rep.degenerate and np.all(rep.magnitudes == 0)

    def test_missing_solutions(self):
        V = PeriodicField.zeros(5)
        sol = euler_solve(DriftSpec.from_field(V), 0.0, LevyConfig.brownian(), np.linspace(0, 1, 5), 2)
        with pytest.raises(DependencyError):
            class_k_diagnostic(sol, None)
