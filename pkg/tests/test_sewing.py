import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughlevy.errors import ConfigurationError, DomainError, ShapeError
from roughlevy.levy import LevyConfig, sample_paths
from roughlevy.sewing import (
    ControlledProcess,
    Germ,
    RoughIntegrator,
    conditional_hoelder_norm,
    controlled_remainder,
    dyadic_mesh,
    hoelder_norm,
    plain_integral,
    rough_integral,
    sew,
)


def brownian(M, levels, T=1.0, seed=3):
    times = np.linspace(0, T, 2**levels + 1)
    return times, sample_paths(LevyConfig.brownian(1, seed), times, M).values[:, :, 0]


class TestSew:
    def test_deterministic_germ_gives_riemann_integral(self):
        times = np.linspace(0, 1, 2**10 + 1)
        germ = Germ(lambda s, t: np.cos(times[s])[None] * (times[t] - times[s])[None], times)
        res = sew(germ, 10)
        assert res.integral[0, 0] == pytest.approx(np.sin(1.0), abs=1e-3)
        assert res.cauchy_rate == pytest.approx(1.0, abs=0.05)

    def test_ito_integral(self):
        times, W = brownian(1000, 12, T=0.5)
        germ = Germ(lambda s, t: W[:, s] * (W[:, t] - W[:, s]), times)
        res = sew(germ, 12)
        exact = 0.5 * (W[:, -1] ** 2 - 0.5)
        assert np.sqrt(np.mean((res.integral[:, 0] - exact) ** 2)) < 1e-2
        assert res.cauchy_rate > 0.4
        assert res.eps2 == pytest.approx(0.5, abs=0.1)

    def test_additivity(self):
        times, W = brownian(200, 8)
        germ = Germ(lambda s, t: W[:, s] * (W[:, t] - W[:, s]), times)
        res = sew(germ, 8)
        I = res.integral_samples[:, :, 0]
        restart = np.sum(W[:, 128:-1] * np.diff(W[:, 128:], axis=1), axis=1)
        np.testing.assert_allclose(I[:, -1] - I[:, 128], restart, atol=1e-12)

    def test_partial_interval(self):
        times = np.linspace(0, 1, 2**6 + 1)
        germ = Germ(lambda s, t: (times[t] - times[s])[None], times)
        assert sew(germ, 4, T=0.5).integral[0, 0] == pytest.approx(0.5)

    def test_divergent_sums_are_flagged(self):
        times = np.linspace(0, 1, 2**8 + 1)
        germ = Germ(lambda s, t: ((times[t] - times[s]) ** 0.3)[None], times)
        with pytest.warns(RuntimeWarning):
            res = sew(germ, 8)
        assert res.divergent

    def test_preconditions(self):
        times = np.linspace(0, 1, 17)
        germ = Germ(lambda s, t: (times[t] - times[s])[None], times)
        with pytest.raises(ConfigurationError):
            sew(germ, 3)
        with pytest.raises(ConfigurationError):
            sew(Germ(germ.sampler, times, adapted=False), 4)
        with pytest.raises(ShapeError):
            sew(Germ(germ.sampler, np.linspace(0, 1, 13)), 4)
        with pytest.raises(DomainError):
            sew(germ, 4, T=0.3)

    def test_csv_rows(self):
        times = np.linspace(0, 1, 17)
        res = sew(Germ(lambda s, t: (times[t] - times[s])[None], times), 4)
        rows = res.csv_rows()
        assert set(rows[0]) == {"level", "cauchy_l2", "t", "integral_mean", "integral_se"}
        assert rows[-1]["integral_mean"] == pytest.approx(1.0)


class TestHoelderNorm:
    def test_brownian_half(self):
        times, W = brownian(10_000, 10, seed=5)
        est = hoelder_norm(W, 0.5, 2, dyadic_mesh(1024, max_cells=16), times)
        assert est.value == pytest.approx(1.0, abs=0.1)
        assert not est.divergent

    def test_fourth_moment(self):
        times, W = brownian(10_000, 6, seed=6)
        est = hoelder_norm(W, 0.5, 4, times=times)
        assert est.value == pytest.approx(3 ** 0.25, abs=0.1)

    def test_too_large_exponent_diverges(self):
        times, W = brownian(2000, 10)
        assert hoelder_norm(W, 1.2, 2, times=times).divergent

    def test_enlarging_mesh_never_decreases(self):
        times, W = brownian(500, 8)
        coarse = dyadic_mesh(256, min_step=16)
        fine = dyadic_mesh(256)
        assert set(coarse) <= set(fine)
        assert hoelder_norm(W, 0.5, 2, fine, times).value >= hoelder_norm(W, 0.5, 2, coarse, times).value

    def test_empty_mesh_and_bad_p(self):
        times, W = brownian(10, 4)
        with pytest.raises(DomainError):
            hoelder_norm(W, 0.5, 2, [], times)
        with pytest.raises(ConfigurationError):
            hoelder_norm(W, 0.5, 3, times=times)

    def test_infinity_proxy_is_labelled(self):
        times, W = brownian(50, 4)
        est = hoelder_norm(W, 0.5, "inf", times=times)
        assert est.as_dict()["p"] == "inf-proxy"
        assert est.value >= hoelder_norm(W, 0.5, 4, times=times).value


class _Deterministic:
    def __init__(self, times, theta):
        self.times, self.theta = times, theta

    def branch(self, s, t, inner):
        return np.full((4, inner, 1), (self.times[t] - self.times[s]) ** self.theta)


class _Martingale:
    def __init__(self, times, seed=0):
        self.times = times
        self.rng = np.random.default_rng(seed)

    def branch(self, s, t, inner):
        return self.rng.standard_normal((8, inner, 1)) * np.sqrt(self.times[t] - self.times[s])


class TestConditionalNorm:
    def test_deterministic_is_exactly_one(self):
        times = np.linspace(0, 1, 65)
        est = conditional_hoelder_norm(_Deterministic(times, 0.7), 0.7, dyadic_mesh(64), 100)
        assert est.value == pytest.approx(1.0, rel=1e-12)
        assert est.variance_floor < 1e-15

    def test_martingale_increments_vanish(self):
        times = np.linspace(0, 1, 65)
        mesh = dyadic_mesh(64, min_step=8)
        est = conditional_hoelder_norm(_Martingale(times), 0.5, mesh, 400)
        # the nested mean of a centred increment is pure inner noise of size ~ 1/sqrt(inner)
        assert est.value < 5 / np.sqrt(400)
        assert est.mode == "conditional" and "proxied" in est.proxy_note

    def test_small_inner_warns(self):
        times = np.linspace(0, 1, 9)
        with pytest.warns(RuntimeWarning):
            conditional_hoelder_norm(_Deterministic(times, 1.0), 1.0, dyadic_mesh(8), 10)


def _integrated_brownian(levels, M, seed=4):
    times = np.linspace(0, 1, 2**levels + 1)
    W = sample_paths(LevyConfig.brownian(1, seed), times, M).values[:, :, 0]
    h = times[1]
    I = np.concatenate([np.zeros((M, 1)), np.cumsum(0.5 * (W[:, 1:] + W[:, :-1]) * h, axis=1)], axis=1)
    return times, W, I


class TestRoughIntegral:
    def test_chen_relation_is_exact(self):
        times, W, I = _integrated_brownian(6, 20)
        zi = RoughIntegrator(times, np.broadcast_to(times, W.shape), I, W, 1.0)
        s, l, t = np.array([0, 3, 10]), np.array([5, 20, 33]), np.array([7, 64, 60])
        assert np.abs(zi.chen_defect(s, l, t)).max() < 1e-15

    def test_agreement_with_plain_sums(self):
        times, W, I = _integrated_brownian(10, 300)
        zi = RoughIntegrator(times, np.broadcast_to(times, W.shape), I, W, 1.0)
        f = ControlledProcess(times, np.sin(W), np.cos(W), W, (0.45, 0.45))
        a = rough_integral(f, zi, 10).integral[:, 0]
        b = plain_integral(f, zi, 10).integral[:, 0]
        assert np.sqrt(np.mean((a - b) ** 2) / np.mean(b**2)) < 1e-3

    def test_degenerate_derivative_is_quadrature(self):
        times = np.linspace(0, 1, 2**8 + 1)
        Z = np.sin(times)[None]
        A = np.zeros((1, times.size, 1))
        zi = RoughIntegrator.from_quadrature(times, A, Z, sigma=1.0)
        f = ControlledProcess(times, np.exp(times)[None], np.zeros((1, times.size, 1)), A, (0.5, 0.5))
        res = rough_integral(f, zi, 8)
        exact = 0.5 * (np.exp(1) * (np.sin(1) + np.cos(1)) - 1)
        assert res.integral[0, 0] == pytest.approx(exact, rel=1e-2)

    def test_exponent_condition_refused(self):
        times, W, I = _integrated_brownian(4, 2)
        zi = RoughIntegrator(times, W, I, W, 0.4)
        f = ControlledProcess(times, W, np.ones_like(W), W, (0.3, 0.2))
        with pytest.raises(ConfigurationError, match="<= 1"):
            rough_integral(f, zi, 4)

    def test_integrator_must_start_at_zero(self):
        times = np.linspace(0, 1, 5)
        with pytest.raises(ConfigurationError):
            RoughIntegrator(times, np.ones((1, 5)), np.zeros((1, 5, 1)), np.zeros((1, 5, 1)))


class TestControlledRemainder:
    @settings(max_examples=10, deadline=None)
    @given(st.floats(-3, 3), st.floats(-3, 3))
    def test_affine_function_has_zero_remainder(self, c, v):
        times, W = brownian(20, 6)
        est = controlled_remainder(c + v * W, np.full(W.shape, v), W, times=times, exponent=0.9)
        assert est.value < 1e-12 * (1 + abs(c) + abs(v))

    def test_smooth_function_of_driver(self):
        times, W = brownian(2000, 10)
        est = controlled_remainder(np.sin(W), np.cos(W), W, times=times, exponent=0.9)
        assert not est.divergent and est.value < 2

    def test_missing_derivative_diverges(self):
        times, W = brownian(2000, 10)
        est = controlled_remainder(W, np.zeros_like(W), W, times=times, exponent=0.9)
        assert est.divergent

    def test_shape_mismatch(self):
        times, W = brownian(5, 4)
        with pytest.raises(ShapeError):
            controlled_remainder(W, W[:, :-1], W, times=times)
