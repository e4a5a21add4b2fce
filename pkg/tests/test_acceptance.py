"""Acceptance criteria, each checked at its stated tolerance.

Every test records a PASS/FAIL line (shown in the terminal summary).  Lines
tagged ``supplementary`` are diagnostics that explain a failing criterion;
they never replace it.
"""

import numpy as np
import pytest

from roughlevy import experiments as ex
from roughlevy.kolmogorov import pde_residual, solve_backward
from roughlevy.spectral import MultiplierSpec, PeriodicField, product


def test_criterion_01_bony_identity(criterion_log):
    r = ex.bony_check(grid_log2=12, pairs=100, seed=7)
    err = r.summary["max_relative_error"]
    assert criterion_log("criterion 1 (paraproduct identity)", err <= 1e-12, f"max relative error {err:.2e} <= 1e-12")


def test_criterion_02_partition(criterion_log):
    r = ex.partition_check(j_max=12, samples=10_000)
    s = r.summary
    ok = s["sum_error"] <= 1e-12 and s["non_neighbour_overlap"] == 0 and s["isolation_error"] == 0
    assert criterion_log("criterion 2 (dyadic partition)", ok,
                         f"sum error {s['sum_error']:.1e}, overlap {s['non_neighbour_overlap']}, isolation {s['isolation_error']}")


@pytest.fixture(scope="module")
def counterexample():
    return ex.counterexample(C=1.0, n=10, grid_log2=15, delta=0.25, n_min=4)


def test_criterion_03_counterexample(counterexample, criterion_log):
    s = counterexample.summary
    norm_ok = s["norm_Dn_minus_C"] <= 0.05
    zero_ok = s["zero_mode_error"] <= 1e-10
    pure_ok = s["impurity"] <= 1e-10
    decay_ok = s["Vn_non_increasing"] and s["Vn_decreased"] and s["Wn_strictly_decreasing"]
    detail = (f"||D_n - 1|| = {s['norm_Dn_minus_C']:.4f} (bound 0.05, single-cosine value "
              f"{s['predicted_norm_Dn_minus_C']:.4f}); zero mode error {s['zero_mode_error']:.1e}; "
              f"impurity {s['impurity']:.1e}; ||V^n - V|| non-increasing {s['Vn_non_increasing']}, "
              f"||W^n - V|| decreasing {s['Wn_strictly_decreasing']}")
    criterion_log("criterion 3 (resonant counterexample)", norm_ok and zero_ok and pure_ok and decay_ok, detail)
    assert zero_ok and pure_ok and decay_ok
    assert norm_ok, "the remainder cos(2 pi 2^11 x) has C^-0.25 norm 2^-2.75 = 0.149 > 0.05"


def test_criterion_03_supplementary_norm_formula(counterexample, criterion_log):
    rows = counterexample.rows
    worst = max(abs(r["norm_Dn_minus_C"] / r["predicted_norm_Dn_minus_C"] - 1) for r in rows if r["n"] % 2 == 0)
    assert criterion_log("criterion 3 supplementary (norm equals 2^-(n+1)delta at even n)", worst <= 0.05,
                         f"worst relative deviation {worst:.2e} <= 0.05")


def test_criterion_04_leibniz(criterion_log):
    r = ex.leibniz(grid_log2=15, ns=(2, 4, 6, 8, 10))
    lit = r.summary["max_literal"]
    criterion_log("criterion 4 (one-dimensional Leibniz identity, heat potential J^inf)", lit <= 1e-10,
                  f"max sup norm {lit:.3f} <= 1e-10")
    assert lit <= 1e-10, "J^inf = 2(-Laplace)^-1 for alpha = 2, so the literal combination leaves half of d(v o v)"


def test_criterion_04_supplementary_laplacian_form(criterion_log):
    r = ex.leibniz(grid_log2=15, ns=(2, 4, 6, 8, 10))
    lap = r.summary["max_laplacian"]
    assert criterion_log("criterion 4 supplementary (Leibniz identity with (-Laplace)^-1 d)", lap <= 1e-10,
                         f"max sup norm {lap:.1e} <= 1e-10")


@pytest.mark.parametrize("alpha", [1.2, 1.5, 2.0])
def test_criterion_05_stable_sampler(alpha, criterion_log):
    r = ex.stable_cf(alpha=alpha, M=100_000)
    s = r.summary
    assert criterion_log(f"criterion 5 (stable sampler, alpha={alpha})", r.passed,
                         f"max |z| {s['max_abs_z']:.2f} <= 3; KS p-value {s['ks_pvalue']:.3f} > 0.01")


def test_criterion_06_sewing(criterion_log):
    r = ex.sewing_rates(M=10_000, levels=12, T=0.5)
    s = r.summary
    assert criterion_log("criterion 6 (stochastic sewing of W_s W_st)", r.passed,
                         f"L2 error {s['l2_error']:.4f} <= 0.01; Cauchy exponent {s['cauchy_rate']:.3f} >= 0.45 (T=0.5)")


def test_criterion_07_rough_integral(criterion_log):
    r = ex.rough_integral_demo()
    rel = r.summary["relative_l2_difference"]
    assert criterion_log("criterion 7 (compensated and plain sewing agree)", rel <= 1e-3,
                         f"relative L2 difference {rel:.2e} <= 1e-3")


@pytest.mark.slow
def test_criterion_08_holder_moments(criterion_log):
    slopes = {n: ex.sde_holder_fit(n=n, M=10_000, h_log2=12).summary["slope"] for n in (4, 6, 8)}
    ok = all(abs(s - 1.7) <= 0.15 for s in slopes.values())
    criterion_log("criterion 8 (moment slope at h=2^-12)", ok,
                  ", ".join(f"n={n}: {s:.3f}" for n, s in slopes.items()) + " in 1.7 +- 0.15")
    assert ok, "at n=8 the top drift mode is not resolved by h=2^-12; see the supplementary run"


@pytest.mark.slow
def test_criterion_08_supplementary_fine_step(criterion_log):
    slopes = {n: ex.sde_holder_fit(n=n, M=10_000, h_log2=15).summary["slope"] for n in (4, 6, 8)}
    ok = all(abs(s - 1.7) <= 0.15 for s in slopes.values())
    assert criterion_log("criterion 8 supplementary (moment slope at h=2^-15)", ok,
                         ", ".join(f"n={n}: {s:.3f}" for n, s in slopes.items()) + " in 1.7 +- 0.15")


def _manufactured_residual():
    spec = MultiplierSpec.canonical(1, 2.0)
    T = 1.0
    V = PeriodicField.from_function(lambda x: 0.5 * np.sin(2 * np.pi * x) + 0.2 * np.cos(4 * np.pi * x), 6)
    s = PeriodicField.from_function(lambda x: np.sin(2 * np.pi * x), 6)
    drift = product(V, PeriodicField.from_function(lambda x: 2 * np.pi * np.cos(2 * np.pi * x), 6))
    psi = 2 * np.pi**2

    def f(t):
        return s * (-1 - psi * (T - t)) + drift * (T - t)

    sol = solve_backward(V, f, PeriodicField.zeros(6), spec, T, times=np.linspace(0, T, 129))
    return pde_residual(sol, V, f, spec)


def test_criterion_09_young_pde(criterion_log):
    man = _manufactured_residual()
    lac = ex.young_pde_check(n=6)
    res = lac.summary["residual"]
    assert criterion_log("criterion 9 (backward solver residuals)", man <= 1e-8 and res <= 1e-6,
                         f"manufactured {man:.1e} <= 1e-8; lacunary n=6 {res:.2e} <= 1e-6 "
                         f"({lac.summary['slabs']} slabs)")


@pytest.fixture(scope="module")
def nonuniqueness():
    return ex.nonuniqueness(ns=(4, 6, 8), n_mc=8, M=20_000, h_log2=12)


@pytest.mark.slow
def test_criterion_10_nonuniqueness(nonuniqueness, criterion_log):
    s = nonuniqueness.summary
    d = s["shift_defects"]
    ok = s["defect_decreasing"] and s["gap_over_se"] >= 5 and s["agrees_with_pde_gap"]
    criterion_log("criterion 10 (non-uniqueness)", ok,
                  f"shift defects {d[0]:.5f} > {d[1]:.5f} > {d[2]:.5f}; MC gap {s['mc_gap']:.4f} "
                  f"= {s['gap_over_se']:.2f} SE (needs >= 5); PDE gap {s['pde_gap']:.2e}; "
                  f"agrees within 3 SE {s['agrees_with_pde_gap']}")
    assert s["defect_decreasing"]
    assert s["gap_over_se"] >= 5, "the finite-n gap is ~1e-6, far below the Monte Carlo resolution"


@pytest.mark.slow
def test_criterion_10_supplementary_inconclusive_flag(nonuniqueness, criterion_log):
    s = nonuniqueness.summary
    ok = s["inconclusive"] and s["agrees_with_pde_gap"] and s["required_M"] > 1e10
    assert criterion_log("criterion 10 supplementary (Monte Carlo flagged inconclusive)", ok,
                         f"required M ~ {s['required_M']:.1e}; limiting gap {s['limit_gap']:.1e}")


def test_criterion_11_ito_residual(criterion_log):
    r = ex.ito_residual_check(M=10_000)
    s = r.summary
    assert criterion_log("criterion 11 (Ito residual)", r.passed,
                         f"|mean| {abs(s['mean']):.2e} = {abs(s['z_score']):.2f} SE <= 3")


def test_criterion_12_class_k(criterion_log):
    r = ex.class_k()
    s = r.summary
    assert criterion_log("criterion 12 (class-K exponent)", r.passed,
                         f"fitted exponent {s['exponent']:.3f} >= {s['threshold']:.2f}")
