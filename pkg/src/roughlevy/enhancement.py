"""Enhancement data: the lacunary counterexample and iterated integrals of weak solutions.

The lacunary drift is ``V = Re f`` with ``f(x) = sum_k a_k exp(2 pi i 2^k x)``.
Its partial sums ``V^n`` and the perturbed sequence

    W^n = V^n + Re(c_n exp(2 pi i 2^n x)),   c_n = 2^{n/2} d_n,  d_n = -2 pi C i,

converge to the same ``V`` in ``C^{-1/2-}``, but the mixed resonant products
``J^inf(d_x V^n) o V`` and ``J^inf(d_x W^n) o V`` converge to limits that
differ by the constant ``C``.  On a grid that resolves ``2^{k_max + 1}`` every
quantity is a finite trigonometric sum and the resonant products are computed
block by block without truncation error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DependencyError, DomainError, ShapeError
from .evaluation import FieldEvaluator
from .sde import SDEBranching, SolutionEnsemble
from .sewing import (
    RoughIntegrator,
    conditional_hoelder_norm,
    dyadic_mesh,
    hoelder_norm,
)
from .spectral import (
    MultiplierSpec,
    PeriodicField,
    TimeField,
    besov_norm,
    derivative,
    inverse_laplacian,
    j_infinity,
    jT,
    resonant,
)

__all__ = [
    "LacunaryConfig",
    "LacunaryFields",
    "Enhancement",
    "ResonantLimitReport",
    "RoughWeakSolutionData",
    "ClassKReport",
    "build_lacunary",
    "resonant_limit_check",
    "leibniz_check",
    "assemble_zz",
    "class_k_diagnostic",
]


def _even_power_rule(exponent: float) -> Callable[[int], float]:
    return lambda k: 2.0 ** (k * exponent) if k % 2 == 0 else 0.0


@dataclass(frozen=True)
class LacunaryConfig:
    """Lacunary drift on the unit torus.

    ``amplitude(k)`` gives ``a_k`` for ``k >= 1``; the default is ``2^{k/2}`` on
    even ``k`` and zero on odd ``k``.  ``perturbation_scale`` multiplies
    ``c_n``; setting it to zero switches the perturbation off.
    """

    k_max: int
    C: float = 1.0
    amplitude: Callable[[int], float] | None = None
    perturbation_scale: float = 1.0

    def __post_init__(self):
        if self.k_max < 1:
            raise ConfigurationError(f"k_max must be at least 1, got {self.k_max}")

    def a(self, k: int) -> float:
        rule = self.amplitude or _even_power_rule(0.5)
        return float(rule(k)) if k >= 1 else 0.0

    def c(self, n: int) -> complex:
        return self.perturbation_scale * 2.0 ** (n / 2) * (-2j * np.pi * self.C)

    def describe(self) -> dict:
        return {
            "k_max": self.k_max,
            "C": self.C,
            "amplitudes": {k: self.a(k) for k in range(1, self.k_max + 1)},
            "perturbation_scale": self.perturbation_scale,
        }


@dataclass(frozen=True, eq=False)
class LacunaryFields:
    """``V``, ``V^n``, ``W^n`` and the images ``F_n = J^inf(d V^n)``, ``G_n = J^inf(d (W^n - V^n))``."""

    V: PeriodicField
    V_n: PeriodicField
    W_n: PeriodicField
    F_n: PeriodicField
    G_n: PeriodicField
    F: PeriodicField
    n: int
    spec: MultiplierSpec


def _check_grid(config: LacunaryConfig, grid_log2: int):
    top = 2 ** (config.k_max + 1)
    nyq = 2 ** (grid_log2 - 1)
    if top >= nyq:
        raise ConfigurationError(
            f"frequency 2^{config.k_max + 1} = {top} is not below the Nyquist frequency {nyq}; "
            f"use grid_log2 >= {config.k_max + 3}"
        )


def _cosines(amps: dict, grid_log2: int) -> PeriodicField:
    """``sum_k a_k cos(2 pi 2^k x)`` from ``{k: a_k}``."""
    modes = {}
    for k, a in amps.items():
        if a != 0:
            modes[2**k] = modes.get(2**k, 0) + a / 2
            modes[-(2**k)] = modes.get(-(2**k), 0) + a / 2
    return PeriodicField.from_modes(modes, grid_log2)


def build_lacunary(config: LacunaryConfig, grid_log2: int, n: int, spec: MultiplierSpec | None = None) -> LacunaryFields:
    """All fields of the counterexample at level ``n`` on a grid of ``2**grid_log2`` points."""
    _check_grid(config, grid_log2)
    if not 1 <= n <= config.k_max:
        raise ConfigurationError(f"level n must lie in [1, k_max={config.k_max}], got {n}")
    spec = spec or MultiplierSpec.canonical(1, 2.0)
    V = _cosines({k: config.a(k) for k in range(1, config.k_max + 1)}, grid_log2)
    V_n = _cosines({k: config.a(k) for k in range(1, n + 1)}, grid_log2)
    c = config.c(n)
    pert = PeriodicField.from_modes({2**n: c / 2, -(2**n): np.conj(c) / 2}, grid_log2)
    W_n = V_n + pert
    F_n = j_infinity(derivative(V_n), spec)
    G_n = j_infinity(derivative(pert), spec)
    F = j_infinity(derivative(V), spec)
    return LacunaryFields(V, V_n, W_n, F_n, G_n, F, n, spec)


@dataclass(frozen=True, eq=False)
class Enhancement:
    """A drift with its resonant data.

    ``V2`` is either a field (the limit of ``J^inf(d V^n) o V``), the pair
    ``(limit field, constant offset)`` used for the counterexample, or a
    callable ``(s, t) -> matrix of fields`` of kernel samples.
    """

    V: object
    V2: object
    gamma: float
    beta: float
    alpha: float = 2.0

    @property
    def young(self) -> bool:
        """In the Young regime the resonant data are determined by ``V`` and carry no information."""
        return self.beta > (1 - self.alpha) / 2

    def resonant_field(self) -> PeriodicField:
        if isinstance(self.V2, PeriodicField):
            return self.V2
        if isinstance(self.V2, tuple):
            base, offset = self.V2
            return base + offset
        raise ShapeError("resonant data are kernel samples, not a single field")


# ---------------------------------------------------------------------------
# resonant limits


@dataclass
class ResonantLimitReport:
    C: float
    delta: float
    v_theta: float
    ns: list
    norm_Vn_minus_V: list
    norm_Wn_minus_V: list
    norm_Dn_minus_C: list
    predicted_Dn_norm: list
    zero_mode: list
    impurity: list
    limit_field_error: list
    grid_log2: int

    def rows(self) -> list[dict]:
        return [
            {
                "n": n,
                "norm_Vn_minus_V": a,
                "norm_Wn_minus_V": b,
                "norm_Dn_minus_C": c,
                "delta": self.delta,
                "predicted_norm_Dn_minus_C": p,
                "zero_mode_Dn": z,
                "impurity": i,
                "limit_field_error": e,
            }
            for n, a, b, c, p, z, i, e in zip(
                self.ns, self.norm_Vn_minus_V, self.norm_Wn_minus_V, self.norm_Dn_minus_C,
                self.predicted_Dn_norm, self.zero_mode, self.impurity, self.limit_field_error,
            )
        ]


def _impurity(D: PeriodicField, C: float, freq: int) -> float:
    """Largest coefficient of ``D - C`` away from ``+-freq``."""
    r = (D - C).coeffs.copy()
    k = D.k()[0]
    r[np.abs(k) == freq] = 0
    return float(np.abs(r).max())


def resonant_limit_check(
    config: LacunaryConfig,
    grid_log2: int,
    delta: float,
    ns: Sequence[int] | None = None,
    v_theta: float = -0.6,
) -> ResonantLimitReport:
    """Per level ``n``: ``||D_n - C||_{C^-delta}`` with ``D_n = J^inf(d W^n) o V - J^inf(d V^n) o V``.

    Also reports the zero mode of ``D_n``, the largest coefficient of ``D_n - C``
    other than at ``+-2^{n+1}``, the norms ``||V^n - V||`` and ``||W^n - V||`` in
    ``C^{v_theta}``, and the sup distance of ``J^inf(d V^n) o V`` from
    ``-sum_{k <= n} (a_k^2 / (2 pi 2^k)) sin(2 pi 2^{k+1} x)``.
    """
    if not 0 < delta <= 0.5:
        raise DomainError(f"delta must lie in (0, 0.5], got {delta}")
    _check_grid(config, grid_log2)
    ns = list(ns) if ns is not None else list(range(1, config.k_max + 1))
    rep = ResonantLimitReport(config.C, delta, v_theta, ns, [], [], [], [], [], [], [], grid_log2)
    x = np.arange(2**grid_log2) / 2**grid_log2
    for n in ns:
        fl = build_lacunary(config, grid_log2, n)
        J_W = j_infinity(derivative(fl.W_n), fl.spec)
        mixed_W = resonant(J_W, fl.V)
        mixed_V = resonant(fl.F_n, fl.V)
        D = mixed_W - mixed_V
        rep.norm_Vn_minus_V.append(besov_norm(fl.V_n - fl.V, v_theta))
        rep.norm_Wn_minus_V.append(besov_norm(fl.W_n - fl.V, v_theta))
        rep.norm_Dn_minus_C.append(besov_norm(D - config.C, -delta))
        rep.predicted_Dn_norm.append(abs(config.C) * 2.0 ** (-(n + 1) * delta))
        rep.zero_mode.append(float(D.mean().real))
        rep.impurity.append(_impurity(D, config.C, 2 ** (n + 1)))
        limit = -sum(config.a(k) ** 2 / (2 * np.pi * 2**k) * np.sin(2 * np.pi * 2 ** (k + 1) * x) for k in range(1, n + 1))
        rep.limit_field_error.append(float(np.abs(mixed_V.real_values() - limit).max()))
    return rep


def second_order_limit(config: LacunaryConfig, grid_log2: int, spec: MultiplierSpec | None = None) -> tuple:
    """Resonant data of the two sequences as ``(limit field of V^n, offset C for W^n)``."""
    fl = build_lacunary(config, grid_log2, config.k_max, spec)
    return resonant(fl.F, fl.V), config.C


def leibniz_check(config: LacunaryConfig, grid_log2: int, n: int) -> dict:
    """Sup norms of ``K(V^n) o V^n + 1/2 d(v^n o v^n)`` with ``d v^n = V^n``.

    ``literal`` uses ``K = J^inf``; ``laplacian`` uses ``K = (-Laplace)^{-1} d``,
    for which the identity is the Leibniz rule.  ``scale`` is the sup norm of
    ``1/2 d(v^n o v^n)`` for comparison.
    """
    fl = build_lacunary(config, grid_log2, n)
    v = inverse_laplacian(-derivative(fl.V_n))
    if not np.allclose(derivative(v).coeffs, fl.V_n.coeffs, atol=1e-12):
        raise ConfigurationError("V^n has a zero mode; no periodic antiderivative")
    half = derivative(resonant(v, v)) * 0.5
    literal = resonant(fl.F_n, fl.V_n) + half
    lap = resonant(inverse_laplacian(derivative(fl.V_n)), fl.V_n) + half
    return {"n": n, "literal": literal.sup(), "laplacian": lap.sup(), "scale": half.sup()}


# ---------------------------------------------------------------------------
# iterated integrals of weak solutions


@dataclass(eq=False)
class RoughWeakSolutionData:
    """Drift path ``Z``, the integrand ``A = J^T(d_i V^{m,j})(t, X_t)`` and the iterated integral.

    ``integrators[i]`` pairs ``Z^i`` with the row ``A[..., i, :]``; its
    compensated increment is ``ZZ_{st}(i, :)``.
    """

    X: object
    Z: object
    L: object
    A: np.ndarray
    integrators: list
    norms: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.integrators[0].times

    def ZZ(self, s_idx, t_idx) -> np.ndarray:
        """``ZZ_{st}(i, j)``, shape ``(M, cells, d, d)``."""
        return np.stack([zi.zz(s_idx, t_idx) for zi in self.integrators], axis=-2)

    def AA(self, s_idx, t_idx) -> np.ndarray:
        """``int_s^t A_r(i, j) dZ^i_r``, shape ``(M, cells, d, d)``."""
        return np.stack([zi.AA[:, t_idx] - zi.AA[:, s_idx] for zi in self.integrators], axis=-2)

    def chen_defect(self, s_idx, l_idx, t_idx) -> float:
        return max(float(np.abs(zi.chen_defect(s_idx, l_idx, t_idx)).max()) for zi in self.integrators)


def _as_components(V) -> list:
    if isinstance(V, (PeriodicField, TimeField)):
        return [V]
    return list(getattr(V, "components", V))


def _jt_gradient_sampler(V_m, T: float, spec: MultiplierSpec, max_direct_modes: int):
    comps = _as_components(V_m)
    d = len(comps)

    def at(r: float):
        return [[jT(derivative(_at(comps[j], r), i), r, T, spec) for j in range(d)] for i in range(d)]

    def evaluate(r: float, x: np.ndarray) -> np.ndarray:
        fields = at(r)
        return np.stack([np.stack([FieldEvaluator(f, max_direct_modes)(x) for f in row], axis=-1) for row in fields], axis=-2)

    return evaluate, d


def _at(c, r):
    return c if isinstance(c, PeriodicField) else c.at(r)


def assemble_zz(
    sol: SolutionEnsemble,
    V_m,
    V_n=None,
    T: float | None = None,
    mesh=None,
    spec: MultiplierSpec | None = None,
    beta: float | None = None,
    branching: SDEBranching | None = None,
    inner: int = 100,
    max_direct_modes: int = 256,
) -> RoughWeakSolutionData:
    """Iterated integrals ``ZZ^{m,n}_{st}(i,j) = int_s^t [A_r - A_s](i,j) dZ^{n,i}_r`` along the paths.

    ``sol`` must be an Euler solution with drift ``V_n`` (checked when ``V_n``
    is given); ``dZ^n`` is its drift increment, so the left-point sums are the
    exact iterated integrals of the discrete scheme and the Chen relation holds
    identically.  With ``beta`` the plain Holder norms of ``Z`` and ``ZZ`` are
    estimated on ``mesh`` with exponent ``(alpha + beta)/alpha``; with a
    ``branching`` sampler the conditional norms are added.
    """
    t = sol.times
    T = float(t[-1]) if T is None else T
    if T < t[-1] - 1e-12:
        raise ShapeError("horizon T ends before the solution grid")
    if V_n is not None:
        mine = [_at(c, 0.0).coeffs for c in _as_components(V_n)]
        theirs = [f.coeffs for f in sol.drift.fields_at(0.0)]
        if len(mine) != len(theirs) or any(a.shape != b.shape or not np.allclose(a, b) for a, b in zip(mine, theirs)):
            raise ShapeError("V_n differs from the drift of the solution ensemble")
    spec = spec or MultiplierSpec.canonical(sol.drift.dim, sol.alpha or 2.0)
    evaluate, d = _jt_gradient_sampler(V_m, T, spec, max_direct_modes)
    if d != sol.drift.dim:
        raise ShapeError("V_m and the solution live in different dimensions")
    if mesh is not None:
        m = np.asarray(mesh)
        if m.size and (m.min() < 0 or m.max() >= t.size or np.any(m[:, 0] >= m[:, 1])):
            raise ShapeError("mesh indices do not fit the recorded grid")
    X = sol.X.values
    A = np.stack([evaluate(r, X[:, k]) for k, r in enumerate(t)], axis=1)
    Z = sol.Z.values
    integrators = [RoughIntegrator.from_quadrature(t, A[:, :, i, :], Z[:, :, i]) for i in range(d)]
    data = RoughWeakSolutionData(sol.X, sol.Z, sol.L, A, integrators,
                                 meta={"T": T, "quadrature": "left point on the recorded grid",
                                       "record_every": sol.record_every})
    if beta is not None:
        alpha = sol.alpha or spec.alpha
        th1 = (alpha + beta) / alpha
        th2 = (2 * alpha + 2 * beta - 1) / alpha
        mesh = mesh if mesh is not None else dyadic_mesh(t.size - 1, max_cells=64)
        zz = lambda s, u: data.ZZ(s, u).reshape(*np.shape(data.ZZ(s, u))[:2], -1)
        data.norms["Z"] = hoelder_norm(sol.Z, th1, 2, mesh)
        data.norms["ZZ"] = hoelder_norm(zz, th1, 2, mesh, t)
        if branching is not None:
            data.norms["Z|F"] = conditional_hoelder_norm(branching, th1, mesh, inner)
            data.norms["ZZ|F"] = conditional_hoelder_norm(_ZZBranching(branching, evaluate, A), th2, mesh, inner)
    return data


@dataclass(eq=False)
class _ZZBranching:
    """Continuations returning ``ZZ_{st}`` flattened to ``(outer, inner, d*d)``."""

    base: SDEBranching
    evaluate: Callable
    A: np.ndarray

    @property
    def times(self):
        return self.base.times

    def branch(self, s_idx, t_idx, inner):
        _, z, aa = self.base.continue_paths(s_idx, t_idx, inner, integrand=self.evaluate)
        outer = z.shape[0]
        As = self.A[:outer, s_idx][:, None]
        zz = aa - As * z[..., None]
        return zz.reshape(outer, inner, -1)


# ---------------------------------------------------------------------------
# class K diagnostic


@dataclass
class ClassKReport:
    """Magnitude of the conditional class-K increment per scale, with a log-log fit."""

    exponent: float
    intercept: float
    scales: np.ndarray
    magnitudes: np.ndarray
    theta: float | None
    trivial_exponent: float | None
    mesh: list
    inner: int
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "intercept": self.intercept,
            "scales": self.scales.tolist(),
            "magnitudes": self.magnitudes.tolist(),
            "theta": self.theta,
            "trivial_exponent": self.trivial_exponent,
            "inner": self.inner,
            "degenerate": self.degenerate,
        }


def _class_k_mesh(times: np.ndarray, terminal_times, min_step: int = 1) -> list[tuple[int, int]]:
    mesh = []
    for tt in terminal_times:
        ti = int(np.argmin(np.abs(times - tt)))
        if abs(times[ti] - tt) > 1e-9 * max(1.0, tt):
            raise ShapeError(f"terminal time {tt} is not on the recorded grid")
        w = min_step
        while ti - w >= 0:
            mesh.append((ti - w, ti))
            w *= 2
    return mesh


def class_k_diagnostic(
    sol: SolutionEnsemble,
    reps,
    mesh=None,
    beta: float | None = None,
    inner: int = 0,
    branching: SDEBranching | None = None,
    outer: int | None = None,
    max_direct_modes: int = 256,
) -> ClassKReport:
    """Conditional class-K increment
    ``Q_{st}(i, j) = E_s[v^{t,i,j}_{st} - J^T(d_i V^j)(s, X_s) u^{t,i}_{st}]``.

    ``reps`` holds the backward solutions ``u^t`` and ``v^t`` for each
    terminal time (see ``kolmogorov.backward_representations``).  With
    ``inner = 0`` the conditional expectation of the terminal terms uses that
    ``u^t(t, .) = v^t(t, .) = 0`` exactly; with ``inner > 0`` and a
    ``branching`` sampler it is estimated from fresh continuations.  The
    magnitude at each scale ``t - s`` is the largest ``|Q|`` over outer paths,
    entries and terminal times; the exponent is fitted over the finer half of
    the scales, where the small-time asymptotics apply.
    """
    if reps is None or not getattr(reps, "u", None) or not getattr(reps, "v", None):
        raise DependencyError("class-K diagnostic needs the backward solutions u^t and v^t")
    if inner > 0 and branching is None:
        raise ConfigurationError("inner continuations need a branching sampler")
    times = sol.times
    mesh = mesh if mesh is not None else _class_k_mesh(times, [t for t in reps.terminal_times if t > 0])
    X = sol.X.values
    P = X.shape[0] if outer is None else min(outer, X.shape[0])
    d = X.shape[2]
    width, mags = [], []
    for s_idx, t_idx in mesh:
        s, t = float(times[s_idx]), float(times[t_idx])
        key = min(reps.u, key=lambda q: abs(q - t))
        if abs(key - t) > 1e-9 * max(1.0, t):
            raise DependencyError(f"no backward solution with terminal time {t}")
        us, vs = reps.u[key], reps.v[key]
        jt = reps.jt_gradient(s)
        xs = X[:P, s_idx]
        Q = np.zeros((P, d, d))
        if inner > 0:
            xt, _ = branching.continue_paths(s_idx, t_idx, inner)
            xt = xt[:P].reshape(-1, d)
        for i in range(d):
            ui_s = FieldEvaluator(us[i].at(s), max_direct_modes)(xs)
            ui_t = 0.0
            if inner > 0:
                ui_t = FieldEvaluator(us[i].at(t), max_direct_modes)(xt).reshape(P, inner).mean(axis=1)
            for j in range(d):
                vij_s = FieldEvaluator(vs[i][j].at(s), max_direct_modes)(xs)
                vij_t = 0.0
                if inner > 0:
                    vij_t = FieldEvaluator(vs[i][j].at(t), max_direct_modes)(xt).reshape(P, inner).mean(axis=1)
                a = FieldEvaluator(jt[i][j], max_direct_modes)(xs)
                Q[:, i, j] = (vij_t - vij_s) - a * (ui_t - ui_s)
        width.append(t - s)
        mags.append(float(np.abs(Q).max()))
    width = np.array(width)
    mags = np.array(mags)
    scales = np.unique(np.round(width, 14))
    per = np.array([mags[np.isclose(width, w, rtol=1e-9, atol=0)].max() for w in scales])
    alpha = sol.alpha or reps.spec.alpha
    theta = (2 * alpha + 2 * beta - 1) / alpha if beta is not None else None
    trivial = (alpha + beta) / alpha if beta is not None else None
    if np.all(per == 0) or scales.size < 2:
        return ClassKReport(float("nan"), float("nan"), scales, per, theta, trivial, list(mesh), inner, True)
    fine = np.arange(scales.size) < max(2, (scales.size + 1) // 2)
    ok = (per > 0) & fine
    coef = np.polyfit(np.log2(scales[ok]), np.log2(per[ok]), 1)
    return ClassKReport(float(coef[0]), float(coef[1]), scales, per, theta, trivial, list(mesh), inner)
