"""Backward Kolmogorov equation ``G u = f``, ``u(T) = u_T`` with ``G = d_t - L + V . grad``.

``L`` is the multiplier with symbol ``psi`` (so ``-L`` generates the Levy
process).  The mild form is

    u_t = P_{T-t} u_T + int_t^T P_{s-t} (V_s . grad u_s - f_s) ds,

solved backwards in time.  On each slab the forcing ``g = V . grad u - f`` is
interpolated linearly in time and the semigroup part is integrated exactly
(exponential trapezoidal rule); the implicit end value is found by a local
Picard iteration.  The time grid is refined geometrically towards ``T``
because every mode relaxes towards ``-g / psi`` on the time scale ``1/psi``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ConvergenceError, ShapeError
from .spectral import (
    MultiplierSpec,
    PeriodicField,
    TimeField,
    _from_padded_values,
    _to_padded_values,
    besov_norm,
    derivative,
    derivative_symbol,
    exponential_moments,
    jT,
    product,
    shift,
)

__all__ = [
    "BackwardSolution",
    "WeightedNormSpec",
    "BackwardRepresentations",
    "NonuniquenessReport",
    "time_grid",
    "solve_backward",
    "pde_residual",
    "backward_representations",
    "nonuniqueness_experiment",
]


def time_grid(T: float, hmax: float, hmin: float | None = None, ratio: float = 1.01, t0: float = 0.0) -> np.ndarray:
    """Nodes on ``[t0, T]`` with steps growing geometrically from ``hmin`` (at ``T``) to ``hmax``.

    ``hmin=None`` or ``ratio=1`` gives uniform steps of at most ``hmax``.
    """
    L = T - t0
    if L < 0:
        raise ConfigurationError("need t0 <= T")
    if L == 0:
        return np.array([T])
    if hmin is None or ratio == 1.0:
        K = int(np.ceil(L / hmax - 1e-12))
        return np.linspace(t0, T, K + 1)
    taus = [0.0]
    h = hmin
    while taus[-1] < L * (1 - 1e-14):
        taus.append(min(L, taus[-1] + h))
        h = min(h * ratio, hmax)
    if len(taus) > 2 and L - taus[-2] < 0.5 * (taus[-2] - taus[-3]):
        # split the last two steps evenly instead of leaving a sliver
        taus[-2] = 0.5 * (taus[-3] + L)
    return T - np.array(taus)[::-1]


@dataclass(frozen=True)
class WeightedNormSpec:
    """Parameters of the blow-up weighted norms used for diagnostics only."""

    gamma: float = 0.0
    theta: float = 1.0
    T: float = 1.0

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ConfigurationError("gamma must lie in [0, 1)")

    def norm(self, sol: "BackwardSolution") -> float:
        """``sup_t (T - t)**gamma ||u_t||_{C^theta}`` over the stored nodes."""
        t = sol.u.times
        vals = [(self.T - ti) ** self.gamma * besov_norm(sol.u.field(i), self.theta) for i, ti in enumerate(t)]
        return float(max(vals))


@dataclass(eq=False)
class BackwardSolution:
    """Solution on the stored nodes; ``u.at(t)`` interpolates linearly in time."""

    u: TimeField
    residual_norm: float
    iterations: int
    drift_level: int | None = None
    meta: dict = field(default_factory=dict)

    def at(self, t: float) -> PeriodicField:
        return self.u.at(t)

    @property
    def times(self) -> np.ndarray:
        return self.u.times


def _components(V, dim_hint=None):
    if V is None:
        return []
    if isinstance(V, (PeriodicField, TimeField)):
        return [V]
    comps = getattr(V, "components", V)
    return list(comps)


def _at(src, t):
    if src is None:
        return None
    if isinstance(src, PeriodicField):
        return src
    if isinstance(src, TimeField):
        return src.at(t)
    if callable(src):
        return src(t)
    raise ShapeError(f"cannot evaluate {type(src).__name__} at a time")


class _Forcing:
    """``g(t, u) = V(t) . grad u - f(t)`` in coefficient space with dealiased products."""

    def __init__(self, V, f, template: PeriodicField):
        self.comps = _components(V)
        self.f = f
        self.template = template
        self.dsym = [derivative_symbol(template, a) for a in range(template.dim)]
        self.static = all(isinstance(c, PeriodicField) for c in self.comps)
        self._vals = None
        self._vals_t = None
        if self.comps and len(self.comps) != template.dim:
            raise ShapeError("drift needs one component per axis")
        for c in self.comps:
            fc = _at(c, 0.0) if not isinstance(c, TimeField) else c.field(0)
            template.compatible(fc)

    def _padded_drift(self, t):
        if self.static and self._vals is not None:
            return self._vals
        if not self.static and self._vals_t == t:
            return self._vals
        self._vals = [_to_padded_values(_at(c, t).coeffs) for c in self.comps]
        self._vals_t = t
        return self._vals

    def __call__(self, t, c) -> np.ndarray:
        out = np.zeros_like(c)
        if self.comps:
            acc = None
            for vp, ds in zip(self._padded_drift(t), self.dsym):
                term = vp * _to_padded_values(ds * c)
                acc = term if acc is None else acc + term
            out = _from_padded_values(acc)
        if self.f is not None:
            fv = self.f if np.isscalar(self.f) else _at(self.f, t)
            if np.isscalar(fv):
                out[(0,) * c.ndim] -= fv
            else:
                out = out - fv.coeffs
        return out


def _weighted_l1(c: np.ndarray, weight: np.ndarray) -> float:
    return float(np.sum(weight * np.abs(c)))


def solve_backward(
    V,
    f,
    uT: PeriodicField,
    spec: MultiplierSpec,
    T: float,
    tol: float = 1e-12,
    times: np.ndarray | None = None,
    hmax: float | None = None,
    hmin: float | None = 1e-10,
    ratio: float = 1.01,
    max_iter: int = 60,
    norm_theta: float = 1.0,
    store_every: int = 1,
    drift_level: int | None = None,
    compute_residual: bool = True,
) -> BackwardSolution:
    """Mild solution of ``G u = f`` on ``[times[0], T]`` with ``u(T) = uT``.

    ``V`` is ``None``, a field, a time field, a callable of time or a sequence of
    components; ``f`` is ``None``, a scalar, a field, a time field or a callable.
    The local Picard iteration stops when successive iterates differ by less
    than ``tol`` in the weighted l1 norm ``sum (1 + |k|)**norm_theta |c_k|``,
    which dominates the ``C^norm_theta`` norm.
    """
    if times is None:
        hmax = hmax if hmax is not None else max(T, 1e-300) / 1024
        times = time_grid(T, hmax, hmin, ratio)
    times = np.asarray(times, dtype=float)
    if abs(times[-1] - T) > 1e-12 * max(1.0, T):
        raise ConfigurationError("time grid must end at T")
    g = _Forcing(V, f, uT)
    psi = spec.grid_symbol(uT)
    weight = (1.0 + uT.kabs()) ** norm_theta
    K = times.size - 1
    keep = [i for i in range(K + 1) if i % store_every == 0 or i == K]
    stored = {K: uT.coeffs.copy()}
    u_next = uT.coeffs.copy()
    g_next = g(times[K], u_next)
    max_it = 0
    total_it = 0
    for m in range(K - 1, -1, -1):
        h = times[m + 1] - times[m]
        m0, m1, _ = exponential_moments(psi, h)
        base = np.exp(-psi * h) * u_next + m1 * g_next
        um = u_next
        w = m0 - m1
        for it in range(1, max_iter + 1):
            new = base + w * g(times[m], um)
            diff = _weighted_l1(new - um, weight)
            um = new
            if diff < tol:
                break
        else:
            raise ConvergenceError(
                f"local Picard iteration did not converge on slab [{times[m]:.3g}, {times[m + 1]:.3g}]; "
                f"last increment {diff:.3e}. Shrink the time step or lower the drift level.",
                residual=diff,
            )
        if not np.all(np.isfinite(um)):
            raise ConvergenceError(f"non-finite solution at t={times[m]}", residual=np.inf)
        max_it = max(max_it, it)
        total_it += it
        u_next = um
        g_next = g(times[m], um)
        if m in keep or m == 0:
            stored[m] = um
    idx = sorted(stored)
    u = TimeField(times[idx], np.stack([stored[i] for i in idx]), uT.dim, uT.period)
    meta = {
        "slabs": K,
        "stored_nodes": len(idx),
        "tol": tol,
        "norm_theta": norm_theta,
        "max_local_iterations": max_it,
        "total_iterations": total_it,
        "scheme": "exponential trapezoidal rule with local Picard iteration",
        "grid": {"hmax": float(np.diff(times).max()) if K else 0.0, "hmin": float(np.diff(times).min()) if K else 0.0},
    }
    sol = BackwardSolution(u, float("nan"), max_it, drift_level, meta)
    if compute_residual and store_every == 1:
        sol.residual_norm = mild_residual(sol, V, f, spec, norm_theta)
    return sol


def mild_residual(sol: BackwardSolution, V, f, spec: MultiplierSpec, norm_theta: float = 1.0) -> float:
    """``sup_t ||u_t - Phi(u)_t||_{C^theta}`` with ``Phi`` the discrete mild map evaluated at ``u``."""
    t = sol.u.times
    c = sol.u.coeffs
    tmpl = sol.u.field(-1)
    g = _Forcing(V, f, tmpl)
    psi = spec.grid_symbol(tmpl)
    phi = c[-1].copy()
    g_next = g(t[-1], c[-1])
    worst = 0.0
    for m in range(t.size - 2, -1, -1):
        h = t[m + 1] - t[m]
        m0, m1, _ = exponential_moments(psi, h)
        gm = g(t[m], c[m])
        phi = np.exp(-psi * h) * phi + m1 * g_next + (m0 - m1) * gm
        g_next = gm
        worst = max(worst, besov_norm(tmpl.like(c[m] - phi), norm_theta))
    return worst


def pde_residual(sol: BackwardSolution, V, f, spec: MultiplierSpec, method: str = "duhamel") -> float:
    """Largest residual of ``d_t u - L u + V . grad u - f`` over the stored nodes (grid sup norm).

    ``"duhamel"`` integrates the equation exactly in its semigroup part over
    each pair of adjacent slabs ``[t_m, t_{m+2}]`` and approximates the forcing
    by its quadratic interpolant through the three nodes, which is independent
    of the time stepping used by the solver; the defect is divided by the pair
    length.  ``"fd"`` uses central differences in time and is only first
    order on graded grids.
    """
    t = sol.u.times
    c = sol.u.coeffs
    tmpl = sol.u.field(-1)
    g = _Forcing(V, f, tmpl)
    psi = spec.grid_symbol(tmpl)
    N = c[0].size
    G = [g(ti, ci) for ti, ci in zip(t, c)]
    worst = 0.0
    if method == "duhamel":
        for m in range(t.size - 2):
            H = t[m + 2] - t[m]
            x1 = (t[m + 1] - t[m]) / H
            m0, m1, m2 = exponential_moments(psi, H)
            w0 = (m2 - (x1 + 1) * m1 + x1 * m0) / x1
            w1 = (m2 - m1) / (x1 * (x1 - 1))
            w2 = (m2 - x1 * m1) / (1 - x1)
            r = (c[m] - np.exp(-psi * H) * c[m + 2] - (w0 * G[m] + w1 * G[m + 1] + w2 * G[m + 2])) / H
            worst = max(worst, float(np.abs(np.fft.ifftn(r) * N).max()))
    elif method == "fd":
        for m in range(1, t.size - 1):
            dt = (c[m + 1] - c[m - 1]) / (t[m + 1] - t[m - 1])
            r = dt - psi * c[m] + G[m]
            worst = max(worst, float(np.abs(np.fft.ifftn(r) * N).max()))
    else:
        raise ConfigurationError(f"unknown residual method {method!r}")
    return worst


# ---------------------------------------------------------------------------
# representations


@dataclass(eq=False)
class BackwardRepresentations:
    """``u^t`` (``G u = V^i``) and ``v^t`` (``G v = J^T(d_i V^j) V^i``), zero at ``t``."""

    terminal_times: np.ndarray
    u: dict
    v: dict
    T: float
    spec: MultiplierSpec
    drift: list

    def jt_gradient(self, r: float) -> list[list[PeriodicField]]:
        """``J^T(d_i V^j)(r)`` as a matrix indexed ``[i][j]``."""
        d = len(self.drift)
        return [[jT(derivative(self.drift[j], i), r, self.T, self.spec) for j in range(d)] for i in range(d)]


def _zero_solution(uT: PeriodicField, t: float) -> BackwardSolution:
    return BackwardSolution(TimeField(np.array([t]), uT.coeffs[None], uT.dim, uT.period), 0.0, 0)


def backward_representations(
    V,
    T: float,
    spec: MultiplierSpec,
    terminal_times: Sequence[float],
    threads: int = 1,
    include_times: Sequence[float] | None = None,
    **solver_kw,
) -> BackwardRepresentations:
    """Solve the two families of backward equations for each terminal time ``t``.

    ``V`` must be a smooth time-constant drift (field or sequence of components).
    Points of ``include_times`` before ``t`` are added to each time grid, so the
    solutions can be read there without interpolation in time.
    """
    if callable(V) and not isinstance(V, PeriodicField):
        raise ConfigurationError("representations need a time-constant drift given as fields")
    comps = _components(V)
    if not comps or not all(isinstance(c, PeriodicField) for c in comps):
        raise ConfigurationError("representations need a time-constant drift given as fields")
    d = len(comps)
    zero = PeriodicField.zeros(comps[0].grid_log2, comps[0].dim, comps[0].period)

    def jt_src(i, j):
        dV = derivative(comps[j], i)
        return lambda r: product(jT(dV, r, T, spec), comps[i])

    def one(t):
        if t <= 0:
            us = [_zero_solution(zero, 0.0) for _ in range(d)]
            vs = [[_zero_solution(zero, 0.0) for _ in range(d)] for _ in range(d)]
            return us, vs
        kw = dict(solver_kw)
        hmax = kw.pop("hmax", t / 1024)
        grid = time_grid(t, hmax, kw.pop("hmin", 1e-10), kw.pop("ratio", 1.01))
        if include_times is not None:
            extra = np.asarray(include_times, dtype=float)
            grid = np.union1d(grid, extra[(extra >= 0) & (extra < t)])
            grid = grid[np.concatenate([[True], np.diff(grid) > 1e-13 * max(1.0, t)])]
            grid[-1] = t
        kw["times"] = grid
        us = [solve_backward(comps, comps[i], zero, spec, t, **kw) for i in range(d)]
        vs = [[solve_backward(comps, jt_src(i, j), zero, spec, t, **kw) for j in range(d)] for i in range(d)]
        return us, vs

    tt = [float(t) for t in terminal_times]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            res = list(pool.map(one, tt))
    else:
        res = [one(t) for t in tt]
    return BackwardRepresentations(np.array(tt), {t: r[0] for t, r in zip(tt, res)},
                                   {t: r[1] for t, r in zip(tt, res)}, T, spec, comps)


# ---------------------------------------------------------------------------
# non-uniqueness experiment


@dataclass
class NonuniquenessReport:
    n: int
    C: float
    T: float
    s: float
    x0: float
    shift_defect: float
    shift_defect_opposite: float
    u_value: float
    w_value: float
    u_shifted_value: float
    pde_gap: float
    limit_gap: float
    mc_mean_1: float | None = None
    mc_mean_2: float | None = None
    mc_gap: float | None = None
    mc_gap_se: float | None = None
    M: int = 0
    h: float | None = None
    inconclusive: bool = False
    required_M: float | None = None
    meta: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {k: (v if not isinstance(v, np.generic) else v.item()) for k, v in self.__dict__.items()}


def _point_value(u: PeriodicField, x: float) -> float:
    k = u.k()[0] / u.period
    return float(np.real(np.sum(u.coeffs * np.exp(2j * np.pi * k * x))))


def nonuniqueness_experiment(
    config,
    n: int,
    T: float = 1.0,
    s: float = 0.5,
    x0: float = 0.0,
    M: int = 0,
    grid_log2: int = 12,
    h: float = 2.0**-12,
    seed: int = 7,
    hmax: float = 1 / 400,
    hmin: float = 1e-9,
    ratio: float = 1.05,
    threads: int = 1,
) -> NonuniquenessReport:
    """Compare the drifts ``V^n`` and ``W^n`` of the lacunary construction.

    PDE half: solves ``G^{V^n} u_n = V^n`` and ``G^{W^n} w_n = W^n`` with zero
    terminal data and measures ``sup_t ||w_n(t) - u_n(t, . - (T-t)C)||_inf``.
    Monte Carlo half (``M > 0``): Euler paths of both SDEs from ``x0`` over
    ``[0, T-s]`` on the same Brownian noise; reports the paired mean gap of the
    drift integrals with its standard error.  By Dynkin's formula
    ``E Z_{T-s} = -u(s, x0)``, so the PDE-predicted gap is ``w_n(s,x0) - u_n(s,x0)``.
    """
    from .enhancement import build_lacunary
    from .levy import LevyConfig
    from .sde import DriftSpec, euler_solve

    fields = build_lacunary(config, grid_log2, n)
    spec = MultiplierSpec.canonical(1, 2.0)
    zero = PeriodicField.zeros(grid_log2)
    tg = time_grid(T, hmax, hmin, ratio)
    u = solve_backward(fields.V_n, fields.V_n, zero, spec, T, times=tg, compute_residual=False)
    w = solve_backward(fields.W_n, fields.W_n, zero, spec, T, times=tg, compute_residual=False)
    C = config.C
    defect = 0.0
    defect_opp = 0.0
    for i, ti in enumerate(u.u.times):
        ui = u.u.field(i)
        wi = w.u.field(i)
        defect = max(defect, (wi - shift(ui, (T - ti) * C)).sup())
        defect_opp = max(defect_opp, (wi - shift(ui, -(T - ti) * C)).sup())
    us, ws = u.at(s), w.at(s)
    uv, wv = _point_value(us, x0), _point_value(ws, x0)
    ush = _point_value(shift(us, (T - s) * C), x0)
    rep = NonuniquenessReport(
        n, C, T, s, x0, defect, defect_opp, uv, wv, ush, wv - uv, ush - uv,
        meta={"slabs": int(tg.size - 1), "grid_log2": grid_log2, "mc_gap_definition": "E[Z^V] - E[Z^W]"},
    )
    if M > 0:
        K = int(round((T - s) / h))
        times = np.linspace(0.0, K * h, K + 1)
        noise = LevyConfig.brownian(1, seed)
        z1 = euler_solve(DriftSpec.from_field(fields.V_n), x0, noise, times, M, record_every=K, threads=threads)
        z2 = euler_solve(DriftSpec.from_field(fields.W_n), x0, noise, times, M, record_every=K, threads=threads)
        a = z1.Z.values[:, -1, 0]
        b = z2.Z.values[:, -1, 0]
        diff = a - b
        rep.mc_mean_1 = float(a.mean())
        rep.mc_mean_2 = float(b.mean())
        rep.mc_gap = float(diff.mean())
        rep.mc_gap_se = float(diff.std(ddof=1) / np.sqrt(M))
        rep.M = M
        rep.h = h
        if abs(rep.mc_gap) < 5 * rep.mc_gap_se:
            rep.inconclusive = True
            target = max(abs(rep.pde_gap), 1e-300)
            rep.required_M = float(M * (5 * rep.mc_gap_se / target) ** 2)
    return rep
