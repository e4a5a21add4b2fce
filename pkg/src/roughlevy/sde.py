"""Euler simulation of ``dX = V(t, X) dt + dL`` with mollified periodic drifts.

The drift part ``Z_t = int_0^t V(s, X_s) ds`` is accumulated with the same
left-point rule as the Euler step, and ``X`` is stored as ``x0 + Z + L`` so the
decomposition holds exactly on the grid.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InsufficientDataError, NumericError, ShapeError
from .evaluation import DEFAULT_MAX_DIRECT_MODES, FieldEvaluator
from .levy import LevyConfig, PathEnsemble, path_increments
from .spectral import (
    MultiplierSpec,
    PeriodicField,
    TimeField,
    apply_multiplier,
    derivative,
    semigroup,
)

__all__ = [
    "DriftSpec",
    "SolutionEnsemble",
    "HolderFitReport",
    "ItoResidual",
    "SDEBranching",
    "mollify",
    "lacunary_drift",
    "euler_solve",
    "holder_moment_bound_check",
    "ito_residual",
]


def _truncate_field(u: PeriodicField, n: int) -> PeriodicField:
    keep = u.kabs() <= 2.0**n
    return u.like(np.where(keep, u.coeffs, 0))


def mollify(V, method: str, n: int, spec: MultiplierSpec | None = None):
    """Smooth a drift.

    ``"fourier_truncation"`` keeps the modes ``|k| <= 2**n`` (the partial sums
    used for lacunary drifts); ``"heat"`` applies ``P_{1/n}`` of ``spec``
    (Brownian heat semigroup by default).  Works on fields and time fields.
    """
    if n < 1:
        raise ConfigurationError(f"mollification level must be at least 1, got {n}")
    if method not in ("fourier_truncation", "heat"):
        raise ConfigurationError(f"unknown mollification {method!r}")

    def one(u: PeriodicField) -> PeriodicField:
        if method == "fourier_truncation":
            return _truncate_field(u, n)
        s = spec or MultiplierSpec.canonical(u.dim, 2.0)
        return semigroup(u, 1.0 / n, s)

    if isinstance(V, PeriodicField):
        return one(V)
    if isinstance(V, TimeField):
        return TimeField.from_fields(V.times, [one(V.field(i)) for i in range(len(V))], V.interp)
    raise ShapeError(f"cannot mollify {type(V).__name__}")


def lacunary_drift(beta: float, n: int, k_min: int = -4, period: float = 16.0, grid_log2: int | None = None) -> PeriodicField:
    """``sum_{k=k_min}^{n} 2^{-beta k} cos(2 pi 2^k x)`` on a torus of the given period.

    The full series lies in ``C^beta``; ``n`` is the truncation level.  With
    ``period = 2^{-k_min}`` the lowest frequency is a single oscillation per
    period, so the drift is periodic with the lacunary structure intact below
    unit frequency.  The grid defaults to four points per period of the top mode.
    """
    scale = round(period * 2.0**k_min)
    if scale < 1 or abs(period * 2.0**k_min - scale) > 1e-12:
        raise ConfigurationError("period * 2**k_min must be a positive integer")
    if n < k_min:
        raise ConfigurationError(f"need n >= k_min, got n={n}, k_min={k_min}")
    top = int(np.ceil(np.log2(period))) + n + 2
    grid_log2 = top if grid_log2 is None else grid_log2
    modes = {}
    for k in range(k_min, n + 1):
        w = int(round(period * 2.0**k))
        modes[w] = modes.get(w, 0) + 0.5 * 2.0 ** (-beta * k)
        modes[-w] = modes.get(-w, 0) + 0.5 * 2.0 ** (-beta * k)
    return PeriodicField.from_modes(modes, grid_log2, 1, period)


@dataclass(frozen=True, eq=False)
class DriftSpec:
    """A (mollified) drift: one component per axis, time-constant or time-dependent."""

    components: tuple
    method: str = "none"
    level: int | None = None
    base: object = None
    max_direct_modes: int = DEFAULT_MAX_DIRECT_MODES

    def __post_init__(self):
        comps = self.components
        if isinstance(comps, (PeriodicField, TimeField)):
            comps = (comps,)
        comps = tuple(comps)
        dims = {c.dim for c in comps}
        if len(dims) != 1 or dims.pop() != len(comps):
            raise ShapeError("drift needs one component per axis of the torus")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "_cache", {})

    @classmethod
    def from_field(cls, V, method: str = "none", n: int | None = None, **kw) -> "DriftSpec":
        comps = (V,) if isinstance(V, (PeriodicField, TimeField)) else tuple(V)
        if method != "none":
            comps = tuple(mollify(c, method, n) for c in comps)
        return cls(comps, method, n, V, **kw)

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def period(self) -> float:
        return self.components[0].period

    @property
    def time_dependent(self) -> bool:
        return any(isinstance(c, TimeField) for c in self.components)

    def fields_at(self, t: float) -> list[PeriodicField]:
        return [c if isinstance(c, PeriodicField) else c.at(t) for c in self.components]

    def evaluators(self, t: float) -> list[FieldEvaluator]:
        key = 0.0 if not self.time_dependent else float(t)
        cache = self._cache
        if key not in cache:
            if self.time_dependent:
                cache.clear()
            cache[key] = [FieldEvaluator(f, self.max_direct_modes) for f in self.fields_at(t)]
        return cache[key]

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        """Drift at points ``x`` of shape ``(P, dim)``; returns ``(P, dim)``."""
        return np.stack([ev(x) for ev in self.evaluators(t)], axis=-1)

    def describe(self) -> dict:
        evs = self.evaluators(0.0)
        return {
            "method": self.method,
            "level": self.level,
            "dim": self.dim,
            "period": self.period,
            "evaluation": [e.method for e in evs],
            "interpolation_error": max(e.interpolation_error for e in evs),
            "periodic_drift_on_R": True,
        }


@dataclass(frozen=True, eq=False)
class SolutionEnsemble:
    """Euler solution: ``X = x0 + Z + L`` on the recorded grid."""

    X: PathEnsemble
    Z: PathEnsemble
    L: PathEnsemble
    drift: DriftSpec
    x0: np.ndarray
    step_times: np.ndarray
    record_every: int = 1
    alpha: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.X.times

    @property
    def M(self) -> int:
        return self.X.M


def _run_chunk(drift: DriftSpec, x0, times, rec_idx, paths, noise, levy_values):
    P = len(paths)
    d = drift.dim
    if levy_values is None:
        inc = path_increments(noise, times, paths)
    K = times.size - 1
    h = np.diff(times)
    z = np.zeros((P, d))
    lv = np.zeros((P, d))
    x = x0 + z + lv
    out_x = np.empty((P, rec_idx.size, d))
    out_z = np.empty_like(out_x)
    out_l = np.empty_like(out_x)
    r = 0
    if rec_idx[0] == 0:
        out_x[:, 0], out_z[:, 0], out_l[:, 0] = x, z, lv
        r = 1
    for m in range(K):
        v = drift(times[m], x)
        if not np.all(np.isfinite(v)):
            bad = int(paths[int(np.flatnonzero(~np.isfinite(v).all(axis=1))[0])])
            raise NumericError(f"drift is not finite on path {bad} at step {m}")
        z = z + v * h[m]
        lv = levy_values[:, m + 1] if levy_values is not None else lv + inc[:, m]
        x = x0 + z + lv
        if r < rec_idx.size and rec_idx[r] == m + 1:
            out_x[:, r], out_z[:, r], out_l[:, r] = x, z, lv
            r += 1
    return out_x, out_z, out_l


def euler_solve(
    drift: DriftSpec,
    x0,
    noise,
    times=None,
    M: int | None = None,
    record_every: int = 1,
    chunk: int = 1024,
    threads: int = 1,
) -> SolutionEnsemble:
    """Euler scheme ``X_{t+h} = X_t + V(t, X_t) h + L_{t,t+h}``.

    ``noise`` is either a ``PathEnsemble`` holding ``L`` on the step grid (the
    same noise can then be reused for several drifts) or a ``LevyConfig``, in
    which case ``times`` and ``M`` are required and increments are generated per
    path from deterministic streams, so two calls with the same config see
    identical noise.  Only every ``record_every``-th grid point is stored.
    """
    if isinstance(noise, PathEnsemble):
        times = noise.times
        M = noise.M
        if noise.dim != drift.dim:
            raise ShapeError("noise and drift dimensions differ")
        alpha = noise.meta.get("alpha")
    elif isinstance(noise, LevyConfig):
        if times is None or M is None:
            raise ConfigurationError("times and M are required when noise is a LevyConfig")
        times = np.asarray(times, dtype=float)
        if noise.dim != drift.dim:
            raise ShapeError("noise and drift dimensions differ")
        alpha = noise.alpha
    else:
        raise ShapeError("noise must be a PathEnsemble or a LevyConfig")
    K = times.size - 1
    if K % record_every:
        raise ConfigurationError("record_every must divide the number of steps")
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (drift.dim,)).copy()
    rec_idx = np.arange(0, K + 1, record_every)
    starts = list(range(0, M, chunk))

    def job(s):
        paths = np.arange(s, min(s + chunk, M))
        lv = noise.values[paths] if isinstance(noise, PathEnsemble) else None
        return _run_chunk(drift, x0, times, rec_idx, paths, noise, lv)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(job, starts))
    else:
        parts = [job(s) for s in starts]
    X, Z, L = (np.concatenate([p[i] for p in parts]) for i in range(3))
    rec_t = times[rec_idx]
    meta = {"record_every": record_every, "steps": K, "alpha": alpha, "drift": drift.describe()}
    if isinstance(noise, LevyConfig):
        meta.update(noise.describe())
    return SolutionEnsemble(
        PathEnsemble(rec_t, X, meta),
        PathEnsemble(rec_t, Z, meta),
        PathEnsemble(rec_t, L, meta),
        drift,
        x0,
        times,
        record_every,
        alpha,
        meta,
    )


@dataclass(eq=False)
class SDEBranching:
    """Fresh Euler continuations of recorded paths, for nested Monte Carlo.

    ``branch(s, t, inner)`` restarts ``inner`` independent copies of the first
    ``outer`` paths from ``X_s`` and returns their drift increments
    ``Z_{st}`` with shape ``(outer, inner, dim)``.  The noise of each
    continuation comes from a stream keyed by ``(seed, s, t)`` and the path
    index, so results do not depend on call order.
    """

    sol: SolutionEnsemble
    noise: LevyConfig
    outer: int | None = None

    def __post_init__(self):
        if self.sol.record_every != 1:
            raise ShapeError("branching needs the ensemble recorded at every Euler step")
        if self.noise.dim != self.sol.drift.dim:
            raise ShapeError("noise and drift dimensions differ")

    @property
    def times(self) -> np.ndarray:
        return self.sol.times

    def continue_paths(self, s_idx: int, t_idx: int, inner: int, integrand=None):
        """End states ``X_t`` and increments ``Z_{st}``, each ``(outer, inner, dim)``.

        With ``integrand(t, x) -> (P, dim, k)`` the left-point sums of
        ``int_s^t integrand(r, X_r)[i, :] dZ^i_r`` are returned as a third
        array of shape ``(outer, inner, dim, k)``.
        """
        if not 0 <= s_idx < t_idx < self.times.size:
            raise ShapeError(f"need 0 <= s < t < {self.times.size}, got ({s_idx}, {t_idx})")
        outer = self.sol.M if self.outer is None else min(self.outer, self.sol.M)
        d = self.sol.drift.dim
        key = np.random.SeedSequence((int(self.noise.seed), int(s_idx), int(t_idx))).generate_state(1, np.uint64)[0]
        cfg = LevyConfig(self.noise.alpha, self.noise.multiplier, int(key))
        t = self.times[s_idx : t_idx + 1]
        inc = path_increments(cfg, t, range(outer * inner))
        x = np.repeat(self.sol.X.values[:outer, s_idx], inner, axis=0)
        z = np.zeros_like(x)
        h = np.diff(t)
        acc = None
        for m in range(h.size):
            v = self.sol.drift(t[m], x) * h[m]
            if integrand is not None:
                term = integrand(t[m], x) * v[:, :, None]
                acc = term if acc is None else acc + term
            z += v
            x = x + v + inc[:, m]
        out = x.reshape(outer, inner, d), z.reshape(outer, inner, d)
        if integrand is not None:
            out = out + (acc.reshape(outer, inner, d, -1),)
        return out

    def branch(self, s_idx: int, t_idx: int, inner: int) -> np.ndarray:
        return self.continue_paths(s_idx, t_idx, inner)[1]


# ---------------------------------------------------------------------------
# Holder moment bound


@dataclass
class HolderFitReport:
    """Log-log fit of ``E|Z_{r,r+delta}|**rho`` against ``delta``."""

    slope: float
    intercept: float
    residual: float
    expected_slope: float | None
    scales: np.ndarray
    moments: np.ndarray
    local_slopes: np.ndarray
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "residual": self.residual,
            "expected_slope": self.expected_slope,
            "scales": self.scales.tolist(),
            "moments": self.moments.tolist(),
            "local_slopes": self.local_slopes.tolist(),
            "degenerate": self.degenerate,
        }


def _dyadic_scales(times: np.ndarray, start: int) -> list[int]:
    K = times.size - 1
    steps, d = [], 1
    while (K - start) // d >= 4:
        steps.append(d)
        d *= 2
    return steps


def holder_moment_bound_check(
    ens: SolutionEnsemble,
    theta: float,
    rho: int = 2,
    alpha: float | None = None,
    scales: Sequence[float] | None = None,
    burn_in: float = 0.25,
    min_scales: int = 6,
) -> HolderFitReport:
    """Fit the growth exponent of the ``rho``-th moment of drift increments.

    Increments ``Z_{r, r+delta}`` over consecutive non-overlapping windows of
    ``[burn_in * T, T]`` are pooled over paths at each dyadic scale
    ``delta``; the slope of ``log2 E|Z|**rho`` against ``log2 delta`` is
    compared with ``theta * rho / alpha``.
    """
    if rho not in (2, 4):
        raise ConfigurationError(f"rho must be 2 or 4, got {rho}")
    t = ens.times
    h = t[1] - t[0]
    if not np.allclose(np.diff(t), h):
        raise ShapeError("Holder fit needs a uniform recorded grid")
    start = int(np.ceil(burn_in * (t.size - 1)))
    if scales is None:
        steps = _dyadic_scales(t, start)
    else:
        steps = [int(round(s / h)) for s in scales]
        if any(s < 1 or abs(s * h - sc) > 1e-9 * sc for s, sc in zip(steps, scales)):
            raise ShapeError("scales must be multiples of the recorded step")
    if len(steps) < min_scales:
        raise InsufficientDataError(f"{len(steps)} mesh scales available, at least {min_scales} needed")
    Z = ens.Z.values
    moments = []
    for s in steps:
        inc = np.diff(Z[:, start::s], axis=1)
        moments.append(np.mean(np.sum(inc * inc, axis=-1) ** (rho / 2)))
    moments = np.array(moments)
    delta = np.array(steps) * h
    alpha = alpha if alpha is not None else ens.alpha
    expected = theta * rho / alpha if alpha else None
    if np.all(moments == 0):
        nan = float("nan")
        return HolderFitReport(nan, nan, nan, expected, delta, moments, np.full(len(steps) - 1, nan), True)
    lx, ly = np.log2(delta), np.log2(moments)
    coef = np.polyfit(lx, ly, 1)
    resid = float(np.sqrt(np.mean((np.polyval(coef, lx) - ly) ** 2)))
    local = np.diff(ly) / np.diff(lx)
    return HolderFitReport(float(coef[0]), float(coef[1]), resid, expected, delta, moments, local)


# ---------------------------------------------------------------------------
# Ito residual


@dataclass
class ItoResidual:
    """Sample mean and standard error of the Ito-formula residual ``R_T``."""

    mean: float
    se: float
    samples: np.ndarray
    dynkin_mean: float | None = None
    dynkin_se: float | None = None
    interpolation_error: float = 0.0

    @property
    def z_score(self) -> float:
        return self.mean / self.se if self.se > 0 else (0.0 if self.mean == 0 else np.inf)


def _field_source(u):
    if isinstance(u, PeriodicField):
        return lambda t: u
    if isinstance(u, TimeField):
        return u.at
    if hasattr(u, "u") and isinstance(u.u, TimeField):
        return u.u.at
    if callable(u):
        return u
    raise ShapeError(f"cannot evaluate {type(u).__name__} in time")


def ito_residual(u, ens: SolutionEnsemble, spec: MultiplierSpec, f=None, max_direct_modes: int = DEFAULT_MAX_DIRECT_MODES) -> ItoResidual:
    """Residual of the Ito formula along Euler paths.

    ``R_T = u(T, X_T) - u(0, x) - int (d_s - L)u(s, X_s) ds - int grad u(s, X_s) . dZ_s``
    with the time derivative integrated exactly along the grid,
    ``int_{t_m}^{t_{m+1}} d_s u(s, X_{t_m}) ds = u(t_{m+1}, X_{t_m}) - u(t_m, X_{t_m})``,
    and the spatial terms evaluated at ``(t_{m+1}, X_{t_m})``.  What remains is
    the martingale part, so ``E R_T = O(h)``.

    When the source ``f`` with ``G u = f`` is supplied, the Dynkin residual
    ``u(T, X_T) - u(0, x) - int f(s, X_s) ds`` is reported as well.
    """
    if ens.record_every != 1:
        raise ShapeError("Ito residual needs the ensemble recorded at every Euler step")
    src = _field_source(u)
    t = ens.times
    X = ens.X.values
    Z = ens.Z.values
    d = X.shape[2]
    err = 0.0

    def ev(field_):
        nonlocal err
        e = FieldEvaluator(field_, max_direct_modes)
        err = max(err, e.interpolation_error)
        return e

    u_prev = ev(src(t[0]))
    R = -u_prev(X[:, 0])
    fsrc = _field_source(f) if f is not None else None
    D = -u_prev(X[:, 0]) if f is not None else None
    for m in range(t.size - 1):
        h = t[m + 1] - t[m]
        un = src(t[m + 1])
        u_next = ev(un)
        xm = X[:, m]
        R -= u_next(xm) - u_prev(xm)
        R += h * ev(apply_multiplier(un, spec))(xm)
        dz = Z[:, m + 1] - Z[:, m]
        for a in range(d):
            R -= ev(derivative(un, a))(xm) * dz[:, a]
        if fsrc is not None:
            D -= h * ev(fsrc(t[m]))(xm)
        u_prev = u_next
    R += u_prev(X[:, -1])
    M = R.size
    out = ItoResidual(float(R.mean()), float(R.std(ddof=1) / np.sqrt(M)), R, interpolation_error=err)
    if D is not None:
        D += u_prev(X[:, -1])
        out.dynkin_mean = float(D.mean())
        out.dynkin_se = float(D.std(ddof=1) / np.sqrt(M))
    return out
