"""Stochastic sewing: dyadic Riemann sums of two-parameter germs.

Everything here works on path ensembles sampled on a common time grid.  Times
are addressed by grid index; a germ maps arrays of left and right indices
``(s_idx, t_idx)`` to samples of shape ``(M, cells, m)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, ShapeError

__all__ = [
    "Germ",
    "SewingResult",
    "HoelderEstimate",
    "ControlledProcess",
    "RoughIntegrator",
    "BranchingProcess",
    "sew",
    "dyadic_mesh",
    "hoelder_norm",
    "conditional_hoelder_norm",
    "rough_integral",
    "plain_integral",
    "controlled_remainder",
]


def _as_cells(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[..., None] if x.ndim == 2 else x


@dataclass(frozen=True, eq=False)
class Germ:
    """Two-parameter process ``Xi_{s,t}`` on an ensemble grid.

    ``sampler(s_idx, t_idx)`` must only use path data up to ``t_idx``.
    """

    sampler: Callable[[np.ndarray, np.ndarray], np.ndarray]
    times: np.ndarray
    m: int = 1
    adapted: bool = True
    name: str = "germ"

    def __call__(self, s_idx, t_idx) -> np.ndarray:
        s_idx = np.atleast_1d(np.asarray(s_idx, dtype=int))
        t_idx = np.atleast_1d(np.asarray(t_idx, dtype=int))
        return _as_cells(self.sampler(s_idx, t_idx))

    def defect(self, s_idx, u_idx, t_idx) -> np.ndarray:
        """``delta Xi_{s,u,t} = Xi_{st} - Xi_{su} - Xi_{ut}``."""
        return self(s_idx, t_idx) - self(s_idx, u_idx) - self(u_idx, t_idx)


@dataclass
class SewingResult:
    """Dyadic Riemann sums and their convergence diagnostics."""

    times: np.ndarray
    integral_samples: np.ndarray
    levels: np.ndarray
    level_cauchy: np.ndarray
    cauchy_rate: float
    gamma1: float
    eps1: float
    gamma2: float
    eps2: float
    divergent: bool = False
    lipschitz: float | None = None
    level_integrals: list = field(default_factory=list, repr=False)

    @property
    def integral(self) -> np.ndarray:
        """Samples of the integral over the whole interval, shape ``(M, m)``."""
        return self.integral_samples[:, -1]

    def integral_mean(self) -> np.ndarray:
        return self.integral_samples.mean(axis=0)

    def integral_se(self) -> np.ndarray:
        M = self.integral_samples.shape[0]
        if M < 2:
            return np.full(self.integral_samples.shape[1:], np.nan)
        return self.integral_samples.std(axis=0, ddof=1) / np.sqrt(M)

    def csv_rows(self) -> list[dict]:
        """Rows with columns level, cauchy_l2, t, integral_mean, integral_se."""
        mean = self.integral_mean()[:, 0]
        se = self.integral_se()[:, 0]
        cauchy = dict(zip(self.levels.tolist(), self.level_cauchy.tolist()))
        rows = []
        for lev in range(1, int(self.levels.max()) + 1 if self.levels.size else 1):
            rows.append({"level": lev, "cauchy_l2": cauchy.get(lev, ""), "t": "", "integral_mean": "", "integral_se": ""})
        for t, m_, s_ in zip(self.times, mean, se):
            rows.append({"level": "", "cauchy_l2": "", "t": float(t), "integral_mean": float(m_), "integral_se": float(s_)})
        return rows

    def diagnostics(self) -> dict:
        return {
            "cauchy_rate": self.cauchy_rate,
            "gamma1": self.gamma1,
            "eps1": self.eps1,
            "gamma2": self.gamma2,
            "eps2": self.eps2,
            "divergent": self.divergent,
            "lipschitz": self.lipschitz,
            "eps1_note": "fitted from the unconditional mean of delta Xi (a lower bound for the conditional norm)",
        }


def _end_index(times: np.ndarray, T: float | None) -> int:
    if T is None:
        return times.size - 1
    i = int(np.argmin(np.abs(times - T)))
    if abs(times[i] - T) > 1e-9 * max(1.0, T):
        raise DomainError(f"T={T} is not a grid time")
    return i


def _fit_power(x: np.ndarray, y: np.ndarray):
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if ok.sum() < 2:
        return float("nan"), float("nan")
    slope, icpt = np.polyfit(np.log2(x[ok]), np.log2(y[ok]), 1)
    return float(slope), float(2.0**icpt)


def sew(germ: Germ, levels: int, T: float | None = None, lipschitz_exponent: float | None = None) -> SewingResult:
    """Dyadic Riemann sums ``sum Xi_{t_i, t_{i+1}}`` at refinement levels ``1..levels``.

    The integral is the finest level.  ``level_cauchy[l]`` is the L2 distance
    between the totals at levels ``l`` and ``l - 1``; its decay exponent is
    fitted over the finer half of the levels.  ``gamma2, eps2`` fit
    ``||delta Xi_{s,u,t}||_{L2} ~ gamma2 |t-s|**(1/2 + eps2)`` over dyadic
    triples and ``gamma1, eps1`` fit ``|E delta Xi| ~ gamma1 |t-s|**(1 + eps1)``.
    """
    if levels < 4:
        raise ConfigurationError(f"levels must be at least 4, got {levels}")
    if not germ.adapted:
        raise ConfigurationError("germ must be adapted")
    times = np.asarray(germ.times)
    end = _end_index(times, T)
    if end % 2**levels:
        raise ShapeError(f"{end} grid steps cannot be split into 2**{levels} dyadic cells")
    totals, sums = [], []
    for lev in range(1, levels + 1):
        idx = np.arange(2**lev + 1) * (end // 2**lev)
        vals = germ(idx[:-1], idx[1:])
        cum = np.concatenate([np.zeros_like(vals[:, :1]), np.cumsum(vals, axis=1)], axis=1)
        sums.append(cum)
        totals.append(cum[:, -1])
    lev_arr = np.arange(2, levels + 1)
    cauchy = np.array([np.sqrt(np.mean(np.sum((totals[l - 1] - totals[l - 2]) ** 2, axis=-1))) for l in lev_arr])
    half = lev_arr >= max(2, (levels + 2) // 2)
    slope, _ = _fit_power(2.0 ** lev_arr[half].astype(float), cauchy[half])
    cauchy_rate = -slope if np.isfinite(slope) else float("nan")
    # exactly additive germs have zero differences at every level and are not divergent
    scale = max(float(np.sqrt(np.mean(np.sum(totals[-1] ** 2, axis=-1)))), 1e-300)
    divergent = bool(np.all(np.diff(cauchy) >= 0) and cauchy[-1] > 1e-13 * scale)
    if divergent:
        warnings.warn("dyadic Riemann sums are not Cauchy at any level", RuntimeWarning, stacklevel=2)
    # defect diagnostics over dyadic triples
    widths, l2, means = [], [], []
    for lev in range(1, levels + 1):
        step = end // 2**lev
        if step < 2:
            break
        s = np.arange(2**lev) * step
        dlt = germ.defect(s, s + step // 2, s + step)
        widths.append(times[step] - times[0])
        l2.append(np.sqrt(np.mean(np.sum(dlt**2, axis=-1), axis=0)).max())
        means.append(np.abs(dlt.mean(axis=0)).max())
    widths = np.array(widths)
    s2, g2 = _fit_power(widths, np.array(l2))
    s1, g1 = _fit_power(widths, np.array(means))
    idx = np.arange(2**levels + 1) * (end // 2**levels)
    res = SewingResult(
        times[idx], sums[-1], lev_arr, cauchy, cauchy_rate, g1, s1 - 1.0, g2, s2 - 0.5, divergent, None, sums
    )
    if lipschitz_exponent is not None:
        res.lipschitz = lipschitz_constant(res, lipschitz_exponent)
    return res


def lipschitz_constant(res: SewingResult, sigma: float) -> float:
    """``sup_{s<t} ||I_t - I_s||_{L2} / |t - s|**sigma`` over dyadic pairs of the finest partition."""
    I = res.integral_samples
    t = res.times
    n = t.size - 1
    best = 0.0
    step = 1
    while step <= n:
        s = np.arange(0, n - step + 1, step)
        inc = I[:, s + step] - I[:, s]
        l2 = np.sqrt(np.mean(np.sum(inc**2, axis=-1), axis=0))
        best = max(best, float((l2 / (t[s + step] - t[s]) ** sigma).max()))
        step *= 2
    return best


# ---------------------------------------------------------------------------
# Holder-type norms


@dataclass
class HoelderEstimate:
    """``max_{(s,t) in mesh} moment(Xi_{st}) / |t - s|**theta``."""

    theta: float
    p: float
    value: float
    mesh: list
    mode: str = "plain"
    scales: np.ndarray | None = None
    scale_values: np.ndarray | None = None
    growth_exponent: float = float("nan")
    divergent: bool = False
    variance_floor: float | None = None
    proxy_note: str = ""

    def as_dict(self) -> dict:
        return {
            "theta": self.theta,
            "p": "inf-proxy" if np.isinf(self.p) else self.p,
            "value": self.value,
            "mode": self.mode,
            "scales": None if self.scales is None else self.scales.tolist(),
            "scale_values": None if self.scale_values is None else self.scale_values.tolist(),
            "growth_exponent": self.growth_exponent,
            "divergent": self.divergent,
            "variance_floor": self.variance_floor,
            "note": self.proxy_note,
        }


def dyadic_mesh(n_steps: int, min_step: int = 1, max_cells: int | None = None) -> list[tuple[int, int]]:
    """All dyadic index pairs ``(i, i + w)`` with widths ``w = n_steps / 2**l >= min_step``."""
    mesh = []
    w = n_steps
    while w >= min_step:
        starts = np.arange(0, n_steps - w + 1, w)
        if max_cells is not None and starts.size > max_cells:
            starts = starts[np.linspace(0, starts.size - 1, max_cells).astype(int)]
        mesh.extend((int(s), int(s + w)) for s in starts)
        if w % 2:
            break
        w //= 2
    return mesh


def _parse_p(p) -> float:
    if p in ("inf", "inf-proxy", np.inf):
        return np.inf
    if p not in (2, 4):
        raise ConfigurationError(f"p must be 2, 4 or 'inf', got {p}")
    return float(p)


def _moment(x: np.ndarray, p: float) -> np.ndarray:
    """L^p norm over paths (axis 0) of the Euclidean norm over the last axis."""
    a = np.sqrt(np.sum(x * x, axis=-1))
    if np.isinf(p):
        return a.max(axis=0)
    return np.mean(a**p, axis=0) ** (1.0 / p)


def _increment_sampler(samples, times):
    if callable(samples):
        return samples, np.asarray(times)
    values = getattr(samples, "values", samples)
    times = getattr(samples, "times", times)
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        v = v[:, :, None]
    return (lambda s, t: v[:, t] - v[:, s]), np.asarray(times)


def _summarize(theta, p, mesh, times, ratios, mode, **kw) -> HoelderEstimate:
    mesh_arr = np.asarray(mesh)
    widths = times[mesh_arr[:, 1]] - times[mesh_arr[:, 0]]
    scales = np.unique(np.round(widths, 14))
    per_scale = np.array([ratios[np.isclose(widths, w, rtol=1e-9, atol=0)].max() for w in scales])
    growth = float("nan")
    divergent = False
    if scales.size >= 3 and np.all(per_scale > 0):
        slope, _ = _fit_power(scales, per_scale)
        growth = -slope
        divergent = bool(growth > 0.1 and per_scale[0] > 1.5 * per_scale[-1])
    return HoelderEstimate(theta, p, float(ratios.max()), list(map(tuple, mesh_arr.tolist())), mode, scales,
                           per_scale, growth, divergent, **kw)


def hoelder_norm(samples, theta: float, p=2, mesh: Sequence[tuple[int, int]] | None = None, times=None) -> HoelderEstimate:
    """Monte Carlo ``||Xi||_{theta, p}`` over a mesh of grid index pairs.

    ``samples`` is a path ensemble (increments ``X_t - X_s`` are used), an array
    ``(M, K + 1[, m])`` together with ``times``, or a two-parameter sampler
    ``(s_idx, t_idx) -> (M, cells, m)``.  ``p = "inf"`` gives the max-over-paths
    proxy.  The per-scale maxima are kept; if they grow like a negative power of
    the scale the estimate is flagged divergent.
    """
    p = _parse_p(p)
    inc, times = _increment_sampler(samples, times)
    if mesh is None:
        mesh = dyadic_mesh(times.size - 1)
    if len(mesh) == 0:
        raise DomainError("empty mesh")
    m = np.asarray(mesh, dtype=int)
    vals = _as_cells(inc(m[:, 0], m[:, 1]))
    mom = _moment(vals, p)
    ratios = mom / (times[m[:, 1]] - times[m[:, 0]]) ** theta
    note = "max over sampled paths" if np.isinf(p) else ""
    return _summarize(theta, p, mesh, times, ratios, "plain", proxy_note=note)


class BranchingProcess(Protocol):
    """Sampler that can restart conditionally independent continuations at time ``s``."""

    times: np.ndarray

    def branch(self, s_idx: int, t_idx: int, inner: int) -> np.ndarray:
        """Samples of ``Xi_{s,t}`` with shape ``(outer, inner, m)``."""


def conditional_hoelder_norm(process: BranchingProcess, theta: float, mesh, inner: int, p="inf") -> HoelderEstimate:
    """Nested Monte Carlo ``||Xi | F||_{theta, p}``.

    ``E_s[Xi_{st}]`` is estimated per outer path by averaging ``inner``
    continuations; the L-infinity norm is proxied by the maximum over outer
    paths.  The variance floor is the largest inner standard error.
    """
    p = _parse_p(p)
    if inner < 100:
        warnings.warn(f"inner={inner} < 100: conditional means are noise dominated", RuntimeWarning, stacklevel=2)
    if len(mesh) == 0:
        raise DomainError("empty mesh")
    times = np.asarray(process.times)
    ratios, floor, cond = [], 0.0, []
    for s, t in mesh:
        x = np.asarray(process.branch(int(s), int(t), inner), dtype=float)
        if x.ndim == 2:
            x = x[..., None]
        mean = x.mean(axis=1)
        cond.append(mean)
        if inner > 1:
            floor = max(floor, float((x.std(axis=1, ddof=1) / np.sqrt(inner)).max()))
        ratios.append(_moment(mean[:, None, :], p)[0] / (times[t] - times[s]) ** theta)
    est = _summarize(theta, p, mesh, times, np.array(ratios), "conditional", variance_floor=floor,
                     proxy_note="L-infinity proxied by max over outer paths of nested means")
    est.conditional_means = cond
    return est


# ---------------------------------------------------------------------------
# controlled processes and rough integrators


def _paths(x, name: str) -> np.ndarray:
    a = np.asarray(getattr(x, "values", x), dtype=float)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ShapeError(f"{name} must have shape (M, K+1[, d])")
    return a


@dataclass(frozen=True, eq=False)
class ControlledProcess:
    """``(f, f')`` controlled by ``A``: ``f_{st} = f'_s . A_{st} + R^f_{st}``."""

    times: np.ndarray
    f: np.ndarray
    f_prime: np.ndarray
    A: np.ndarray
    sigma_pair: tuple = (0.0, 0.0)

    def __post_init__(self):
        f = _paths(self.f, "f")[:, :, 0]
        fp = _paths(self.f_prime, "f_prime")
        A = _paths(self.A, "A")
        t = np.asarray(self.times, dtype=float)
        if fp.shape != A.shape or f.shape != A.shape[:2] or t.size != f.shape[1]:
            raise ShapeError("f, f_prime and A must be aligned on the same grid")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "f_prime", fp)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "times", t)

    def remainder(self, s_idx, t_idx) -> np.ndarray:
        """``R^f_{st}`` for index arrays, shape ``(M, cells, 1)``."""
        df = self.f[:, t_idx] - self.f[:, s_idx]
        dA = self.A[:, t_idx] - self.A[:, s_idx]
        return (df - np.sum(self.f_prime[:, s_idx] * dA, axis=-1))[..., None]

    def bounds(self) -> dict:
        return {"max_abs_f": float(np.abs(self.f).max()), "max_abs_f_prime": float(np.abs(self.f_prime).max())}


@dataclass(frozen=True, eq=False)
class RoughIntegrator:
    """Integrator ``Z`` with compensator ``ZA_{st} = int_s^t A_{sr} dZ_r``.

    Stored through the running integral ``AA_t = int_0^t A_r dZ_r``, so that
    ``ZA_{st} = AA_{st} - A_s Z_{st}`` and the Chen relation
    ``ZA_{st} = ZA_{sl} + ZA_{lt} + A_{sl} Z_{lt}`` holds identically.
    """

    times: np.ndarray
    Z: np.ndarray
    AA: np.ndarray
    A: np.ndarray
    sigma: float = 0.0

    def __post_init__(self):
        Z = _paths(self.Z, "Z")[:, :, 0]
        AA = _paths(self.AA, "AA")
        A = _paths(self.A, "A")
        t = np.asarray(self.times, dtype=float)
        if AA.shape != A.shape or Z.shape != A.shape[:2] or t.size != Z.shape[1]:
            raise ShapeError("Z, AA and A must be aligned on the same grid")
        if np.any(Z[:, 0] != 0):
            raise ConfigurationError("Z must start at 0")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "AA", AA)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "times", t)

    @classmethod
    def from_quadrature(cls, times, A, Z, sigma: float = 0.0) -> "RoughIntegrator":
        """``AA`` by the left-point Riemann-Stieltjes sum on the grid."""
        A = _paths(A, "A")
        Z = _paths(Z, "Z")[:, :, 0]
        dZ = np.diff(Z, axis=1)
        AA = np.zeros_like(A)
        np.cumsum(A[:, :-1] * dZ[..., None], axis=1, out=AA[:, 1:])
        return cls(times, Z, AA, A, sigma)

    def increment(self, s_idx, t_idx) -> np.ndarray:
        return self.Z[:, t_idx] - self.Z[:, s_idx]

    def zz(self, s_idx, t_idx) -> np.ndarray:
        """``ZA_{st}`` with shape ``(M, cells, d)``."""
        dZ = self.increment(s_idx, t_idx)
        return self.AA[:, t_idx] - self.AA[:, s_idx] - self.A[:, s_idx] * dZ[..., None]

    def chen_defect(self, s_idx, l_idx, t_idx) -> np.ndarray:
        lhs = self.zz(s_idx, t_idx)
        rhs = self.zz(s_idx, l_idx) + self.zz(l_idx, t_idx)
        rhs = rhs + (self.A[:, l_idx] - self.A[:, s_idx]) * self.increment(l_idx, t_idx)[..., None]
        return lhs - rhs


def _check_exponents(f: ControlledProcess, zi: RoughIntegrator):
    s1, s2 = f.sigma_pair
    total = zi.sigma + s1 + s2
    if total <= 1:
        raise ConfigurationError(
            f"declared exponents give sigma + varsigma + varsigma' = {total:.3f} <= 1; "
            "the compensated Riemann sums are not guaranteed to converge"
        )


def rough_integral(f: ControlledProcess, zi: RoughIntegrator, levels: int, T: float | None = None) -> SewingResult:
    """Sewing limit of ``f_r Z_{rl} + f'_r . ZA_{rl}``."""
    _check_exponents(f, zi)
    if f.f.shape != zi.Z.shape:
        raise ShapeError("controlled process and integrator live on different ensembles")

    def germ(s, t):
        return (f.f[:, s] * zi.increment(s, t) + np.sum(f.f_prime[:, s] * zi.zz(s, t), axis=-1))[..., None]

    return sew(Germ(germ, zi.times, name="compensated"), levels, T, lipschitz_exponent=zi.sigma)


def plain_integral(f: ControlledProcess, zi: RoughIntegrator, levels: int, T: float | None = None) -> SewingResult:
    """Sewing limit of the uncompensated germ ``f_r Z_{rl}``."""

    def germ(s, t):
        return (f.f[:, s] * zi.increment(s, t))[..., None]

    return sew(Germ(germ, zi.times, name="plain"), levels, T, lipschitz_exponent=zi.sigma)


def controlled_remainder(f, f_prime, A, mesh=None, exponent: float | None = None, times=None, p=2) -> HoelderEstimate:
    """``R^f_{st} = f_{st} - f'_s . A_{st}`` and its ``(exponent, p)`` norm on the mesh."""
    cp = f if isinstance(f, ControlledProcess) else ControlledProcess(times, f, f_prime, A)
    if exponent is None:
        exponent = sum(cp.sigma_pair)
    if mesh is None:
        mesh = dyadic_mesh(cp.times.size - 1)
    est = hoelder_norm(cp.remainder, exponent, p, mesh, cp.times)
    est.proxy_note = "remainder norm"
    return est
