"""Fourier calculus on the periodic torus.

Fields are stored as Fourier coefficients ``c_k`` with
``u(x) = sum_k c_k exp(2 pi i <k, x> / period)``, i.e. ``c = fftn(u) / N**dim``.
Frequencies are the integer wavenumbers of ``numpy.fft.fftfreq``.

The dyadic partition, Besov norms and Bony paraproducts act on the wavenumber
``|k|``; multipliers act on the physical frequency ``k / period``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, NumericError, ShapeError

__all__ = [
    "PeriodicField",
    "TimeField",
    "DyadicPartition",
    "MultiplierSpec",
    "BesovSpec",
    "make_partition",
    "lp_block",
    "lp_blocks",
    "block_sup_norms",
    "besov_norm",
    "product",
    "bony_decompose",
    "resonant",
    "grid_points",
    "as_time_source",
    "apply_multiplier",
    "semigroup",
    "derivative",
    "gradient",
    "shift",
    "inverse_laplacian",
    "jT",
    "j_infinity",
    "enhancement_kernel",
    "exponential_moments",
]


# ---------------------------------------------------------------------------
# fields


def wavenumbers(n: int, dim: int) -> tuple[np.ndarray, ...]:
    """Integer wavenumber arrays, one per axis, broadcast to the full grid."""
    k = np.fft.fftfreq(n, 1.0 / n)
    return tuple(np.meshgrid(*([k] * dim), indexing="ij"))


def _nyquist_mask(n: int, dim: int) -> np.ndarray:
    ks = wavenumbers(n, dim)
    mask = np.zeros(ks[0].shape, dtype=bool)
    for k in ks:
        mask |= k == -n // 2
    return mask


@dataclass(frozen=True, eq=False)
class PeriodicField:
    """Complex field on the torus ``[0, period)^dim`` with ``2**grid_log2`` points per axis."""

    coeffs: np.ndarray
    dim: int = 1
    grid_log2: int = 0
    period: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.ndim != self.dim:
            raise ShapeError(f"coefficient array has {c.ndim} axes, expected dim={self.dim}")
        n = c.shape[0]
        if any(s != n for s in c.shape) or n < 2 or n & (n - 1):
            raise ShapeError(f"grid must be square with a power-of-two side, got {c.shape}")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "grid_log2", int(np.log2(n)))

    # construction -----------------------------------------------------------
    @classmethod
    def zeros(cls, grid_log2: int, dim: int = 1, period: float = 1.0) -> "PeriodicField":
        n = 2**grid_log2
        return cls(np.zeros((n,) * dim, dtype=complex), dim, grid_log2, period)

    @classmethod
    def constant(cls, value: complex, grid_log2: int, dim: int = 1, period: float = 1.0):
        u = cls.zeros(grid_log2, dim, period)
        u.coeffs[(0,) * dim] = value
        return u

    @classmethod
    def from_values(cls, values, period: float = 1.0) -> "PeriodicField":
        v = np.asarray(values)
        c = np.fft.fftn(v) / v.size
        return cls(c, v.ndim, 0, period)

    @classmethod
    def from_function(cls, func: Callable, grid_log2: int, dim: int = 1, period: float = 1.0):
        """Sample ``func`` on the grid (one array argument per axis) and transform."""
        x = grid_points(grid_log2, dim, period)
        return cls.from_values(func(*x), period)

    @classmethod
    def from_modes(cls, modes: dict, grid_log2: int, dim: int = 1, period: float = 1.0):
        """Build a field from ``{wavenumber: coefficient}``; wavenumbers are ints or tuples."""
        u = cls.zeros(grid_log2, dim, period)
        n = 2**grid_log2
        for k, c in modes.items():
            kk = (k,) if np.isscalar(k) else tuple(k)
            if any(abs(int(q)) > n // 2 - 1 for q in kk):
                raise ConfigurationError(f"wavenumber {k} not representable on a grid of {n}")
            u.coeffs[tuple(int(q) % n for q in kk)] += c
        return u

    # access -----------------------------------------------------------------
    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    def values(self) -> np.ndarray:
        """Grid values (complex)."""
        return np.fft.ifftn(self.coeffs) * self.coeffs.size

    def real_values(self) -> np.ndarray:
        return self.values().real

    def k(self) -> tuple[np.ndarray, ...]:
        return wavenumbers(self.n, self.dim)

    def kabs(self) -> np.ndarray:
        ks = self.k()
        return np.sqrt(sum(k * k for k in ks))

    def mode(self, k) -> complex:
        kk = (k,) if np.isscalar(k) else tuple(k)
        return complex(self.coeffs[tuple(int(q) % self.n for q in kk)])

    def is_real(self, rtol: float = 1e-12) -> bool:
        c = self.coeffs
        flipped = np.conj(np.roll(np.flip(c), 1, axis=tuple(range(self.dim))))
        scale = max(np.abs(c).max(), 1e-300)
        return bool(np.abs(c - flipped).max() <= rtol * scale)

    def real_part(self) -> "PeriodicField":
        c = self.coeffs
        flipped = np.conj(np.roll(np.flip(c), 1, axis=tuple(range(self.dim))))
        return self.like(0.5 * (c + flipped))

    def like(self, coeffs) -> "PeriodicField":
        return PeriodicField(coeffs, self.dim, self.grid_log2, self.period)

    def sup(self) -> float:
        return float(np.abs(self.values()).max())

    def mean(self) -> complex:
        return complex(self.coeffs[(0,) * self.dim])

    def check_finite(self):
        if not np.all(np.isfinite(self.coeffs)):
            raise NumericError("field has non-finite coefficients")

    def compatible(self, other: "PeriodicField"):
        if self.coeffs.shape != other.coeffs.shape or self.period != other.period:
            raise ShapeError(
                f"grid mismatch: {self.coeffs.shape}/{self.period} vs {other.coeffs.shape}/{other.period}"
            )

    # arithmetic -------------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, PeriodicField):
            self.compatible(other)
            return self.like(self.coeffs + other.coeffs)
        c = self.coeffs.copy()
        c[(0,) * self.dim] += other
        return self.like(c)

    __radd__ = __add__

    def __neg__(self):
        return self.like(-self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, PeriodicField):
            return product(self, other)
        return self.like(self.coeffs * other)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self.like(self.coeffs / scalar)


def grid_points(grid_log2: int, dim: int = 1, period: float = 1.0) -> tuple[np.ndarray, ...]:
    n = 2**grid_log2
    x = np.arange(n) * (period / n)
    return tuple(np.meshgrid(*([x] * dim), indexing="ij"))


@dataclass(frozen=True, eq=False)
class TimeField:
    """A field sampled on an increasing time grid.

    ``coeffs`` has shape ``(len(times),) + (N,) * dim``.  Between nodes the field
    is interpolated linearly (``interp="linear"``) or held at the left node
    (``interp="constant"``).
    """

    times: np.ndarray
    coeffs: np.ndarray
    dim: int = 1
    period: float = 1.0
    interp: str = "linear"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if t.ndim != 1 or c.shape[0] != t.size or c.ndim != self.dim + 1:
            raise ShapeError("times and coefficient stack do not match")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise DomainError("time grid must be strictly increasing")
        if self.interp not in ("linear", "constant"):
            raise ConfigurationError(f"unknown interpolation {self.interp!r}")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def constant_in_time(cls, u: PeriodicField, t0: float, t1: float) -> "TimeField":
        return cls(np.array([t0, t1]), np.stack([u.coeffs, u.coeffs]), u.dim, u.period)

    @classmethod
    def from_fields(cls, times, fields: Sequence[PeriodicField], interp: str = "linear"):
        f0 = fields[0]
        return cls(np.asarray(times), np.stack([f.coeffs for f in fields]), f0.dim, f0.period, interp)

    @property
    def grid_log2(self) -> int:
        return int(np.log2(self.coeffs.shape[1]))

    def __len__(self):
        return self.times.size

    def field(self, index: int) -> PeriodicField:
        return PeriodicField(self.coeffs[index], self.dim, self.grid_log2, self.period)

    def at(self, t: float) -> PeriodicField:
        times = self.times
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise DomainError(f"time {t} outside [{times[0]}, {times[-1]}]")
        i = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 1))
        if i == times.size - 1 or self.interp == "constant":
            return self.field(i)
        w = (t - times[i]) / (times[i + 1] - times[i])
        return PeriodicField((1 - w) * self.coeffs[i] + w * self.coeffs[i + 1], self.dim, self.grid_log2, self.period)


def as_time_source(v) -> Callable[[float], PeriodicField]:
    """Normalize a field, time field or callable to a function of time."""
    if isinstance(v, PeriodicField):
        return lambda t: v
    if isinstance(v, TimeField):
        return v.at
    if callable(v):
        return v
    raise ShapeError(f"cannot interpret {type(v).__name__} as a time-dependent field")


# ---------------------------------------------------------------------------
# dyadic partition


def _glue(x):
    """``exp(-1/x)`` for ``x > 0`` and zero otherwise."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_step(r):
    """C-infinity step: 0 for ``r <= 1/2``, 1 for ``r >= 1``."""
    a = _glue(np.asarray(r, dtype=float) - 0.5)
    b = _glue(1.0 - np.asarray(r, dtype=float))
    return a / (a + b)


@dataclass(frozen=True)
class DyadicPartition:
    """Smooth dyadic partition of unity with blocks ``-1, 0, ..., j_max``.

    ``p_0(r) = g(r) - g(r / 2)`` with ``g`` the smooth step, so ``supp p_0 = (1/2, 2)``
    and ``p_0(1) = 1``.  The top block ``g(r / 2**j_max)`` collects all higher
    frequencies so that the weights sum to one everywhere.
    """

    j_max: int
    annulus_bounds: tuple = (0.5, 2.0)

    def weight(self, j: int, r) -> np.ndarray:
        if not -1 <= j <= self.j_max:
            raise IndexError(f"block {j} outside [-1, {self.j_max}]")
        r = np.abs(np.asarray(r, dtype=float))
        if j == -1:
            return 1.0 - smooth_step(r)
        if j == self.j_max:
            return smooth_step(r / 2.0**j)
        return smooth_step(r / 2.0**j) - smooth_step(r / 2.0 ** (j + 1))

    def weights(self, r) -> np.ndarray:
        """Stack of all block weights, shape ``(j_max + 2,) + r.shape``."""
        return np.stack([self.weight(j, r) for j in range(-1, self.j_max + 1)])

    @property
    def blocks(self) -> range:
        return range(-1, self.j_max + 1)


def make_partition(j_max: int) -> DyadicPartition:
    if j_max < 2:
        raise ConfigurationError(f"j_max must be at least 2, got {j_max}")
    return DyadicPartition(int(j_max))


def default_partition(u: PeriodicField) -> DyadicPartition:
    return make_partition(max(u.grid_log2 - 2, 2))


def _block_weights(u: PeriodicField, partition: DyadicPartition | None):
    partition = partition or default_partition(u)
    return partition, partition.weights(u.kabs())


def lp_block(u: PeriodicField, j: int, partition: DyadicPartition | None = None) -> PeriodicField:
    """Littlewood-Paley block ``Delta_j u``."""
    partition = partition or default_partition(u)
    return u.like(partition.weight(j, u.kabs()) * u.coeffs)


def lp_blocks(u: PeriodicField, partition: DyadicPartition | None = None) -> list[PeriodicField]:
    partition, w = _block_weights(u, partition)
    return [u.like(wj * u.coeffs) for wj in w]


def block_sup_norms(u: PeriodicField, partition: DyadicPartition | None = None) -> np.ndarray:
    """Grid maxima ``max_x |Delta_j u(x)|`` for ``j = -1, ..., j_max``."""
    partition, w = _block_weights(u, partition)
    axes = tuple(range(1, u.dim + 1))
    vals = np.fft.ifftn(w * u.coeffs[None], axes=axes) * u.coeffs.size
    return np.abs(vals).reshape(w.shape[0], -1).max(axis=1)


@dataclass(frozen=True)
class BesovSpec:
    theta: float
    p: float = np.inf
    q: float = np.inf

    def __post_init__(self):
        if self.p != np.inf or self.q != np.inf:
            raise ConfigurationError("only p = q = inf Besov norms are supported")


def besov_norm(u: PeriodicField, spec: BesovSpec | float, partition: DyadicPartition | None = None) -> float:
    """``sup_j 2**(j theta) max_x |Delta_j u(x)|`` over the grid."""
    theta = spec.theta if isinstance(spec, BesovSpec) else float(spec)
    u.check_finite()
    partition = partition or default_partition(u)
    norms = block_sup_norms(u, partition)
    j = np.arange(-1, partition.j_max + 1)
    return float(np.max(2.0 ** (j * theta) * norms))


# ---------------------------------------------------------------------------
# products


def _pad(c: np.ndarray) -> np.ndarray:
    """Zero-pad a coefficient array from N to 2N per axis.

    The Nyquist coefficient is split evenly between +N/2 and -N/2 so that
    real fields stay real on the padded grid.
    """
    n = c.shape[0]
    out = c
    for ax in range(c.ndim):
        shape = list(out.shape)
        shape[ax] = 2 * n
        p = np.zeros(shape, dtype=complex)
        lo = [slice(None)] * out.ndim
        src = [slice(None)] * out.ndim
        lo[ax] = slice(0, n // 2)
        src[ax] = slice(0, n // 2)
        p[tuple(lo)] = out[tuple(src)]
        lo[ax] = slice(2 * n - n // 2 + 1, 2 * n)
        src[ax] = slice(n // 2 + 1, n)
        p[tuple(lo)] = out[tuple(src)]
        nyq = [slice(None)] * out.ndim
        nyq[ax] = n // 2
        half = 0.5 * out[tuple(nyq)]
        lo[ax] = n // 2
        p[tuple(lo)] = half
        lo[ax] = 2 * n - n // 2
        p[tuple(lo)] = half
        out = p
    return out


def _truncate(c: np.ndarray) -> np.ndarray:
    """Inverse of ``_pad``: keep |k| <= N/2 and fold both Nyquist copies together."""
    m = c.shape[0]
    n = m // 2
    out = c
    for ax in range(c.ndim):
        shape = list(out.shape)
        shape[ax] = n
        t = np.zeros(shape, dtype=complex)
        dst = [slice(None)] * out.ndim
        src = [slice(None)] * out.ndim
        dst[ax] = slice(0, n // 2)
        src[ax] = slice(0, n // 2)
        t[tuple(dst)] = out[tuple(src)]
        dst[ax] = slice(n // 2 + 1, n)
        src[ax] = slice(m - n // 2 + 1, m)
        t[tuple(dst)] = out[tuple(src)]
        dst[ax] = n // 2
        a = [slice(None)] * out.ndim
        b = [slice(None)] * out.ndim
        a[ax] = n // 2
        b[ax] = m - n // 2
        t[tuple(dst)] = out[tuple(a)] + out[tuple(b)]
        out = t
    return out


def _to_padded_values(c: np.ndarray) -> np.ndarray:
    p = _pad(c)
    return np.fft.ifftn(p) * p.size


def _from_padded_values(v: np.ndarray) -> np.ndarray:
    return _truncate(np.fft.fftn(v) / v.size)


def product(u: PeriodicField, v: PeriodicField) -> PeriodicField:
    """Dealiased pointwise product (zero-padded to 2N, multiplied, truncated)."""
    u.compatible(v)
    return u.like(_from_padded_values(_to_padded_values(u.coeffs) * _to_padded_values(v.coeffs)))


def bony_decompose(u: PeriodicField, v: PeriodicField, partition: DyadicPartition | None = None):
    """Return ``(u lower v, u upper v, u resonant v)``.

    ``lower = sum_i S_{i-1}u Delta_i v`` with ``S_{i-1} = sum_{j <= i-2} Delta_j``,
    ``upper`` is the same with the roles of u and v swapped and
    ``resonant = sum_{|i-j| <= 1} Delta_i u Delta_j v``.
    Their sum equals ``product(u, v)`` up to rounding.
    """
    u.compatible(v)
    partition, w = _block_weights(u, partition)
    bu = np.stack([_to_padded_values(wj * u.coeffs) for wj in w])
    bv = np.stack([_to_padded_values(wj * v.coeffs) for wj in w])
    # S_{i-1} = sum_{j <= i-2}: exclusive cumsum shifted by one more block
    su = np.zeros_like(bu)
    sv = np.zeros_like(bv)
    su[2:] = np.cumsum(bu, axis=0)[:-2]
    sv[2:] = np.cumsum(bv, axis=0)[:-2]
    lower = np.sum(su * bv, axis=0)
    upper = np.sum(bu * sv, axis=0)
    res = np.sum(bu * bv, axis=0)
    res = res + np.sum(bu[1:] * bv[:-1], axis=0) + np.sum(bu[:-1] * bv[1:], axis=0)
    return (
        u.like(_from_padded_values(lower)),
        u.like(_from_padded_values(upper)),
        u.like(_from_padded_values(res)),
    )


def resonant(u: PeriodicField, v: PeriodicField, partition: DyadicPartition | None = None) -> PeriodicField:
    return bony_decompose(u, v, partition)[2]


# ---------------------------------------------------------------------------
# multipliers


@dataclass(frozen=True, eq=False)
class MultiplierSpec:
    """Symbol ``psi(z) = sum_i w_i |<z, xi_i>|**alpha`` of a symmetric stable generator."""

    alpha: float
    directions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=float)
        if d.ndim == 1:
            d = d[:, None]
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if not 0 < self.alpha <= 2:
            raise ConfigurationError(f"alpha must lie in (0, 2], got {self.alpha}")
        if d.shape[0] != w.size:
            raise ConfigurationError("one weight per direction is required")
        if np.any(w <= 0):
            raise ConfigurationError("weights must be positive")
        norms = np.linalg.norm(d, axis=1)
        if np.any(np.abs(norms - 1) > 1e-12):
            raise ConfigurationError("directions must be unit vectors")
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    @classmethod
    def canonical(cls, dim: int = 1, alpha: float = 2.0) -> "MultiplierSpec":
        """Axis directions scaled so that ``alpha = 2`` gives ``psi(z) = |2 pi z|**2 / 2``."""
        return cls(alpha, np.eye(dim), np.full(dim, 0.5 * (2 * np.pi) ** alpha))

    @classmethod
    def fractional_laplacian(cls, alpha: float) -> "MultiplierSpec":
        """One-dimensional ``psi(z) = |2 pi z|**alpha``."""
        return cls(alpha, np.eye(1), np.array([(2 * np.pi) ** alpha]))

    def is_nondegenerate(self) -> bool:
        return bool(np.linalg.matrix_rank(self.directions) == self.dim)

    def symbol(self, z) -> np.ndarray:
        """Evaluate psi at frequencies ``z`` of shape ``(..., dim)`` (or scalars when dim = 1)."""
        z = np.asarray(z, dtype=float)
        if self.dim == 1 and (z.ndim == 0 or z.shape[-1] != 1):
            z = z[..., None]
        proj = np.abs(z @ self.directions.T)
        return (proj**self.alpha) @ self.weights

    def grid_symbol(self, u: PeriodicField) -> np.ndarray:
        if u.dim != self.dim:
            raise ShapeError(f"multiplier of dim {self.dim} applied to field of dim {u.dim}")
        z = np.stack(u.k(), axis=-1) / u.period
        return self.symbol(z)


def apply_multiplier(u: PeriodicField, spec: MultiplierSpec) -> PeriodicField:
    """Apply the operator with symbol psi."""
    return u.like(spec.grid_symbol(u) * u.coeffs)


def semigroup(u: PeriodicField, t: float, spec: MultiplierSpec) -> PeriodicField:
    """``P_t u``: multiply coefficients by ``exp(-t psi)``."""
    if t < 0:
        raise DomainError(f"semigroup time must be non-negative, got {t}")
    return u.like(np.exp(-t * spec.grid_symbol(u)) * u.coeffs)


def derivative_symbol(u: PeriodicField, axis: int = 0) -> np.ndarray:
    k = u.k()[axis]
    sym = 2j * np.pi * k / u.period
    sym[k == -u.n // 2] = 0.0
    return sym


def derivative(u: PeriodicField, axis: int = 0) -> PeriodicField:
    """Spectral partial derivative; the Nyquist mode is set to zero."""
    return u.like(derivative_symbol(u, axis) * u.coeffs)


def gradient(u: PeriodicField) -> list[PeriodicField]:
    return [derivative(u, a) for a in range(u.dim)]


def shift(u: PeriodicField, a) -> PeriodicField:
    """Translate: returns the field ``x -> u(x - a)``."""
    a = np.broadcast_to(np.asarray(a, dtype=float), (u.dim,))
    phase = sum(k * ai for k, ai in zip(u.k(), a)) / u.period
    return u.like(u.coeffs * np.exp(-2j * np.pi * phase))


def inverse_laplacian(u: PeriodicField) -> PeriodicField:
    """``(-Laplace)^{-1}`` on mean-zero fields; the zero mode is removed."""
    z2 = (2 * np.pi) ** 2 * sum(k * k for k in u.k()) / u.period**2
    out = np.zeros_like(u.coeffs)
    nz = z2 > 0
    out[nz] = u.coeffs[nz] / z2[nz]
    return u.like(out)


def exponential_moments(psi: np.ndarray, h: float):
    """``int_0^h exp(-psi s) (s/h)**m ds`` for ``m = 0, 1, 2``.

    Closed forms with Taylor series for ``psi h < 1e-2``.
    """
    z = np.asarray(psi, dtype=float) * h
    small = z < 1e-2
    zs = np.where(small, 1.0, z)
    e = np.exp(-zs)
    m0 = np.where(small, 1 - z / 2 + z * z / 6 - z**3 / 24, -np.expm1(-zs) / zs)
    m1 = np.where(small, 0.5 - z / 3 + z * z / 8 - z**3 / 30, (1 - e - zs * e) / zs**2)
    m2 = np.where(small, 1 / 3 - z / 4 + z * z / 10 - z**3 / 36, (2 - e * (zs * zs + 2 * zs + 2)) / zs**3)
    return h * m0, h * m1, h * m2


def jT(v, r: float, T: float, spec: MultiplierSpec) -> PeriodicField:
    """``int_r^T P_{s-r} v_s ds``.

    A time-constant ``v`` uses the exact multiplier ``(1 - exp(-(T-r) psi)) / psi``
    (value ``T - r`` at psi = 0).  A ``TimeField`` is integrated slab by slab with
    exact exponential weights, which is exact for piecewise constant
    (``interp="constant"``) or piecewise linear (``interp="linear"``) sampling.
    """
    if r > T:
        raise DomainError(f"need r <= T, got r={r}, T={T}")
    if isinstance(v, PeriodicField):
        psi = spec.grid_symbol(v)
        m0, _, _ = exponential_moments(psi, T - r)
        return v.like(m0 * v.coeffs)
    if not isinstance(v, TimeField):
        raise ShapeError("jT expects a PeriodicField or a TimeField")
    if v.times[0] > r + 1e-12 or v.times[-1] < T - 1e-12:
        raise DomainError("time field does not cover [r, T]")
    inner = v.times[(v.times > r) & (v.times < T)]
    nodes = np.concatenate([[r], inner, [T]])
    u0 = v.field(0)
    psi = spec.grid_symbol(u0)
    acc = np.zeros_like(u0.coeffs)
    for a, b in zip(nodes[:-1], nodes[1:]):
        if b <= a:
            continue
        m0, m1, _ = exponential_moments(psi, b - a)
        decay = np.exp(-(a - r) * psi)
        va = v.at(a).coeffs
        if v.interp == "constant":
            acc += decay * m0 * va
        else:
            vb = v.at(b).coeffs
            acc += decay * (m0 * va + m1 * (vb - va))
    return u0.like(acc)


def j_infinity(v: PeriodicField, spec: MultiplierSpec) -> PeriodicField:
    """``psi^{-1}`` applied to ``v`` with the zero mode projected out."""
    psi = spec.grid_symbol(v)
    out = np.zeros_like(v.coeffs)
    nz = psi > 0
    out[nz] = v.coeffs[nz] / psi[nz]
    return v.like(out)


def _components(eta):
    if isinstance(eta, (PeriodicField, TimeField)):
        return [eta]
    return list(eta)


def _field_at(eta, t: float) -> PeriodicField:
    return eta if isinstance(eta, PeriodicField) else eta.at(t)


def enhancement_kernel(eta1, eta2, s: float, t: float, spec: MultiplierSpec,
                       partition: DyadicPartition | None = None) -> list[list[PeriodicField]]:
    """Matrix with entries ``P_{t-s} d_j eta1^i(t)  resonant  eta2^j(s)``.

    ``eta1`` and ``eta2`` are vector fields given as sequences of components
    (a single field is accepted in one dimension); components may be
    time-constant ``PeriodicField`` or ``TimeField``.
    """
    if s >= t:
        raise DomainError(f"need s < t, got s={s}, t={t}")
    e1 = [_field_at(c, t) for c in _components(eta1)]
    e2 = [_field_at(c, s) for c in _components(eta2)]
    d = len(e1)
    if len(e2) != d or e1[0].dim != d:
        raise ShapeError("enhancement kernel needs d-component fields on a d-dimensional torus")
    out = []
    for i in range(d):
        row = []
        for j in range(d):
            a = semigroup(derivative(e1[i], j), t - s, spec)
            row.append(resonant(a, e2[j], partition))
        out.append(row)
    return out
