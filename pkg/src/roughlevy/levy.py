"""Symmetric alpha-stable Levy processes with a discrete spectral measure.

The process ``L`` has ``E exp(2 pi i <z, L_t>) = exp(-t psi(z))`` with
``psi(z) = sum_i w_i |<z, xi_i>|**alpha``.  It is built as a sum of independent
one-dimensional stable processes along the directions ``xi_i``:

    L_t = sum_i c_i xi_i S_i t**(1/alpha),   c_i = w_i**(1/alpha) / (2 pi),

where ``S_i`` are standard symmetric stable variables, ``E exp(i u S) = exp(-|u|**alpha)``.
The factor ``1/(2 pi)`` converts the ``exp(2 pi i <z, .>)`` Fourier convention
into the ``exp(i u S)`` convention of the one-dimensional sampler.  At
``alpha = 2`` the one-dimensional variables are ``sqrt(2) N(0, 1)``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import levy_stable

from .errors import ConfigurationError, DomainError
from .spectral import MultiplierSpec

__all__ = [
    "LevyConfig",
    "PathEnsemble",
    "GENERATOR_NAME",
    "sample_increment",
    "sample_paths",
    "path_increments",
    "path_generator",
]

GENERATOR_NAME = "numpy.random.Philox (4x64 counter-based), stream = SeedSequence(seed, spawn_key=(path,))"

_INCREMENT_STREAM = 2**63 - 1


@dataclass(frozen=True, eq=False)
class LevyConfig:
    """Stability index, spectral measure and seed of a symmetric stable process."""

    alpha: float
    multiplier: MultiplierSpec
    seed: int = 0

    def __post_init__(self):
        if not 1 < self.alpha <= 2:
            raise ConfigurationError(f"alpha must lie in (1, 2], got {self.alpha}")
        if abs(self.multiplier.alpha - self.alpha) > 1e-15:
            raise ConfigurationError("multiplier and process use different alpha")
        if not self.multiplier.is_nondegenerate():
            raise ConfigurationError("spectral directions do not span the space")

    @classmethod
    def brownian(cls, dim: int = 1, seed: int = 0) -> "LevyConfig":
        """Standard Brownian motion, ``psi(z) = |2 pi z|**2 / 2``."""
        return cls(2.0, MultiplierSpec.canonical(dim, 2.0), seed)

    @classmethod
    def isotropic_1d(cls, alpha: float, seed: int = 0) -> "LevyConfig":
        """One-dimensional process with ``psi(z) = |2 pi z|**alpha``."""
        return cls(alpha, MultiplierSpec.fractional_laplacian(alpha), seed)

    @property
    def dim(self) -> int:
        return self.multiplier.dim

    def merged_directions(self):
        """Directions with antipodal pairs merged (psi only sees ``|<z, xi>|``)."""
        dirs, wts = [], []
        for xi, w in zip(self.multiplier.directions, self.multiplier.weights):
            for m, d in enumerate(dirs):
                if np.allclose(d, xi) or np.allclose(d, -xi):
                    wts[m] += w
                    break
            else:
                dirs.append(xi.copy())
                wts.append(float(w))
        return np.array(dirs), np.array(wts)

    def scales(self):
        dirs, wts = self.merged_directions()
        return dirs, wts ** (1.0 / self.alpha) / (2 * np.pi)

    def describe(self) -> dict:
        return {
            "alpha": self.alpha,
            "directions": self.multiplier.directions.tolist(),
            "weights": self.multiplier.weights.tolist(),
            "seed": int(self.seed),
            "generator": GENERATOR_NAME,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """``M`` sampled paths on a common time grid, values of shape ``(M, K + 1, dim)``."""

    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3 or v.shape[1] != t.size:
            raise ConfigurationError(f"values of shape {v.shape} do not match {t.size} times")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def increments(self, i: int, j: int) -> np.ndarray:
        """``X_{t_j} - X_{t_i}`` for all paths, shape ``(M, dim)``."""
        return self.values[:, j] - self.values[:, i]

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f"time {t} is not a grid point")
        return i


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    """Independent stream for one path, determined by ``(seed, path_index)`` only."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.Philox(ss))


def _standard_stable(alpha: float, size, rng: np.random.Generator) -> np.ndarray:
    if alpha == 2.0:
        return np.sqrt(2.0) * rng.standard_normal(size)
    return levy_stable.rvs(alpha, 0.0, size=size, random_state=rng)


def _combine(config: LevyConfig, s: np.ndarray, dt) -> np.ndarray:
    """Map standard variables ``s[..., n_dirs]`` to increments ``[..., dim]``."""
    dirs, c = config.scales()
    return (s * c) @ dirs * np.asarray(dt)[..., None] ** (1.0 / config.alpha)


def sample_increment(config: LevyConfig, dt: float, count: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """``count`` i.i.d. samples of ``L_dt``, shape ``(count, dim)``."""
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    rng = rng if rng is not None else path_generator(config.seed, _INCREMENT_STREAM)
    dirs, _ = config.scales()
    s = _standard_stable(config.alpha, (count, dirs.shape[0]), rng)
    return _combine(config, s, dt)


def path_increments(config: LevyConfig, times: np.ndarray, path_indices) -> np.ndarray:
    """Increments ``L_{t_k, t_{k+1}}`` for the given paths, shape ``(P, K, dim)``."""
    dt = np.diff(np.asarray(times, dtype=float))
    dirs, _ = config.scales()
    out = np.empty((len(path_indices), dt.size, config.dim))
    for row, p in enumerate(path_indices):
        s = _standard_stable(config.alpha, (dt.size, dirs.shape[0]), path_generator(config.seed, p))
        out[row] = _combine(config, s, dt)
    return out


def _check_grid(times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size == 0 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise DomainError("time grid must start at 0 and increase strictly")
    return t


def sample_paths(config: LevyConfig, times, M: int, first_path: int = 0) -> PathEnsemble:
    """``M`` independent paths; path ``p`` depends only on ``(seed, first_path + p)``."""
    t = _check_grid(times)
    inc = path_increments(config, t, range(first_path, first_path + M))
    values = np.zeros((M, t.size, config.dim))
    np.cumsum(inc, axis=1, out=values[:, 1:])
    meta = {"config_hash": config.config_hash(), "seed_policy": GENERATOR_NAME, **config.describe()}
    return PathEnsemble(t, values, meta)
