"""Evaluation of periodic fields at arbitrary points."""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError, ShapeError
from .spectral import PeriodicField, _pad

__all__ = ["FieldEvaluator", "DEFAULT_MAX_DIRECT_MODES"]

# Direct summation costs one complex exponential per (point, mode); beyond this
# many modes a periodic cubic spline on an oversampled grid is cheaper.
DEFAULT_MAX_DIRECT_MODES = 256


class FieldEvaluator:
    """Real part of a field at points ``x`` of shape ``(P, dim)`` (or ``(P,)`` in 1-D).

    Fields with at most ``max_direct_modes`` nonzero coefficients are summed
    directly, which is exact.  Larger one-dimensional fields are interpolated by
    a periodic cubic spline through values on a grid refined ``oversample``
    times; ``interpolation_error`` holds the largest deviation from the exact
    trigonometric interpolant at the midpoints of that grid.
    """

    def __init__(self, u: PeriodicField, max_direct_modes: int = DEFAULT_MAX_DIRECT_MODES, oversample: int = 4):
        self.field = u
        self.period = u.period
        active = np.flatnonzero(u.coeffs != 0)
        self.n_active = active.size
        self.interpolation_error = 0.0
        if self.n_active <= max_direct_modes:
            self.method = "direct"
            ks = np.stack(u.k(), axis=-1).reshape(-1, u.dim)
            self._k = ks[active] * (2 * np.pi / u.period)
            self._c = u.coeffs.reshape(-1)[active]
        elif u.dim == 1:
            self.method = "spline"
            c = u.coeffs
            while c.shape[0] < oversample * u.n:
                c = _pad(c)
            fine = (np.fft.ifft(c) * c.size).real
            x = np.arange(c.size + 1) * (u.period / c.size)
            self._spline = CubicSpline(x, np.append(fine, fine[0]), bc_type="periodic")
            mid = (np.fft.ifft(_pad(c)) * 2 * c.size).real[1::2]
            xm = x[:-1] + 0.5 * u.period / c.size
            self.interpolation_error = float(np.abs(self._spline(xm) - mid).max())
        else:
            raise ConfigurationError(
                f"{self.n_active} active modes exceed the direct-summation limit "
                f"{max_direct_modes}; spline evaluation is one-dimensional only"
            )

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.field.dim == 1 and (x.ndim == 1 or x.shape[-1] != 1):
            x = x[..., None]
        if x.shape[-1] != self.field.dim:
            raise ShapeError(f"points of dimension {x.shape[-1]} for a {self.field.dim}-d field")
        if self.method == "direct":
            if self.n_active == 0:
                return np.zeros(x.shape[:-1])
            phase = x @ self._k.T
            return (np.exp(1j * phase) @ self._c).real
        return self._spline(np.mod(x[..., 0], self.period))
