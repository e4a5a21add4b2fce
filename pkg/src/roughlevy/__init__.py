"""Numerics for SDEs driven by symmetric stable Levy noise with distributional drift.

Modules:

- ``spectral``: periodic fields, dyadic blocks, Besov norms, paraproducts and
  Fourier multipliers of the noise.
- ``levy``: symmetric stable processes with a discrete spectral measure.
- ``sde``: Euler simulation with mollified drifts and its diagnostics.
- ``sewing``: stochastic sewing, Holder norms and rough stochastic integrals.
- ``enhancement``: the lacunary counterexample and iterated integrals.
- ``kolmogorov``: backward Kolmogorov equations and the non-uniqueness experiment.
- ``experiments`` and ``cli``: reproducible runs with CSV and JSON output.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigurationError,
    ConvergenceError,
    DependencyError,
    DomainError,
    InsufficientDataError,
    NumericError,
    RoughLevyError,
    ShapeError,
)
