"""Binary containers for fields and path ensembles, with JSON sidecars.

Field file layout (little endian):

    magic   4 bytes  b"RLFD"
    version uint16
    dim     uint16
    grid_log2 uint16
    dtype   uint16   (1 = complex64, 2 = complex128)
    period  float64
    coefficients, row-major, n**dim values of the given dtype

Ensemble file layout:

    magic   4 bytes  b"RLEN"
    version uint16
    dtype   uint16   (3 = float64)
    M, K+1, dim  uint32 each
    times   (K+1) float64
    values  M*(K+1)*dim float64, row-major

The sidecar ``<file>.json`` carries provenance (partition, dealiasing, or the
process parameters and seed policy).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .levy import PathEnsemble
from .spectral import PeriodicField

__all__ = ["save_field", "load_field", "save_ensemble", "load_ensemble"]

FORMAT_VERSION = 1
_FIELD = struct.Struct("<4sHHHHd")
_ENS = struct.Struct("<4sHHIII")
_DTYPES = {1: np.complex64, 2: np.complex128}


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def save_field(path, u: PeriodicField, provenance: dict | None = None, precision: str = "complex64") -> Path:
    """Write ``u`` and its sidecar; ``precision="complex128"`` keeps full precision."""
    path = Path(path)
    code = {"complex64": 1, "complex128": 2}.get(precision)
    if code is None:
        raise ConfigurationError(f"unknown precision {precision!r}")
    with open(path, "wb") as fh:
        fh.write(_FIELD.pack(b"RLFD", FORMAT_VERSION, u.dim, u.grid_log2, code, float(u.period)))
        fh.write(np.ascontiguousarray(u.coeffs, dtype=_DTYPES[code]).astype("<" + np.dtype(_DTYPES[code]).str[1:]).tobytes())
    meta = {"dim": u.dim, "grid_log2": u.grid_log2, "period": u.period, "dtype": precision,
            "normalisation": "coefficients = fftn(values) / n**dim", "dealiasing": "two-times zero padding"}
    meta.update(provenance or {})
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True, default=str))
    return path


def load_field(path) -> PeriodicField:
    path = Path(path)
    raw = path.read_bytes()
    magic, version, dim, grid_log2, code, period = _FIELD.unpack_from(raw)
    if magic != b"RLFD" or version != FORMAT_VERSION or code not in _DTYPES:
        raise ConfigurationError(f"{path} is not a field container of version {FORMAT_VERSION}")
    n = 2**grid_log2
    data = np.frombuffer(raw, dtype=np.dtype(_DTYPES[code]).newbyteorder("<"), offset=_FIELD.size)
    if data.size != n**dim:
        raise ConfigurationError(f"{path}: expected {n**dim} coefficients, found {data.size}")
    return PeriodicField(data.reshape((n,) * dim).astype(np.complex128), dim, grid_log2, period)


def save_ensemble(path, ens: PathEnsemble, provenance: dict | None = None) -> Path:
    path = Path(path)
    M, K1, d = ens.values.shape
    with open(path, "wb") as fh:
        fh.write(_ENS.pack(b"RLEN", FORMAT_VERSION, 3, M, K1, d))
        fh.write(np.ascontiguousarray(ens.times, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ens.values, dtype="<f8").tobytes())
    meta = {k: v for k, v in ens.meta.items() if k in ("alpha", "directions", "weights", "seed", "generator", "config_hash")}
    meta.update({"M": M, "steps": K1 - 1, "dim": d})
    meta.update(provenance or {})
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True, default=str))
    return path


def load_ensemble(path) -> PathEnsemble:
    path = Path(path)
    raw = path.read_bytes()
    magic, version, code, M, K1, d = _ENS.unpack_from(raw)
    if magic != b"RLEN" or version != FORMAT_VERSION or code != 3:
        raise ConfigurationError(f"{path} is not an ensemble container of version {FORMAT_VERSION}")
    off = _ENS.size
    times = np.frombuffer(raw, "<f8", K1, off)
    values = np.frombuffer(raw, "<f8", M * K1 * d, off + 8 * K1).reshape(M, K1, d)
    side = _sidecar(path)
    meta = json.loads(side.read_text()) if side.exists() else {}
    return PathEnsemble(times.copy(), values.copy(), meta)
