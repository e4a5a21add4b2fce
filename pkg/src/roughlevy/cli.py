"""Command line runner: ``roughlevy <command> [options]``.

Every run resolves its parameters from, in increasing priority, the built-in
defaults, an INI file (``--config``, section ``[<command>]`` or ``[params]``),
a previous manifest (``--from-manifest``) and explicit flags.  It writes
``<command>.csv`` and ``<command>.manifest.json`` into ``--output-dir``; the
manifest echoes every resolved parameter, so rerunning from it reproduces the
CSV byte for byte.

Exit status: 0 when the run's check passes, 1 when it completes but fails,
2 for an invalid configuration, 3 for a numerical failure (details are written
to ``<command>.error.json``).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, experiments
from .errors import ConfigurationError, DomainError, NumericError, RoughLevyError

__all__ = ["main", "ExperimentConfig", "COMMANDS", "run", "code_hash"]

SCHEMA_VERSION = "1"

_INT_LIST = "int-list"
_FLOAT_LIST = "float-list"


@dataclass(frozen=True)
class Command:
    func: Callable
    params: dict
    help: str
    threads: bool = False


def _p(kind, default, help_=""):
    return (kind, default, help_)


COMMANDS: dict[str, Command] = {
    "bony-check": Command(experiments.bony_check, {
        "grid_log2": _p(int, 12, "log2 of the grid size"),
        "pairs": _p(int, 100, "number of random pairs"),
        "tol": _p(float, 1e-12, "relative error bound"),
    }, "paraproduct identity on random real pairs"),
    "besov-fit": Command(experiments.besov_fit, {
        "grid_log2": _p(int, 12, "log2 of the grid size"),
        "theta": _p(float, -0.3, "regularity of the test series"),
    }, "regularity recovered from dyadic block norms"),
    "stable-cf": Command(experiments.stable_cf, {
        "alpha": _p(float, 1.5, "stability index in (1, 2]"),
        "M": _p(int, 100_000, "sample size"),
        "t": _p(float, 1.0, "time of the increment"),
        "freqs": _p(_FLOAT_LIST, [0.02, 0.05, 0.1, 0.15, 0.25], "test frequencies"),
        "n_se": _p(float, 3.0, "allowed standard errors"),
        "ks_level": _p(float, 0.01, "KS significance level"),
    }, "empirical characteristic function of the stable sampler"),
    "counterexample": Command(experiments.counterexample, {
        "C": _p(float, 1.0, "offset between the two resonant limits"),
        "n": _p(int, 10, "largest level"),
        "n_min": _p(int, 4, "smallest level"),
        "grid_log2": _p(int, 15, "log2 of the grid size"),
        "delta": _p(float, 0.25, "norm index is -delta"),
        "v_theta": _p(float, -0.6, "index of the norms of V^n - V and W^n - V"),
        "bound": _p(float, 0.05, "bound on the norm of D_n - C"),
    }, "lacunary sequences with distinct resonant limits"),
    "sde-holder-fit": Command(experiments.sde_holder_fit, {
        "n": _p(int, 4, "truncation level of the drift"),
        "beta": _p(float, -0.3, "regularity of the drift"),
        "M": _p(int, 10_000, "number of paths"),
        "T": _p(float, 0.25, "horizon"),
        "h_log2": _p(int, 12, "Euler step 2^-h_log2"),
        "record_log2": _p(int, 12, "recorded step 2^-record_log2"),
        "scales_log2": _p(_INT_LIST, [5, 12], "smallest and largest -log2 scale"),
        "rho": _p(int, 2, "moment order"),
        "alpha": _p(float, 2.0, "stability index"),
        "tol": _p(float, 0.15, "allowed slope deviation"),
    }, "moment growth of drift increments", threads=True),
    "rough-integral-demo": Command(experiments.rough_integral_demo, {
        "M": _p(int, 4000, "number of paths"),
        "levels": _p(int, 12, "dyadic levels"),
        "T": _p(float, 1.0, "horizon"),
        "sigma": _p(float, 1.0, "declared exponent of the integrator"),
        "varsigma": _p(float, 0.49, "declared exponent of the controlled pair"),
        "tol": _p(float, 1e-3, "relative L2 bound"),
    }, "compensated against plain sewing"),
    "sewing-rates": Command(experiments.sewing_rates, {
        "M": _p(int, 10_000, "number of paths"),
        "levels": _p(int, 12, "dyadic levels"),
        "T": _p(float, 0.5, "horizon"),
    }, "stochastic sewing of W_s W_st"),
    "nonuniqueness": Command(experiments.nonuniqueness, {
        "ns": _p(_INT_LIST, [4, 6, 8], "levels for the shift defect"),
        "n": _p(int, 8, "level of the Monte Carlo comparison"),
        "M": _p(int, 20_000, "number of coupled path pairs"),
        "T": _p(float, 1.0, "horizon"),
        "s": _p(float, 0.5, "start time"),
        "x0": _p(float, 0.0, "start point"),
        "C": _p(float, 1.0, "perturbation constant"),
        "h_log2": _p(int, 12, "Euler step 2^-h_log2"),
        "grid_log2": _p(int, 12, "log2 of the PDE grid"),
    }, "two drift sequences with the same limit", threads=True),
    "ito-residual": Command(experiments.ito_residual_check, {
        "M": _p(int, 10_000, "number of paths"),
        "T": _p(float, 0.5, "horizon"),
        "steps": _p(int, 256, "Euler steps"),
        "alpha": _p(float, 2.0, "stability index"),
        "n_se": _p(float, 3.0, "allowed standard errors"),
    }, "Ito formula residual along Euler paths", threads=True),
    "class-k": Command(experiments.class_k, {
        "alpha": _p(float, 2.0, "stability index"),
        "beta": _p(float, -0.3, "regularity of the drift"),
        "M": _p(int, 200, "number of paths"),
        "T": _p(float, 0.5, "horizon"),
        "steps": _p(int, 512, "Euler steps"),
        "n": _p(int, 1, "truncation level of the drift"),
        "tol": _p(float, 0.2, "allowed shortfall of the exponent"),
    }, "conditional class-K increments"),
}

_RENAME = {"nonuniqueness": {"n": "n_mc"}}


@dataclass
class ExperimentConfig:
    """Fully resolved parameters of one run."""

    command: str
    params: dict
    seed: int = 7
    threads: int = 1
    output_dir: str = "."
    schema_version: str = SCHEMA_VERSION
    sources: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"schema_version": self.schema_version, "command": self.command, "seed": self.seed,
                "threads": self.threads, "params": self.params}


class SchemaError(ConfigurationError):
    pass


def _coerce(name: str, kind, value):
    try:
        if kind == _INT_LIST:
            items = value.split(",") if isinstance(value, str) else list(value)
            return [int(str(v).strip()) for v in items]
        if kind == _FLOAT_LIST:
            items = value.split(",") if isinstance(value, str) else list(value)
            return [float(str(v).strip()) for v in items]
        if kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        return kind(value)
    except (TypeError, ValueError):
        raise SchemaError(f"field {name!r}: cannot read {value!r} as {getattr(kind, '__name__', kind)}") from None


def _apply(params: dict, schema: dict, updates: dict, source: str):
    for key, value in updates.items():
        k = key.replace("-", "_")
        if k not in schema:
            raise SchemaError(f"field {key!r} from {source} is not a parameter; known: {', '.join(sorted(schema))}")
        params[k] = _coerce(k, schema[k][0], value)


def code_hash() -> str:
    """SHA-256 over the package sources, in sorted file order."""
    h = hashlib.sha256()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def resolve(command: str, args: argparse.Namespace) -> ExperimentConfig:
    schema = COMMANDS[command].params
    params = {k: v[1] for k, v in schema.items()}
    seed, threads = 7, 1
    sources = ["defaults"]
    if args.config:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        if not cp.read(args.config):
            raise SchemaError(f"cannot read config file {args.config}")
        for section in ("params", command):
            if cp.has_section(section):
                items = dict(cp.items(section))
                seed = _coerce("seed", int, items.pop("seed", seed))
                threads = _coerce("threads", int, items.pop("threads", threads))
                _apply(params, schema, items, args.config)
        sources.append(str(args.config))
    if args.from_manifest:
        try:
            man = json.loads(Path(args.from_manifest).read_text())
            cfg = man["config"]
        except (OSError, ValueError, KeyError) as exc:
            raise SchemaError(f"cannot read manifest {args.from_manifest}: {exc}") from None
        if cfg.get("command") != command:
            raise SchemaError(f"manifest is for command {cfg.get('command')!r}, not {command!r}")
        if cfg.get("schema_version") != SCHEMA_VERSION:
            raise SchemaError(f"manifest schema version {cfg.get('schema_version')!r} is not {SCHEMA_VERSION}")
        _apply(params, schema, cfg.get("params", {}), args.from_manifest)
        seed = _coerce("seed", int, cfg.get("seed", seed))
        threads = _coerce("threads", int, cfg.get("threads", threads))
        sources.append(str(args.from_manifest))
    explicit = {k: getattr(args, k) for k in schema if getattr(args, k, None) is not None}
    _apply(params, schema, explicit, "the command line")
    if args.seed is not None:
        seed = args.seed
    if args.threads is not None:
        threads = args.threads
    if threads < 1:
        raise SchemaError("field 'threads': must be at least 1")
    return ExperimentConfig(command, params, seed, threads, str(args.output_dir), sources=sources)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, complex):
        return repr(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return ";".join(_cell(x) for x in np.asarray(v).ravel().tolist())
    return str(v)


def write_csv(path: Path, rows: list[dict]):
    cols = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in cols])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def run(cfg: ExperimentConfig) -> tuple[int, experiments.ExperimentResult]:
    cmd = COMMANDS[cfg.command]
    kwargs = dict(cfg.params)
    for old, new in _RENAME.get(cfg.command, {}).items():
        kwargs[new] = kwargs.pop(old)
    if "seed" in cmd.func.__code__.co_varnames:
        kwargs["seed"] = cfg.seed
    if cmd.threads:
        kwargs["threads"] = cfg.threads
    result = cmd.func(**kwargs)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{cfg.command}.csv"
    write_csv(csv_path, result.rows)
    manifest = {
        "config": cfg.as_dict(),
        "version": __version__,
        "code_hash": code_hash(),
        "numpy": np.__version__,
        "csv": csv_path.name,
        "csv_sha256": hashlib.sha256(csv_path.read_bytes()).hexdigest(),
        "passed": result.passed,
        "summary": _jsonable(result.summary),
        "sources": cfg.sources,
    }
    (out / f"{cfg.command}.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return (0 if result.passed or result.passed is None else 1), result


def _headline(result: experiments.ExperimentResult) -> str:
    tag = "PASS" if result.passed else "FAIL"
    parts = [f"{k}={_cell(v)}" for k, v in result.summary.items() if isinstance(v, (int, float, bool, np.floating))]
    return f"{tag} {result.name} " + " ".join(parts[:8])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roughlevy", description="Numerical experiments for SDEs with distributional drift.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, cmd in COMMANDS.items():
        p = sub.add_parser(name, help=cmd.help, description=cmd.help)
        p.add_argument("--output-dir", default=".", help="directory for CSV and manifest")
        p.add_argument("--seed", type=int, default=None, help="root seed (default 7)")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default 1)")
        p.add_argument("--config", default=None, help="INI file with a [params] or [%s] section" % name)
        p.add_argument("--from-manifest", default=None, help="rerun with the parameters of a manifest")
        for key, (kind, default, help_) in cmd.params.items():
            flag = "--" + key.replace("_", "-")
            shown = ",".join(map(str, default)) if isinstance(default, list) else default
            p.add_argument(flag, dest=key, default=None, type=str, help=f"{help_} (default {shown})")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args.command, args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        status, result = run(cfg)
    except (ConfigurationError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, FloatingPointError, RoughLevyError) as exc:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        diag = out / f"{cfg.command}.error.json"
        info = {"config": cfg.as_dict(), "error": type(exc).__name__, "message": str(exc)}
        if getattr(exc, "residual", None) is not None:
            info["residual"] = _jsonable(exc.residual)
        diag.write_text(json.dumps(info, indent=2, sort_keys=True))
        print(f"numerical failure: {exc} (details in {diag})", file=sys.stderr)
        return 3
    print(_headline(result))
    return status


if __name__ == "__main__":
    sys.exit(main())
