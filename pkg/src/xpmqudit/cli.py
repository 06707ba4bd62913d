"""Command-line front end.

Subcommands ``qutrit``, ``qudit``, ``cascade``, ``loss-report``,
``oracle-check`` and ``sweep``.  Settings come from flags and optionally a
JSON file passed with ``--config``; flags win over the file.

Exit codes: 0 ok, 1 simulation error, 2 configuration error, 3 QND tail mass
above tolerance.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import report
from .fock_oracle import LeakageError, oracle_check
from .hybrid_state import StateError
from .measurement import TailMassError
from .protocols import (
    ProtocolParams,
    QuditSpec,
    cascade,
    generate_entangled,
    loss_robustness_report,
)

OUTPUT_DIR_ENV = "XPMQUDIT_OUTPUT_DIR"
ORACLE_TOLERANCE = 1e-8

EXIT_OK, EXIT_SIMULATION, EXIT_CONFIG, EXIT_TAIL = 0, 1, 2, 3

SWEEP_COLUMNS = [
    "index",
    "protocol",
    "alpha_re",
    "alpha_im",
    "theta",
    "dim",
    "success_probability",
    "ideal_success_probability",
    "error_probability_computed",
    "error_probability_quoted",
    "total_probability",
    "tail_mass",
    "branch_entropy",
]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    protocol: str
    dim: int = 3
    coeffs_a: list | str = "maximal"
    coeffs_b: list | str = "maximal"
    alpha: complex = 2.0
    theta: float = 0.1
    mode: str = "herald"
    trials: int = 0
    seed: int = 0
    n_max: int | None = None
    losses: int = 1
    cutoff: int = 40
    thetas: list = field(default_factory=list)
    sweep: dict | None = None
    sweep_protocol: str = "qutrit"
    output: str | None = None
    format: str = "json"
    min_probability: float = 0.0
    workers: int = 1
    timing: bool = False


def parse_complex(value) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(f"complex pair must have two entries, got {value!r}")
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, (int, float, complex)):
        return complex(value)
    try:
        return complex(str(value).replace(" ", "").replace("i", "j"))
    except ValueError as exc:
        raise ConfigError(f"cannot parse complex number {value!r}") from exc


def parse_coeffs(value):
    if value is None or value == "maximal":
        return "maximal"
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    return [parse_complex(v) for v in value]


def parse_float_list(value) -> list[float]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    return [float(v) for v in value]


def qudit_spec(coeffs, dim: int) -> QuditSpec:
    if coeffs == "maximal":
        return QuditSpec.maximal(dim)
    try:
        return QuditSpec(len(coeffs), tuple(coeffs))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _jsonable(value):
    if isinstance(value, complex):
        return report.cpair(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--alpha", help="qubus amplitude, e.g. 50 or 1+2j or re,im in config")
    p.add_argument("--theta", type=float, help="XPM phase per photon (radians)")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", "-o", help="output file (default: stdout or $%s)" % OUTPUT_DIR_ENV)
    p.add_argument("--format", choices=["json", "csv"])
    p.add_argument("--timing", action="store_true", default=None, help="record wall-clock runtime in the output")


def _protocol_flags(p: argparse.ArgumentParser, with_dim: bool):
    if with_dim:
        p.add_argument("--dim", type=int)
    p.add_argument("--maximal", action="store_true", default=None, help="both inputs maximal superpositions")
    p.add_argument("--coeffs-a", dest="coeffs_a", help="comma-separated amplitudes of qudit a")
    p.add_argument("--coeffs-b", dest="coeffs_b", help="comma-separated amplitudes of qudit b")
    p.add_argument("--mode", choices=["herald", "cascade", "trajectory"])
    p.add_argument("--trials", type=int, help="Monte Carlo trajectories (trajectory mode)")
    p.add_argument("--n-max", dest="n_max", type=int, help="QND enumeration cutoff")
    p.add_argument("--min-probability", dest="min_probability", type=float,
                   help="omit branches below this probability from the document")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xpmqudit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_, with_dim in (
        ("qutrit", "heralded entangled-qutrit generation", False),
        ("qudit", "heralded entangled-qudit generation", True),
        ("cascade", "deterministic cascaded qutrit generation", False),
    ):
        p = sub.add_parser(name, help=help_, argument_default=argparse.SUPPRESS)
        _common(p)
        _protocol_flags(p, with_dim)

    p = sub.add_parser("loss-report", help="photon-loss robustness", argument_default=argparse.SUPPRESS)
    _common(p)
    _protocol_flags(p, True)
    p.add_argument("--losses", "-m", type=int, help="photons lost from each qudit")

    p = sub.add_parser("oracle-check", help="symbolic engine vs truncated-Fock oracle",
                       argument_default=argparse.SUPPRESS)
    _common(p)
    p.add_argument("--thetas", help="comma-separated theta values (default: --theta or 0.1,0.2,0.5)")
    p.add_argument("--cutoff", type=int)

    p = sub.add_parser("sweep", help="CSV table over an alpha/theta/dim grid", argument_default=argparse.SUPPRESS)
    _common(p)
    _protocol_flags(p, True)
    p.add_argument("--protocol", dest="sweep_protocol", choices=["qutrit", "qudit", "cascade"])
    p.add_argument("--alphas", help="comma-separated |alpha| grid")
    p.add_argument("--thetas", help="comma-separated theta grid")
    p.add_argument("--dims", help="comma-separated dimension grid")
    p.add_argument("--workers", type=int, help="parallel grid workers")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if getattr(args, "config", None):
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config") and v is not None}
    if flags.pop("maximal", None):
        flags["coeffs_a"] = flags["coeffs_b"] = "maximal"
    sweep_flags = {k: flags.pop(k) for k in ("alphas", "dims") if k in flags}
    if args.command == "sweep" and "thetas" in flags:
        sweep_flags["thetas"] = flags.pop("thetas")
    values.update(flags)
    if sweep_flags:
        values["sweep"] = {**(values.get("sweep") or {}), **sweep_flags}

    known = {f for f in RunConfig.__dataclass_fields__}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(protocol=args.command, **values)
    try:
        cfg.alpha = parse_complex(cfg.alpha)
        cfg.theta = float(cfg.theta)
        cfg.coeffs_a = parse_coeffs(cfg.coeffs_a)
        cfg.coeffs_b = parse_coeffs(cfg.coeffs_b)
        cfg.thetas = parse_float_list(cfg.thetas)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    if cfg.protocol in ("qutrit", "cascade"):
        cfg.dim = 3
    if cfg.protocol == "cascade" and cfg.mode == "herald":
        cfg.mode = "cascade"
    if cfg.protocol == "sweep":
        grid = cfg.sweep or {}
        parsed = {}
        for key, default in (("alphas", [abs(cfg.alpha)]), ("thetas", [cfg.theta]), ("dims", [cfg.dim])):
            vals = parse_float_list(grid[key]) if key in grid else default
            if not vals:
                raise ConfigError(f"sweep grid {key} is empty")
            parsed[key] = vals
        parsed["dims"] = [int(d) for d in parsed["dims"]]
        cfg.sweep = parsed
        if cfg.format == "json" and "format" not in flags and "format" not in values:
            cfg.format = "csv"
    if cfg.protocol == "oracle-check" and not cfg.thetas and "theta" in values:
        cfg.thetas = [cfg.theta]
    if cfg.format not in ("json", "csv"):
        raise ConfigError(f"unknown format {cfg.format!r}")
    if cfg.mode not in ("herald", "cascade", "trajectory"):
        raise ConfigError(f"unknown mode {cfg.mode!r}")
    if cfg.mode == "trajectory" and cfg.trials <= 0:
        raise ConfigError("trajectory mode needs --trials > 0")
    if abs(cfg.alpha) == 0:
        raise ConfigError("alpha must be nonzero")
    for coeffs in (cfg.coeffs_a, cfg.coeffs_b):
        if coeffs != "maximal":
            if cfg.protocol == "qudit" and "dim" not in values:
                cfg.dim = len(coeffs)
            if len(coeffs) != cfg.dim:
                raise ConfigError(f"expected {cfg.dim} coefficients, got {len(coeffs)}")
            qudit_spec(coeffs, cfg.dim)
    if cfg.dim < 2:
        raise ConfigError("dim must be >= 2")
    return cfg


def _params(cfg: RunConfig, alpha=None, theta=None) -> ProtocolParams:
    return ProtocolParams(
        alpha=cfg.alpha if alpha is None else alpha,
        theta=cfg.theta if theta is None else theta,
        n_max=cfg.n_max,
        mode=cfg.mode,
        rng_seed=cfg.seed,
        trials=cfg.trials,
    )


def run_protocol(cfg: RunConfig, dim: int, alpha=None, theta=None):
    a, b = qudit_spec(cfg.coeffs_a, dim), qudit_spec(cfg.coeffs_b, dim)
    params = _params(cfg, alpha, theta)
    if cfg.protocol == "cascade" or (cfg.protocol == "sweep" and cfg.sweep_protocol == "cascade") or cfg.mode == "cascade":
        return cascade(a, b, params)
    return generate_entangled(a, b, params)


def _sweep_point(args) -> dict:
    cfg, index, alpha, theta, dim = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = run_protocol(cfg, dim, alpha, theta)
    return {
        "index": index,
        "protocol": res.protocol,
        "alpha_re": complex(alpha).real,
        "alpha_im": complex(alpha).imag,
        "theta": theta,
        "dim": dim,
        "success_probability": res.success_probability,
        "ideal_success_probability": res.ideal_success_probability,
        "error_probability_computed": res.error_probability,
        "error_probability_quoted": res.error_probability_quoted,
        "total_probability": res.total_probability,
        "tail_mass": res.tail_mass,
        "branch_entropy": res.branch_entropy() if res.protocol == "cascade" else None,
    }


def sweep(cfg: RunConfig) -> list[dict]:
    """One row per grid point, ordered dims > alphas > thetas."""
    if cfg.sweep_protocol in ("qutrit", "cascade") and any(d != 3 for d in cfg.sweep["dims"]):
        raise ConfigError(f"{cfg.sweep_protocol} sweeps are qutrit-only")
    points = []
    for dim in cfg.sweep["dims"]:
        for alpha in cfg.sweep["alphas"]:
            for theta in cfg.sweep["thetas"]:
                points.append((cfg, len(points), alpha, theta, dim))
    if cfg.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(cfg.workers) as pool:
            return list(pool.map(_sweep_point, points))
    return [_sweep_point(p) for p in points]


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\r\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row[k] is None else repr(row[k]) if isinstance(row[k], float) else row[k])
                         for k in SWEEP_COLUMNS})
    return buf.getvalue()


def _input_echo(cfg: RunConfig) -> dict:
    echo = asdict(cfg)
    for key in ("output", "timing", "workers"):
        echo.pop(key)
    return _jsonable(echo)


def execute(cfg: RunConfig) -> tuple[str, int]:
    """Run a resolved config; returns the rendered document and exit code."""
    start = time.perf_counter()
    doc = {"schema": report.SCHEMA_ID, "command": cfg.protocol, "input": _input_echo(cfg), "seed": cfg.seed}
    code = EXIT_OK
    if cfg.protocol in ("qutrit", "qudit", "cascade"):
        res = run_protocol(cfg, cfg.dim)
        doc["result"] = report.result_to_json(res, cfg.min_probability)
    elif cfg.protocol == "loss-report":
        doc["report"] = loss_robustness_report(
            qudit_spec(cfg.coeffs_a, cfg.dim), qudit_spec(cfg.coeffs_b, cfg.dim), cfg.losses, _params(cfg)
        )
    elif cfg.protocol == "oracle-check":
        thetas = cfg.thetas or [0.1, 0.2, 0.5]
        out = oracle_check(cfg.alpha, tuple(thetas), cfg.cutoff)
        out["alpha"] = report.cpair(out["alpha"])
        out["tolerance"] = ORACLE_TOLERANCE
        out["passed"] = out["max_deviation"] <= ORACLE_TOLERANCE
        doc["oracle"] = _jsonable(out)
        code = EXIT_OK if out["passed"] else EXIT_SIMULATION
    elif cfg.protocol == "sweep":
        rows = sweep(cfg)
        if cfg.format == "csv":
            return rows_to_csv(rows), code
        doc["rows"] = rows
    doc["runtime_seconds"] = time.perf_counter() - start if cfg.timing else None
    if cfg.format == "csv":
        raise ConfigError("csv output is only available for sweep")
    return report.dumps(doc), code


def _destination(cfg: RunConfig) -> Path | None:
    if cfg.output:
        return Path(cfg.output)
    outdir = os.environ.get(OUTPUT_DIR_ENV)
    if outdir:
        return Path(outdir) / f"{cfg.protocol}.{cfg.format}"
    return None


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        text, code = execute(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TailMassError as exc:
        print(f"tail-mass violation: {exc}", file=sys.stderr)
        return EXIT_TAIL
    except (StateError, LeakageError, ValueError, ArithmeticError) as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    dest = _destination(cfg)
    if dest is None:
        sys.stdout.write(text)
    else:
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_text(text, newline="")
    return code


if __name__ == "__main__":
    sys.exit(main())
