# relaytherm/cli.py
"""Command-line front end.

    relaytherm simulate --config config.json --out-dir runs/a
    relaytherm periodic --config config.json --beta 0.4
    relaytherm bifurcate --config config.json --s-max 6 --workers 4
    relaytherm verify

Precedence: Settings defaults < RELAYTHERM_* environment < config file < flags.
Exit codes: 0 success, 1 numerical failure, 2 configuration error.
"""
import argparse
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import pandas as pd
import structlog
import uvicorn
from pydantic import ValidationError

from . import __version__, workflows
from .artifacts import OutputWriter, config_hash, read_config_file
from .config import get_settings, settings_override
from .core.errors import ConfigurationError, RelayThermError
from .core.logging import setup_logging
from .run_ledger import RunLedger
from .schemas import RunConfig
from .services import acceptance

logger = structlog.get_logger(__name__)

# flag dest -> RunConfig field
OVERRIDES = (
    "alpha", "beta", "horizon", "output_stride", "s_min", "s_max", "n_points",
    "gap_grid", "delta0", "n_periods", "seed", "workers",
)


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="JSON or YAML run configuration file")
    parser.add_argument("--system", type=str, default=None, help="system descriptor file, replaces config.system")
    parser.add_argument("--out-dir", type=str, default=None)
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--beta", type=float, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE", help="tolerance override, repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relaytherm", description="Relay-controlled heat equation: periodic orbits and stability")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", type=str, default=None)
    parser.add_argument("--log-format", type=str, choices=["console", "json"], default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one trajectory, write trajectory.csv and summary.json")
    _common(p)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--output-stride", type=float, default=None)

    p = sub.add_parser("periodic", help="enumerate, verify and classify periodic solutions")
    _common(p)
    p.add_argument("--s-min", type=float, default=None)
    p.add_argument("--s-max", type=float, default=None)
    p.add_argument("--n-points", type=int, default=None)

    p = sub.add_parser("bifurcate", help="bifurcation diagram over s and solution counts over the gap")
    _common(p)
    p.add_argument("--s-min", type=float, default=None)
    p.add_argument("--s-max", type=float, default=None)
    p.add_argument("--n-points", type=int, default=None)
    p.add_argument("--gap-grid", type=float, nargs="+", default=None)

    p = sub.add_parser("stability", help="multipliers of every valid solution and the small-s criteria")
    _common(p)
    p.add_argument("--s-max", type=float, default=None)

    p = sub.add_parser("rate", help="measure contraction per period near each valid solution")
    _common(p)
    p.add_argument("--s-max", type=float, default=None)
    p.add_argument("--delta0", type=float, default=None)
    p.add_argument("--n-periods", type=int, default=None)

    p = sub.add_parser("verify", help="run the acceptance suite, write acceptance.json")
    p.add_argument("--out-dir", type=str, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--check", action="append", default=None, choices=sorted(acceptance.CHECKS))

    p = sub.add_parser("serve", help="serve the HTTP API with uvicorn")
    p.add_argument("--host", type=str, default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _parse_tolerances(items: List[str]) -> Dict[str, float]:
    out = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--tol expects NAME=VALUE, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise ConfigurationError(f"--tol {name}: {value!r} is not a number")
    return out


def load_run_config(args: argparse.Namespace) -> RunConfig:
    data: Dict[str, Any] = {}
    base = Path(".")
    if args.config:
        data = read_config_file(args.config)
        base = Path(args.config).parent
    if args.system:
        data["system"] = args.system
        base = Path(".")
    if isinstance(data.get("system"), str):
        data["system"] = read_config_file(str(base / data["system"]))

    for name in OVERRIDES:
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    if args.out_dir:
        data["out_dir"] = args.out_dir
    if args.tol:
        data["tolerances"] = {**data.get("tolerances", {}), **_parse_tolerances(args.tol)}
    return RunConfig.model_validate(data)


def _describe(err: ValidationError) -> str:
    parts = []
    for item in err.errors():
        field = ".".join(str(p) for p in item["loc"]) or "config"
        parts.append(f"{field}: {item['msg']}")
    return "; ".join(parts)


# --- Commands ---
def cmd_simulate(ctx: workflows.RunContext, writer: OutputWriter) -> int:
    summary, frame = workflows.simulate_run(ctx)
    writer.write_csv("trajectory.csv", frame)
    writer.write_json("summary.json", {"command": "simulate", "summary": summary})
    logger.info("simulation_written", n_switches=len(summary.switch_times))
    return 0


def cmd_periodic(ctx: workflows.RunContext, writer: OutputWriter) -> int:
    records = workflows.periodic_run(ctx)
    n_valid = sum(1 for r in records if r.valid)
    writer.write_json(
        "solutions.json",
        {
            "command": "periodic",
            "alpha": ctx.config.alpha,
            "beta": ctx.config.beta,
            "n_valid": n_valid,
            "n_ghost": len(records) - n_valid,
            "solutions": records,
        },
    )
    return 0


def cmd_bifurcate(ctx: workflows.RunContext, writer: OutputWriter) -> int:
    rows, points, sigma, counts = workflows.bifurcate_run(ctx)
    writer.write_csv("diagram.csv", workflows.records_frame(rows, ["s", "F", "Fprime", "valid", "grazing"]))
    writer.write_json("points.json", {"command": "bifurcate", "points": points, "sigma": sigma})
    if counts:
        writer.write_csv("counts.csv", workflows.records_frame(counts, ["gap", "n_valid", "n_ghost"]))
    return 0


def cmd_stability(ctx: workflows.RunContext, writer: OutputWriter) -> int:
    records, criteria = workflows.stability_run(ctx)
    writer.write_json("stability.json", {"command": "stability", "solutions": records, "small_s": criteria})
    return 0


def cmd_rate(ctx: workflows.RunContext, writer: OutputWriter) -> int:
    records = workflows.rate_run(ctx)
    writer.write_json("rate.json", {"command": "rate", "measurements": records})
    rows = [(r.s, k, d) for r in records for k, d in enumerate(r.distances)]
    writer.write_csv("rate_distances.csv", pd.DataFrame(rows, columns=["s", "period", "distance"]))
    return 0


COMMANDS: Dict[str, Callable[[workflows.RunContext, OutputWriter], int]] = {
    "simulate": cmd_simulate,
    "periodic": cmd_periodic,
    "bifurcate": cmd_bifurcate,
    "stability": cmd_stability,
    "rate": cmd_rate,
}


def cmd_verify(args: argparse.Namespace, out_dir: str, ledger: RunLedger) -> int:
    digest = config_hash({"command": "verify", "seed": args.seed, "checks": args.check})
    writer: Optional[OutputWriter] = None
    try:
        writer = OutputWriter(out_dir, digest, acceptance.ROD_MODES)
        records = acceptance.run_suite(args.check, workers=args.workers, seed=args.seed)
        passed = all(r.passed for r in records)
        writer.write_json("acceptance.json", {"command": "verify", "passed": passed, "checks": records})
        code = 0 if passed else 1
        message = None if passed else ", ".join(r.name for r in records if not r.passed)
    except RelayThermError as e:
        code, message = e.exit_code, str(e)
        print(f"error: {message}", file=sys.stderr)
    ledger.log_run(
        "verify", digest, "ok" if code == 0 else "numerical_failure", code,
        artifacts=writer.written if writer else [], message=message,
    )
    return code


def _status(code: int) -> str:
    return {0: "ok", 2: "config_error"}.get(code, "numerical_failure")


def run(args: argparse.Namespace) -> int:
    settings = get_settings()
    out_dir = getattr(args, "out_dir", None) or settings.output_dir

    if args.command == "verify":
        return cmd_verify(args, out_dir, RunLedger(out_dir))

    digest: Optional[str] = None
    writer: Optional[OutputWriter] = None
    message: Optional[str] = None
    try:
        config = load_run_config(args)
        out_dir = config.out_dir or out_dir
        with settings_override(**config.tolerances):
            ctx = workflows.build_context(config)
            digest = ctx.config_hash
            logger.info("run_started", command=args.command, config_hash=digest, n_modes=ctx.n_modes)
            writer = OutputWriter(out_dir, digest, ctx.n_modes)
            code = COMMANDS[args.command](ctx, writer)
    except ValidationError as e:
        code, message = 2, _describe(e)
    except RelayThermError as e:
        code, message = e.exit_code, f"{type(e).__name__}: {e}"

    if message:
        print(f"error: {message}", file=sys.stderr)
        logger.error("run_failed", command=args.command, exit_code=code, error=message)
    else:
        logger.info("run_finished", command=args.command, artifacts=writer.written if writer else [])
    RunLedger(out_dir).log_run(
        args.command, digest, _status(code), code, artifacts=writer.written if writer else [], message=message
    )
    return code


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = get_settings()
    except ValidationError as e:
        print(f"error: environment settings: {_describe(e)}", file=sys.stderr)
        return 2
    setup_logging(args.log_level or settings.log_level, args.log_format or settings.log_format)

    if args.command == "serve":
        uvicorn.run("relaytherm.main:app", host=args.host, port=args.port)
        return 0
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
