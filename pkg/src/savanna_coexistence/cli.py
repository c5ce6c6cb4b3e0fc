"""Batch command line: ``savanna-coexistence <subcommand> --config FILE``.

Subcommands:

- ``simulate``: run every (grid point, replica) task of the experiment file.
- ``sweep``: two-axis phase diagram of a ``phase_sweep`` file.
- ``diagnose``: constants ledger and assertion sweeps at the file's rates.
- ``ide``: expanding test-function check, optionally a front run.
- ``constants``: recovery, extinction and plateau constants at the file's rates.
- ``serve``: the MCP server (stdio, or Streamable HTTP with ``--http``).

Exit codes: 0 success, 1 any other package error, 2 invalid configuration or
usage, 3 some replicas failed (completed records are still written).
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from . import __version__
from .config import LOG_LEVEL_ENV
from .diagnostics.extinction import max_lambda_prime, theta_prime
from .diagnostics.recovery import recovery_constants
from .diagnostics.report import render_records, run_diagnostics
from .errors import ConfigInvalid, PartialFailure, SavannaError
from .experiments import (
    ExperimentSpec,
    load_spec,
    run_experiment,
    summarize,
    sweep_phase_diagram,
    with_overrides,
)
from .formatters import md_table, num, render_constants, render_lemma81
from .ide import (
    build_test_functions,
    default_test_h,
    find_dtt_crossing,
    front_metrics,
    make_grid,
    solve_ide,
    theorem3_constants,
    verify_lemma81,
)
from .models import StepOmega
from .server import add_transport_arguments, configure_logging, serve

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_PARTIAL = 3


def _u64(value: str) -> int:
    n = int(value, 0)
    if not 0 <= n < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be in 0..2^64-1, got {n}")
    return n


def _positive(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {n}")
    return n


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, required=True, help="Experiment TOML file")
    common.add_argument("--seed", type=_u64, help="Override master_seed")
    common.add_argument("--replicas", type=_positive, help="Override replicas")
    common.add_argument("--threads", type=_positive, default=1, help="Worker processes")
    common.add_argument("--out", type=Path, help="Override output_dir")
    common.add_argument(
        "-v", "--verbose", action="store_true", help=f"Log at INFO (else ${LOG_LEVEL_ENV})"
    )

    parser = argparse.ArgumentParser(
        prog="savanna-coexistence",
        description="Savanna particle models: simulation, sweeps and diagnostics.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="Run the experiment file")
    sub.add_parser("sweep", parents=[common], help="Two-axis phase diagram")
    sub.add_parser("diagnose", parents=[common], help="Constants ledger and assertion sweeps")
    ide = sub.add_parser("ide", parents=[common], help="Expanding test functions")
    ide.add_argument(
        "--front", action="store_true", help="Also solve the IDE from a tree patch to horizon"
    )
    sub.add_parser("constants", parents=[common], help="Constants at the file's rates")
    serve_cmd = sub.add_parser("serve", help="Run the MCP server")
    serve_cmd.add_argument("-v", "--verbose", action="store_true")
    add_transport_arguments(serve_cmd)
    return parser


def _load(args: argparse.Namespace) -> ExperimentSpec:
    spec = load_spec(args.config)
    if args.seed is None and args.replicas is None and args.out is None:
        return spec
    return with_overrides(spec, seed=args.seed, replicas=args.replicas, output_dir=args.out)


# ─── Subcommands ──────────────────────────────────────────────────────────────


def _simulate(spec: ExperimentSpec, args: argparse.Namespace) -> str:
    result = run_experiment(spec, threads=args.threads)
    m = result.manifest
    lines = [
        f"experiment {m.experiment_id} ({m.kind}): {m.completed} record(s) in {m.wall_time:.1f}s",
        f"config hash {m.config_hash}",
    ]
    lines += [f"{name}: {path}" for name, path in sorted(result.paths.items())]
    means = summarize(result.records)
    if means:
        keys = sorted({k for outs in means.values() for k in outs})
        rows = [[i, *(num(outs.get(k), 4) for k in keys)] for i, outs in means.items()]
        lines += ["", md_table(["grid", *keys], rows)]
    return "\n".join(lines)


def _sweep(spec: ExperimentSpec, args: argparse.Namespace) -> str:
    diagram = sweep_phase_diagram(spec, threads=args.threads)
    keys = [f"survived@{h:g}" for h in diagram.checkpoints]
    rows = [
        [num(c.x), num(c.y), c.origin, c.meanfield_survival]
        + [num(f, 3) for f in c.survival_fraction]
        for c in diagram.cells
    ]
    lines = [md_table([diagram.x_name, diagram.y_name, "origin", "meanfield", *keys], rows)]
    if "beta" in (diagram.x_name, diagram.y_name) and (dips := diagram.monotone_violations()):
        lines.append(f"\n{len(dips)} cell(s) drop along beta: {dips[:10]}")
    return "\n".join(lines)


def _diagnose(spec: ExperimentSpec, args: argparse.Namespace) -> str:
    report = run_diagnostics(
        spec.params, spec.geometry, seed=spec.master_seed, n_configs=spec.options.n_configs
    )
    return render_records(report).rstrip("\n")


def _ide(spec: ExperimentSpec, args: argparse.Namespace) -> str:
    p, g, opts = spec.params, spec.geometry, spec.options
    c = theorem3_constants(p, g.kappa, g.d)
    f = build_test_functions(c, opts.h or default_test_h(c))
    crossing = find_dtt_crossing(f, c, p) if opts.crossing else None
    parts = [render_lemma81(verify_lemma81(f, c, p), crossing)]
    if args.front:
        h = opts.h or 0.1
        f0 = make_grid(opts.half_width, h, g.d)
        f0.T[f0.radius() <= opts.front_radius] = opts.front_height
        traj = solve_ide(
            f0, p, spec.horizon, kappa=g.kappa, sample_every=spec.sample_every or spec.horizon / 10
        )
        fm = front_metrics(traj, opts.level)
        rows = [[num(t, 4), num(r, 4)] for t, r in zip(fm.times, fm.radii, strict=True)]
        parts.append(f"## Front of T > {opts.level}: speed {num(fm.slope, 4)}")
        parts.append(md_table(["t", "radius"], rows))
    return "\n\n".join(parts)


def _constants(spec: ExperimentSpec, args: argparse.Namespace) -> str:
    p, g = spec.params, spec.geometry
    parts = []
    try:
        rc = recovery_constants(p, g.d, spec.options.a0_init, alpha=spec.options.alpha)
        table = rc.model_dump()
        table[f"lambda(L={g.L})"] = rc.lam(g.L)
        table["drift bound"] = rc.drift_bound(p, g.L)
        parts.append(render_constants(table, "Recovery constants"))
    except SavannaError as e:
        parts.append(f"## Recovery constants\n\nnot available: {e}")
    try:
        lam = max_lambda_prime(p, g.L)
        table = {"theta'": theta_prime(p), f"max lambda' (L={g.L})": lam}
        parts.append(render_constants(table, "Extinction weights"))
    except SavannaError as e:
        parts.append(f"## Extinction weights\n\nnot available: {e}")
    if isinstance(p.omega, StepOmega):
        try:
            c = theorem3_constants(p, g.kappa, g.d)
            table = c.model_dump(exclude={"ledger", "d", "kappa"})
            if c.ledger is not None:
                table.update(c.ledger.model_dump())
            parts.append(render_constants(table, "Plateau constants"))
        except SavannaError as e:
            parts.append(f"## Plateau constants\n\nnot available: {e}")
    return "\n\n".join(parts)


_COMMANDS = {
    "simulate": _simulate,
    "sweep": _sweep,
    "diagnose": _diagnose,
    "ide": _ide,
    "constants": _constants,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Console entry point; returns the process exit code."""
    args = _build_parser().parse_args(argv)
    configure_logging("INFO" if args.verbose else None)
    if args.command == "serve":
        serve(args)
        return EXIT_OK
    try:
        spec = _load(args)
        text = _COMMANDS[args.command](spec, args)
    except ConfigInvalid as e:
        where = f" at {e.field_path}" if e.field_path else ""
        print(f"invalid configuration{where}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except PartialFailure as e:
        print(f"partial failure: {e}", file=sys.stderr)
        return EXIT_PARTIAL
    except SavannaError as e:
        logger.debug("command %s failed", args.command, exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR
    print(text)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
