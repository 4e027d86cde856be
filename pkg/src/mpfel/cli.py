"""Command-line front end: run scenarios, probe dumps, verify kernels."""

from __future__ import annotations

import argparse
import inspect
import os
import sys
from pathlib import Path

import numpy as np

from . import vtkio
from .equilibrium import SolverError
from .phasefield import InstabilityError
from .scenario import ScenarioError, load_scenario, validate
from .scenarios import BUILTINS, get_builtin
from .sim import Simulation
from .verify import SUITES, run_suite

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_INSTABILITY = 4

THREADS_ENV = "MPFEL_THREADS"


def _default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mpfel", description="multi-phase-field elasticity simulator"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file or builtin")
    src = p_run.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="path to a scenario YAML file")
    src.add_argument("--builtin", help=f"builtin name, one of {sorted(BUILTINS)}")
    p_run.add_argument("--model", help="override the constitutive model")
    p_run.add_argument("--steps", type=int, help="override the step count")
    p_run.add_argument("--seed", type=int, help="override the RNG seed")
    p_run.add_argument("--output-dir", help="artifact directory (default runs/<name>-<model>)")
    p_run.add_argument("--threads", type=int, default=None, help="FFT worker threads")
    p_run.add_argument("--no-averaging", action="store_true", help="disable driving-force averaging")

    p_probe = sub.add_parser("probe", help="sample fields along a polyline from a run")
    p_probe.add_argument("source", help="run directory or state .npz file")
    p_probe.add_argument("--start", required=True, help="start cell, comma-separated")
    p_probe.add_argument("--end", required=True, help="end cell, comma-separated")
    p_probe.add_argument("--fields", help="comma-separated field names (default: all)")
    p_probe.add_argument("--out", help="output CSV path (default: stdout)")

    p_verify = sub.add_parser("verify", help="run kernel property/oracle suites")
    p_verify.add_argument("suite", nargs="?", default="kernels", help=f"one of {sorted(SUITES)}")
    p_verify.add_argument("--instances", type=int, default=50, help="random instances per check")
    p_verify.add_argument("--seed", type=int, default=0)

    sub.add_parser("list-builtins", help="list builtin scenarios")
    return parser


def _build_scenario(args):
    if args.builtin:
        if args.builtin not in BUILTINS:
            raise ScenarioError(
                f"unknown builtin {args.builtin!r}; available: {sorted(BUILTINS)}"
            )
        factory = BUILTINS[args.builtin]
        kwargs = {}
        params = inspect.signature(factory).parameters
        if args.seed is not None and "seed" in params:
            kwargs["seed"] = args.seed
        if args.model is not None and "model" in params:
            kwargs["model"] = args.model
        scenario = factory(**kwargs)
    else:
        scenario = load_scenario(args.scenario)
    if args.model is not None:
        scenario.model = args.model
    if args.steps is not None:
        scenario.steps = args.steps
    if args.seed is not None:
        scenario.seed = args.seed
    if args.no_averaging:
        scenario.averaging = False
    validate(scenario)
    return scenario


def cmd_run(args) -> int:
    try:
        scenario = _build_scenario(args)
    except (ScenarioError, FileNotFoundError, TypeError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    outdir = args.output_dir or Path("runs") / f"{scenario.name}-{scenario.model}"
    threads = args.threads if args.threads is not None else _default_threads()
    try:
        sim = Simulation(scenario, output_dir=outdir, threads=threads, log=print)
        result = sim.run()
    except InstabilityError as exc:
        print(f"instability: {exc}", file=sys.stderr)
        return EXIT_INSTABILITY
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    summary = result.summary
    print(
        f"{scenario.name} [{scenario.model}]: {summary['steps']} steps in "
        f"{summary['runtime_s']:.1f}s, final <psi_el> = {summary['final_psi_elastic']:.6g} J/m^3"
    )
    print(f"artifacts: {result.output_dir}")
    return EXIT_OK


def _parse_cell(text, dim):
    parts = [int(p) for p in text.split(",")]
    if len(parts) != dim:
        raise ScenarioError(f"expected {dim} comma-separated coordinates, got {text!r}")
    return parts


def cmd_probe(args) -> int:
    src = Path(args.source)
    if src.is_dir():
        src = src / "state_final.npz"
    if not src.exists():
        print(f"validation error: no state snapshot at {src}", file=sys.stderr)
        return EXIT_VALIDATION
    grid, phase_names, fields = vtkio.load_state_npz(src)
    try:
        start = _parse_cell(args.start, grid.dim)
        end = _parse_cell(args.end, grid.dim)
        selected = fields
        if args.fields:
            wanted = [w.strip() for w in args.fields.split(",")]
            selected = {}
            for w in wanted:
                matches = {k: v for k, v in fields.items() if k == w or k.startswith(w + "_")}
                if not matches:
                    raise ScenarioError(
                        f"unknown field {w!r}; available: {sorted(fields)}"
                    )
                selected.update(matches)
        cells = vtkio.sample_polyline(grid, start, end)
    except ScenarioError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.out:
        vtkio.write_probe_csv(args.out, grid, cells, selected)
        print(f"wrote {args.out} ({len(cells)} rows)")
    else:
        header, rows = vtkio.probe_rows(grid, cells, selected)
        print(",".join(header))
        for row in rows:
            print(",".join(f"{v:.9g}" if isinstance(v, float) else str(v) for v in row))
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        results = run_suite(args.suite, instances=args.instances, seed=args.seed)
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else 1


def cmd_list_builtins() -> int:
    for name in sorted(BUILTINS):
        doc = (BUILTINS[name].__doc__ or "").strip().splitlines()[0]
        print(f"{name}: {doc}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "probe":
        return cmd_probe(args)
    if args.command == "verify":
        return cmd_verify(args)
    if args.command == "list-builtins":
        return cmd_list_builtins()
    return EXIT_VALIDATION  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
