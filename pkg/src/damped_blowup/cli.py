"""Command-line entry point ``damped-blowup``.

Each subcommand runs a plan read from ``--config`` and/or built from
``--set key=value`` pairs; sections without a ``kind`` get the subcommand's
kind. ``diagnose`` re-audits an existing simulation and ``accept`` runs the
acceptance suite.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .runner import EXIT_AUDIT, EXIT_CONFIG, EXIT_OK, certify, json_text, run_plan, write_atomic

PLAN_COMMANDS = {"testfn": "testfn", "estimates": "estimates", "ode-scan": "ode-scan", "ode": "ode",
                 "ode-threshold": "ode-threshold", "simulate": "simulate"}


def _plan_text(args, kind):
    text = f"kind = {kind}\n"
    if args.config:
        body = Path(args.config).read_text(encoding="utf-8")
        if any(line.split("#", 1)[0].strip().startswith("kind") for line in body.splitlines()):
            text = ""
        text += body + "\n"
    for pair in args.set or ():
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        text = _insert_shared(text, pair)
    return text


def _insert_shared(text, pair):
    # shared keys must precede the first section header
    lines = text.splitlines()
    at = next((i for i, ln in enumerate(lines) if ln.strip().startswith("[")), len(lines))
    key = pair.split("=", 1)[0].strip()
    lines = [ln for i, ln in enumerate(lines)
             if i >= at or ln.split("#", 1)[0].split("=", 1)[0].strip() != key]
    at = next((i for i, ln in enumerate(lines) if ln.strip().startswith("[")), len(lines))
    lines.insert(at, pair)
    return "\n".join(lines) + "\n"


def _cmd_plan(args):
    kind = PLAN_COMMANDS[args.command]
    try:
        text = _plan_text(args, kind)
        name = Path(args.config).stem if args.config else kind
        plan = parse_config(text, name=name)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or f"out/{plan.name}")
    try:
        return run_plan(plan, out, force=args.force, jobs=args.jobs, profile=args.tolerance_profile,
                        log=print)
    except FileExistsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _cmd_diagnose(args):
    from .config import RunSpec
    from .diagnostics import FunctionalTrace

    run_dir = Path(args.run)
    trace_path = run_dir / "trace.csv" if run_dir.is_dir() else run_dir
    summary_path = Path(args.summary) if args.summary else trace_path.with_name("summary.json")
    try:
        trace = FunctionalTrace.read_csv(trace_path)
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
        config = summary["config"]
        spec = RunSpec(config["name"], config["kind"],
                       {k: tuple(v) if isinstance(v, list) else v for k, v in config.items()
                        if k not in ("name", "kind")}, 0)
        report = summary["report"]
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: cannot read run: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    audits, cert = certify(spec, trace, report)
    out = Path(args.out) if args.out else trace_path.with_name("certificate.json")
    if out.exists() and not args.force:
        print(f"error: refusing to overwrite {out} (use --force)", file=sys.stderr)
        return EXIT_CONFIG
    write_atomic(out, json_text(cert))
    for k, ok in audits.items():
        print(f"{k}: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if all(audits.values()) else EXIT_AUDIT


def _cmd_accept(args):
    from .acceptance import run_all

    only = [int(x) for x in args.criteria.split(",")] if args.criteria else None
    results = run_all(profile=args.tolerance_profile, only=only, jobs=args.jobs)
    for r in results:
        print(r.line())
    if args.out:
        out = Path(args.out)
        if out.exists() and not args.force:
            print(f"error: refusing to overwrite {out} (use --force)", file=sys.stderr)
            return EXIT_CONFIG
        write_atomic(out, json_text([r.as_dict() for r in results]))
    return EXIT_OK if all(r.passed for r in results) else EXIT_AUDIT


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (file for diagnose/accept)")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
    common.add_argument("--tolerance-profile", choices=("default", "tight"), default="default")

    parser = argparse.ArgumentParser(prog="damped-blowup", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "testfn": "sample phi0/phi1 and report residuals",
        "estimates": "decay of the weighted psi1 integrals",
        "ode-scan": "classify the (a, q, p) grid of the comparison ODE",
        "ode": "integrate one comparison ODE",
        "ode-threshold": "K0 scan in the critical logarithmic case",
        "simulate": "simulate the PDE and audit its functionals",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--config", help="key=value configuration file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override or add a shared key")
        sp.set_defaults(func=_cmd_plan)
    dp = sub.add_parser("diagnose", parents=[common], help="re-audit a simulation run directory")
    dp.add_argument("run", help="run directory or trace CSV")
    dp.add_argument("--summary", help="summary JSON (default: next to the trace)")
    dp.set_defaults(func=_cmd_diagnose)
    ap = sub.add_parser("accept", parents=[common], help="run the acceptance criteria")
    ap.add_argument("--criteria", help="comma-separated criterion numbers (default: all)")
    ap.set_defaults(func=_cmd_accept)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
