"""Command-line entry point: ``curveflow <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import fem
from .anisotropy import Verdict, certify, gamma_from_dict
from .driver import Termination, load_config, run, write_outputs
from .errors import CurveflowError, EnergyIncrease
from .geometry import load_curve, manifold_distance
from .harness import ConvergenceSpec, converge, write_convergence

logger = logging.getLogger("curveflow")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INVALID = 2


def _read_json(path):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        lines = text.splitlines()
        line = lines[exc.lineno - 1] if 0 < exc.lineno <= len(lines) else ""
        raise CurveflowError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {line}") from None


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    out = Path(args.out_dir)
    hook = None
    if args.dump_system:
        out.mkdir(parents=True, exist_ok=True)

        def hook(step, system):
            if step == args.dump_step:
                fem.dump_system(system, out / f"system_step{step}.txt")

    result = run(config, on_system=hook)
    write_outputs(result, out)
    last = result.diagnostics[-1]
    print(f"{result.termination.value}: t = {last.t:.6g}, steps = {len(result.diagnostics) - 1}, energy = {last.energy:.12g}")
    if result.message:
        print(result.message, file=sys.stderr)
    return EXIT_OK if result.termination in (Termination.REACHED_T_END, Termination.EQUILIBRIUM) else EXIT_FAIL


def cmd_check_gamma(args) -> int:
    spec = gamma_from_dict(_read_json(args.spec))
    reports = certify(spec)
    print(json.dumps([r.to_dict() for r in reports], indent=2))
    verdicts = {r.verdict for r in reports}
    if Verdict.DISPROVEN in verdicts:
        return EXIT_INVALID
    return EXIT_OK if Verdict.PROVEN in verdicts else EXIT_FAIL


def cmd_converge(args) -> int:
    spec = ConvergenceSpec.from_dict(_read_json(args.spec))
    out = Path(args.out_dir)
    result = converge(spec, cache_dir=out / "reference_cache")
    write_convergence(result, out)
    sys.stdout.write(result.to_csv())
    for t, order in result.fitted_order.items():
        print(f"fitted order at t = {t:g}: {'n/a' if order is None else f'{order:.4f}'}")
    return EXIT_OK if result.passed() else EXIT_FAIL


def cmd_distance(args) -> int:
    a, b = load_curve(args.a), load_curve(args.b)
    print(f"{manifold_distance(a, b):.12g}")
    return EXIT_OK


def _common_options(parser, defaults: bool) -> None:
    # Subcommands repeat the global options; SUPPRESS keeps them from overriding values given earlier.
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    parser.add_argument("--out-dir", default=d("./out"), help="directory for CSV and snapshot output (default ./out)")
    parser.add_argument(
        "--dump-system",
        action="store_true",
        default=d(False),
        help="write the linear system of one time step as 'row col value' text",
    )
    parser.add_argument("--dump-step", type=int, default=d(0), help="time step dumped by --dump-system (default 0)")
    parser.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curveflow", description=__doc__)
    _common_options(parser, defaults=True)
    sub = parser.add_subparsers(dest="command", required=True)
    commands = [
        ("simulate", "run one simulation from a JSON config", ["config"], cmd_simulate),
        ("check-gamma", "certify energy-stability conditions for a surface energy", ["spec"], cmd_check_gamma),
        ("converge", "spatial convergence study against a fine reference", ["spec"], cmd_converge),
        ("distance", "manifold distance between two curve files", ["a", "b"], cmd_distance),
    ]
    for name, help_text, positionals, func in commands:
        p = sub.add_parser(name, help=help_text)
        for arg in positionals:
            p.add_argument(arg)
        _common_options(p, defaults=False)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EnergyIncrease as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (CurveflowError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
