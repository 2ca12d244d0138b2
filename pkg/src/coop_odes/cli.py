"""``coop-odes`` command line."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .generator import GeneratorConfig
from .integrator import StepperConfig
from .model import ToleranceProfile
from .reports import write_report
from .runner import EXIT_ERROR, default_seed, format_fuzz_summary, run_fuzz, run_scenario, with_tolerances

SCENARIO_COMMANDS = {
    "check-metzler": "check the off-diagonal sign condition of the scenario system",
    "solve": "integrate the scenario and report the final state",
    "verify": "run the checks listed in the scenario",
    "oracle-compare": "compare the integrator against the matrix exponential (constant systems)",
    "probe-epsilon": "measure continuous dependence on the off-diagonal perturbation",
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, default=Path("."), help="directory for reports")
    p.add_argument("--csv", action="store_true", help="also write CSV tables")
    p.add_argument("--rel-tol", type=float, default=None, help="adaptive stepper relative tolerance")
    p.add_argument("--abs-tol", type=float, default=None, help="adaptive stepper absolute tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coop-odes", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in SCENARIO_COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("scenario", type=Path)
        _common(p)

    fz = sub.add_parser("fuzz", help="check a batch of generated systems")
    fz.add_argument("--count", type=int, required=True)
    fz.add_argument("--seed", type=int, default=None, help=f"default: $COOP_ODES_SEED or {GeneratorConfig.seed}")
    fz.add_argument("--non-cooperative", action="store_true")
    fz.add_argument("--diagonal", action="store_true", help="zero off-diagonal entries")
    fz.add_argument("--boundary-fraction", type=float, default=GeneratorConfig.boundary_fraction)
    fz.add_argument("--workers", type=int, default=1)
    _common(fz)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in SCENARIO_COMMANDS:
        return run_scenario(
            args.scenario,
            command=args.command,
            out_dir=args.out,
            write_csv=args.csv,
            rel_tol=args.rel_tol,
            abs_tol=args.abs_tol,
        )

    if args.count < 1:
        print("error: --count must be positive", file=sys.stderr)
        return EXIT_ERROR
    try:
        gen_cfg = GeneratorConfig(
            seed=args.seed if args.seed is not None else default_seed(),
            cooperative=not args.non_cooperative,
            diagonal=args.diagonal,
            boundary_fraction=args.boundary_fraction,
        )
        stepper = with_tolerances(StepperConfig(), args.rel_tol, args.abs_tol)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    summary, code = run_fuzz(args.count, gen_cfg, stepper, ToleranceProfile(), workers=args.workers)
    write_report(args.out / "fuzz_summary.json", summary)
    print(format_fuzz_summary(summary))
    return code


if __name__ == "__main__":
    sys.exit(main())
