import argparse

from src.services.oracle_service import SUITES, run_suite
from src.utils.Errors import ValidationFailure


def register(subparsers) -> None:
    parser = subparsers.add_parser("validate", help="Check analytic formulas against brute-force oracles")
    parser.add_argument("--suite", choices=sorted(SUITES), default="geometry")
    parser.add_argument("--samples", type=int, default=200_000)
    parser.add_argument("--seed", type=int, default=0)
    parser.set_defaults(handler=cmd_validate)


def cmd_validate(args: argparse.Namespace) -> int:
    results = run_suite(args.suite, samples=args.samples, seed=args.seed)
    for result in results:
        print(result.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise ValidationFailure(f"{len(failed)} of {len(results)} {args.suite} checks failed: {', '.join(failed)}")
    print(f"All {len(results)} {args.suite} checks passed")
    return 0
