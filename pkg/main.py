import argparse
import sys
from typing import List, Optional

from config import create_sqlite_tables_sync
from middleware.log_middleware import LogRunsMiddleware
from commands import ALL_COMMANDS
from src.utils.Errors import PotflowError
from src.utils.Logger import logger


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="potflow",
        description="Free-surface fluid simulation with partial optimal transport",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for register in ALL_COMMANDS:
        register(subparsers)
    return parser


# --- Global Exception Handlers ---
def potflow_exception_handler(command: str, exc: PotflowError) -> int:
    logger.warning(f"{type(exc).__name__}: {exc.detail} (command: {command}, exit code {exc.exit_code})")
    print(f"error: {exc.detail}", file=sys.stderr)
    return exc.exit_code


def custom_exception_handler(command: str, exc: Exception) -> int:
    logger.error(f"Unhandled exception in command: {command}", exc_info=True)
    print("error: an unexpected error occurred, see the log for details", file=sys.stderr)
    return 1


def run(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    arguments = {k: v for k, v in vars(args).items() if k != "handler"}
    try:
        create_sqlite_tables_sync()
    except Exception as e:
        logger.error(f"Could not prepare the run ledger: {e}")
    middleware = LogRunsMiddleware()
    try:
        return middleware.dispatch(args.command, arguments, lambda: args.handler(args))
    except PotflowError as exc:
        return potflow_exception_handler(args.command, exc)
    except Exception as exc:
        return custom_exception_handler(args.command, exc)


if __name__ == "__main__":
    sys.exit(run())
