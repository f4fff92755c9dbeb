import argparse

import pandas as pd

from src.utils.DB_Utils import recent_runs


def register(subparsers) -> None:
    parser = subparsers.add_parser("runs", help="List recent invocations from the run ledger")
    parser.add_argument("--limit", type=int, default=20)
    parser.add_argument("--command", dest="filter_command", default=None, help="Only show this command")
    parser.set_defaults(handler=cmd_runs)


def cmd_runs(args: argparse.Namespace) -> int:
    rows = recent_runs(limit=args.limit, command=args.filter_command)
    if not rows:
        print("No recorded runs")
        return 0
    table = pd.DataFrame([{
        "id": r.id,
        "timestamp": r.timestamp,
        "command": r.command,
        "exit_code": r.exit_code,
        "status": r.status_description,
        "duration": r.duration,
        "error": r.error_message or "",
    } for r in rows])
    print(table.to_string(index=False))
    return 0
