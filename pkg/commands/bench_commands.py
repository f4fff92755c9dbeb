import argparse
from typing import Dict, List

import pandas as pd

from config import resolve_threads
from src.services import fluid_service
from src.services.scene_service import build_domain, build_initial_state, build_params, build_phases, dam_break_config
from src.utils.Helper import StageTimer
from src.utils.Logger import logger

STAGES = ["diagram", "evaluation", "solve"]


def register(subparsers) -> None:
    parser = subparsers.add_parser("bench", help="Time synthetic dam-break steps at several sizes")
    parser.add_argument("--sizes", default="1000,2000,4000,8000", help="Comma separated particle counts")
    parser.add_argument("--steps", type=int, default=3)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--csv", default=None, help="Also write the table to this CSV file")
    parser.set_defaults(handler=cmd_bench)


def bench_size(size: int, steps: int, threads: int) -> Dict[str, float]:
    config = dam_break_config(size)
    domain = build_domain(config)
    phases = build_phases(config)
    params = build_params(config, threads=threads, best_effort=True)
    state = build_initial_state(config, domain)
    totals = {stage: 0.0 for stage in STAGES}
    wall = 0.0
    for _ in range(steps):
        timer = StageTimer()
        state, record, _ = fluid_service.step(state, params, domain, phases, timer=timer)
        for stage in STAGES:
            totals[stage] += timer.totals.get(stage, 0.0)
        wall += record.wall_ms / 1000.0
    row = {"particles": state.n}
    row.update({f"{stage}_s": totals[stage] / steps for stage in STAGES})
    row["step_s"] = wall / steps
    return row


def cmd_bench(args: argparse.Namespace) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    threads = resolve_threads(args.threads)
    rows: List[Dict[str, float]] = []
    for size in sizes:
        logger.info(f"Benchmarking {size} particles over {args.steps} steps")
        rows.append(bench_size(size, args.steps, threads))
    table = pd.DataFrame(rows)
    print(table.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    if len(rows) > 1:
        ratio = rows[-1]["step_s"] / rows[0]["step_s"]
        print(f"step time ratio {rows[-1]['particles']}/{rows[0]['particles']} particles: {ratio:.2f}")
    if args.csv:
        table.to_csv(args.csv, index=False)
    return 0
