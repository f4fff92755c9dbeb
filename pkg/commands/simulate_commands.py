import argparse
import logging
from pathlib import Path
from typing import List

import pandas as pd

from config import resolve_threads
from src.models.Fluid import StepRecord
from src.services import fluid_service
from src.services.frame_service import frame_from_step, frame_path, read_frame, write_frame
from src.services.scene_service import (
    build_domain,
    build_initial_state,
    build_params,
    build_phases,
    load_config,
)
from src.utils.Errors import ConfigError, OtNonConvergence
from src.utils.Helper import StageTimer
from src.utils.Logger import logger

STATS_FILE = "stats.csv"


def register(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="Run a scene and write frames plus a stats CSV")
    parser.add_argument("config", help="Scene JSON file or the name of a bundled scene")
    parser.add_argument("--out", default=None, help="Output directory (defaults to the scene's output directory)")
    parser.add_argument("--steps", type=int, default=None, help="Number of steps (defaults to the scene's value)")
    parser.add_argument("--verbose", action="store_true", help="Log every Newton iteration")
    parser.add_argument("--best-effort", action="store_true", help="Keep going when a transport solve fails")
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--warm-start", default=None, help="Frame file to resume positions, velocities and weights from")
    parser.set_defaults(handler=cmd_simulate)


def write_stats(records: List[StepRecord], path: Path) -> None:
    pd.DataFrame([r.as_row() for r in records]).to_csv(path, index=False)


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.verbose:
        logger.setLevel(logging.DEBUG)
    config = load_config(args.config)
    threads = resolve_threads(args.threads)
    domain = build_domain(config)
    phases = build_phases(config)
    params = build_params(config, threads=threads, best_effort=args.best_effort)
    state = build_initial_state(config, domain)

    if args.warm_start:
        frame = read_frame(args.warm_start)
        if frame.n != state.n:
            raise ConfigError(f"--warm-start: frame has {frame.n} particles, scene has {state.n}")
        state.positions = frame.positions.copy()
        state.velocities = frame.velocities.copy()
        state.psi = frame.psi.copy()
        state.step = frame.step
        state.time = frame.time
        logger.info(f"Warm start from {args.warm_start} at step {frame.step}")

    out_dir = Path(args.out or config.output.directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    steps = config.sim.steps if args.steps is None else args.steps
    stride = config.output.frame_stride

    records: List[StepRecord] = []
    totals = StageTimer()
    try:
        for _ in range(steps):
            timer = StageTimer()
            state, record, pot = fluid_service.step(state, params, domain, phases, timer=timer)
            totals.merge(timer)
            records.append(record)
            if record.flagged:
                logger.warning(f"Step {record.step} flagged: worst error {record.worst_rel_error:.3e}")
            if state.step % stride == 0:
                write_frame(frame_from_step(state, record, pot), frame_path(out_dir, state.step))
    except OtNonConvergence:
        write_stats(records, out_dir / STATS_FILE)
        raise
    write_stats(records, out_dir / STATS_FILE)

    flagged = sum(r.flagged for r in records)
    logger.info("Stage totals: " + ", ".join(f"{name} {seconds:.3f}s" for name, seconds in sorted(totals.totals.items())))
    print(f"Simulated {len(records)} steps of '{config.name}' ({state.n} particles) into {out_dir}; "
          f"{flagged} flagged steps")
    return 0
