"""Command-line front-end: ``run``, ``gen-data``, ``certify`` and ``sweep``.

Exit codes: 0 success, 2 configuration error, 3 divergence.
"""

from __future__ import annotations

import argparse
import asyncio
import logging
import os
from pathlib import Path
from typing import Any, Optional, Sequence

from dotenv import load_dotenv
from langchain_core.runnables import RunnableConfig

from onepoint_dsgt.datagen import two_clusters
from onepoint_dsgt.errors import ConfigError, ConnectivityError
from onepoint_dsgt.graph import graph
from onepoint_dsgt.persistence import (
    read_json,
    write_dataset,
    write_json,
    write_sweep,
    write_trace,
)
from onepoint_dsgt.state import parse_sweep_config
from onepoint_dsgt.utils import config_hash, configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

DEFAULT_OUT_DIR = "out"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="onepoint-dsgt",
        description="Distributed gradient tracking with one-point zero-order estimates.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    common.add_argument("--parallel", action="store_true", help="run repetitions in parallel")

    experiment = argparse.ArgumentParser(add_help=False, parents=[common])
    experiment.add_argument("--config", type=Path, required=True, help="run config JSON")
    experiment.add_argument("--seed", type=int, default=None, help="override algorithm.seed")
    experiment.add_argument("--reps", type=int, default=None, help="override repetitions")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[experiment], help="run seeded repetitions")
    sub.add_parser("certify", parents=[experiment], help="run and certify the divergence rate")
    sub.add_parser("sweep", parents=[experiment], help="sweep exponent pairs")

    gen = sub.add_parser("gen-data", parents=[common], help="write a two-cluster dataset")
    gen.add_argument("--n-samples", type=int, default=2000)
    gen.add_argument("--dim", type=int, default=10)
    gen.add_argument("--separation", type=float, default=4.0)
    gen.add_argument("--seed", type=int, default=0)
    return parser


def _out_dir(args: argparse.Namespace, configured: Optional[str] = None) -> Path:
    if args.out is not None:
        return Path(args.out)
    if configured:
        return Path(configured)
    return Path(os.getenv("ONEPOINT_DSGT_OUT_DIR", DEFAULT_OUT_DIR))


def _runnable_config(args: argparse.Namespace) -> RunnableConfig:
    return RunnableConfig(configurable={"parallel_runs": bool(getattr(args, "parallel", False))})


async def _invoke(
    payload: Any,
    mode: str,
    args: argparse.Namespace,
    seed: Optional[int] = None,
    reps: Optional[int] = None,
) -> dict[str, Any]:
    inputs = {"config": payload, "mode": mode, "seed_override": seed, "reps_override": reps}
    return await graph.ainvoke(inputs, config=_runnable_config(args))


def _report_errors(errors: Sequence[str]) -> int:
    for message in errors:
        logger.error("config error: %s", message)
    return EXIT_CONFIG


def _experiment(args: argparse.Namespace, mode: str) -> int:
    payload = read_json(args.config)
    result = asyncio.run(_invoke(payload, mode, args, seed=args.seed, reps=args.reps))
    if result.get("errors"):
        return _report_errors(result["errors"])

    run_config = result["run_config"]
    out_dir = _out_dir(args, run_config.output)
    if result.get("trace") is not None:
        write_trace(result["trace"], out_dir / "trace.csv")
    write_json(result["summary"], out_dir / "summary.json")
    if mode == "certify" and result.get("certificate") is not None:
        write_json(result["certificate"], out_dir / "certificate.json")

    if result.get("diverged"):
        logger.error("run diverged; partial outputs kept in %s", out_dir)
        return EXIT_DIVERGED
    return EXIT_OK


def _sweep(args: argparse.Namespace) -> int:
    payload = read_json(args.config)
    sweep = parse_sweep_config(payload)
    base = sweep.base.model_dump(mode="json")
    rows: list[dict[str, Any]] = []
    ran = 0
    diverged = False
    for upsilon1, upsilon2 in sweep.grid.upsilon:
        point = {**base, "algorithm": {**base["algorithm"]}}
        point["algorithm"]["schedule"] = {
            **base["algorithm"]["schedule"],
            "upsilon1": upsilon1,
            "upsilon2": upsilon2,
        }
        result = asyncio.run(_invoke(point, "run", args, seed=args.seed, reps=args.reps))
        if result.get("errors"):
            reason = "; ".join(result["errors"])
            logger.warning("skipping (%g, %g): %s", upsilon1, upsilon2, reason)
            rows.append(
                {
                    "upsilon1": upsilon1,
                    "upsilon2": upsilon2,
                    "metric": "all",
                    "slope": None,
                    "status": f"skipped: {reason}",
                }
            )
            continue
        ran += 1
        summary = result["summary"]
        status = "ok"
        if result.get("diverged"):
            diverged = True
            status = f"diverged at round {summary['divergence_round']}"
        for metric, slope in summary["slopes"].items():
            rows.append(
                {
                    "upsilon1": upsilon1,
                    "upsilon2": upsilon2,
                    "metric": metric,
                    "slope": slope,
                    "status": status,
                }
            )

    out_dir = _out_dir(args, sweep.base.output)
    write_sweep(rows, out_dir / "sweep.csv")
    write_json(
        {"config_hash": config_hash(sweep.model_dump(mode="json")), "points": len(sweep.grid.upsilon), "ran": ran},
        out_dir / "sweep.json",
    )
    if ran == 0:
        logger.error("every grid point was skipped")
        return EXIT_CONFIG
    return EXIT_DIVERGED if diverged else EXIT_OK


def _gen_data(args: argparse.Namespace) -> int:
    try:
        data = two_clusters(args.n_samples, args.dim, args.separation, args.seed)
    except ValueError as exc:
        logger.error("config error: %s", exc)
        return EXIT_CONFIG
    out = _out_dir(args)
    target = out if out.suffix == ".csv" else out / "dataset.csv"
    write_dataset(data, target)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the ``onepoint-dsgt`` command."""
    load_dotenv()
    args = _build_parser().parse_args(argv)
    configure_logging(os.getenv("ONEPOINT_DSGT_LOG_LEVEL", "INFO"), quiet=args.quiet)
    try:
        if args.command == "gen-data":
            return _gen_data(args)
        if args.command == "sweep":
            return _sweep(args)
        return _experiment(args, args.command)
    except ConfigError as exc:
        return _report_errors(exc.messages)
    except ConnectivityError as exc:
        return _report_errors([f"topology: {exc}"])
    except (FileNotFoundError, ValueError) as exc:
        return _report_errors([str(exc)])


if __name__ == "__main__":
    raise SystemExit(main())
