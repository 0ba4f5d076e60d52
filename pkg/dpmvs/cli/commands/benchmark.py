import argparse
import logging
from pathlib import Path
import time

from dpmvs.bench.runner import MODES, run_benchmark
from dpmvs.bench.simulation import CASE_IDS
from dpmvs.cli.options import add_config_flags, add_output_flags, config_from_args
from dpmvs.cli.schemas.manifest_schemas import RunManifest, collect_versions, write_manifest

# Configure logging
logger = logging.getLogger(__name__)

DESK_REPLICATES = 20
FULL_REPLICATES = 100
FULL_ITERATIONS = 20000


def register(subparsers) -> None:
    parser = subparsers.add_parser("benchmark", help="replicate the simulation study")
    parser.add_argument("--cases", nargs="+", default=list(CASE_IDS), help="case ids")
    parser.add_argument("--modes", nargs="+", default=["vs"], choices=list(MODES))
    parser.add_argument("--replicates", type=int, default=None, help=f"replicates per case (default {DESK_REPLICATES})")
    parser.add_argument(
        "--full-budget", "--full-paper-budget", dest="full_budget", action="store_true",
        help=f"{FULL_REPLICATES} replicates of {FULL_ITERATIONS} iterations",
    )
    add_output_flags(parser)
    add_config_flags(parser)
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    if args.full_budget:
        args.iterations = args.iterations or FULL_ITERATIONS
    config = config_from_args(args)
    replicates = args.replicates or (FULL_REPLICATES if args.full_budget else DESK_REPLICATES)

    report = run_benchmark(args.cases, args.modes, replicates, config, workers=args.workers)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    replicates_path = out_dir / "benchmark_replicates.csv"
    report_path = out_dir / "benchmark_report.csv"
    table_path = out_dir / "benchmark_table.txt"
    report.replicates.to_csv(replicates_path, index=False)
    report.summary.to_csv(report_path, index=False)
    table = report.format_table()
    table_path.write_text(table + "\n", encoding="utf-8")
    print(table)

    write_manifest(
        RunManifest(
            command="benchmark",
            argv=args.argv,
            config={"prior": config.prior.model_dump(), "mcmc": config.mcmc.model_dump(), "replicates": replicates},
            seeds=[report.seed],
            stream_ids=[int(s) for s in report.replicates["stream_id"]],
            artifacts=[str(replicates_path), str(report_path), str(table_path)],
            versions=collect_versions(),
            wall_clock=time.perf_counter() - started,
        ),
        out_dir,
    )
    failed = int(report.replicates["error"].notna().sum())
    if failed:
        logger.warning(f"{failed} replicate(s) failed and were excluded from the report")
    return 0
