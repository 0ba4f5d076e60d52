import argparse
import json
import logging
from pathlib import Path
import time

from dpmvs import settings
from dpmvs.bench.runner import stream_id_for
from dpmvs.bench.simulation import CASE_IDS, generate_case, normalize_case_id
from dpmvs.cli.schemas.manifest_schemas import RunManifest, collect_versions, write_manifest
from dpmvs.dataset.data_model import save_dataset
from dpmvs.utils.stats_kernels import RngStream

# Configure logging
logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="write one replicate of a benchmark case as CSV + schema")
    parser.add_argument("--case", required=True, help=f"case id ({', '.join(CASE_IDS)})")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--replicate", type=int, default=0)
    parser.add_argument("--out-dir", default=settings.OUT_DIR, help="output directory (env DPMVS_OUT_DIR)")
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    case_id = normalize_case_id(args.case)
    stream_id = stream_id_for("data", case_id, args.replicate)
    ds, truth = generate_case(case_id, RngStream(args.seed, stream_id))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"case_{case_id}_r{args.replicate}"
    data_path, schema_path, truth_path = (
        out_dir / f"{stem}.csv", out_dir / f"{stem}_schema.json", out_dir / f"{stem}_truth.json"
    )
    save_dataset(ds, data_path, schema_path)
    truth_path.write_text(
        json.dumps(
            {
                "case_id": truth.case_id,
                "phi_true": (truth.phi_true + 1).tolist(),
                "gamma_true": truth.gamma_true.astype(int).tolist(),
                "censoring_rates": truth.censoring_rates,
                "generator_params": truth.generator_params,
            },
            indent=2,
        ),
        encoding="utf-8",
    )

    write_manifest(
        RunManifest(
            command="simulate",
            argv=args.argv,
            seeds=[args.seed],
            stream_ids=[stream_id],
            artifacts=[str(data_path), str(schema_path), str(truth_path)],
            versions=collect_versions(),
            wall_clock=time.perf_counter() - started,
        ),
        out_dir,
    )
    for name, rate in truth.censoring_rates.items():
        logger.info(f"Realized censoring rate of {name}: {rate:.3f}")
    logger.info(f"Case {case_id} replicate {args.replicate} written to {data_path}")
    return 0
