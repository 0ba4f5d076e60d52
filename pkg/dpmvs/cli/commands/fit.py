import argparse
from concurrent.futures import ProcessPoolExecutor
import json
import logging
import multiprocessing as mp
from pathlib import Path
import time

import numpy as np

from dpmvs import settings
from dpmvs.cli.options import add_config_flags, add_output_flags, config_from_args
from dpmvs.cli.schemas.manifest_schemas import RunManifest, collect_versions, sha256_file, write_manifest
from dpmvs.common.run_config import McmcConfig, PriorConfig
from dpmvs.dataset.data_model import Dataset, load_dataset, prepare_for_mode
from dpmvs.sampler.graph import Sampler
from dpmvs.storage.sample_store import SampleStore

# Configure logging
logger = logging.getLogger(__name__)

COLUMNS_FILE = "columns.json"


def register(subparsers) -> None:
    parser = subparsers.add_parser("fit", help="run the sampler on a dataset")
    parser.add_argument("--data", required=True, help="CSV file with a header row")
    parser.add_argument("--schema", required=True, help="JSON column schema")
    parser.add_argument(
        "--format", dest="sample_format", choices=["csv", "npz"], default=settings.SAMPLE_FORMAT,
        help="sample file format (env DPMVS_SAMPLE_FORMAT)",
    )
    add_output_flags(parser)
    add_config_flags(parser)
    parser.set_defaults(func=run)


def fit_chain(ds: Dataset, prior: PriorConfig, mcmc: McmcConfig, chain_id: int):
    sampler = Sampler(ds, prior, mcmc, chain_id=chain_id)
    records = list(sampler.run_chain())
    return chain_id, records, sampler.metadata(), sampler.latent_mean


def run_chains(ds: Dataset, prior: PriorConfig, mcmc: McmcConfig, workers: int) -> list:
    """Run n_chains chains (stream id = chain id), in parallel when workers > 1."""
    chain_ids = list(range(mcmc.n_chains))
    if workers > 1 and len(chain_ids) > 1:
        ctx = mp.get_context("spawn")
        with ProcessPoolExecutor(max_workers=min(workers, len(chain_ids)), mp_context=ctx) as pool:
            results = list(pool.map(fit_chain, [ds] * len(chain_ids), [prior] * len(chain_ids), [mcmc] * len(chain_ids), chain_ids))
    else:
        results = [fit_chain(ds, prior, mcmc, chain_id) for chain_id in chain_ids]
    return sorted(results, key=lambda result: result[0])


def run(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    config = config_from_args(args)
    mcmc = config.mcmc

    ds = load_dataset(args.data, args.schema)
    ds = prepare_for_mode(ds, mcmc.mode)
    prior = config.prior.resolve(ds.p, mcmc.mode)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    store = SampleStore(out_dir, args.sample_format)

    artifacts: list[str] = []
    for chain_id, records, metadata, latent_mean in run_chains(ds, prior, mcmc, args.workers):
        artifacts += [str(path) for path in store.write_chain(chain_id, records, metadata, latent_mean)]

    columns_path = out_dir / COLUMNS_FILE
    columns_path.write_text(
        json.dumps(
            {
                "names": ds.names,
                "mean": ds.standardizer[:, 0].tolist(),
                "sd": ds.standardizer[:, 1].tolist(),
                "latent_cells": int(np.sum(ds.latent_mask())),
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    artifacts.append(str(columns_path))

    manifest = RunManifest(
        command="fit",
        argv=args.argv,
        config={"prior": prior.model_dump(), "mcmc": mcmc.model_dump()},
        seeds=[mcmc.seed],
        stream_ids=list(range(mcmc.n_chains)),
        input_hashes={str(args.data): sha256_file(args.data), str(args.schema): sha256_file(args.schema)},
        artifacts=artifacts,
        versions=collect_versions(),
        wall_clock=time.perf_counter() - started,
    )
    write_manifest(manifest, out_dir)
    logger.info(f"Fit finished: {mcmc.n_chains} chain(s) written to {out_dir}")
    return 0
