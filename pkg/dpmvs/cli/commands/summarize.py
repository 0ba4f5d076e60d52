import argparse
import json
import logging
from pathlib import Path
import time
from typing import Optional

import numpy as np
import pandas as pd

from dpmvs.cli.commands.fit import COLUMNS_FILE
from dpmvs.cli.schemas.manifest_schemas import RunManifest, collect_versions, find_manifest, write_manifest
from dpmvs.common.run_config import PriorConfig
from dpmvs.storage.sample_store import ChainSamples, SampleStore
from dpmvs.summary.posterior import cluster_means, summarize_chains, trace_frame

# Configure logging
logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("summarize", help="relabel and summarize the samples of a fit")
    parser.add_argument("--samples", required=True, help="directory written by fit")
    parser.add_argument("--out-dir", default=None, help="output directory (default: the samples directory)")
    parser.set_defaults(func=run)


def _prior_for(samples_dir: Path, p: int) -> PriorConfig:
    manifest = find_manifest(samples_dir)
    if manifest is not None and "prior" in manifest.config:
        return PriorConfig.model_validate(manifest.config["prior"])
    logger.info(f"No fit manifest in {samples_dir}; using the default prior for gamma_hat")
    return PriorConfig().resolve(p)


def _pooled_latent_mean(chains: list[ChainSamples]) -> Optional[np.ndarray]:
    means = [(c.latent_mean, len(c.records)) for c in chains if c.latent_mean is not None]
    if not means:
        return None
    total = sum(weight for _, weight in means)
    return sum(mean * weight for mean, weight in means) / total


def run(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    samples_dir = Path(args.samples)
    out_dir = Path(args.out_dir) if args.out_dir else samples_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    chains = SampleStore(samples_dir).read_chains()
    p = len(chains[0].records[0].gamma)
    prior = _prior_for(samples_dir, p)
    summary = summarize_chains([chain.records for chain in chains], prior)

    columns_path = samples_dir / COLUMNS_FILE
    columns = json.loads(columns_path.read_text(encoding="utf-8")) if columns_path.is_file() else {}
    names = columns.get("names", [f"y{j + 1}" for j in range(p)])

    payload = summary.to_dict()
    payload["variables"] = names
    payload["gamma_prob_by_variable"] = dict(zip(names, summary.gamma_prob.tolist()))
    payload["acceptance"] = {str(chain.chain_id): chain.metadata.get("acceptance", {}) for chain in chains}

    artifacts = []
    p_hat_path = out_dir / "p_hat.csv"
    pd.DataFrame(
        summary.p_hat,
        columns=[f"cluster_{k + 1}" for k in range(summary.p_hat.shape[1])],
        index=pd.RangeIndex(1, summary.p_hat.shape[0] + 1, name="observation"),
    ).to_csv(p_hat_path)
    artifacts.append(p_hat_path)

    trace_path = out_dir / "trace.csv"
    pd.concat(
        [trace_frame(chain.records).assign(chain=chain.chain_id) for chain in chains], ignore_index=True
    ).to_csv(trace_path, index=False)
    artifacts.append(trace_path)

    latent_mean = _pooled_latent_mean(chains)
    if latent_mean is not None:
        means = cluster_means(latent_mean, summary.phi_hat, names)
        means_path = out_dir / "cluster_means.csv"
        means.to_csv(means_path)
        artifacts.append(means_path)
        payload["cluster_means"] = means.reset_index().to_dict(orient="records")
        if "mean" in columns:
            raw = latent_mean * np.asarray(columns["sd"]) + np.asarray(columns["mean"])
            raw_means = cluster_means(raw, summary.phi_hat, names)
            raw_path = out_dir / "cluster_means_raw.csv"
            raw_means.to_csv(raw_path)
            artifacts.append(raw_path)
            payload["cluster_means_raw"] = raw_means.reset_index().to_dict(orient="records")

    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    artifacts.append(summary_path)

    if out_dir != samples_dir:
        write_manifest(
            RunManifest(
                command="summarize",
                argv=args.argv,
                config={"prior": prior.model_dump()},
                artifacts=[str(path) for path in artifacts],
                versions=collect_versions(),
                wall_clock=time.perf_counter() - started,
            ),
            out_dir,
        )
    logger.info(f"Summary of {summary.n_samples} samples written to {out_dir} (modal M = {summary.modal_m})")
    return 0
