from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import hashlib
import logging
import multiprocessing as mp
import time
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from dpmvs.bench.metrics import clustering_metrics, selection_metrics
from dpmvs.bench.simulation import generate_case, normalize_case_id
from dpmvs.common.errors import DataValidationError
from dpmvs.common.run_config import RunConfig
from dpmvs.common.types import ReplicateScore, RunMode
from dpmvs.dataset.data_model import prepare_for_mode
from dpmvs.sampler.graph import Sampler
from dpmvs.summary.posterior import summarize
from dpmvs.utils.stats_kernels import RngStream

# Configure logging
logger = logging.getLogger(__name__)

METRIC_COLUMNS = ("acc", "fi", "ari", "m", "p1", "pvc", "comp_t")
TABLE_HEADERS = {"acc": "Acc", "fi": "FI", "ari": "ARI", "m": "M", "p1": "p1", "pvc": "PVC", "comp_t": "CompT"}
MODES: tuple[RunMode, ...] = ("vs", "novs", "cont")


def stream_id_for(*parts: object) -> int:
    """Stable non-negative stream id from the given identifying parts."""
    key = "|".join(str(part) for part in parts)
    return int(hashlib.sha256(key.encode("utf-8")).hexdigest()[:16], 16) & 0x7FFFFFFFFFFFFFFF


@dataclass
class BenchmarkReport:
    replicates: pd.DataFrame
    summary: pd.DataFrame
    seed: int
    n_replicates: int

    def format_table(self) -> str:
        """Mean (sd) per case and mode, in the column order Acc FI ARI M p1 PVC CompT."""
        lines = []
        header = f"{'case':<6}{'mode':<6}{'n':>4}" + "".join(f"{TABLE_HEADERS[c]:>16}" for c in METRIC_COLUMNS)
        lines.append(header)
        for _, row in self.summary.iterrows():
            cells = "".join(
                f"{row[f'{c}_mean']:>9.2f} ({row[f'{c}_sd']:.2f})" if not np.isnan(row[f"{c}_mean"]) else f"{'-':>16}"
                for c in METRIC_COLUMNS
            )
            lines.append(f"{row['case_id']:<6}{row['mode']:<6}{int(row['n_ok']):>4}{cells}")
        return "\n".join(lines)


def run_replicate(case_id: str, mode: RunMode, replicate: int, config: RunConfig, seed: int) -> ReplicateScore:
    """Generate, fit, summarize and score one replicate; failures are reported in the `error` field."""
    fit_stream = stream_id_for("fit", case_id, mode, replicate)
    score = ReplicateScore(
        case_id=case_id, mode=mode, replicate=replicate, stream_id=fit_stream,
        acc=None, fi=None, ari=None, m=None, p1=None, pvc=None, comp_t=None,
        censoring_rate=None, error=None,
    )
    try:
        ds, truth = generate_case(case_id, RngStream(seed, stream_id_for("data", case_id, replicate)))
        score["censoring_rate"] = truth.mean_censoring_rate
        ds = prepare_for_mode(ds, mode)
        mcmc = config.mcmc.model_copy(update={"mode": mode, "seed": seed})
        prior = config.prior.resolve(ds.p, mode)

        started = time.perf_counter()
        records = list(Sampler(ds, prior, mcmc, chain_id=0, stream_id=fit_stream).run_chain())
        comp_t = time.perf_counter() - started

        summary = summarize(records, prior)
        clustering = clustering_metrics(summary.phi_hat, truth.phi_true)
        selection = selection_metrics(summary.gamma_hat, truth.gamma_true)
        score.update(
            acc=clustering.acc, fi=clustering.fi, ari=clustering.ari,
            m=summary.modal_m, p1=selection.p1, pvc=selection.pvc, comp_t=comp_t,
        )
    except Exception as e:
        score["error"] = f"{type(e).__name__}: {e}"
    return score


def _replicate_worker(args: tuple) -> ReplicateScore:
    return run_replicate(*args)


def aggregate(frame: pd.DataFrame) -> pd.DataFrame:
    """Mean and sd of every metric per (case, mode) over the successful replicates."""
    ok = frame[frame["error"].isna()]
    rows = []
    for (case_id, mode), group in frame.groupby(["case_id", "mode"], sort=False):
        good = ok[(ok["case_id"] == case_id) & (ok["mode"] == mode)]
        row = {"case_id": case_id, "mode": mode, "n_replicates": len(group), "n_ok": len(good)}
        for column in METRIC_COLUMNS:
            values = good[column].astype(float)
            row[f"{column}_mean"] = float(values.mean()) if len(values) else np.nan
            row[f"{column}_sd"] = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        rows.append(row)
    return pd.DataFrame(rows)


def run_benchmark(
    cases: Sequence[str],
    modes: Sequence[RunMode],
    replicates: int,
    config: RunConfig,
    workers: int = 1,
    seed: Optional[int] = None,
) -> BenchmarkReport:
    """
    Run every (case, mode, replicate) combination and aggregate the scores.

    Data for replicate r of a case is shared by all modes; each fit uses its own
    stream derived from (case, mode, replicate).

    Args:
        cases (Sequence[str]): Case ids
        modes (Sequence[RunMode]): Run modes
        replicates (int): Replicates per case
        config (RunConfig): Prior and sampler settings (mode is overridden per run)
        workers (int): Process pool size
        seed (int | None): Master seed, defaults to config.mcmc.seed

    Returns:
        BenchmarkReport: Per-replicate rows and the per (case, mode) summary
    """
    if replicates < 1:
        raise DataValidationError(f"replicates must be at least 1, got {replicates}")
    cases = [normalize_case_id(case) for case in cases]
    unknown = [mode for mode in modes if mode not in MODES]
    if unknown:
        raise DataValidationError(f"unknown mode(s): {', '.join(unknown)}")
    seed = config.mcmc.seed if seed is None else seed

    jobs = [(case, mode, r, config, seed) for case in cases for mode in modes for r in range(replicates)]
    logger.info(f"Benchmark: {len(jobs)} fits ({len(cases)} cases x {len(modes)} modes x {replicates} replicates), {workers} workers")

    if workers > 1 and len(jobs) > 1:
        ctx = mp.get_context("spawn")
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs)), mp_context=ctx) as pool:
            scores = list(pool.map(_replicate_worker, jobs))
    else:
        scores = [_replicate_worker(job) for job in jobs]

    for score in scores:
        if score["error"] is not None:
            logger.warning(
                f"Replicate {score['replicate']} of case {score['case_id']} ({score['mode']}) failed "
                f"and is excluded: {score['error']}"
            )
        else:
            logger.info(
                f"Case {score['case_id']} {score['mode']} replicate {score['replicate']}: "
                f"Acc={score['acc']:.3f} PVC={score['pvc']:.3f} M={score['m']} ({score['comp_t']:.1f}s)"
            )

    frame = pd.DataFrame(scores, columns=list(ReplicateScore.__annotations__))
    return BenchmarkReport(replicates=frame, summary=aggregate(frame), seed=seed, n_replicates=replicates)
