import logging

import numpy as np
import pandas as pd
import pytest

from dpmvs import settings
from dpmvs.bench.runner import BenchmarkReport, aggregate, run_benchmark, run_replicate, stream_id_for
from dpmvs.bench.simulation import generate_case
from dpmvs.common.errors import DataValidationError
from dpmvs.common.run_config import McmcConfig, PriorConfig, RunConfig
from dpmvs.dataset.data_model import prepare_for_mode
from dpmvs.sampler.graph import Sampler
from dpmvs.utils.stats_kernels import RngStream


@pytest.fixture
def tiny_config() -> RunConfig:
    return RunConfig(mcmc=McmcConfig(iterations=30, burn_in=10, seed=4))


@pytest.mark.unit
class TestStreamIds:
    def test_stable(self):
        assert stream_id_for("fit", "1a", "vs", 3) == stream_id_for("fit", "1a", "vs", 3)

    def test_distinct_and_non_negative(self):
        ids = {stream_id_for("fit", case, mode, r) for case in ("1a", "2b") for mode in ("vs", "novs") for r in range(5)}
        assert len(ids) == 20
        assert all(0 <= i < 2**63 for i in ids)


@pytest.mark.unit
def test_aggregate():
    frame = pd.DataFrame(
        [
            {"case_id": "1a", "mode": "vs", "replicate": 0, "acc": 0.9, "fi": 0.8, "ari": 0.7, "m": 3, "p1": 2, "pvc": 1.0, "comp_t": 1.0, "error": None},
            {"case_id": "1a", "mode": "vs", "replicate": 1, "acc": 0.7, "fi": 0.6, "ari": 0.5, "m": 3, "p1": 4, "pvc": 0.8, "comp_t": 3.0, "error": None},
            {"case_id": "1a", "mode": "vs", "replicate": 2, "acc": None, "fi": None, "ari": None, "m": None, "p1": None, "pvc": None, "comp_t": None, "error": "boom"},
        ]
    )
    summary = aggregate(frame)
    row = summary.iloc[0]
    assert len(summary) == 1
    assert row["n_replicates"] == 3 and row["n_ok"] == 2
    assert row["acc_mean"] == pytest.approx(0.8)
    assert row["acc_sd"] == pytest.approx(np.std([0.9, 0.7], ddof=1))
    assert row["p1_mean"] == pytest.approx(3.0)


@pytest.mark.integration
class TestBenchmark:
    def test_two_replicates_of_one_case(self, tiny_config):
        report = run_benchmark(["1a"], ["vs"], 2, tiny_config)
        assert isinstance(report, BenchmarkReport)
        assert len(report.summary) == 1 and len(report.replicates) == 2
        row = report.summary.iloc[0]
        assert row["n_replicates"] == 2 and row["n_ok"] == 2
        assert 0.0 <= row["acc_mean"] <= 1.0 and 0.0 <= row["pvc_mean"] <= 1.0
        assert report.seed == 4
        assert "Acc" in report.format_table() and "CompT" in report.format_table()

    def test_novs_selects_every_variable(self, tiny_config):
        score = run_replicate("1a", "novs", 0, tiny_config, seed=4)
        assert score["error"] is None
        assert score["p1"] == 10

    def test_replicates_are_reproducible(self, tiny_config):
        a = run_replicate("1c", "vs", 1, tiny_config, seed=9)
        b = run_replicate("1c", "vs", 1, tiny_config, seed=9)
        for key in ("acc", "fi", "ari", "m", "p1", "pvc", "censoring_rate", "stream_id"):
            assert a[key] == b[key]

    def test_failed_replicates_are_excluded(self, tiny_config, mocker, caplog):
        mocker.patch("dpmvs.bench.runner.generate_case", side_effect=RuntimeError("boom"))
        with caplog.at_level(logging.WARNING, logger="dpmvs.bench.runner"):
            report = run_benchmark(["1a"], ["vs"], 2, tiny_config)
        assert report.replicates["error"].str.contains("boom").all()
        assert report.summary.iloc[0]["n_ok"] == 0
        assert np.isnan(report.summary.iloc[0]["acc_mean"])
        assert "excluded" in caplog.text
        assert "-" in report.format_table()


@pytest.mark.unit
def test_invalid_inputs(tiny_config):
    with pytest.raises(DataValidationError):
        run_benchmark(["1a"], ["vs"], 0, tiny_config)
    with pytest.raises(DataValidationError):
        run_benchmark(["9z"], ["vs"], 1, tiny_config)
    with pytest.raises(DataValidationError):
        run_benchmark(["1a"], ["fast"], 1, tiny_config)


@pytest.fixture(scope="module")
def desk_config() -> RunConfig:
    return RunConfig(mcmc=McmcConfig(iterations=8000, burn_in=3000, seed=17))


def scores_for(report: BenchmarkReport, case_id: str, mode: str) -> tuple[pd.Series, pd.DataFrame]:
    summary = report.summary.set_index(["case_id", "mode"]).loc[(case_id, mode)]
    replicates = report.replicates[(report.replicates["case_id"] == case_id) & (report.replicates["mode"] == mode)]
    assert replicates["error"].isna().all()
    return summary, replicates


@pytest.mark.slow
class TestDeskScaleBenchmark:
    def test_case_1a_recovers_clusters_and_variables(self, desk_config):
        report = run_benchmark(["1a"], ["vs"], 20, desk_config, workers=settings.WORKERS)
        summary, replicates = scores_for(report, "1a", "vs")
        assert summary["acc_mean"] >= 0.80
        assert summary["pvc_mean"] >= 0.90
        assert (replicates["m"] == 3).mean() >= 0.60

    def test_case_1c_treating_discrete_columns_as_continuous_costs_accuracy(self, desk_config):
        report = run_benchmark(["1c"], ["vs", "cont"], 20, desk_config, workers=settings.WORKERS)
        vs, _ = scores_for(report, "1c", "vs")
        cont, _ = scores_for(report, "1c", "cont")
        assert vs["acc_mean"] >= 0.70
        assert vs["pvc_mean"] >= 0.85
        assert cont["acc_mean"] < vs["acc_mean"]

    def test_case_1b_needs_variable_selection(self, desk_config):
        report = run_benchmark(["1b"], ["vs", "novs"], 20, desk_config, workers=settings.WORKERS)
        vs, _ = scores_for(report, "1b", "vs")
        novs, novs_rows = scores_for(report, "1b", "novs")
        assert novs["acc_mean"] <= 0.45
        assert (novs_rows["p1"] == 10).all()
        assert vs["acc_mean"] >= 0.75
        assert vs["pvc_mean"] >= novs["pvc_mean"]

    def test_case_2c(self, desk_config):
        report = run_benchmark(["2c"], ["vs"], 10, desk_config, workers=settings.WORKERS)
        summary, _ = scores_for(report, "2c", "vs")
        assert summary["acc_mean"] >= 0.80
        assert summary["pvc_mean"] >= 0.90


@pytest.mark.slow
def test_acceptance_rates_after_burn_in():
    ds, _ = generate_case("1c", RngStream(5))
    ds = prepare_for_mode(ds, "vs")
    sampler = Sampler(ds, PriorConfig(), McmcConfig(iterations=3000, burn_in=1500, seed=5))
    list(sampler.run_chain())
    counts = sampler.metadata()["sampling_acceptance"]
    assert {"latent", "psi", "alpha", "lambda", "eta", "gamma"} <= set(counts)
    for name, tally in counts.items():
        assert 0 <= tally["accepted"] <= tally["proposed"], name
    latent = counts["latent"]
    assert 0.15 <= latent["accepted"] / latent["proposed"] <= 0.7
