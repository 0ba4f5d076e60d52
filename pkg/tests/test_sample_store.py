import json

import numpy as np
import pytest

from dpmvs.common.errors import SampleFileError
from dpmvs.sampler.states import SampleRecord
from dpmvs.storage.sample_store import SampleStore, decode_gamma, decode_phi, encode_phi, phi_width

pytestmark = pytest.mark.unit

METADATA = {
    "chain_id": 0, "seed": 1, "stream_id": 0, "n_samples": 2,
    "acceptance": {"alpha": 0.4}, "sampling_acceptance": {"alpha": {"proposed": 5, "accepted": 2}},
    "latent_block_rows": 1, "wall_clock": 0.5,
}


def records(n=12):
    phi_a = np.arange(n) % 11
    phi_b = np.zeros(n, dtype=np.int64)
    return [
        SampleRecord(10, np.array([True, False, False, True]), phi_a, 11, 0.123456789012345, 6.5, 1.0 / 3.0, -123.456,
                     {"alpha": True, "joint": False}),
        SampleRecord(11, np.array([False, False, False, False]), phi_b, 1, 2.0, 7.25, 0.1, -120.0, {"alpha": False}),
    ]


def test_phi_codec_width():
    assert phi_width(12) == 2 and phi_width(9) == 1
    assert encode_phi(np.array([0, 10, 1]), 2) == "011102"
    np.testing.assert_array_equal(decode_phi("011102", 2), [0, 10, 1])
    with pytest.raises(ValueError):
        decode_phi("0111020", 2)
    with pytest.raises(ValueError):
        decode_phi("00", 2)


def test_gamma_codec_rejects_garbage():
    np.testing.assert_array_equal(decode_gamma("0110"), [False, True, True, False])
    with pytest.raises(ValueError):
        decode_gamma("01x")


@pytest.mark.parametrize("fmt", ["csv", "npz"])
def test_write_then_read(tmp_path, fmt):
    store = SampleStore(tmp_path, fmt)
    latent = np.arange(8.0).reshape(4, 2)
    written = store.write_chain(0, records(), METADATA, latent)
    assert store.chain_path(0) in written and store.latent_path(0) in written

    chain = SampleStore(tmp_path).read_chains()[0]
    assert chain.chain_id == 0
    assert chain.metadata["format"] == fmt and chain.metadata["acceptance"] == {"alpha": 0.4}
    np.testing.assert_array_equal(chain.latent_mean, latent)
    for got, expected in zip(chain.records, records()):
        assert got.iteration == expected.iteration and got.m == expected.m
        np.testing.assert_array_equal(got.gamma, expected.gamma)
        np.testing.assert_array_equal(got.phi, expected.phi)
        assert (got.lam, got.eta, got.alpha, got.log_marginal) == (
            expected.lam, expected.eta, expected.alpha, expected.log_marginal,
        )
        assert got.accept_flags == expected.accept_flags


def test_chains_are_ordered_by_id(tmp_path):
    store = SampleStore(tmp_path)
    for chain_id in (10, 2, 0):
        store.write_chain(chain_id, records(), METADATA)
    assert [chain_id for chain_id, _ in store.list_chains()] == [0, 2, 10]


def test_csv_columns(tmp_path):
    SampleStore(tmp_path).write_chain(0, records(), METADATA)
    header = (tmp_path / "chain_0.csv").read_text().splitlines()[0]
    assert header == "iteration,gamma,phi,m,lambda,eta,alpha,log_marginal,accept_alpha,accept_joint"
    assert json.loads((tmp_path / "chain_0.json").read_text())["phi_width"] == 2


class TestErrors:
    def test_missing_directory(self, tmp_path):
        with pytest.raises(SampleFileError, match="not found"):
            SampleStore(tmp_path / "nope").read_chains()

    def test_no_chain_files(self, tmp_path):
        (tmp_path / "notes.txt").write_text("x")
        with pytest.raises(SampleFileError, match="no chain"):
            SampleStore(tmp_path).read_chains()

    def test_corrupt_csv(self, tmp_path):
        (tmp_path / "chain_0.csv").write_text("iteration,gamma\n1,01\n")
        with pytest.raises(SampleFileError, match="corrupt"):
            SampleStore(tmp_path).read_chains()

    def test_empty_csv(self, tmp_path):
        (tmp_path / "chain_0.csv").write_text("")
        with pytest.raises(SampleFileError):
            SampleStore(tmp_path).read_chains()

    def test_header_only(self, tmp_path):
        (tmp_path / "chain_0.csv").write_text("iteration,gamma,phi,m,lambda,eta,alpha,log_marginal\n")
        with pytest.raises(SampleFileError, match="no samples"):
            SampleStore(tmp_path).read_chains()

    def test_corrupt_npz(self, tmp_path):
        (tmp_path / "chain_0.npz").write_bytes(b"not a zip archive")
        with pytest.raises(SampleFileError):
            SampleStore(tmp_path).read_chains()

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            SampleStore(tmp_path, "parquet")
