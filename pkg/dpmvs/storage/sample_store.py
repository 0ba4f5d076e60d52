from dataclasses import dataclass
import json
import logging
from pathlib import Path
import re
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from dpmvs.common.errors import SampleFileError
from dpmvs.common.types import ChainMetadata, SampleFormat
from dpmvs.sampler.states import SampleRecord

# Configure logging
logger = logging.getLogger(__name__)

CHAIN_FILE = re.compile(r"^chain_(\d+)\.(csv|npz)$")
SCALAR_COLUMNS = ("iteration", "m", "lambda", "eta", "alpha", "log_marginal")
ACCEPT_PREFIX = "accept_"


@dataclass
class ChainSamples:
    chain_id: int
    records: list[SampleRecord]
    metadata: dict
    latent_mean: Optional[np.ndarray]


def encode_gamma(gamma: np.ndarray) -> str:
    return "".join("1" if g else "0" for g in gamma)


def decode_gamma(text: str) -> np.ndarray:
    if not text or set(text) - {"0", "1"}:
        raise ValueError(f"'{text}' is not a 0/1 bitstring")
    return np.array([ch == "1" for ch in text], dtype=bool)


def encode_phi(phi: np.ndarray, width: int) -> str:
    """1-based labels, zero-padded to a fixed width and concatenated."""
    return "".join(f"{label + 1:0{width}d}" for label in phi)


def decode_phi(text: str, width: int) -> np.ndarray:
    if width < 1 or len(text) % width or not text.isdigit():
        raise ValueError(f"'{text[:20]}...' is not a width-{width} label string")
    labels = np.array([int(text[k:k + width]) for k in range(0, len(text), width)], dtype=np.int64)
    if labels.min() < 1:
        raise ValueError("labels in sample files start at 1")
    return labels - 1


def phi_width(n: int) -> int:
    return len(str(max(n, 1)))


def flag_names(records: Sequence[SampleRecord]) -> list[str]:
    """Update names carrying accept flags, in order of first appearance."""
    names: dict[str, None] = {}
    for record in records:
        names.update(dict.fromkeys(record.accept_flags))
    return list(names)


class SampleStore:
    """
    Reads and writes the sample files of a fit: one samples file per chain
    (CSV or npz), a JSON metadata file and the posterior mean of the latent matrix.
    """

    def __init__(self, out_dir: Union[str, Path], fmt: SampleFormat = "csv"):
        """
        Args:
            out_dir (str | Path): Directory holding the chain files
            fmt (SampleFormat): "csv" or "npz" for newly written chains
        """
        if fmt not in ("csv", "npz"):
            raise ValueError(f"unknown sample format '{fmt}'")
        self.out_dir = Path(out_dir)
        self.fmt = fmt

    def chain_path(self, chain_id: int, fmt: Optional[str] = None) -> Path:
        return self.out_dir / f"chain_{chain_id}.{fmt or self.fmt}"

    def metadata_path(self, chain_id: int) -> Path:
        return self.out_dir / f"chain_{chain_id}.json"

    def latent_path(self, chain_id: int) -> Path:
        return self.out_dir / f"chain_{chain_id}_zmean.npy"

    def write_chain(
        self,
        chain_id: int,
        records: Sequence[SampleRecord],
        metadata: ChainMetadata,
        latent_mean: Optional[np.ndarray] = None,
    ) -> list[Path]:
        """
        Write one chain's samples, metadata and latent mean.

        Returns:
            list[Path]: The files written
        """
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            n = len(records[0].phi) if records else 0
            width = phi_width(n)
            flags = flag_names(records)
            path = self.chain_path(chain_id)

            if self.fmt == "csv":
                frame = pd.DataFrame(
                    {
                        "iteration": [r.iteration for r in records],
                        "gamma": [encode_gamma(r.gamma) for r in records],
                        "phi": [encode_phi(r.phi, width) for r in records],
                        "m": [r.m for r in records],
                        "lambda": [r.lam for r in records],
                        "eta": [r.eta for r in records],
                        "alpha": [r.alpha for r in records],
                        "log_marginal": [r.log_marginal for r in records],
                    }
                )
                for name in flags:
                    frame[ACCEPT_PREFIX + name] = [
                        float(r.accept_flags[name]) if name in r.accept_flags else np.nan for r in records
                    ]
                frame.to_csv(path, index=False, float_format="%.17g")
            else:
                np.savez_compressed(
                    path,
                    iteration=np.array([r.iteration for r in records], dtype=np.int64),
                    gamma=np.array([r.gamma for r in records], dtype=bool),
                    phi=np.array([r.phi for r in records], dtype=np.int64) + 1,
                    m=np.array([r.m for r in records], dtype=np.int64),
                    lam=np.array([r.lam for r in records]),
                    eta=np.array([r.eta for r in records]),
                    alpha=np.array([r.alpha for r in records]),
                    log_marginal=np.array([r.log_marginal for r in records]),
                    accept_names=np.array(flags, dtype=str),
                    accept=np.array(
                        [[int(r.accept_flags.get(name, -1)) for name in flags] for r in records], dtype=np.int8
                    ).reshape(len(records), len(flags)),
                )

            payload = dict(metadata)
            payload.update({"format": self.fmt, "phi_width": width, "n_rows": n})
            self.metadata_path(chain_id).write_text(json.dumps(payload, indent=2), encoding="utf-8")
            written = [path, self.metadata_path(chain_id)]

            if latent_mean is not None:
                np.save(self.latent_path(chain_id), latent_mean)
                written.append(self.latent_path(chain_id))

            logger.info(f"Wrote {len(records)} samples of chain {chain_id} to {path}")
            return written

        except OSError as e:
            logger.error(f"Error writing chain {chain_id} to {self.out_dir}: {str(e)}")
            raise

    def list_chains(self) -> list[tuple[int, Path]]:
        if not self.out_dir.is_dir():
            raise SampleFileError(f"sample directory not found: {self.out_dir}")
        found = []
        for path in self.out_dir.iterdir():
            match = CHAIN_FILE.match(path.name)
            if match:
                found.append((int(match.group(1)), path))
        if not found:
            raise SampleFileError(f"no chain sample files in {self.out_dir}")
        return sorted(found)

    def _read_metadata(self, chain_id: int) -> dict:
        path = self.metadata_path(chain_id)
        if not path.is_file():
            return {}
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise SampleFileError(f"corrupt metadata file {path}: {e}") from e

    def _read_csv(self, path: Path, metadata: dict) -> list[SampleRecord]:
        frame = pd.read_csv(path, dtype={"gamma": str, "phi": str})
        missing = {"gamma", "phi", *SCALAR_COLUMNS} - set(frame.columns)
        if missing:
            raise ValueError(f"missing column(s) {', '.join(sorted(missing))}")
        width = int(metadata.get("phi_width", 0))
        if not width:
            n = int(metadata.get("n_rows", 0))
            width = len(frame["phi"].iloc[0]) // n if n else 1
        flag_columns = [c for c in frame.columns if c.startswith(ACCEPT_PREFIX)]
        return [
            SampleRecord(
                iteration=int(row.iteration),
                gamma=decode_gamma(row.gamma),
                phi=decode_phi(row.phi, width),
                m=int(row.m),
                lam=float(row["lambda"]),
                eta=float(row.eta),
                alpha=float(row.alpha),
                log_marginal=float(row.log_marginal),
                accept_flags={
                    c[len(ACCEPT_PREFIX):]: bool(row[c]) for c in flag_columns if not pd.isna(row[c])
                },
            )
            for _, row in frame.iterrows()
        ]

    @staticmethod
    def _read_npz(path: Path) -> list[SampleRecord]:
        with np.load(path) as data:
            names = data["accept_names"].tolist() if "accept_names" in data.files else []
            accept = data["accept"] if names else None
            return [
                SampleRecord(
                    iteration=int(data["iteration"][s]),
                    gamma=data["gamma"][s].astype(bool),
                    phi=data["phi"][s].astype(np.int64) - 1,
                    m=int(data["m"][s]),
                    lam=float(data["lam"][s]),
                    eta=float(data["eta"][s]),
                    alpha=float(data["alpha"][s]),
                    log_marginal=float(data["log_marginal"][s]),
                    accept_flags={
                        name: bool(accept[s, k]) for k, name in enumerate(names) if accept[s, k] >= 0
                    },
                )
                for s in range(len(data["iteration"]))
            ]

    def read_chain(self, chain_id: int, path: Optional[Path] = None) -> ChainSamples:
        path = path or self.chain_path(chain_id)
        metadata = self._read_metadata(chain_id)
        try:
            records = self._read_csv(path, metadata) if path.suffix == ".csv" else self._read_npz(path)
        except (ValueError, KeyError, OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise SampleFileError(f"corrupt sample file {path}: {e}") from e
        if not records:
            raise SampleFileError(f"sample file {path} holds no samples")

        latent_path = self.latent_path(chain_id)
        latent_mean = np.load(latent_path) if latent_path.is_file() else None
        logger.info(f"Read {len(records)} samples of chain {chain_id} from {path}")
        return ChainSamples(chain_id=chain_id, records=records, metadata=metadata, latent_mean=latent_mean)

    def read_chains(self) -> list[ChainSamples]:
        """Every chain in the directory, ordered by chain id."""
        return [self.read_chain(chain_id, path) for chain_id, path in self.list_chains()]
