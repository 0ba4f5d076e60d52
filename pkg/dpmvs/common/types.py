from typing import Literal, Optional, TypedDict

RunMode = Literal["vs", "novs", "cont"]
SampleFormat = Literal["csv", "npz"]


class AcceptanceCounts(TypedDict):
    proposed: int
    accepted: int


class ChainMetadata(TypedDict):
    chain_id: int
    seed: int
    stream_id: int
    n_samples: int
    acceptance: dict[str, float]
    sampling_acceptance: dict[str, AcceptanceCounts]
    latent_block_rows: int
    wall_clock: float


class ReplicateScore(TypedDict):
    case_id: str
    mode: RunMode
    replicate: int
    stream_id: int
    acc: Optional[float]
    fi: Optional[float]
    ari: Optional[float]
    m: Optional[int]
    p1: Optional[int]
    pvc: Optional[float]
    comp_t: Optional[float]
    censoring_rate: Optional[float]
    error: Optional[str]
