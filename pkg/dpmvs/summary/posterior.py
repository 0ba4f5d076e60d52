"""
Label-switching correction and point estimates from posterior sample streams.

Relabeling works on hard assignments: each sample's labels are mapped onto the
columns of a running membership matrix p_hat by an optimal assignment, p_hat is
re-averaged from the mapped samples, and the two steps alternate until no map
changes.
"""
from collections import Counter
from dataclasses import dataclass, field
import logging
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment

from dpmvs.common.run_config import PriorConfig
from dpmvs.sampler.states import SampleRecord

# Configure logging
logger = logging.getLogger(__name__)

MAX_ROUNDS = 100


@dataclass
class RelabelResult:
    p_hat: np.ndarray
    maps: np.ndarray
    rounds: int
    converged: bool

    @property
    def n_columns(self) -> int:
        return self.p_hat.shape[1]


@dataclass
class PosteriorSummary:
    p_hat: np.ndarray
    gamma_prob: np.ndarray
    m_posterior: dict[int, float]
    phi_hat: np.ndarray
    gamma_hat: np.ndarray
    relabel_maps: np.ndarray
    n_samples: int
    relabel_rounds: int
    chain_sizes: list[int] = field(default_factory=list)

    @property
    def modal_m(self) -> int:
        best = max(self.m_posterior.values())
        return min(m for m, freq in self.m_posterior.items() if freq == best)

    def to_dict(self) -> dict:
        """JSON-ready view; cluster labels are 1-based."""
        return {
            "n_samples": self.n_samples,
            "chain_sizes": self.chain_sizes,
            "relabel_rounds": self.relabel_rounds,
            "gamma_prob": self.gamma_prob.tolist(),
            "gamma_hat": self.gamma_hat.astype(int).tolist(),
            "m_posterior": {str(m): freq for m, freq in self.m_posterior.items()},
            "modal_m": self.modal_m,
            "n_clusters_relabeled": int(self.p_hat.shape[1]),
            "phi_hat": (self.phi_hat + 1).tolist(),
        }


def canonical_labels(phi: np.ndarray) -> np.ndarray:
    """Relabel so clusters are numbered by first appearance."""
    _, first, inverse = np.unique(phi, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse]


def _one_hot(phi: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros((len(phi), K))
    out[np.arange(len(phi)), phi] = 1.0
    return out


def _modal_partition(phis: np.ndarray, K: int) -> np.ndarray:
    counts = Counter(tuple(canonical_labels(phi)) for phi in phis)
    best = max(counts.values())
    mode = min(key for key, freq in counts.items() if freq == best)
    return _one_hot(np.asarray(mode), K)


def _best_maps(phis: np.ndarray, p_hat: np.ndarray) -> np.ndarray:
    K = p_hat.shape[1]
    maps = np.empty((len(phis), K), dtype=np.int64)
    for s, phi in enumerate(phis):
        agreement = np.zeros((K, K))
        np.add.at(agreement, phi, p_hat)
        rows, cols = linear_sum_assignment(agreement, maximize=True)
        maps[s, rows] = cols
    return maps


def _mapped_mass(phis: np.ndarray, maps: np.ndarray, K: int) -> np.ndarray:
    n = phis.shape[1]
    mass = np.zeros((n, K))
    rows = np.arange(n)
    for phi, mapping in zip(phis, maps):
        np.add.at(mass, (rows, mapping[phi]), 1.0)
    return mass


def _align(phis: np.ndarray, p_init: np.ndarray, max_rounds: int) -> tuple[np.ndarray, np.ndarray, int, bool]:
    """Alternate optimal maps and re-averaging; returns (p_hat, maps, rounds, converged)."""
    K = p_init.shape[1]
    p_hat = p_init
    maps = None
    for rounds in range(1, max_rounds + 1):
        new_maps = _best_maps(phis, p_hat)
        p_hat = _mapped_mass(phis, new_maps, K) / len(phis)
        if maps is not None and np.array_equal(new_maps, maps):
            return p_hat, new_maps, rounds, True
        maps = new_maps
    return p_hat, maps, max_rounds, False


def _sorted_columns(mass: np.ndarray, maps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Order columns by total mass (stable, descending) and drop empty ones."""
    totals = mass.sum(axis=0)
    order = np.argsort(-totals, kind="stable")
    order = order[totals[order] > 0]
    position = np.full(mass.shape[1], -1, dtype=np.int64)
    position[order] = np.arange(len(order))
    return mass[:, order], position[maps]


def _stack_phis(phis: Sequence[np.ndarray]) -> np.ndarray:
    if len(phis) == 0:
        raise ValueError("relabeling needs at least one sample")
    return np.asarray([np.asarray(phi, dtype=np.int64) for phi in phis])


def relabel_samples(
    phis: Sequence[np.ndarray],
    reference: Optional[np.ndarray] = None,
    max_rounds: int = MAX_ROUNDS,
) -> RelabelResult:
    """
    Resolve label switching across a sample of partitions.

    Without a reference the scheme starts from the most frequent partition (ties
    broken by the smallest first-appearance labelling), which makes the result
    independent of sample order. With a reference membership matrix each sample is
    mapped once onto its columns.

    Args:
        phis (Sequence[np.ndarray]): 0-based label vectors, one per sample
        reference (np.ndarray | None): n x K membership matrix to align against
        max_rounds (int): Cap on alternation rounds

    Returns:
        RelabelResult: p_hat with columns sorted by mass and empty columns dropped,
            and maps[s, label] giving the p_hat column of each sample's label
    """
    phis = _stack_phis(phis)
    K = int(phis.max()) + 1
    if reference is not None:
        K = max(K, reference.shape[1])
        p_init = np.zeros((phis.shape[1], K))
        p_init[:, :reference.shape[1]] = reference
        p_hat, maps, rounds, converged = _align(phis, p_init, 1)
        converged = True
    else:
        p_hat, maps, rounds, converged = _align(phis, _modal_partition(phis, K), max_rounds)
        if not converged:
            logger.warning(f"Relabeling stopped after {max_rounds} rounds without converging")

    p_hat, maps = _sorted_columns(p_hat, maps)
    return RelabelResult(p_hat=p_hat, maps=maps, rounds=rounds, converged=converged)


def _gamma_hat(gamma_prob: np.ndarray, rho: np.ndarray) -> np.ndarray:
    fixed = (rho == 0) | (rho == 1)
    return np.where(fixed, rho == 1, gamma_prob > rho)


def _m_posterior(records: Sequence[SampleRecord]) -> dict[int, float]:
    counts = Counter(record.m for record in records)
    return {m: counts[m] / len(records) for m in sorted(counts)}


def summarize(
    records: Sequence[SampleRecord],
    prior: PriorConfig,
    reference: Optional[np.ndarray] = None,
) -> PosteriorSummary:
    """Posterior summary of one chain's samples."""
    if not records:
        raise ValueError("cannot summarize an empty sample stream")
    relabeled = relabel_samples([record.phi for record in records], reference=reference)
    gamma_prob = np.mean([record.gamma for record in records], axis=0)
    return PosteriorSummary(
        p_hat=relabeled.p_hat,
        gamma_prob=gamma_prob,
        m_posterior=_m_posterior(records),
        phi_hat=np.argmax(relabeled.p_hat, axis=1),
        gamma_hat=_gamma_hat(gamma_prob, prior.rho_vector),
        relabel_maps=relabeled.maps,
        n_samples=len(records),
        relabel_rounds=relabeled.rounds,
        chain_sizes=[len(records)],
    )


def summarize_chains(chains: Sequence[Sequence[SampleRecord]], prior: PriorConfig) -> PosteriorSummary:
    """
    Pool several chains: the first is relabeled on its own, the rest are mapped
    once onto its membership matrix, and all mapped samples are averaged together.
    """
    chains = [list(chain) for chain in chains if len(chain)]
    if not chains:
        raise ValueError("cannot summarize an empty sample stream")
    if len(chains) == 1:
        return summarize(chains[0], prior)

    all_phis = [_stack_phis([record.phi for record in chain]) for chain in chains]
    K = max(int(phis.max()) + 1 for phis in all_phis)
    first, first_maps, rounds, converged = _align(all_phis[0], _modal_partition(all_phis[0], K), MAX_ROUNDS)
    if not converged:
        logger.warning(f"Relabeling of the first chain stopped after {MAX_ROUNDS} rounds")

    maps = [first_maps]
    mass = first * len(all_phis[0])
    for phis in all_phis[1:]:
        chain_maps = _best_maps(phis, first)
        maps.append(chain_maps)
        mass += _mapped_mass(phis, chain_maps, K)

    records = [record for chain in chains for record in chain]
    p_hat, relabel_maps = _sorted_columns(mass / len(records), np.vstack(maps))
    gamma_prob = np.mean([record.gamma for record in records], axis=0)
    logger.info(f"Pooled {len(chains)} chains ({len(records)} samples) into {p_hat.shape[1]} relabeled clusters")
    return PosteriorSummary(
        p_hat=p_hat,
        gamma_prob=gamma_prob,
        m_posterior=_m_posterior(records),
        phi_hat=np.argmax(p_hat, axis=1),
        gamma_hat=_gamma_hat(gamma_prob, prior.rho_vector),
        relabel_maps=relabel_maps,
        n_samples=len(records),
        relabel_rounds=rounds,
        chain_sizes=[len(chain) for chain in chains],
    )


def co_clustering(phis: Sequence[np.ndarray]) -> np.ndarray:
    """Fraction of samples in which each pair of rows shares a cluster."""
    phis = _stack_phis(phis)
    n = phis.shape[1]
    out = np.zeros((n, n))
    for phi in phis:
        out += phi[:, None] == phi[None, :]
    return out / len(phis)


def cluster_means(
    latent_mean: np.ndarray,
    phi_hat: np.ndarray,
    names: Sequence[str],
) -> pd.DataFrame:
    """Mean of the posterior-mean latent rows within each estimated cluster (1-based index)."""
    frame = pd.DataFrame(latent_mean, columns=list(names))
    frame["cluster"] = np.asarray(phi_hat) + 1
    means = frame.groupby("cluster").mean()
    means.insert(0, "size", frame.groupby("cluster").size())
    return means


def trace_frame(records: Sequence[SampleRecord]) -> pd.DataFrame:
    """
    Per-sample trace of p1, M, lambda, eta, alpha and the log marginal likelihood,
    plus one accept_<update> column per update that reported a flag (NaN where it did not run).
    """
    frame = pd.DataFrame(
        {
            "iteration": [record.iteration for record in records],
            "p1": [record.p1 for record in records],
            "m": [record.m for record in records],
            "lambda": [record.lam for record in records],
            "eta": [record.eta for record in records],
            "alpha": [record.alpha for record in records],
            "log_marginal": [record.log_marginal for record in records],
        }
    )
    flags = pd.DataFrame([record.accept_flags for record in records], index=frame.index)
    return pd.concat([frame, flags.add_prefix("accept_")], axis=1)
