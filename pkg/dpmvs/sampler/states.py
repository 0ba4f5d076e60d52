from dataclasses import dataclass, field
import logging
from typing import Optional

import numpy as np

from dpmvs.common.run_config import McmcConfig, PriorConfig
from dpmvs.dataset.data_model import Dataset, initialize_latent
from dpmvs.utils.stats_kernels import RngStream

# Configure logging
logger = logging.getLogger(__name__)


@dataclass
class Hyperparams:
    lam: float
    eta: float
    psi: np.ndarray
    alpha: float

    def replace(self, **changes) -> "Hyperparams":
        values = {"lam": self.lam, "eta": self.eta, "psi": self.psi, "alpha": self.alpha}
        values.update(changes)
        return Hyperparams(**values)


@dataclass
class ClusterStatsCache:
    """
    Per-cluster counts, sums and raw second moments (sum of z z^T) over all p
    columns, plus the same totals over every row.

    Keeping all p columns lets the informative block be sliced out for any gamma
    without touching the data.
    """
    counts: np.ndarray
    sums: np.ndarray
    scatters: np.ndarray
    total_sum: np.ndarray
    total_scatter: np.ndarray

    @classmethod
    def from_data(cls, z: np.ndarray, phi: np.ndarray, n_clusters: Optional[int] = None) -> "ClusterStatsCache":
        n, p = z.shape
        M = int(phi.max()) + 1 if n_clusters is None else n_clusters
        one_hot = np.zeros((n, M))
        one_hot[np.arange(n), phi] = 1.0
        return cls(
            counts=np.bincount(phi, minlength=M).astype(np.int64),
            sums=one_hot.T @ z,
            scatters=np.einsum("im,ij,ik->mjk", one_hot, z, z),
            total_sum=z.sum(axis=0),
            total_scatter=z.T @ z,
        )

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def n_clusters(self) -> int:
        return len(self.counts)

    def copy(self) -> "ClusterStatsCache":
        return ClusterStatsCache(
            self.counts.copy(), self.sums.copy(), self.scatters.copy(),
            self.total_sum.copy(), self.total_scatter.copy(),
        )

    def add_row(self, m: int, x: np.ndarray, sign: int = 1) -> None:
        outer = np.outer(x, x)
        self.counts[m] += sign
        self.sums[m] += sign * x
        self.scatters[m] += sign * outer
        self.total_sum += sign * x
        self.total_scatter += sign * outer

    def remove_row(self, m: int, x: np.ndarray) -> None:
        self.add_row(m, x, sign=-1)

    def shift_row(self, m_from: int, m_to: int, x: np.ndarray) -> None:
        """Move one row between clusters; totals are unchanged."""
        outer = np.outer(x, x)
        self.counts[m_from] -= 1
        self.sums[m_from] -= x
        self.scatters[m_from] -= outer
        self.counts[m_to] += 1
        self.sums[m_to] += x
        self.scatters[m_to] += outer

    def append_cluster(self) -> int:
        p = self.sums.shape[1]
        self.counts = np.append(self.counts, 0)
        self.sums = np.vstack([self.sums, np.zeros((1, p))])
        self.scatters = np.concatenate([self.scatters, np.zeros((1, p, p))])
        return len(self.counts) - 1

    def split_cluster(self, m: int, rows: np.ndarray) -> int:
        """Carve the given data rows (all currently in m) out into a new cluster."""
        new = self.append_cluster()
        self.counts[m] -= len(rows)
        self.counts[new] = len(rows)
        self.sums[new] = rows.sum(axis=0)
        self.scatters[new] = rows.T @ rows
        self.sums[m] -= self.sums[new]
        self.scatters[m] -= self.scatters[new]
        return new

    def merge_clusters(self, keep: int, absorb: int) -> None:
        """Fold cluster `absorb` into `keep` and drop it (labels above it shift down)."""
        self.counts[keep] += self.counts[absorb]
        self.sums[keep] += self.sums[absorb]
        self.scatters[keep] += self.scatters[absorb]
        self.drop_cluster(absorb)

    def drop_cluster(self, m: int) -> None:
        self.counts = np.delete(self.counts, m)
        self.sums = np.delete(self.sums, m, axis=0)
        self.scatters = np.delete(self.scatters, m, axis=0)

    def max_deviation(self, other: "ClusterStatsCache") -> float:
        if not np.array_equal(self.counts, other.counts):
            return np.inf
        return float(max(
            np.max(np.abs(self.sums - other.sums), initial=0.0),
            np.max(np.abs(self.scatters - other.scatters), initial=0.0),
            np.max(np.abs(self.total_sum - other.total_sum), initial=0.0),
            np.max(np.abs(self.total_scatter - other.total_scatter), initial=0.0),
        ))


@dataclass
class SampleRecord:
    iteration: int
    gamma: np.ndarray
    phi: np.ndarray
    m: int
    lam: float
    eta: float
    alpha: float
    log_marginal: float
    accept_flags: dict[str, bool] = field(default_factory=dict)

    @property
    def p1(self) -> int:
        return int(np.sum(self.gamma))


@dataclass
class ChainState:
    """
    Mutable state of one chain. Labels in `phi` are 0-based and contiguous;
    component parameters are integrated out and never stored.
    """
    z: np.ndarray
    gamma: np.ndarray
    phi: np.ndarray
    hyper: Hyperparams
    stats: ClusterStatsCache

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]

    @property
    def M(self) -> int:
        return self.stats.n_clusters

    def informative(self) -> np.ndarray:
        return np.flatnonzero(self.gamma)

    def recompute_stats(self) -> float:
        """Rebuild the cache from (z, phi); returns the drift that was removed."""
        fresh = ClusterStatsCache.from_data(self.z, self.phi, self.M)
        drift = fresh.max_deviation(self.stats)
        self.stats = fresh
        return drift

    def set_rows(self, rows: np.ndarray, values: np.ndarray) -> None:
        for i, x in zip(rows, values):
            m = self.phi[i]
            self.stats.remove_row(m, self.z[i])
            self.z[i] = x
            self.stats.add_row(m, x)

    def check_invariants(self, tol: float = 1e-8) -> None:
        labels = np.unique(self.phi)
        assert np.array_equal(labels, np.arange(self.M)), "cluster labels are not contiguous"
        assert np.array_equal(np.bincount(self.phi, minlength=self.M), self.stats.counts), "counts drifted"
        fresh = ClusterStatsCache.from_data(self.z, self.phi, self.M)
        assert fresh.max_deviation(self.stats) < tol, "cluster statistics drifted"
        assert np.allclose(self.stats.scatters, np.swapaxes(self.stats.scatters, 1, 2)), "scatter not symmetric"

    def copy(self) -> "ChainState":
        return ChainState(
            z=self.z.copy(),
            gamma=self.gamma.copy(),
            phi=self.phi.copy(),
            hyper=self.hyper.replace(psi=self.hyper.psi.copy()),
            stats=self.stats.copy(),
        )


def reorder_for_gamma(gamma: np.ndarray) -> tuple[np.ndarray, int]:
    """Stable column permutation with informative columns first, and p1."""
    gamma = np.asarray(gamma, dtype=bool)
    informative = np.flatnonzero(gamma)
    return np.concatenate([informative, np.flatnonzero(~gamma)]), len(informative)


def stats_move(state: ChainState, i: int, m_new: int) -> int:
    """
    Move row i to cluster m_new (m_new == M opens a new cluster).

    An emptied cluster is removed and higher labels shift down by one.

    Returns:
        int: The label of row i after compaction
    """
    m_old = int(state.phi[i])
    if m_new == m_old:
        return m_old
    if m_new == state.M:
        state.stats.append_cluster()
    state.stats.shift_row(m_old, m_new, state.z[i])
    state.phi[i] = m_new

    if state.stats.counts[m_old] == 0:
        state.stats.drop_cluster(m_old)
        state.phi[state.phi > m_old] -= 1
        if m_new > m_old:
            m_new -= 1
    return m_new


def init_chain_state(ds: Dataset, prior: PriorConfig, cfg: McmcConfig, rng: RngStream) -> ChainState:
    """
    Starting state: one cluster, gamma drawn from its prior, hyperparameters at
    their prior means and Psi at N * P.
    """
    z = initialize_latent(ds, rng)
    rho = prior.rho_vector
    gamma = np.ones(ds.p, dtype=bool) if cfg.mode == "novs" else rng.gen.uniform(size=ds.p) < rho
    phi = np.zeros(ds.n, dtype=np.int64)
    hyper = Hyperparams(
        lam=prior.a_lambda / prior.b_lambda,
        eta=ds.p + 1 + prior.a_eta / prior.b_eta,
        psi=prior.wishart_df * prior.scale_matrix,
        alpha=prior.a_alpha / prior.b_alpha,
    )
    logger.info(f"Initialized chain state: n={ds.n}, p={ds.p}, p1={int(gamma.sum())}")
    return ChainState(z=z, gamma=gamma, phi=phi, hyper=hyper, stats=ClusterStatsCache.from_data(z, phi))
