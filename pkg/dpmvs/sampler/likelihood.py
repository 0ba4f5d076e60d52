"""
Collapsed marginal likelihood of the latent matrix given (gamma, phi, lambda, eta, Psi).

The informative block contributes one normal-inverse-Wishart factor per cluster;
the non-informative block contributes a single shared regression factor on the
informative columns. With V = Psi + S - s s^T / (n + lambda) built from raw sums:

    log f = -(n p / 2) log pi
            + sum_m [ (p1/2) log(lambda/(n_m+lambda)) + ((eta-p2)/2) log|Psi11|
                      - ((n_m+eta-p2)/2) log|V_m11|
                      + log Gamma_p1((n_m+eta-p2)/2) - log Gamma_p1((eta-p2)/2) ]
            + (p2/2) log(lambda/(n+lambda)) + (p2/2) (log|Psi11| - log|V11|)
            + (eta/2) log|Psi2|1| - ((n+eta)/2) log|V2|1|
            + log Gamma_p2((n+eta)/2) - log Gamma_p2(eta/2)
"""
from dataclasses import dataclass
import logging
from typing import Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from dpmvs.sampler.states import ChainState, ClusterStatsCache, Hyperparams
from dpmvs.utils.stats_kernels import LOG_PI, CholFactor, cholesky, log_det_stack, log_multivariate_gamma

# Configure logging
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PsiBlocks:
    idx1: np.ndarray
    idx2: np.ndarray
    psi11: np.ndarray
    psi21: np.ndarray
    psi22: np.ndarray
    chol11: CholFactor
    psi2given1: np.ndarray

    @property
    def p1(self) -> int:
        return len(self.idx1)

    @property
    def p2(self) -> int:
        return len(self.idx2)


def split_psi(psi: np.ndarray, gamma: np.ndarray) -> PsiBlocks:
    """Partition Psi into informative / non-informative blocks and Psi2|1."""
    idx1, idx2 = np.flatnonzero(gamma), np.flatnonzero(~np.asarray(gamma, dtype=bool))
    psi11 = psi[np.ix_(idx1, idx1)]
    psi21 = psi[np.ix_(idx2, idx1)]
    psi22 = psi[np.ix_(idx2, idx2)]
    chol11 = cholesky(psi11)
    psi2given1 = psi22 - psi21 @ chol11.solve(psi21.T)
    return PsiBlocks(idx1, idx2, psi11, psi21, psi22, chol11, psi2given1)


def _log_mvgamma_vec(p: int, a: np.ndarray) -> np.ndarray:
    if p == 0:
        return np.zeros_like(a, dtype=float)
    j = np.arange(1, p + 1)
    return p * (p - 1) / 4 * LOG_PI + np.sum(gammaln(a[:, None] + (1 - j[None, :]) / 2), axis=1)


def cluster_log_terms(
    counts: np.ndarray,
    sums1: np.ndarray,
    scatters1: np.ndarray,
    hyper: Hyperparams,
    blocks: PsiBlocks,
) -> np.ndarray:
    """
    Informative-block factor of each cluster.

    Args:
        counts (np.ndarray): (k,) cluster sizes, zero allowed (factor 0 on log scale)
        sums1 (np.ndarray): (k, p1) column sums over the informative columns
        scatters1 (np.ndarray): (k, p1, p1) raw second moments over the informative columns
        hyper (Hyperparams): Current hyperparameters
        blocks (PsiBlocks): Psi split for the current gamma

    Returns:
        np.ndarray: (k,) log factors
    """
    p1, p2 = blocks.p1, blocks.p2
    counts = np.asarray(counts, dtype=float)
    if p1 == 0:
        return np.zeros(len(counts))
    lam, eta = hyper.lam, hyper.eta
    shrink = 1.0 / (counts + lam)
    V = blocks.psi11 + scatters1 - shrink[:, None, None] * np.einsum("kj,kl->kjl", sums1, sums1)
    log_det_v = log_det_stack(V)
    df_post = (counts + eta - p2) / 2
    df_prior = (eta - p2) / 2
    return (
        0.5 * p1 * np.log(lam * shrink)
        + df_prior * blocks.chol11.log_det
        - df_post * log_det_v
        + _log_mvgamma_vec(p1, df_post)
        - log_multivariate_gamma(p1, df_prior)
    )


def noninformative_log_term(stats: ClusterStatsCache, hyper: Hyperparams, blocks: PsiBlocks) -> float:
    """Shared regression factor of the non-informative block (0 when p2 = 0)."""
    p2 = blocks.p2
    if p2 == 0:
        return 0.0
    n, lam, eta = stats.n, hyper.lam, hyper.eta
    idx1, idx2 = blocks.idx1, blocks.idx2
    s, S = stats.total_sum, stats.total_scatter
    V = S - np.outer(s, s) / (n + lam)
    v11 = blocks.psi11 + V[np.ix_(idx1, idx1)]
    v21 = blocks.psi21 + V[np.ix_(idx2, idx1)]
    v22 = blocks.psi22 + V[np.ix_(idx2, idx2)]
    chol_v11 = cholesky(v11)
    v2given1 = v22 - v21 @ chol_v11.solve(v21.T)
    return (
        0.5 * p2 * np.log(lam / (n + lam))
        + 0.5 * p2 * (blocks.chol11.log_det - chol_v11.log_det)
        + 0.5 * eta * cholesky(blocks.psi2given1).log_det
        - 0.5 * (n + eta) * cholesky(v2given1).log_det
        + log_multivariate_gamma(p2, (n + eta) / 2)
        - log_multivariate_gamma(p2, eta / 2)
    )


def log_marginal_from(
    stats: ClusterStatsCache,
    gamma: np.ndarray,
    hyper: Hyperparams,
    blocks: Optional[PsiBlocks] = None,
) -> float:
    """log f(Z | gamma, phi, lambda, eta, Psi) from sufficient statistics."""
    blocks = split_psi(hyper.psi, gamma) if blocks is None else blocks
    idx1 = blocks.idx1
    p = len(gamma)
    keep = stats.counts > 0
    clusters = cluster_log_terms(
        stats.counts[keep],
        stats.sums[keep][:, idx1],
        stats.scatters[keep][:, idx1[:, None], idx1[None, :]],
        hyper,
        blocks,
    )
    return float(-0.5 * stats.n * p * LOG_PI + clusters.sum() + noninformative_log_term(stats, hyper, blocks))


def log_marginal(state: ChainState) -> float:
    return log_marginal_from(state.stats, state.gamma, state.hyper)


def gibbs_logweights(
    state: ChainState,
    i: int,
    restrict: Optional[tuple[int, int]] = None,
    use_likelihood: bool = True,
    blocks: Optional[PsiBlocks] = None,
) -> np.ndarray:
    """
    Normalized log assignment probabilities for row i over labels 0..M, where
    label M opens a new cluster.

    Each existing label gets log n_{m,-i} plus the change in that cluster's factor
    when row i joins it; the new label gets log alpha plus the singleton factor.
    If row i is alone in its cluster that label gets -inf (the new label stands for
    it). Restricted mode keeps only the two given labels.
    """
    if not 0 <= i < state.n:
        raise IndexError(f"row {i} outside 0..{state.n - 1}")
    M = state.M
    m_i = int(state.phi[i])
    counts_minus = state.stats.counts.astype(float)
    counts_minus[m_i] -= 1

    with np.errstate(divide="ignore"):
        log_w = np.append(np.log(counts_minus), np.log(state.hyper.alpha))

    if use_likelihood:
        blocks = split_psi(state.hyper.psi, state.gamma) if blocks is None else blocks
        idx1 = blocks.idx1
        x1 = state.z[i, idx1]
        outer = np.outer(x1, x1)
        sums1 = state.stats.sums[:, idx1]
        scat1 = state.stats.scatters[:, idx1[:, None], idx1[None, :]]

        sign = np.ones(M)
        sign[m_i] = -1.0
        # "other" is the cluster with row i toggled: joined for m != m_i, removed for m_i
        other_counts = counts_minus + (sign > 0)
        other_sums = sums1 + sign[:, None] * x1
        other_scat = scat1 + sign[:, None, None] * outer

        terms_current = cluster_log_terms(state.stats.counts, sums1, scat1, state.hyper, blocks)
        terms_other = cluster_log_terms(other_counts, other_sums, other_scat, state.hyper, blocks)
        # with-i minus without-i for every existing label
        delta = np.where(sign > 0, terms_other - terms_current, terms_current - terms_other)
        singleton = cluster_log_terms(np.ones(1), x1[None, :], outer[None, :, :], state.hyper, blocks)
        log_w = log_w + np.append(delta, singleton[0])

    if restrict is not None:
        mask = np.full(M + 1, True)
        mask[list(restrict)] = False
        log_w[mask] = -np.inf

    return log_w - logsumexp(log_w)
