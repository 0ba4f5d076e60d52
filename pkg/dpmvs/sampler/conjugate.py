from dataclasses import dataclass
import logging
from typing import Optional

import numpy as np

from dpmvs.sampler.likelihood import split_psi
from dpmvs.sampler.states import ChainState, ClusterStatsCache, Hyperparams
from dpmvs.utils.stats_kernels import (
    RngStream,
    cholesky,
    sample_canonical_mvn,
    sample_inv_wishart,
    sample_matrix_normal,
    matrix_normal_logpdf,
    sample_wishart,
    wishart_logpdf,
)

# Configure logging
logger = logging.getLogger(__name__)


@dataclass
class ComponentDraw:
    """
    Auxiliary component parameters for the current gamma: per-cluster informative
    mean and covariance, and the shared canonical non-informative block.
    """
    idx1: np.ndarray
    idx2: np.ndarray
    mu1: np.ndarray
    sigma11: np.ndarray
    b2: np.ndarray
    q21: np.ndarray
    q22: np.ndarray

    @property
    def n_clusters(self) -> int:
        return self.mu1.shape[0]

    def canonical(self) -> tuple[np.ndarray, np.ndarray]:
        """
        Full canonical parameters (b_m, Q_m) of every cluster in original column order.

        Q_m11 = Sigma_m11^-1 + Q12 Q22^-1 Q21 and b_m1 = Sigma_m11^-1 mu_m1 + Q12 Q22^-1 b2,
        the shared blocks Q21, Q22, b2 complete the matrix.
        """
        M, p1 = self.mu1.shape
        p2 = len(self.idx2)
        p = p1 + p2
        order = np.concatenate([self.idx1, self.idx2])

        q22_factor = cholesky(self.q22)
        q12 = self.q21.T
        coupling = q12 @ q22_factor.solve(self.q21) if p2 else np.zeros((p1, p1))
        shift = q12 @ q22_factor.solve(self.b2) if p2 else np.zeros(p1)

        Q = np.zeros((M, p, p))
        b = np.zeros((M, p))
        for m in range(M):
            sigma_factor = cholesky(self.sigma11[m])
            q_perm = np.zeros((p, p))
            q_perm[:p1, :p1] = sigma_factor.inverse() + coupling
            q_perm[:p1, p1:] = q12
            q_perm[p1:, :p1] = self.q21
            q_perm[p1:, p1:] = self.q22
            b_perm = np.concatenate([sigma_factor.solve(self.mu1[m]) + shift, self.b2])
            Q[m][np.ix_(order, order)] = q_perm
            b[m][order] = b_perm
        return b, Q

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Means and covariances of every cluster in original column order."""
        b, Q = self.canonical()
        cov = np.linalg.inv(Q)
        return np.einsum("mjk,mk->mj", cov, b), cov


def sample_theta_from_stats(
    stats: ClusterStatsCache,
    gamma: np.ndarray,
    hyper: Hyperparams,
    rng: RngStream,
) -> ComponentDraw:
    """
    Draw theta from its conjugate posterior given sufficient statistics.

    Per cluster: Sigma_m11 ~ IW(V_m11, n_m + eta - p2) and
    mu_m1 | Sigma ~ N(s_m1 / (n_m + lambda), Sigma / (n_m + lambda)).
    Shared: Q22 ~ W(V2|1^-1, n + eta); Q21 | Q22 ~ MN(-Q22 V21 V11^-1, Q22, V11^-1)
    with Q22 the row covariance; b2 | Q21, Q22 canonical normal with precision
    (n + lambda) Q22^-1 and canonical vector s2 + Q22^-1 Q21 s1.
    Clusters with no rows get a draw from the prior.
    """
    blocks = split_psi(hyper.psi, gamma)
    idx1, idx2 = blocks.idx1, blocks.idx2
    p1, p2 = blocks.p1, blocks.p2
    lam, eta = hyper.lam, hyper.eta
    M = stats.n_clusters

    mu1 = np.zeros((M, p1))
    sigma11 = np.zeros((M, p1, p1))
    for m in range(M):
        n_m = stats.counts[m]
        s1 = stats.sums[m, idx1]
        v_m11 = blocks.psi11 + stats.scatters[m][np.ix_(idx1, idx1)] - np.outer(s1, s1) / (n_m + lam)
        sigma = sample_inv_wishart(v_m11, n_m + eta - p2, rng)
        sigma11[m] = sigma
        if p1:
            noise = cholesky(sigma).lower @ rng.gen.standard_normal(p1)
            mu1[m] = s1 / (n_m + lam) + noise / np.sqrt(n_m + lam)

    n = stats.n
    s = stats.total_sum
    V = stats.total_scatter - np.outer(s, s) / (n + lam)
    v11 = blocks.psi11 + V[np.ix_(idx1, idx1)]
    v21 = blocks.psi21 + V[np.ix_(idx2, idx1)]
    v22 = blocks.psi22 + V[np.ix_(idx2, idx2)]
    v11_factor = cholesky(v11)
    v2given1 = v22 - v21 @ v11_factor.solve(v21.T)

    q22 = sample_wishart(v2given1, n + eta, rng, inverse_scale=True)
    q21_mean = -q22 @ v11_factor.solve(v21.T).T
    q21 = sample_matrix_normal(q21_mean, q22, v11_factor, rng, col_is_precision=True)
    if p2:
        q22_factor = cholesky(q22)
        b_star = s[idx2] + q22_factor.solve(q21 @ s[idx1])
        b2 = sample_canonical_mvn(b_star, (n + lam) * q22_factor.inverse(), rng)
    else:
        b2 = np.zeros(0)

    return ComponentDraw(idx1=idx1, idx2=idx2, mu1=mu1, sigma11=sigma11, b2=b2, q21=q21, q22=q22)


def sample_theta(
    state: ChainState,
    rng: RngStream,
    psi_override: Optional[np.ndarray] = None,
    exclude_rows: Optional[np.ndarray] = None,
) -> ComponentDraw:
    """
    Conjugate posterior draw of theta for a chain state.

    Args:
        state (ChainState): Current chain state
        rng (RngStream): Random stream
        psi_override (np.ndarray | None): Replaces Psi in every V-matrix
        exclude_rows (np.ndarray | None): Rows left out of the statistics

    Returns:
        ComponentDraw: The draw, with one entry per current cluster
    """
    stats = state.stats
    if exclude_rows is not None and len(exclude_rows):
        stats = stats.copy()
        for i in exclude_rows:
            stats.remove_row(state.phi[i], state.z[i])
    hyper = state.hyper if psi_override is None else state.hyper.replace(psi=psi_override)
    return sample_theta_from_stats(stats, state.gamma, hyper, rng)


class PsiConditional:
    """
    Conditional law of Psi given a theta draw under the Wishart prior W(P, N),
    expressed through the blocks (Psi11, Psi21, Psi2|1) of the current gamma:

        Psi2|1 | theta        ~ W((P2|1^-1 + Q22)^-1, N + eta - p1)
        Psi11 | theta         ~ W(S, M (eta - p2) + N + p2)
        Psi21 | Psi11, theta  ~ MN(G^-1 (W0 - Q21) Psi11, G^-1, Psi11)

    with G = Q22 + P2|1^-1, W0 = P2|1^-1 P21 P11^-1 and
    S^-1 = P11^-1 + sum_m Sigma_m11^-1 + Q21^T Q22^-1 Q21 + W0^T P2|1 W0 - (W0 - Q21)^T G^-1 (W0 - Q21).
    The block map has unit Jacobian, so logpdf is a density for Psi itself.
    """

    def __init__(self, theta: ComponentDraw, prior_scale: np.ndarray, prior_df: float, eta: float):
        idx1, idx2 = theta.idx1, theta.idx2
        p1, p2 = len(idx1), len(idx2)
        M = theta.n_clusters
        self.idx1, self.idx2 = idx1, idx2
        self.p = p1 + p2

        P11 = prior_scale[np.ix_(idx1, idx1)]
        P21 = prior_scale[np.ix_(idx2, idx1)]
        P22 = prior_scale[np.ix_(idx2, idx2)]
        p11_factor = cholesky(P11)
        regression = p11_factor.solve(P21.T).T
        p2given1 = P22 - regression @ P21.T
        p2given1_factor = cholesky(p2given1)
        p2given1_inv = p2given1_factor.inverse()
        w0 = p2given1_inv @ regression

        q22_factor = cholesky(theta.q22)
        self.g_factor = cholesky(theta.q22 + p2given1_inv)
        self.g_inv = self.g_factor.inverse()
        self.df2 = prior_df + eta - p1

        gap = w0 - theta.q21
        s_inv = (
            p11_factor.inverse()
            + sum(cholesky(sigma).inverse() for sigma in theta.sigma11)
            + theta.q21.T @ q22_factor.solve(theta.q21)
            + w0.T @ p2given1 @ w0
            - gap.T @ self.g_factor.solve(gap)
        )
        self.s_inv = 0.5 * (s_inv + s_inv.T)
        self.s_factor_inv = cholesky(self.s_inv)
        self.s_scale = self.s_factor_inv.inverse()
        self.df1 = M * (eta - p2) + prior_df + p2
        self.mean_left = self.g_inv @ gap

    def sample(self, rng: RngStream) -> np.ndarray:
        psi2given1 = sample_wishart(self.g_factor, self.df2, rng, inverse_scale=True)
        psi11 = sample_wishart(self.s_factor_inv, self.df1, rng, inverse_scale=True)
        psi21 = sample_matrix_normal(self.mean_left @ psi11, self.g_factor, psi11, rng, row_is_precision=True)
        psi22 = psi2given1 + psi21 @ cholesky(psi11).solve(psi21.T)

        psi = np.zeros((self.p, self.p))
        psi[np.ix_(self.idx1, self.idx1)] = psi11
        psi[np.ix_(self.idx2, self.idx1)] = psi21
        psi[np.ix_(self.idx1, self.idx2)] = psi21.T
        psi[np.ix_(self.idx2, self.idx2)] = 0.5 * (psi22 + psi22.T)
        return psi

    def logpdf(self, psi: np.ndarray) -> float:
        psi11 = psi[np.ix_(self.idx1, self.idx1)]
        psi21 = psi[np.ix_(self.idx2, self.idx1)]
        psi22 = psi[np.ix_(self.idx2, self.idx2)]
        psi2given1 = psi22 - psi21 @ cholesky(psi11).solve(psi21.T)
        return (
            wishart_logpdf(psi2given1, self.g_inv, self.df2)
            + wishart_logpdf(psi11, self.s_scale, self.df1)
            + matrix_normal_logpdf(psi21, self.mean_left @ psi11, self.g_inv, psi11)
        )
