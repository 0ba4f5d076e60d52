from collections import Counter
from dataclasses import dataclass
import logging
import math
from typing import Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from dpmvs.common.run_config import McmcConfig, PriorConfig
from dpmvs.common.types import AcceptanceCounts
from dpmvs.dataset.data_model import Dataset
from dpmvs.sampler.conjugate import PsiConditional, sample_theta, sample_theta_from_stats
from dpmvs.sampler.likelihood import (
    PsiBlocks,
    cluster_log_terms,
    gibbs_logweights,
    log_marginal_from,
    split_psi,
)
from dpmvs.sampler.states import ChainState, ClusterStatsCache, stats_move
from dpmvs.utils.stats_kernels import (
    RngStream,
    cholesky,
    log_gamma_density,
    sample_truncated_normal,
    truncated_normal_logpdf,
    wishart_logpdf,
)

# Configure logging
logger = logging.getLogger(__name__)


def accept_move(log_ratio: float, rng: RngStream) -> bool:
    if log_ratio >= 0:
        return True
    return rng.gen.uniform() < math.exp(log_ratio)


def propose_gamma(gamma: np.ndarray, swap_prob: float, rng: RngStream) -> np.ndarray:
    """Flip one coordinate; with probability swap_prob also flip one of opposite value."""
    j = int(rng.gen.integers(len(gamma)))
    proposal = gamma.copy()
    proposal[j] = not gamma[j]
    opposite = np.flatnonzero(gamma != gamma[j])
    if opposite.size and rng.gen.uniform() < swap_prob:
        k = int(opposite[rng.gen.integers(opposite.size)])
        proposal[k] = not gamma[k]
    return proposal


def gamma_proposal_logdensity(source: np.ndarray, target: np.ndarray, swap_prob: float) -> float:
    """Log probability that propose_gamma turns `source` into `target`."""
    p = len(source)
    changed = np.flatnonzero(source != target)

    def n_opposite(j: int) -> int:
        return int(np.sum(source != source[j]))

    if len(changed) == 1:
        j = changed[0]
        stay_single = 1.0 - swap_prob if n_opposite(j) > 0 else 1.0
        return math.log(stay_single / p) if stay_single > 0 else -math.inf
    if len(changed) == 2:
        j, k = changed
        if source[j] == source[k] or swap_prob == 0:
            return -math.inf
        return math.log(swap_prob / p * (1.0 / n_opposite(j) + 1.0 / n_opposite(k)))
    return -math.inf


@dataclass
class PartitionProposal:
    kind: str
    phi: np.ndarray
    stats: ClusterStatsCache
    log_q_fwd: float
    log_q_rev: float
    log_prior_ratio: float


@dataclass
class JointProposal:
    gamma: np.ndarray
    partition: PartitionProposal
    log_q_gamma_fwd: float
    log_q_gamma_rev: float

    @property
    def log_q_fwd(self) -> float:
        return self.log_q_gamma_fwd + self.partition.log_q_fwd

    @property
    def log_q_rev(self) -> float:
        return self.log_q_gamma_rev + self.partition.log_q_rev


class SamplerNodes:
    """
    The individual Metropolis-Hastings and Gibbs updates of the collapsed sampler.
    Each update mutates the ChainState in place and reports whether it moved.
    """

    def __init__(self, ds: Dataset, prior: PriorConfig, cfg: McmcConfig):
        self.ds = ds
        self.prior = prior
        self.cfg = cfg
        self.use_likelihood = not cfg.ignore_likelihood

        self.lo, self.hi = ds.latent_bounds()
        latent = self.lo < self.hi
        self.latent_rows = np.flatnonzero(latent.any(axis=1))
        self.latent_cols = {int(i): np.flatnonzero(latent[i]) for i in self.latent_rows}
        self.z_block = cfg.z_block

        rho = prior.rho_vector
        with np.errstate(divide="ignore"):
            self.log_rho = np.log(rho)
            self.log_1m_rho = np.log1p(-rho)
        self.prior_scale = prior.scale_matrix
        self.prior_df = float(prior.wishart_df)
        self.prior_scale_factor = cholesky(self.prior_scale)
        self.psi_tilde = self.prior_df * self.prior_scale

        self.proposed: Counter = Counter()
        self.accepted: Counter = Counter()

    # Bookkeeping

    def _tally(self, name: str, accepted: bool) -> bool:
        self.proposed[name] += 1
        self.accepted[name] += int(accepted)
        return accepted

    def acceptance_rates(self) -> dict[str, float]:
        return {name: self.accepted[name] / count for name, count in self.proposed.items() if count}

    def acceptance_counts(self) -> dict[str, AcceptanceCounts]:
        return {
            name: AcceptanceCounts(proposed=count, accepted=self.accepted[name])
            for name, count in self.proposed.items()
        }

    def loglik(self, stats: ClusterStatsCache, gamma: np.ndarray, hyper, blocks: Optional[PsiBlocks] = None) -> float:
        if not self.use_likelihood:
            return 0.0
        return log_marginal_from(stats, gamma, hyper, blocks)

    def log_gamma_prior(self, gamma: np.ndarray) -> float:
        return float(np.sum(np.where(gamma, self.log_rho, self.log_1m_rho)))

    # Variable selection

    def update_gamma(self, state: ChainState, rng: RngStream) -> bool:
        """Add / delete / swap move on gamma."""
        proposal = propose_gamma(state.gamma, self.cfg.swap_prob, rng)
        lp_new = self.log_gamma_prior(proposal)
        if lp_new == -np.inf:
            return self._tally("gamma", False)

        log_ratio = (
            self.loglik(state.stats, proposal, state.hyper)
            - self.loglik(state.stats, state.gamma, state.hyper)
            + lp_new
            - self.log_gamma_prior(state.gamma)
            + gamma_proposal_logdensity(proposal, state.gamma, self.cfg.swap_prob)
            - gamma_proposal_logdensity(state.gamma, proposal, self.cfg.swap_prob)
        )
        accepted = accept_move(log_ratio, rng)
        if accepted:
            state.gamma = proposal
        return self._tally("gamma", accepted)

    # Hyperparameters

    def update_alpha(self, state: ChainState, rng: RngStream) -> bool:
        """Log-scale random walk on alpha; target alpha^M Gamma(alpha) / Gamma(alpha + n) times its prior."""
        n, M = state.n, state.M
        a, b = self.prior.a_alpha, self.prior.b_alpha

        def log_target(alpha: float) -> float:
            # the trailing log(alpha) is the Jacobian of the log-scale walk
            return (
                M * math.log(alpha) + gammaln(alpha) - gammaln(alpha + n)
                + log_gamma_density(alpha, a, b) + math.log(alpha)
            )

        current = state.hyper.alpha
        proposal = current * math.exp(self.cfg.s_alpha * rng.gen.standard_normal())
        accepted = accept_move(log_target(proposal) - log_target(current), rng)
        if accepted:
            state.hyper.alpha = proposal
        return self._tally("alpha", accepted)

    def update_lambda_eta(self, state: ChainState, rng: RngStream) -> tuple[bool, bool]:
        """Independent log-scale walks on lambda and on eta - (p + 1)."""
        ll_current = self.loglik(state.stats, state.gamma, state.hyper)

        lam = state.hyper.lam
        lam_new = lam * math.exp(self.cfg.s_lambda * rng.gen.standard_normal())
        hyper_new = state.hyper.replace(lam=lam_new)
        ll_new = self.loglik(state.stats, state.gamma, hyper_new)
        log_ratio = (
            ll_new - ll_current
            + log_gamma_density(lam_new, self.prior.a_lambda, self.prior.b_lambda) + math.log(lam_new)
            - log_gamma_density(lam, self.prior.a_lambda, self.prior.b_lambda) - math.log(lam)
        )
        lam_accepted = accept_move(log_ratio, rng)
        if lam_accepted:
            state.hyper.lam = lam_new
            ll_current = ll_new

        offset = state.p + 1
        xi = state.hyper.eta - offset
        xi_new = xi * math.exp(self.cfg.s_eta * rng.gen.standard_normal())
        hyper_new = state.hyper.replace(eta=xi_new + offset)
        ll_new = self.loglik(state.stats, state.gamma, hyper_new)
        log_ratio = (
            ll_new - ll_current
            + log_gamma_density(xi_new, self.prior.a_eta, self.prior.b_eta) + math.log(xi_new)
            - log_gamma_density(xi, self.prior.a_eta, self.prior.b_eta) - math.log(xi)
        )
        eta_accepted = accept_move(log_ratio, rng)
        if eta_accepted:
            state.hyper.eta = xi_new + offset

        return self._tally("lambda", lam_accepted), self._tally("eta", eta_accepted)

    def update_psi(self, state: ChainState, rng: RngStream) -> bool:
        """
        Independence proposal for Psi from its conditional given a theta drawn
        with Psi held at N * P.
        """
        theta = sample_theta(state, rng, psi_override=self.psi_tilde)
        conditional = PsiConditional(theta, self.prior_scale, self.prior_df, state.hyper.eta)
        psi_new = conditional.sample(rng)
        if self.cfg.check_invariants:
            cholesky(psi_new)

        current = state.hyper.psi
        log_ratio = (
            self.loglik(state.stats, state.gamma, state.hyper.replace(psi=psi_new))
            - self.loglik(state.stats, state.gamma, state.hyper)
            + wishart_logpdf(psi_new, self.prior_scale_factor, self.prior_df)
            - wishart_logpdf(current, self.prior_scale_factor, self.prior_df)
            + conditional.logpdf(current)
            - conditional.logpdf(psi_new)
        )
        accepted = accept_move(log_ratio, rng)
        if accepted:
            state.hyper.psi = psi_new
        return self._tally("psi", accepted)

    # Latent values

    @staticmethod
    def _cell_conditional(b: np.ndarray, Q: np.ndarray, x: np.ndarray, j: int) -> tuple[float, float]:
        q_jj = Q[j, j]
        mean = (b[j] - Q[j] @ x + q_jj * x[j]) / q_jj
        return float(mean), float(1.0 / q_jj)

    def latent_blocks(self) -> list[np.ndarray]:
        rows = self.latent_rows
        return [rows[k:k + self.z_block] for k in range(0, len(rows), self.z_block)]

    def update_latent(self, state: ChainState, rng: RngStream) -> list[bool]:
        """
        Block updates of the latent cells. For each block of rows, theta is drawn
        from the posterior of the remaining rows, every latent cell of the block is
        redrawn in turn from its truncated conditional under that theta, and the
        block is accepted with the collapsed likelihood ratio.
        """
        if not len(self.latent_rows) or not self.use_likelihood:
            return []
        flags = []
        ll_current = self.loglik(state.stats, state.gamma, state.hyper)
        blocks = split_psi(state.hyper.psi, state.gamma)

        for rows in self.latent_blocks():
            reduced = state.stats.copy()
            for i in rows:
                reduced.remove_row(state.phi[i], state.z[i])
            theta = sample_theta_from_stats(reduced, state.gamma, state.hyper, rng)
            b, Q = theta.canonical()

            new_rows = state.z[rows].copy()
            log_fwd = log_rev = 0.0
            for r, i in enumerate(rows):
                m = state.phi[i]
                cols = self.latent_cols[int(i)]
                x = new_rows[r]
                for j in cols:
                    mean, var = self._cell_conditional(b[m], Q[m], x, j)
                    x[j] = sample_truncated_normal(mean, var, self.lo[i, j], self.hi[i, j], rng)
                    log_fwd += truncated_normal_logpdf(x[j], mean, var, self.lo[i, j], self.hi[i, j])
                back = x.copy()
                for j in cols:
                    mean, var = self._cell_conditional(b[m], Q[m], back, j)
                    log_rev += truncated_normal_logpdf(state.z[i, j], mean, var, self.lo[i, j], self.hi[i, j])
                    back[j] = state.z[i, j]

            candidate = reduced
            for i, x in zip(rows, new_rows):
                candidate.add_row(state.phi[i], x)
            ll_new = self.loglik(candidate, state.gamma, state.hyper, blocks)

            accepted = accept_move(ll_new - ll_current + log_rev - log_fwd, rng)
            if accepted:
                state.z[rows] = new_rows
                state.stats = candidate
                ll_current = ll_new
            flags.append(self._tally("latent", accepted))
        return flags

    # Partition

    def _restricted_sweep(
        self,
        x: np.ndarray,
        groups: np.ndarray,
        free: np.ndarray,
        counts: np.ndarray,
        sums: np.ndarray,
        scatters: np.ndarray,
        hyper,
        blocks: PsiBlocks,
        rng: RngStream,
        target: Optional[np.ndarray] = None,
    ) -> float:
        """
        One Gibbs pass over the non-anchor members, each choosing between the two
        groups. Draws new groups, or with `target` scores and imposes those groups.
        Returns the log probability of the resulting assignment.
        """
        log_q = 0.0
        for pos in free:
            xl = x[pos]
            outer = np.outer(xl, xl)
            k_old = groups[pos]
            counts[k_old] -= 1
            sums[k_old] -= xl
            scatters[k_old] -= outer

            log_w = np.log(counts.astype(float))
            if self.use_likelihood:
                terms = cluster_log_terms(
                    np.concatenate([counts + 1, counts]),
                    np.concatenate([sums + xl, sums]),
                    np.concatenate([scatters + outer, scatters]),
                    hyper,
                    blocks,
                )
                log_w = log_w + terms[:2] - terms[2:]
            log_p = log_w - logsumexp(log_w)

            if target is None:
                k_new = 0 if rng.gen.uniform() < math.exp(log_p[0]) else 1
            else:
                k_new = int(target[pos])
            log_q += float(log_p[k_new])

            groups[pos] = k_new
            counts[k_new] += 1
            sums[k_new] += xl
            scatters[k_new] += outer
        return log_q

    def _launch(
        self,
        state: ChainState,
        members: np.ndarray,
        i: int,
        i2: int,
        gamma: np.ndarray,
        rng: RngStream,
        target: Optional[np.ndarray] = None,
    ) -> tuple[np.ndarray, float]:
        """
        Launch state for the pair (i, i2) inside `members`, then one final restricted
        sweep. Returns the final groups (0 = with i, 1 = with i2) and their log
        proposal probability.
        """
        blocks = split_psi(state.hyper.psi, gamma)
        x = state.z[members][:, blocks.idx1]
        a, b = np.searchsorted(members, i), np.searchsorted(members, i2)

        d_a = np.sum((x - x[a]) ** 2, axis=1)
        d_b = np.sum((x - x[b]) ** 2, axis=1)
        groups = (d_b < d_a).astype(np.int64)
        groups[a], groups[b] = 0, 1
        free = np.setdiff1d(np.arange(len(members)), [a, b])

        counts = np.bincount(groups, minlength=2).astype(np.int64)
        sums = np.stack([x[groups == k].sum(axis=0) for k in (0, 1)])
        scatters = np.stack([x[groups == k].T @ x[groups == k] for k in (0, 1)])

        for _ in range(self.cfg.split_merge_sweeps):
            self._restricted_sweep(x, groups, free, counts, sums, scatters, state.hyper, blocks, rng)
        log_q = self._restricted_sweep(x, groups, free, counts, sums, scatters, state.hyper, blocks, rng, target)
        return groups, log_q

    def propose_partition(
        self,
        state: ChainState,
        i: int,
        i2: int,
        rng: RngStream,
        gamma_fwd: Optional[np.ndarray] = None,
    ) -> PartitionProposal:
        """
        Split proposal when i and i2 share a cluster, merge proposal otherwise.
        Splits are built under gamma_fwd; the reverse split of a merge is replayed
        under the current gamma.
        """
        gamma_fwd = state.gamma if gamma_fwd is None else gamma_fwd
        phi = state.phi
        c, c2 = int(phi[i]), int(phi[i2])
        log_alpha = math.log(state.hyper.alpha)

        if c == c2:
            members = np.flatnonzero(phi == c)
            groups, log_q = self._launch(state, members, i, i2, gamma_fwd, rng)
            moved = members[groups == 1]
            new_phi = phi.copy()
            new_phi[moved] = state.M
            stats = state.stats.copy()
            stats.split_cluster(c, state.z[moved])
            n_a, n_b = len(members) - len(moved), len(moved)
            prior_ratio = log_alpha + gammaln(n_a) + gammaln(n_b) - gammaln(len(members))
            return PartitionProposal("split", new_phi, stats, log_q, 0.0, float(prior_ratio))

        members = np.flatnonzero((phi == c) | (phi == c2))
        target = (phi[members] == c2).astype(np.int64)
        _, log_q_rev = self._launch(state, members, i, i2, state.gamma, rng, target=target)
        new_phi = phi.copy()
        new_phi[phi == c2] = c
        new_phi[new_phi > c2] -= 1
        stats = state.stats.copy()
        n_a, n_b = int(stats.counts[c]), int(stats.counts[c2])
        stats.merge_clusters(c, c2)
        prior_ratio = -(log_alpha + gammaln(n_a) + gammaln(n_b) - gammaln(n_a + n_b))
        return PartitionProposal("merge", new_phi, stats, 0.0, log_q_rev, float(prior_ratio))

    def _pick_pair(self, state: ChainState, rng: RngStream) -> tuple[int, int]:
        i, i2 = rng.gen.choice(state.n, size=2, replace=False)
        return int(i), int(i2)

    def split_merge(self, state: ChainState, rng: RngStream) -> bool:
        """Split-merge move with a distance-based launch and restricted Gibbs sweeps."""
        if state.n < 2:
            return False
        i, i2 = self._pick_pair(state, rng)
        proposal = self.propose_partition(state, i, i2, rng)
        log_ratio = (
            self.loglik(proposal.stats, state.gamma, state.hyper)
            - self.loglik(state.stats, state.gamma, state.hyper)
            + proposal.log_prior_ratio
            + proposal.log_q_rev
            - proposal.log_q_fwd
        )
        accepted = accept_move(log_ratio, rng)
        if accepted:
            state.phi = proposal.phi
            state.stats = proposal.stats
        return self._tally(proposal.kind, accepted)

    def gibbs_sweep(self, state: ChainState, rng: RngStream) -> None:
        """Unrestricted Gibbs update of every phi_i, new clusters allowed."""
        blocks = split_psi(state.hyper.psi, state.gamma) if self.use_likelihood else None
        for i in range(state.n):
            log_w = gibbs_logweights(state, i, use_likelihood=self.use_likelihood, blocks=blocks)
            probs = np.exp(log_w)
            m_new = int(np.searchsorted(np.cumsum(probs), rng.gen.uniform() * probs.sum(), side="right"))
            m_new = min(m_new, state.M)
            if m_new == state.M and state.stats.counts[state.phi[i]] == 1:
                continue
            stats_move(state, i, m_new)

    def propose_joint(
        self,
        state: ChainState,
        rng: RngStream,
        force_gamma: Optional[np.ndarray] = None,
    ) -> JointProposal:
        if force_gamma is None:
            gamma_new = propose_gamma(state.gamma, self.cfg.swap_prob, rng)
            log_q_gamma_fwd = gamma_proposal_logdensity(state.gamma, gamma_new, self.cfg.swap_prob)
            log_q_gamma_rev = gamma_proposal_logdensity(gamma_new, state.gamma, self.cfg.swap_prob)
        else:
            gamma_new = np.asarray(force_gamma, dtype=bool).copy()
            log_q_gamma_fwd = log_q_gamma_rev = 0.0
        i, i2 = self._pick_pair(state, rng)
        partition = self.propose_partition(state, i, i2, rng, gamma_fwd=gamma_new)
        return JointProposal(gamma_new, partition, log_q_gamma_fwd, log_q_gamma_rev)

    def joint_gamma_phi(
        self,
        state: ChainState,
        rng: RngStream,
        force_gamma: Optional[np.ndarray] = None,
    ) -> bool:
        """Propose gamma and then a split or merge under it; accept or reject both together."""
        if state.n < 2:
            return False
        proposal = self.propose_joint(state, rng, force_gamma)
        lp_new = self.log_gamma_prior(proposal.gamma)
        if lp_new == -np.inf:
            return self._tally("joint", False)

        log_ratio = (
            self.loglik(proposal.partition.stats, proposal.gamma, state.hyper)
            - self.loglik(state.stats, state.gamma, state.hyper)
            + lp_new
            - self.log_gamma_prior(state.gamma)
            + proposal.partition.log_prior_ratio
            + proposal.log_q_rev
            - proposal.log_q_fwd
        )
        accepted = accept_move(log_ratio, rng)
        if accepted:
            state.gamma = proposal.gamma
            state.phi = proposal.partition.phi
            state.stats = proposal.partition.stats
        return self._tally("joint", accepted)
