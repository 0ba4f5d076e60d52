import logging
import time
from typing import Callable, Iterator, Optional

import numpy as np

from dpmvs.common.errors import DataValidationError
from dpmvs.common.run_config import McmcConfig, PriorConfig
from dpmvs.common.types import AcceptanceCounts, ChainMetadata
from dpmvs.dataset.data_model import Dataset
from dpmvs.sampler.likelihood import log_marginal
from dpmvs.sampler.nodes import SamplerNodes
from dpmvs.sampler.states import ChainState, SampleRecord, init_chain_state
from dpmvs.utils.stats_kernels import RngStream

# Configure logging
logger = logging.getLogger(__name__)

ADAPT_WINDOW = 100
ADAPT_LOW, ADAPT_HIGH = 0.2, 0.6

Step = tuple[str, Callable[[ChainState, RngStream, int], object]]


class Sampler:
    """
    One MCMC chain: the update nodes composed into a fixed per-iteration schedule.

    Order within an iteration: latent values, Psi, (lambda, eta), alpha, gamma
    (L_g times), split-merge, unrestricted Gibbs sweep, and the joint gamma/phi
    move every `joint_every` iterations.
    """

    def __init__(
        self,
        ds: Dataset,
        prior: PriorConfig,
        cfg: McmcConfig,
        chain_id: int = 0,
        stream_id: Optional[int] = None,
    ):
        if not ds.standardized:
            raise DataValidationError("the sampler expects a standardized dataset")
        self.ds = ds
        self.prior = prior if prior.is_resolved else prior.resolve(ds.p, cfg.mode)
        self.cfg = cfg
        self.chain_id = chain_id
        self.stream_id = chain_id if stream_id is None else stream_id
        self.nodes = SamplerNodes(ds, self.prior, cfg)
        self.schedule: list[Step] = self.build_schedule(self.nodes)

        self.latent_sum = np.zeros((ds.n, ds.p))
        self.n_emitted = 0
        self.wall_clock = 0.0
        self.burn_in_counts: dict[str, AcceptanceCounts] = {}

    def build_schedule(self, nodes: SamplerNodes) -> list[Step]:
        cfg = self.cfg
        schedule: list[Step] = [
            ("latent", lambda state, rng, t: nodes.update_latent(state, rng)),
            ("psi", lambda state, rng, t: nodes.update_psi(state, rng)),
            ("lambda_eta", lambda state, rng, t: nodes.update_lambda_eta(state, rng)),
            ("alpha", lambda state, rng, t: nodes.update_alpha(state, rng)),
        ]
        if cfg.selects_variables:
            n_gamma = cfg.gamma_updates_for(self.ds.p)
            schedule.append(
                ("gamma", lambda state, rng, t: [nodes.update_gamma(state, rng) for _ in range(n_gamma)])
            )
        schedule += [
            ("split_merge", lambda state, rng, t: nodes.split_merge(state, rng)),
            ("gibbs", lambda state, rng, t: nodes.gibbs_sweep(state, rng)),
        ]
        if cfg.selects_variables and cfg.joint_every > 0:
            schedule.append(
                ("joint", lambda state, rng, t: nodes.joint_gamma_phi(state, rng) if t % cfg.joint_every == 0 else None)
            )
        return schedule

    @property
    def latent_mean(self) -> np.ndarray:
        """Posterior mean of the latent matrix over emitted samples (standardized scale)."""
        if self.n_emitted == 0:
            return self.latent_sum.copy()
        return self.latent_sum / self.n_emitted

    def _adapt_block(self, window: list[bool], t: int) -> None:
        if not window:
            return
        rate = float(np.mean(window))
        size = self.nodes.z_block
        if rate > ADAPT_HIGH:
            size = min(2 * size, max(len(self.nodes.latent_rows), 1))
        elif rate < ADAPT_LOW:
            size = max(size // 2, 1)
        if size != self.nodes.z_block:
            logger.debug(f"Chain {self.chain_id}: latent block {self.nodes.z_block} -> {size} rows at t={t} (acceptance {rate:.2f})")
            self.nodes.z_block = size

    def run_chain(self) -> Iterator[SampleRecord]:
        """Run the chain and yield a SampleRecord at every emitted iteration."""
        cfg = self.cfg
        rng = RngStream(cfg.seed, self.stream_id)
        state = init_chain_state(self.ds, self.prior, cfg, rng)
        latent_window: list[bool] = []
        started = time.perf_counter()
        logger.info(
            f"Chain {self.chain_id} started: {cfg.iterations} iterations, burn-in {cfg.burn_in}, "
            f"mode {cfg.mode}, stream {self.stream_id}"
        )

        for t in range(cfg.iterations):
            if t == cfg.burn_in:
                self.burn_in_counts = self.nodes.acceptance_counts()
            flags: dict[str, bool] = {}
            for name, step in self.schedule:
                outcome = step(state, rng, t)
                if name == "latent":
                    latent_window += outcome
                    flags[name] = bool(outcome) and all(outcome)
                elif name == "lambda_eta":
                    flags["lambda"], flags["eta"] = outcome
                elif name == "gamma":
                    flags[name] = any(outcome)
                elif isinstance(outcome, bool):
                    flags[name] = outcome
                if cfg.check_invariants:
                    state.check_invariants()

            if cfg.adapt_z_block and t < cfg.burn_in and (t + 1) % ADAPT_WINDOW == 0:
                self._adapt_block(latent_window, t)
                latent_window = []

            if (t + 1) % cfg.recompute_every == 0:
                drift = state.recompute_stats()
                logger.debug(f"Chain {self.chain_id}: statistics rebuilt at t={t}, drift {drift:.2e}")

            if t >= cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0:
                self.latent_sum += state.z
                self.n_emitted += 1
                yield SampleRecord(
                    iteration=t,
                    gamma=state.gamma.copy(),
                    phi=state.phi.copy(),
                    m=state.M,
                    lam=state.hyper.lam,
                    eta=state.hyper.eta,
                    alpha=state.hyper.alpha,
                    log_marginal=log_marginal(state),
                    accept_flags=flags,
                )

            if (t + 1) % 1000 == 0:
                logger.info(f"Chain {self.chain_id}: iteration {t + 1}/{cfg.iterations}, M={state.M}, p1={int(state.gamma.sum())}")

        self.wall_clock = time.perf_counter() - started
        logger.info(f"Chain {self.chain_id} finished in {self.wall_clock:.1f}s; acceptance {self.nodes.acceptance_rates()}")

    def sampling_acceptance(self) -> dict[str, AcceptanceCounts]:
        """Proposal and acceptance counts per update after burn-in, with the latent block size frozen."""
        out = {}
        for name, counts in self.nodes.acceptance_counts().items():
            before = self.burn_in_counts.get(name, AcceptanceCounts(proposed=0, accepted=0))
            out[name] = AcceptanceCounts(
                proposed=counts["proposed"] - before["proposed"],
                accepted=counts["accepted"] - before["accepted"],
            )
        return out

    def metadata(self) -> ChainMetadata:
        return ChainMetadata(
            chain_id=self.chain_id,
            seed=self.cfg.seed,
            stream_id=self.stream_id,
            n_samples=self.n_emitted,
            acceptance=self.nodes.acceptance_rates(),
            sampling_acceptance=self.sampling_acceptance(),
            latent_block_rows=self.nodes.z_block,
            wall_clock=self.wall_clock,
        )


def run_chain(
    ds: Dataset,
    prior: PriorConfig,
    cfg: McmcConfig,
    chain_id: int = 0,
    stream_id: Optional[int] = None,
) -> Iterator[SampleRecord]:
    """Stream the samples of one chain; deterministic given (dataset, config, seed, stream)."""
    return Sampler(ds, prior, cfg, chain_id, stream_id).run_chain()
