import math

import numpy as np
import pytest

from dpmvs.common.run_config import McmcConfig, PriorConfig
from dpmvs.dataset.data_model import build_dataset, standardize
from dpmvs.dataset.schema import VariableSchema
from dpmvs.sampler.states import ChainState, ClusterStatsCache, Hyperparams
from dpmvs.utils.stats_kernels import RngStream


@pytest.fixture
def rng() -> RngStream:
    return RngStream(seed=1234)


@pytest.fixture
def continuous_dataset():
    """Eight rows, two well separated groups in the first column, noise in the second."""
    y = np.array(
        [
            [-2.1, 0.3],
            [-1.9, -0.4],
            [-2.3, 0.1],
            [-1.7, 0.8],
            [2.0, -0.2],
            [1.8, 0.5],
            [2.2, -0.7],
            [2.4, 0.0],
        ]
    )
    schema = [VariableSchema(name="a"), VariableSchema(name="b")]
    return standardize(build_dataset(y, schema))


@pytest.fixture
def mixed_schema() -> list[VariableSchema]:
    return [
        VariableSchema(name="score"),
        VariableSchema(name="grade", kind="ordinal", levels=[1, 2, 3]),
        VariableSchema(name="wait", lower=0.0),
    ]


@pytest.fixture
def mixed_raw(mixed_schema):
    y = np.array(
        [
            [0.5, 1, 0.0],
            [1.2, 2, 1.5],
            [np.nan, 3, 2.0],
            [-0.3, 1, 0.0],
            [2.2, np.nan, 3.1],
            [1.7, 3, 0.7],
            [0.1, 2, np.nan],
            [-1.0, 1, 0.0],
            [0.9, 2, 2.4],
            [1.4, 3, 1.1],
        ]
    )
    return build_dataset(y, mixed_schema)


@pytest.fixture
def mixed_dataset(mixed_raw):
    return standardize(mixed_raw)


@pytest.fixture
def short_mcmc() -> McmcConfig:
    return McmcConfig(iterations=40, burn_in=10, seed=7)


def make_state(
    z: np.ndarray,
    phi,
    gamma,
    lam: float = 1.0,
    eta: float | None = None,
    psi: np.ndarray | None = None,
    alpha: float = 1.0,
) -> ChainState:
    z = np.asarray(z, dtype=float)
    phi = np.asarray(phi, dtype=np.int64)
    p = z.shape[1]
    hyper = Hyperparams(
        lam=lam,
        eta=p + 2.0 if eta is None else eta,
        psi=np.eye(p) if psi is None else psi,
        alpha=alpha,
    )
    return ChainState(
        z=z.copy(),
        gamma=np.asarray(gamma, dtype=bool),
        phi=phi.copy(),
        hyper=hyper,
        stats=ClusterStatsCache.from_data(z, phi),
    )


def niw_log_marginal(z: np.ndarray, lam: float, eta: float, psi: np.ndarray) -> float:
    """Closed-form normal-inverse-Wishart marginal likelihood with prior mean zero."""
    n, p = z.shape
    s = z.sum(axis=0)
    psi_n = psi + z.T @ z - np.outer(s, s) / (n + lam)
    from scipy.special import multigammaln

    return (
        -0.5 * n * p * math.log(math.pi)
        + 0.5 * p * math.log(lam / (n + lam))
        + 0.5 * eta * np.linalg.slogdet(psi)[1]
        - 0.5 * (n + eta) * np.linalg.slogdet(psi_n)[1]
        + multigammaln(0.5 * (n + eta), p)
        - multigammaln(0.5 * eta, p)
    )


def resolved_prior(p: int, mode: str = "vs", **fields) -> PriorConfig:
    return PriorConfig(**fields).resolve(p, mode)
