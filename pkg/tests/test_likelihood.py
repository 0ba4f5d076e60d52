import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import logsumexp

from dpmvs.sampler.likelihood import gibbs_logweights, log_marginal, log_marginal_from, split_psi
from dpmvs.sampler.states import ClusterStatsCache
from tests.conftest import make_state, niw_log_marginal

pytestmark = pytest.mark.unit

PSI = np.array([[1.5, 0.3, -0.2], [0.3, 1.0, 0.1], [-0.2, 0.1, 0.8]])
LAM, ETA = 0.7, 6.0


@pytest.fixture
def z():
    return np.random.default_rng(42).standard_normal((7, 3))


def all_gammas(p):
    for bits in range(2**p):
        yield np.array([(bits >> j) & 1 for j in range(p)], dtype=bool)


def test_single_point_reference_value():
    for gamma in ([True], [False]):
        state = make_state(np.zeros((1, 1)), [0], gamma, lam=1.0, eta=3.0, psi=np.eye(1))
        assert log_marginal(state) == pytest.approx(-0.79816, abs=1e-5)


def test_split_psi_blocks():
    blocks = split_psi(PSI, np.array([True, False, True]))
    np.testing.assert_array_equal(blocks.idx1, [0, 2])
    np.testing.assert_array_equal(blocks.idx2, [1])
    schur = PSI[1, 1] - PSI[1, [0, 2]] @ np.linalg.solve(PSI[np.ix_([0, 2], [0, 2])], PSI[[0, 2], 1])
    np.testing.assert_allclose(blocks.psi2given1, [[schur]])


@pytest.mark.parametrize("gamma", list(all_gammas(3)), ids=lambda g: "".join(str(int(b)) for b in g))
def test_one_cluster_matches_normal_inverse_wishart(z, gamma):
    state = make_state(z, np.zeros(7, dtype=int), gamma, lam=LAM, eta=ETA, psi=PSI)
    assert log_marginal(state) == pytest.approx(niw_log_marginal(z, LAM, ETA, PSI), rel=1e-10)


def test_all_informative_factorizes_over_clusters(z):
    phi = np.array([0, 1, 0, 2, 1, 1, 0])
    state = make_state(z, phi, [1, 1, 1], lam=LAM, eta=ETA, psi=PSI)
    expected = sum(niw_log_marginal(z[phi == m], LAM, ETA, PSI) for m in range(3))
    assert log_marginal(state) == pytest.approx(expected, rel=1e-10)


def test_no_informative_variable_ignores_the_partition(z):
    phi = np.array([0, 1, 0, 2, 1, 1, 0])
    state = make_state(z, phi, [0, 0, 0], lam=LAM, eta=ETA, psi=PSI)
    assert log_marginal(state) == pytest.approx(niw_log_marginal(z, LAM, ETA, PSI), rel=1e-10)


def test_empty_clusters_are_skipped(z):
    phi = np.array([0, 1, 0, 1, 1, 1, 0])
    gamma = np.array([True, False, True])
    state = make_state(z, phi, gamma, lam=LAM, eta=ETA, psi=PSI)
    padded = ClusterStatsCache.from_data(z, phi, n_clusters=4)
    assert log_marginal_from(padded, gamma, state.hyper) == pytest.approx(log_marginal(state))


class TestGibbsLogweights:
    phi = np.array([0, 1, 0, 2, 1, 1, 0])
    gamma = np.array([True, False, True])

    def state(self, z, **kwargs):
        return make_state(z, self.phi, self.gamma, lam=LAM, eta=ETA, psi=PSI, alpha=1.3, **kwargs)

    @pytest.mark.parametrize("i", [0, 1, 4])
    def test_matches_full_posterior(self, z, i):
        state = self.state(z)
        M = state.M
        counts_minus = np.bincount(np.delete(self.phi, i), minlength=M)
        expected = []
        for target in range(M + 1):
            phi = self.phi.copy()
            phi[i] = target
            stats = ClusterStatsCache.from_data(z, phi, n_clusters=M + 1)
            prior = math.log(state.hyper.alpha) if target == M else math.log(counts_minus[target])
            expected.append(prior + log_marginal_from(stats, self.gamma, state.hyper))
        expected = np.array(expected) - logsumexp(expected)
        np.testing.assert_allclose(gibbs_logweights(state, i), expected, atol=1e-9)

    def test_normalized(self, z):
        state = self.state(z)
        for i in range(state.n):
            assert np.exp(gibbs_logweights(state, i)).sum() == pytest.approx(1.0)

    def test_singleton_own_label_excluded(self, z):
        state = self.state(z)
        weights = gibbs_logweights(state, 3)
        assert weights[2] == -np.inf
        assert np.isfinite(weights[3])

    def test_prior_only(self, z):
        state = self.state(z)
        probs = np.exp(gibbs_logweights(state, 0, use_likelihood=False))
        np.testing.assert_allclose(probs, np.array([2.0, 3.0, 1.0, 1.3]) / 7.3)

    def test_restricted_labels(self, z):
        state = self.state(z)
        probs = np.exp(gibbs_logweights(state, 0, restrict=(0, 1)))
        assert probs[2] == 0.0 and probs[3] == 0.0
        assert probs[0] + probs[1] == pytest.approx(1.0)

    def test_row_out_of_range(self, z):
        with pytest.raises(IndexError):
            gibbs_logweights(self.state(z), 7)


def prior_averaged_log_likelihood(z, phi, gamma, lam, eta, psi, draws, gen, chunk=250_000):
    """
    log f(Z | phi, gamma) for p = 2 with one informative column, by averaging the
    likelihood over draws of every cluster and regression parameter from the prior.
    Returns the estimate and its Monte-Carlo standard error.
    """
    i1 = int(np.flatnonzero(gamma)[0])
    i2 = 1 - i1
    psi11, psi21 = psi[i1, i1], psi[i2, i1]
    psi2given1 = psi[i2, i2] - psi21**2 / psi11
    x, y = z[:, i1], z[:, i2]
    n_clusters = int(phi.max()) + 1
    logs = []
    for _ in range(draws // chunk):
        sigma2 = stats.invgamma.rvs(eta / 2, scale=psi2given1 / 2, size=chunk, random_state=gen)
        slope = psi21 / psi11 + np.sqrt(sigma2 / psi11) * gen.standard_normal(chunk)
        intercept = np.sqrt(sigma2 / lam) * gen.standard_normal(chunk)
        sigma1 = stats.invgamma.rvs((eta - 1) / 2, scale=psi11 / 2, size=(n_clusters, chunk), random_state=gen)
        mu1 = np.sqrt(sigma1 / lam) * gen.standard_normal((n_clusters, chunk))
        loglik = np.zeros(chunk)
        for i, m in enumerate(phi):
            loglik += stats.norm.logpdf(x[i], mu1[m], np.sqrt(sigma1[m]))
            loglik += stats.norm.logpdf(y[i], intercept + slope * x[i], np.sqrt(sigma2))
        logs.append(loglik)
    logs = np.concatenate(logs)
    weights = np.exp(logs - logs.max())
    estimate = float(logsumexp(logs) - math.log(len(logs)))
    return estimate, float(weights.std() / (weights.mean() * math.sqrt(len(logs))))


@pytest.mark.slow
@pytest.mark.parametrize("gamma", [[True, False], [False, True]])
@pytest.mark.parametrize("phi", [[0, 0, 1], [0, 1, 1], [0, 1, 2]])
def test_matches_prior_integration(phi, gamma):
    z = np.array([[-0.8, 0.3], [0.5, -0.2], [1.1, 0.9]])
    psi = np.array([[1.2, 0.4], [0.4, 0.9]])
    lam, eta = 0.8, 4.0
    state = make_state(z, phi, gamma, lam=lam, eta=eta, psi=psi)
    gen = np.random.default_rng(sum(phi) + 10 * gamma.index(True))
    estimate, se = prior_averaged_log_likelihood(z, np.array(phi), np.array(gamma), lam, eta, psi, 2_000_000, gen)
    assert se < 0.02
    assert abs(estimate - log_marginal(state)) < 3 * se
