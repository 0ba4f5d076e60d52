import numpy as np
import pytest
from scipy import stats

from dpmvs.sampler.conjugate import ComponentDraw, PsiConditional, sample_theta, sample_theta_from_stats
from dpmvs.sampler.states import ClusterStatsCache, Hyperparams
from dpmvs.utils.stats_kernels import sample_wishart, wishart_logpdf
from tests.conftest import make_state

PSI = np.array([[1.5, 0.3, -0.2], [0.3, 1.0, 0.1], [-0.2, 0.1, 0.8]])
P = np.eye(3) / 5.0
N = 5.0


def empty_stats(p: int) -> ClusterStatsCache:
    return ClusterStatsCache(
        counts=np.zeros(1, dtype=np.int64),
        sums=np.zeros((1, p)),
        scatters=np.zeros((1, p, p)),
        total_sum=np.zeros(p),
        total_scatter=np.zeros((p, p)),
    )


@pytest.fixture
def z():
    return np.random.default_rng(8).standard_normal((9, 3))


@pytest.mark.unit
class TestComponentDraw:
    def test_canonical_blocks(self, z, rng):
        gamma = np.array([True, False, True])
        state = make_state(z, [0, 0, 1, 1, 0, 1, 1, 0, 0], gamma, psi=PSI, eta=6.0)
        theta = sample_theta(state, rng)
        b, Q = theta.canonical()
        means, covs = theta.moments()
        idx1, idx2 = theta.idx1, theta.idx2
        for m in range(theta.n_clusters):
            np.testing.assert_allclose(Q[m], Q[m].T)
            np.testing.assert_allclose(covs[m][np.ix_(idx1, idx1)], theta.sigma11[m], atol=1e-10)
            np.testing.assert_allclose(means[m][idx1], theta.mu1[m], atol=1e-10)
            np.testing.assert_allclose(Q[m][np.ix_(idx2, idx2)], theta.q22)
            np.testing.assert_allclose(Q[m][np.ix_(idx2, idx1)], theta.q21)
            np.testing.assert_allclose(b[m][idx2], theta.b2)

    def test_one_entry_per_cluster(self, z, rng):
        state = make_state(z, [0, 1, 2, 0, 1, 2, 0, 1, 2], [1, 1, 0], psi=PSI, eta=6.0)
        theta = sample_theta(state, rng)
        assert theta.mu1.shape == (3, 2) and theta.sigma11.shape == (3, 2, 2)
        assert theta.q21.shape == (1, 2) and theta.q22.shape == (1, 1)

    def test_excluded_rows_leave_stats_untouched(self, z, rng):
        state = make_state(z, [0, 0, 1, 1, 0, 1, 1, 0, 0], [1, 0, 1], psi=PSI, eta=6.0)
        before = state.stats.copy()
        sample_theta(state, rng, exclude_rows=np.array([0, 2]))
        assert state.stats.max_deviation(before) == 0.0

    def test_no_informative_variables(self, z, rng):
        state = make_state(z, [0, 0, 1, 1, 0, 1, 1, 0, 0], [0, 0, 0], psi=PSI, eta=6.0)
        means, covs = sample_theta(state, rng).moments()
        np.testing.assert_allclose(means[0], means[1])
        np.testing.assert_allclose(covs[0], covs[1])


PSI4 = np.array(
    [[1.2, 0.4, 0.0, -0.3], [0.4, 1.0, 0.2, 0.1], [0.0, 0.2, 0.9, 0.3], [-0.3, 0.1, 0.3, 1.1]]
)


@pytest.mark.slow
@pytest.mark.parametrize(
    "psi, gamma",
    [(PSI, [1, 1, 1]), (PSI, [0, 0, 0]), (PSI, [1, 0, 1]), (PSI4, [1, 1, 0, 0]), (PSI4, [0, 1, 0, 1])],
)
def test_prior_draws_reproduce_normal_inverse_wishart_moments(rng, psi, gamma):
    p = len(gamma)
    eta, lam = 10.0, 2.0
    hyper = Hyperparams(lam=lam, eta=eta, psi=psi, alpha=1.0)
    means, covs = [], []
    for _ in range(100_000):
        mean, cov = sample_theta_from_stats(empty_stats(p), np.array(gamma, dtype=bool), hyper, rng).moments()
        means.append(mean[0])
        covs.append(cov[0])
    expected_cov = psi / (eta - p - 1)
    tol = 0.03 * expected_cov.max()
    np.testing.assert_allclose(np.mean(covs, axis=0), expected_cov, atol=tol)
    np.testing.assert_allclose(np.mean(means, axis=0), np.zeros(p), atol=0.01)
    np.testing.assert_allclose(np.cov(np.array(means).T), expected_cov / lam, atol=tol)


def theta_log_density(theta: ComponentDraw, psi: np.ndarray, eta: float) -> float:
    """log p(Psi) + log p(theta | Psi) up to terms free of Psi."""
    idx1, idx2 = theta.idx1, theta.idx2
    psi11 = psi[np.ix_(idx1, idx1)]
    psi21 = psi[np.ix_(idx2, idx1)]
    psi22 = psi[np.ix_(idx2, idx2)]
    psi2given1 = psi22 - psi21 @ np.linalg.solve(psi11, psi21.T)
    total = stats.wishart(df=N, scale=P).logpdf(psi)
    for sigma in theta.sigma11:
        total += stats.invwishart(df=eta - len(idx2), scale=psi11).logpdf(sigma)
    total += stats.wishart(df=eta, scale=np.linalg.inv(psi2given1)).logpdf(theta.q22)
    q21_mean = -theta.q22 @ psi21 @ np.linalg.inv(psi11)
    total += stats.matrix_normal(mean=q21_mean, rowcov=theta.q22, colcov=np.linalg.inv(psi11)).logpdf(theta.q21)
    return total


@pytest.mark.unit
class TestPsiConditional:
    def theta(self, z, rng, gamma, eta=6.0):
        state = make_state(z, [0, 0, 1, 1, 0, 1, 1, 0, 0], gamma, psi=PSI, eta=eta)
        return sample_theta(state, rng)

    def test_matches_unnormalized_posterior(self, z, rng):
        eta = 6.0
        theta = self.theta(z, rng, [1, 0, 1], eta)
        conditional = PsiConditional(theta, P, N, eta)
        a, b = PSI, sample_wishart(P, N + 3, rng)
        expected = theta_log_density(theta, a, eta) - theta_log_density(theta, b, eta)
        assert conditional.logpdf(a) - conditional.logpdf(b) == pytest.approx(expected, rel=1e-8, abs=1e-8)

    def test_all_informative_is_wishart(self, z, rng):
        eta = 6.0
        theta = self.theta(z, rng, [1, 1, 1], eta)
        precision = np.linalg.inv(P) + sum(np.linalg.inv(sigma) for sigma in theta.sigma11)
        conditional = PsiConditional(theta, P, N, eta)
        expected = wishart_logpdf(PSI, np.linalg.inv(precision), 2 * eta + N)
        assert conditional.logpdf(PSI) == pytest.approx(expected, rel=1e-10)

    def test_none_informative_is_wishart(self, z, rng):
        eta = 6.0
        theta = self.theta(z, rng, [0, 0, 0], eta)
        conditional = PsiConditional(theta, P, N, eta)
        expected = wishart_logpdf(PSI, np.linalg.inv(np.linalg.inv(P) + theta.q22), N + eta)
        assert conditional.logpdf(PSI) == pytest.approx(expected, rel=1e-10)

    def test_samples_are_symmetric_positive_definite(self, z, rng):
        theta = self.theta(z, rng, [1, 0, 1])
        conditional = PsiConditional(theta, P, N, 6.0)
        for _ in range(20):
            psi = conditional.sample(rng)
            np.testing.assert_allclose(psi, psi.T, atol=1e-12)
            assert np.all(np.linalg.eigvalsh(psi) > 0)
            assert np.isfinite(conditional.logpdf(psi))
