"""
Special functions, matrix factorizations and samplers shared by the sampler modules.

Every sampler draws from an explicit RngStream so that a run is reproducible from
(seed, stream_id) alone. Densities are returned on the log scale.
"""
from dataclasses import dataclass, field
import logging
import math
from typing import Union

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import gammaln, log_ndtr, ndtr, ndtri

from dpmvs.common.errors import DomainError, NotPositiveDefiniteError

# Configure logging
logger = logging.getLogger(__name__)

LOG_PI = math.log(math.pi)
JITTER_START = 1e-10
JITTER_STOP = 1e-6
TAIL_CUTOFF = 4.0


@dataclass
class RngStream:
    """Counter-based random stream identified by (seed, stream_id)."""
    seed: int
    stream_id: int = 0
    gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.seed < 0 or self.stream_id < 0:
            raise DomainError("seed and stream_id must be non-negative integers")
        sequence = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        self.gen = np.random.Generator(np.random.Philox(sequence))

    def child(self, stream_id: int) -> "RngStream":
        """Independent stream sharing this stream's seed."""
        return RngStream(self.seed, stream_id)


@dataclass(frozen=True)
class CholFactor:
    lower: np.ndarray
    log_det: float

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self.dim == 0:
            return np.zeros_like(b, dtype=float)
        return cho_solve((self.lower, True), b, check_finite=False)

    def inverse(self) -> np.ndarray:
        return self.solve(np.eye(self.dim))


def log_multivariate_gamma(p: int, a: float) -> float:
    """
    Log of the multivariate gamma function.

    Args:
        p (int): Dimension, zero allowed (returns 0)
        a (float): Argument, must exceed (p - 1) / 2

    Returns:
        float: log Gamma_p(a)
    """
    if p < 0 or int(p) != p:
        raise DomainError(f"dimension must be a non-negative integer, got {p}")
    if p == 0:
        return 0.0
    if not a > (p - 1) / 2:
        raise DomainError(f"log_multivariate_gamma needs a > {(p - 1) / 2}, got a={a}")
    j = np.arange(1, p + 1)
    return float(p * (p - 1) / 4 * LOG_PI + np.sum(gammaln(a + (1 - j) / 2)))


def cholesky(A: np.ndarray) -> CholFactor:
    """
    Lower Cholesky factor with log-determinant.

    On failure a jitter of 1e-10 times the mean diagonal is added to the diagonal,
    escalating by a factor 10 up to 1e-6 before giving up.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"cholesky expects a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        return CholFactor(np.zeros((0, 0)), 0.0)

    try:
        lower = np.linalg.cholesky(A)
        return CholFactor(lower, 2.0 * float(np.sum(np.log(np.diag(lower)))))
    except np.linalg.LinAlgError:
        pass

    scale = float(np.mean(np.diag(A)))
    if not scale > 0:
        scale = 1.0
    jitter = JITTER_START
    while jitter <= JITTER_STOP * (1 + 1e-9):
        try:
            lower = np.linalg.cholesky(A + jitter * scale * np.eye(A.shape[0]))
            logger.warning(f"Cholesky needed jitter {jitter:.0e} on a {A.shape[0]}x{A.shape[0]} matrix")
            return CholFactor(lower, 2.0 * float(np.sum(np.log(np.diag(lower)))))
        except np.linalg.LinAlgError:
            jitter *= 10
    raise NotPositiveDefiniteError(f"matrix of shape {A.shape} is not positive definite")


def log_det_stack(stack: np.ndarray) -> np.ndarray:
    """Log-determinants of a (k, d, d) stack of SPD matrices."""
    if stack.shape[-1] == 0:
        return np.zeros(stack.shape[0])
    try:
        lower = np.linalg.cholesky(stack)
        return 2.0 * np.sum(np.log(np.diagonal(lower, axis1=-2, axis2=-1)), axis=-1)
    except np.linalg.LinAlgError:
        return np.array([cholesky(matrix).log_det for matrix in stack])


def _as_factor(matrix: Union[np.ndarray, CholFactor]) -> CholFactor:
    return matrix if isinstance(matrix, CholFactor) else cholesky(matrix)


def _bartlett(dim: int, df: float, rng: RngStream) -> np.ndarray:
    # lower-triangular A with A A^T ~ W(I, df)
    A = np.tril(rng.gen.standard_normal((dim, dim)), k=-1)
    A[np.diag_indices(dim)] = np.sqrt(rng.gen.chisquare(df - np.arange(dim)))
    return A


def sample_wishart(
    scale: Union[np.ndarray, CholFactor],
    df: float,
    rng: RngStream,
    inverse_scale: bool = False,
) -> np.ndarray:
    """
    Draw from W(scale, df) by the Bartlett decomposition; E[draw] = df * scale.

    With inverse_scale set, `scale` holds the inverse of the Wishart scale matrix.
    """
    factor = _as_factor(scale)
    dim = factor.dim
    if not df > dim - 1:
        raise DomainError(f"Wishart degrees of freedom must exceed {dim - 1}, got {df}")
    if dim == 0:
        return np.zeros((0, 0))
    A = _bartlett(dim, df, rng)
    if inverse_scale:
        LA = solve_triangular(factor.lower.T, A, lower=False, check_finite=False)
    else:
        LA = factor.lower @ A
    return LA @ LA.T


def sample_inv_wishart(scale: Union[np.ndarray, CholFactor], df: float, rng: RngStream) -> np.ndarray:
    """
    Draw from IW(scale, df), the inverse of a W(scale^-1, df) draw.

    With scale = L L^T the factor L^-T is a square root of scale^-1, so the draw is
    (L A^-T)(L A^-T)^T without forming any explicit inverse.
    """
    factor = _as_factor(scale)
    dim = factor.dim
    if not df > dim - 1:
        raise DomainError(f"inverse-Wishart degrees of freedom must exceed {dim - 1}, got {df}")
    if dim == 0:
        return np.zeros((0, 0))
    A = _bartlett(dim, df, rng)
    B = solve_triangular(A, factor.lower.T, lower=True, check_finite=False).T
    return B @ B.T


def sample_matrix_normal(
    mean: np.ndarray,
    row: Union[np.ndarray, CholFactor],
    col_cov: Union[np.ndarray, CholFactor],
    rng: RngStream,
    row_is_precision: bool = False,
    col_is_precision: bool = False,
) -> np.ndarray:
    """
    Draw X ~ MN(mean, U, V) with vec-covariance kron(V, U).

    Args:
        mean (np.ndarray): q x r mean matrix
        row (np.ndarray | CholFactor): q x q row covariance U, or its inverse when
            row_is_precision is set
        col_cov (np.ndarray | CholFactor): r x r column covariance V, or its inverse
            when col_is_precision is set
        rng (RngStream): Random stream
        row_is_precision (bool): Interpret `row` as the row precision U^-1
        col_is_precision (bool): Interpret `col_cov` as the column precision V^-1

    Returns:
        np.ndarray: q x r draw
    """
    mean = np.asarray(mean, dtype=float)
    if mean.ndim != 2:
        raise ValueError(f"matrix-normal mean must be 2-d, got shape {mean.shape}")
    row_factor, col_factor = _as_factor(row), _as_factor(col_cov)
    q, r = mean.shape
    if row_factor.dim != q or col_factor.dim != r:
        raise ValueError(
            f"shape mismatch: mean {mean.shape}, row {row_factor.dim}, col {col_factor.dim}"
        )
    if q == 0 or r == 0:
        return mean.copy()

    E = rng.gen.standard_normal((q, r))
    if row_is_precision:
        left = solve_triangular(row_factor.lower.T, E, lower=False, check_finite=False)
    else:
        left = row_factor.lower @ E
    if col_is_precision:
        return mean + solve_triangular(col_factor.lower.T, left.T, lower=False, check_finite=False).T
    return mean + left @ col_factor.lower.T


def _tail_draw(a: float, b: float, rng: RngStream) -> float:
    """Standard normal restricted to (a, b) with a >= TAIL_CUTOFF."""
    rate = 0.5 * (a + math.sqrt(a * a + 4.0))
    if b - a < 1.0 / rate:
        while True:
            z = rng.gen.uniform(a, b)
            if math.log(rng.gen.uniform()) <= -0.5 * (z * z - a * a):
                return z
    while True:
        z = a + rng.gen.exponential(1.0 / rate)
        if z >= b:
            continue
        if math.log(rng.gen.uniform()) <= -0.5 * (z - rate) ** 2:
            return z


def _std_truncated_normal(a: float, b: float, rng: RngStream) -> float:
    if a >= TAIL_CUTOFF:
        return _tail_draw(a, b, rng)
    if b <= -TAIL_CUTOFF:
        return -_tail_draw(-b, -a, rng)
    if a > 0:
        return -_std_truncated_normal(-b, -a, rng)
    lo_p, hi_p = ndtr(a), ndtr(b)
    z = float(ndtri(rng.gen.uniform(lo_p, hi_p)))
    while not math.isfinite(z):
        z = float(ndtri(rng.gen.uniform(lo_p, hi_p)))
    return min(max(z, a), b)


def sample_truncated_normal(mu: float, var: float, lo: float, hi: float, rng: RngStream) -> float:
    """
    Draw from N(mu, var) restricted to (lo, hi).

    Inverse-CDF in the bulk; exponential (or uniform, for narrow intervals)
    rejection once the interval lies beyond 4 standard deviations.
    """
    if not var > 0:
        raise DomainError(f"truncated normal variance must be positive, got {var}")
    if not lo < hi:
        raise DomainError(f"empty truncation interval ({lo}, {hi})")
    sd = math.sqrt(var)
    z = _std_truncated_normal((lo - mu) / sd, (hi - mu) / sd, rng)
    return min(max(mu + sd * z, lo), hi)


def log_diff_exp(x: float, y: float) -> float:
    """log(exp(x) - exp(y)) for x > y."""
    if y == -np.inf:
        return x
    return x + math.log1p(-math.exp(y - x))


def truncated_normal_logpdf(x: float, mu: float, var: float, lo: float, hi: float) -> float:
    if not lo <= x <= hi:
        return -np.inf
    sd = math.sqrt(var)
    a, b = (lo - mu) / sd, (hi - mu) / sd
    if a > 0:
        log_mass = log_diff_exp(float(log_ndtr(-a)), float(log_ndtr(-b)))
    else:
        log_mass = log_diff_exp(float(log_ndtr(b)), float(log_ndtr(a)))
    u = (x - mu) / sd
    return -0.5 * u * u - 0.5 * math.log(2 * math.pi) - math.log(sd) - log_mass


def sample_canonical_mvn(b: np.ndarray, Q: Union[np.ndarray, CholFactor], rng: RngStream) -> np.ndarray:
    """Draw from N(Q^-1 b, Q^-1) using one Cholesky factor of Q."""
    factor = _as_factor(Q)
    b = np.asarray(b, dtype=float)
    if factor.dim == 0:
        return np.zeros(0)
    mean = factor.solve(b)
    noise = solve_triangular(factor.lower.T, rng.gen.standard_normal(factor.dim), lower=False, check_finite=False)
    return mean + noise


def wishart_logpdf(X: np.ndarray, scale: Union[np.ndarray, CholFactor], df: float) -> float:
    """Log density of W(scale, df) at X; zero-dimensional input has density one."""
    scale_factor = _as_factor(scale)
    dim = scale_factor.dim
    if dim == 0:
        return 0.0
    x_factor = cholesky(X)
    trace = float(np.trace(scale_factor.solve(X)))
    return (
        0.5 * (df - dim - 1) * x_factor.log_det
        - 0.5 * trace
        - 0.5 * df * dim * math.log(2.0)
        - 0.5 * df * scale_factor.log_det
        - log_multivariate_gamma(dim, 0.5 * df)
    )


def matrix_normal_logpdf(
    X: np.ndarray,
    mean: np.ndarray,
    row_cov: Union[np.ndarray, CholFactor],
    col_cov: Union[np.ndarray, CholFactor],
) -> float:
    """Log density of MN(mean, row_cov, col_cov) at X."""
    q, r = np.shape(mean)
    if q == 0 or r == 0:
        return 0.0
    row_factor, col_factor = _as_factor(row_cov), _as_factor(col_cov)
    D = np.asarray(X, dtype=float) - mean
    quad = float(np.trace(col_factor.solve(D.T @ row_factor.solve(D))))
    return (
        -0.5 * q * r * math.log(2 * math.pi)
        - 0.5 * r * row_factor.log_det
        - 0.5 * q * col_factor.log_det
        - 0.5 * quad
    )


def log_gamma_density(x: float, shape: float, rate: float) -> float:
    if not x > 0:
        return -np.inf
    return shape * math.log(rate) - float(gammaln(shape)) + (shape - 1) * math.log(x) - rate * x
