"""
Synthetic benchmark cases.

Case 1 (n=150, p=10, two informative variables) and Case 2 (n=300, p=30, four
informative variables), each in four variants:
  a: Gaussian mixture, independent non-informative variables
  b: non-informative variables regressed on the informative ones
  c: b plus integer rounding and censoring at -1.4 / 1.4
  d: c plus 30% of the even-numbered variables missing at random
"""
from dataclasses import dataclass, field
import logging
from typing import Optional

import numpy as np

from dpmvs.common.errors import DataValidationError
from dpmvs.dataset.data_model import Dataset, build_dataset, ordinal_levels_for
from dpmvs.dataset.schema import VariableSchema
from dpmvs.utils.stats_kernels import RngStream, sample_wishart

# Configure logging
logger = logging.getLogger(__name__)

CASE_IDS = ("1a", "1b", "1c", "1d", "2a", "2b", "2c", "2d")
MIXING = (0.5, 0.25, 0.25)
CENSOR_AT = 1.4
ROUND_LIMIT = 4
MISSING_RATE = 0.3
B_VARIANCE = 0.3


@dataclass(frozen=True)
class CaseFamily:
    n: int
    p: int
    means: tuple[tuple[float, ...], ...]
    # 0-based columns
    rounded: tuple[int, ...]
    left_censored: tuple[int, ...]
    right_censored: tuple[int, ...]
    q22_df: float

    @property
    def p1(self) -> int:
        return len(self.means[0])

    def covariances(self) -> list[np.ndarray]:
        p1 = self.p1
        if p1 == 2:
            return [np.array([[1.0, r], [r, 1.0]]) for r in (0.5, 0.5, -0.5)]
        equal = np.full((p1, p1), 0.5) + 0.5 * np.eye(p1)
        i, j = np.indices((p1, p1))
        alternating = np.where(i == j, 1.0, 0.5 * (-1.0) ** (i + j))
        return [equal, equal.copy(), alternating]


FAMILIES = {
    "1": CaseFamily(
        n=150,
        p=10,
        means=((2.0, 0.0), (0.0, 2.0), (-1.5, -1.5)),
        rounded=(0, 5),
        left_censored=(1, 8),
        right_censored=(2, 9),
        q22_df=10.0,
    ),
    "2": CaseFamily(
        n=300,
        p=30,
        means=((0.6, 0.0, 1.2, 0.0), (0.0, 1.5, -0.6, 1.9), (-2.0, -2.0, 0.0, 0.6)),
        rounded=(0, 5, 10),
        left_censored=(1, 8, 9, 10),
        right_censored=(2, 11, 12, 13),
        q22_df=30.0,
    ),
}


@dataclass
class SimTruth:
    case_id: str
    phi_true: np.ndarray
    gamma_true: np.ndarray
    generator_params: dict = field(default_factory=dict)
    censoring_rates: dict[str, float] = field(default_factory=dict)

    @property
    def mean_censoring_rate(self) -> Optional[float]:
        if not self.censoring_rates:
            return None
        return float(np.mean(list(self.censoring_rates.values())))


def normalize_case_id(case_id: str) -> str:
    """Accept '1a', '1(a)' or 'Case 1(a)' spellings."""
    key = "".join(ch for ch in str(case_id).lower() if ch.isalnum()).removeprefix("case")
    if key not in CASE_IDS:
        raise DataValidationError(f"unknown case id '{case_id}'; expected one of {', '.join(CASE_IDS)}")
    return key


def _draw_complete(family: CaseFamily, variant: str, rng: RngStream) -> tuple[np.ndarray, np.ndarray, dict]:
    n, p, p1 = family.n, family.p, family.p1
    p2 = p - p1
    phi = rng.gen.choice(len(MIXING), size=n, p=MIXING)

    y1 = np.empty((n, p1))
    for m, (mean, cov) in enumerate(zip(family.means, family.covariances())):
        rows = np.flatnonzero(phi == m)
        y1[rows] = rng.gen.multivariate_normal(mean, cov, size=len(rows), method="cholesky")

    params: dict = {"mixing": list(MIXING), "means": [list(m) for m in family.means]}
    if variant == "a":
        y2 = rng.gen.standard_normal((n, p2))
    else:
        B = np.sqrt(B_VARIANCE) * rng.gen.standard_normal((p2, p1))
        q22 = sample_wishart(np.eye(p2), family.q22_df, rng)
        noise_factor = np.linalg.cholesky(np.linalg.inv(q22))
        y2 = y1 @ B.T + rng.gen.standard_normal((n, p2)) @ noise_factor.T
        params.update({"B": B.tolist(), "Q22_df": family.q22_df})
    return np.hstack([y1, y2]), phi, params


def _discretize(y: np.ndarray, family: CaseFamily) -> tuple[np.ndarray, list[VariableSchema], dict[str, float]]:
    y = y.copy()
    schema = [VariableSchema(name=f"y{j + 1}") for j in range(y.shape[1])]
    rates: dict[str, float] = {}

    for j in family.rounded:
        y[:, j] = np.clip(np.round(y[:, j]), -ROUND_LIMIT, ROUND_LIMIT)
    for j in family.left_censored:
        rates[f"y{j + 1}"] = float(np.mean(y[:, j] <= -CENSOR_AT))
        y[:, j] = np.maximum(y[:, j], -CENSOR_AT)
        if j not in family.rounded:
            schema[j] = VariableSchema(name=f"y{j + 1}", lower=-CENSOR_AT)
    for j in family.right_censored:
        rates[f"y{j + 1}"] = float(np.mean(y[:, j] >= CENSOR_AT))
        y[:, j] = np.minimum(y[:, j], CENSOR_AT)
        schema[j] = VariableSchema(name=f"y{j + 1}", upper=CENSOR_AT)
    for j in family.rounded:
        schema[j] = VariableSchema(name=f"y{j + 1}", kind="ordinal", levels=ordinal_levels_for(y[:, j]))
    return y, schema, rates


def generate_case(case_id: str, rng: RngStream) -> tuple[Dataset, SimTruth]:
    """
    Draw one replicate of a benchmark case.

    The truth (labels and informative variables) is recorded before any rounding,
    censoring or deletion. Rounded columns become ordinal with the observed integer
    levels; censored columns carry their bound in the schema.

    Args:
        case_id (str): One of CASE_IDS
        rng (RngStream): Random stream for this replicate

    Returns:
        tuple[Dataset, SimTruth]: Unstandardized dataset and the generating truth
    """
    case_id = normalize_case_id(case_id)
    family, variant = FAMILIES[case_id[0]], case_id[1]

    y, phi, params = _draw_complete(family, variant, rng)
    gamma_true = np.arange(family.p) < family.p1

    rates: dict[str, float] = {}
    if variant in ("c", "d"):
        y, schema, rates = _discretize(y, family)
    else:
        schema = [VariableSchema(name=f"y{j + 1}") for j in range(family.p)]

    if variant == "d":
        even = np.arange(1, family.p, 2)
        drop = rng.gen.uniform(size=(family.n, len(even))) < MISSING_RATE
        block = y[:, even]
        block[drop] = np.nan
        y[:, even] = block
        params["missing_rate"] = MISSING_RATE

    ds = build_dataset(y, schema)
    truth = SimTruth(case_id=case_id, phi_true=phi, gamma_true=gamma_true, generator_params=params, censoring_rates=rates)
    logger.debug(f"Generated case {case_id}: n={ds.n}, p={ds.p}, censoring {rates}")
    return ds, truth
