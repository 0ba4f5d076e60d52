from dataclasses import dataclass, field, replace
import logging
import math
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from dpmvs.common.errors import DataValidationError
from dpmvs.dataset.schema import LatentInterval, VariableSchema, dump_schema, load_schema
from dpmvs.utils.stats_kernels import RngStream, sample_truncated_normal

# Configure logging
logger = logging.getLogger(__name__)

LEVEL_MATCH_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Observed data matrix with its schema.

    `y` holds NaN in unobserved cells. `censor` marks cells sitting on a schema bound
    (-1 lower, +1 upper), detected on the raw scale at construction. `level_index`
    holds the 0-based level of observed ordinal cells and -1 elsewhere.
    """
    y: np.ndarray
    observed: np.ndarray
    schema: tuple[VariableSchema, ...]
    standardizer: np.ndarray
    censor: np.ndarray
    level_index: np.ndarray
    standardized: bool = False
    _bounds: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.y.shape[1]

    @property
    def names(self) -> list[str]:
        return [column.name for column in self.schema]

    def to_raw(self, values: np.ndarray) -> np.ndarray:
        """Undo standardization column-wise (values broadcast over the last axis)."""
        return np.asarray(values) * self.standardizer[:, 1] + self.standardizer[:, 0]

    def latent_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """n x p lower and upper latent limits; point cells have lo == hi == y."""
        if "lo" not in self._bounds:
            lo, hi = _latent_bounds(self)
            lo.setflags(write=False)
            hi.setflags(write=False)
            self._bounds["lo"], self._bounds["hi"] = lo, hi
        return self._bounds["lo"], self._bounds["hi"]

    def latent_mask(self) -> np.ndarray:
        lo, hi = self.latent_bounds()
        return lo < hi


def build_dataset(y: np.ndarray, schema: Sequence[VariableSchema]) -> Dataset:
    """
    Validate a raw data matrix (NaN = missing) against its schema.

    Args:
        y (np.ndarray): n x p raw values
        schema (Sequence[VariableSchema]): One schema entry per column

    Returns:
        Dataset: Unstandardized dataset with censoring and ordinal levels resolved
    """
    y = np.array(y, dtype=float)
    if y.ndim != 2 or y.shape[1] != len(schema):
        raise DataValidationError(f"data has shape {y.shape} but schema lists {len(schema)} columns")
    observed = ~np.isnan(y)
    censor = np.zeros(y.shape, dtype=np.int8)
    level_index = np.full(y.shape, -1, dtype=np.int64)

    for j, column in enumerate(schema):
        rows = np.flatnonzero(observed[:, j])
        values = y[rows, j]
        if column.kind == "ordinal":
            levels = np.asarray(column.levels)
            k = np.clip(np.searchsorted(levels, values), 0, len(levels) - 1)
            below = np.clip(k - 1, 0, len(levels) - 1)
            nearest = np.where(np.abs(levels[below] - values) < np.abs(levels[k] - values), below, k)
            bad = np.abs(levels[nearest] - values) > LEVEL_MATCH_TOL
            if np.any(bad):
                row = rows[np.argmax(bad)]
                raise DataValidationError(
                    f"row {row + 1}, column '{column.name}': value {y[row, j]} is not one of the levels {column.levels}"
                )
            level_index[rows, j] = nearest
            y[rows, j] = levels[nearest]
        else:
            outside = (values < column.lower_bound) | (values > column.upper_bound)
            if np.any(outside):
                row = rows[np.argmax(outside)]
                raise DataValidationError(
                    f"row {row + 1}, column '{column.name}': value {y[row, j]} outside "
                    f"[{column.lower_bound}, {column.upper_bound}]"
                )
            censor[rows[values == column.lower_bound], j] = -1
            censor[rows[values == column.upper_bound], j] = 1

    standardizer = np.column_stack([np.zeros(len(schema)), np.ones(len(schema))])
    return Dataset(
        y=y,
        observed=observed,
        schema=tuple(schema),
        standardizer=standardizer,
        censor=censor,
        level_index=level_index,
    )


def load_dataset(data_path: Union[str, Path], schema_path: Union[str, Path]) -> Dataset:
    """
    Read a CSV with header row and its JSON schema.

    "NA" and empty cells are missing. Columns are reordered to schema order.

    Args:
        data_path (str | Path): CSV file
        schema_path (str | Path): JSON schema file

    Returns:
        Dataset: Validated, unstandardized dataset
    """
    data_path = Path(data_path)
    if not data_path.is_file():
        raise FileNotFoundError(f"Data file not found: {data_path}")
    schema = load_schema(schema_path)

    frame = pd.read_csv(data_path, dtype=str, keep_default_na=False, na_values=["NA", ""])
    frame.columns = [str(c).strip() for c in frame.columns]
    names = [column.name for column in schema]

    unknown = [c for c in frame.columns if c not in names]
    if unknown:
        raise DataValidationError(f"unknown column(s) in {data_path}: {', '.join(unknown)}")
    absent = [name for name in names if name not in frame.columns]
    if absent:
        raise DataValidationError(f"column(s) missing from {data_path}: {', '.join(absent)}")

    frame = frame[names]
    numeric = frame.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    unparsable = numeric.isna().to_numpy() & frame.notna().to_numpy()
    if unparsable.any():
        row, j = np.argwhere(unparsable)[0]
        raise DataValidationError(
            f"row {row + 1}, column '{names[j]}': cannot parse '{frame.iat[row, j]}' as a number"
        )

    ds = build_dataset(numeric.to_numpy(dtype=float), schema)
    logger.info(
        f"Loaded {ds.n} rows x {ds.p} columns from {data_path} "
        f"({int((~ds.observed).sum())} missing, {int((ds.censor != 0).sum())} censored cells)"
    )
    return ds


def save_dataset(ds: Dataset, data_path: Union[str, Path], schema_path: Union[str, Path]) -> None:
    """Write an unstandardized dataset as CSV ("NA" for missing) plus its JSON schema."""
    if ds.standardized:
        raise DataValidationError("only unstandardized datasets can be saved; boundary values would drift")
    frame = pd.DataFrame(np.where(ds.observed, ds.y, np.nan), columns=ds.names)
    frame.to_csv(data_path, index=False, na_rep="NA")
    dump_schema(list(ds.schema), schema_path)


def standardize(ds: Dataset) -> Dataset:
    """
    Shift and scale every column to observed mean 0 and observed sd 1.

    Schema bounds and levels move with the same affine map; the standardizer
    composes with any earlier one so to_raw always returns the original scale.
    """
    y = ds.y.copy()
    schema = []
    standardizer = ds.standardizer.copy()
    for j, column in enumerate(ds.schema):
        values = y[ds.observed[:, j], j]
        if np.unique(values).size < 2:
            raise DataValidationError(f"column '{column.name}' has fewer than two distinct observed values")
        mean, sd = float(values.mean()), float(values.std(ddof=1))
        y[:, j] = (y[:, j] - mean) / sd
        schema.append(column.affine(mean, sd))
        standardizer[j] = (standardizer[j, 0] + standardizer[j, 1] * mean, standardizer[j, 1] * sd)

    return replace(ds, y=y, schema=tuple(schema), standardizer=standardizer, standardized=True, _bounds={})


def as_continuous(ds: Dataset) -> Dataset:
    """Treat every column as unbounded continuous (ordinal codes become plain reals)."""
    schema = tuple(column.as_continuous() for column in ds.schema)
    return replace(
        ds,
        schema=schema,
        censor=np.zeros_like(ds.censor),
        level_index=np.full_like(ds.level_index, -1),
        _bounds={},
    )


def latent_interval(ds: Dataset, i: int, j: int) -> LatentInterval:
    if not (0 <= i < ds.n and 0 <= j < ds.p):
        raise IndexError(f"cell ({i}, {j}) outside a {ds.n} x {ds.p} dataset")
    lo, hi = ds.latent_bounds()
    if lo[i, j] == hi[i, j]:
        return LatentInterval(lo=lo[i, j], hi=hi[i, j], point=lo[i, j])
    return LatentInterval(lo=lo[i, j], hi=hi[i, j])


def _latent_bounds(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    lo = np.where(ds.observed, ds.y, -np.inf)
    hi = np.where(ds.observed, ds.y, np.inf)
    for j, column in enumerate(ds.schema):
        if column.kind == "ordinal":
            cuts = np.asarray(column.cut_points)
            rows = np.flatnonzero(ds.level_index[:, j] >= 0)
            k = ds.level_index[rows, j]
            lo[rows, j] = cuts[k]
            hi[rows, j] = cuts[k + 1]
        else:
            left = ds.censor[:, j] == -1
            right = ds.censor[:, j] == 1
            lo[left, j] = -np.inf
            hi[right, j] = np.inf
    return lo, hi


def initialize_latent(ds: Dataset, rng: RngStream) -> np.ndarray:
    """
    Starting latent matrix: point cells copied, interval cells drawn from a standard
    normal truncated to the interval, missing cells drawn standard normal.
    """
    lo, hi = ds.latent_bounds()
    z = np.where(lo == hi, lo, 0.0)
    for i, j in np.argwhere(lo < hi):
        if not ds.observed[i, j]:
            z[i, j] = rng.gen.standard_normal()
        else:
            z[i, j] = sample_truncated_normal(0.0, 1.0, lo[i, j], hi[i, j], rng)
    return z


def ordinal_levels_for(values: np.ndarray, extra: Optional[Sequence[float]] = None) -> list[float]:
    """Integer range spanned by the observed values plus any extra level values."""
    observed = values[~np.isnan(values)]
    levels = set(range(math.ceil(observed.min()), math.floor(observed.max()) + 1))
    levels.update(float(v) for v in observed if v != round(v))
    if extra:
        levels.update(extra)
    return sorted(float(v) for v in levels)


def prepare_for_mode(ds: Dataset, mode: str) -> Dataset:
    """Standardized dataset as the sampler sees it in the given run mode."""
    if mode == "cont":
        ds = as_continuous(ds)
    return standardize(ds)
