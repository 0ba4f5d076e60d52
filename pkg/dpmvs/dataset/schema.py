import json
import math
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, TypeAdapter, ValidationError, model_validator

from dpmvs.common.errors import DataValidationError


class VariableSchema(BaseModel):
    """Kind, bounds and ordinal levels of one data column"""
    model_config = ConfigDict(frozen=True)

    name: str
    kind: Literal["continuous", "ordinal"] = "continuous"
    lower: Optional[float] = None
    upper: Optional[float] = None
    levels: Optional[list[float]] = None

    @model_validator(mode="after")
    def _check_kind(self) -> "VariableSchema":
        if self.kind == "ordinal":
            if self.levels is None or len(self.levels) < 2:
                raise ValueError(f"ordinal column '{self.name}' needs at least two levels")
            if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
                raise ValueError(f"levels of '{self.name}' must be strictly increasing")
        elif not self.lower_bound < self.upper_bound:
            raise ValueError(f"column '{self.name}' needs lower < upper")
        return self

    @property
    def lower_bound(self) -> float:
        return -math.inf if self.lower is None else self.lower

    @property
    def upper_bound(self) -> float:
        return math.inf if self.upper is None else self.upper

    @property
    def cut_points(self) -> list[float]:
        """a_0 .. a_L with a_0 = -inf, a_L = +inf and a_l = d_l in between."""
        if self.kind != "ordinal":
            return []
        return [-math.inf] + list(self.levels[:-1]) + [math.inf]

    def affine(self, mean: float, sd: float) -> "VariableSchema":
        """Schema of the column after the map y -> (y - mean) / sd."""
        def move(value: Optional[float]) -> Optional[float]:
            return None if value is None else (value - mean) / sd

        return self.model_copy(
            update={
                "lower": move(self.lower),
                "upper": move(self.upper),
                "levels": None if self.levels is None else [(v - mean) / sd for v in self.levels],
            }
        )

    def as_continuous(self) -> "VariableSchema":
        return VariableSchema(name=self.name)


class LatentInterval(BaseModel):
    """Range the latent value of one cell may take"""
    model_config = ConfigDict(frozen=True)

    lo: float
    hi: float
    point: Optional[float] = None

    @model_validator(mode="after")
    def _check(self) -> "LatentInterval":
        if self.point is not None:
            if not self.lo == self.hi == self.point:
                raise ValueError("a point interval needs lo == hi == point")
        elif not self.lo < self.hi:
            raise ValueError(f"empty latent interval ({self.lo}, {self.hi})")
        return self


_schema_list = TypeAdapter(list[VariableSchema])


def load_schema(schema_path: Union[str, Path]) -> list[VariableSchema]:
    """
    Parse a JSON array of column records {name, kind, lower, upper, levels}.

    Args:
        schema_path (str | Path): Path to the schema file

    Returns:
        list[VariableSchema]: One entry per column, in file order
    """
    schema_path = Path(schema_path)
    if not schema_path.is_file():
        raise FileNotFoundError(f"Schema file not found: {schema_path}")
    try:
        records = json.loads(schema_path.read_text(encoding="utf-8"))
        return _schema_list.validate_python(records)
    except (json.JSONDecodeError, ValidationError) as e:
        raise DataValidationError(f"Invalid schema file {schema_path}: {e}") from e


def dump_schema(schema: list[VariableSchema], schema_path: Union[str, Path]) -> None:
    payload = _schema_list.dump_python(schema, exclude_none=True)
    Path(schema_path).write_text(json.dumps(payload, indent=2), encoding="utf-8")
