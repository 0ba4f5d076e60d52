import json
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from dpmvs.common.errors import DataValidationError
from dpmvs.common.types import RunMode

# Configure logging
logger = logging.getLogger(__name__)


class PriorConfig(BaseModel):
    """Hyperprior settings; p-dependent fields are filled in by resolve()."""
    model_config = ConfigDict(extra="forbid")

    a_lambda: float = Field(2.0, gt=0)
    b_lambda: float = Field(2.0, gt=0)
    a_eta: float = Field(2.0, gt=0)
    b_eta: float = Field(2.0, gt=0)
    a_alpha: float = Field(2.0, gt=0)
    b_alpha: float = Field(2.0, gt=0)
    wishart_scale: Optional[list[list[float]]] = None
    wishart_df: Optional[float] = None
    rho: Optional[Union[float, list[float]]] = None

    @model_validator(mode="after")
    def _check_rho(self) -> "PriorConfig":
        values = np.atleast_1d(np.asarray(self.rho if self.rho is not None else 0.5, dtype=float))
        if np.any(values < 0) or np.any(values > 1):
            raise ValueError("rho entries must lie in [0, 1]")
        return self

    @property
    def is_resolved(self) -> bool:
        return (
            self.wishart_scale is not None
            and self.wishart_df is not None
            and isinstance(self.rho, list)
        )

    def resolve(self, p: int, mode: RunMode = "vs") -> "PriorConfig":
        """
        Fill the defaults that depend on the number of variables.

        N defaults to p + 2 and P to I/N, so the prior mean of Psi is the identity.
        In novs mode every rho_j is forced to one.

        Args:
            p (int): Number of variables in the dataset
            mode (RunMode): Run mode the prior is used for

        Returns:
            PriorConfig: A copy with wishart_scale, wishart_df and rho set
        """
        df = float(self.wishart_df) if self.wishart_df is not None else float(p + 2)
        if df < p:
            raise DataValidationError(f"wishart_df must be at least p={p}, got {df}")

        if self.wishart_scale is None:
            scale = np.eye(p) / df
        else:
            scale = np.asarray(self.wishart_scale, dtype=float)
            if scale.shape != (p, p):
                raise DataValidationError(
                    f"wishart_scale has shape {scale.shape}, expected ({p}, {p})"
                )

        if mode == "novs":
            rho = np.ones(p)
        elif self.rho is None:
            rho = np.full(p, 0.5)
        else:
            rho = np.broadcast_to(np.asarray(self.rho, dtype=float), (p,)).copy()

        return self.model_copy(
            update={
                "wishart_scale": scale.tolist(),
                "wishart_df": df,
                "rho": rho.tolist(),
            }
        )

    @property
    def scale_matrix(self) -> np.ndarray:
        return np.asarray(self.wishart_scale, dtype=float)

    @property
    def rho_vector(self) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.rho, dtype=float))


class McmcConfig(BaseModel):
    """Sampler schedule, tuning and run-mode settings."""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    iterations: int = Field(8000, ge=1)
    burn_in: int = Field(3000, ge=0)
    thin: int = Field(1, ge=1)
    seed: int = Field(0, ge=0)
    n_chains: int = Field(1, ge=1)
    s_alpha: float = Field(1.0, gt=0)
    s_lambda: float = Field(0.5, gt=0)
    s_eta: float = Field(1.0, gt=0)
    swap_prob: float = Field(0.5, ge=0, le=1)
    split_merge_sweeps: int = Field(3, ge=1, alias="L")
    gamma_updates: Optional[int] = Field(None, ge=1, alias="L_g")
    z_block: int = Field(1, ge=1)
    adapt_z_block: bool = True
    joint_every: int = Field(2, ge=0)
    mode: RunMode = "vs"
    recompute_every: int = Field(1000, ge=1)
    check_invariants: bool = False
    ignore_likelihood: bool = False

    @model_validator(mode="after")
    def _check_burn_in(self) -> "McmcConfig":
        if self.burn_in >= self.iterations:
            raise ValueError(
                f"burn_in ({self.burn_in}) must be smaller than iterations ({self.iterations})"
            )
        return self

    def gamma_updates_for(self, p: int) -> int:
        if self.gamma_updates is not None:
            return self.gamma_updates
        return max(10, p // 2)

    @property
    def selects_variables(self) -> bool:
        return self.mode != "novs"


class RunConfig(BaseModel):
    """Prior and sampler settings of one run."""
    prior: PriorConfig = Field(default_factory=PriorConfig)
    mcmc: McmcConfig = Field(default_factory=McmcConfig)


def load_run_config(path: Optional[Union[str, Path]] = None, **overrides) -> RunConfig:
    """
    Build a RunConfig from an optional flat JSON file plus keyword overrides.

    The JSON file mirrors the PriorConfig and McmcConfig field names in one flat object;
    every field is optional. Overrides whose value is None are ignored so CLI flags that
    were not given fall through to the file or the defaults.

    Args:
        path (str | Path | None): Path to the JSON config file
        **overrides: Field values taking precedence over the file

    Returns:
        RunConfig: The validated configuration
    """
    raw: dict = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"Config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise DataValidationError(f"Config file {path} is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise DataValidationError(f"Config file {path} must hold a JSON object")

    raw.update({key: value for key, value in overrides.items() if value is not None})

    prior_fields = set(PriorConfig.model_fields)
    mcmc_fields = set(McmcConfig.model_fields) | {
        info.alias for info in McmcConfig.model_fields.values() if info.alias
    }
    unknown = sorted(set(raw) - prior_fields - mcmc_fields)
    if unknown:
        raise DataValidationError(f"Unknown config fields: {', '.join(unknown)}")

    try:
        config = RunConfig(
            prior=PriorConfig.model_validate({k: v for k, v in raw.items() if k in prior_fields}),
            mcmc=McmcConfig.model_validate({k: v for k, v in raw.items() if k in mcmc_fields}),
        )
    except ValidationError as e:
        raise DataValidationError(f"Invalid configuration: {e}") from e

    logger.info(f"Loaded run config (mode={config.mcmc.mode}, iterations={config.mcmc.iterations})")
    return config
