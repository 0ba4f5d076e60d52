from datetime import datetime, timezone
import hashlib
import json
import logging
from pathlib import Path
import platform
from typing import Any, Optional, Union

from pydantic import BaseModel, Field, ValidationError

from dpmvs import settings
from dpmvs.common.errors import DataValidationError

# Configure logging
logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class RunManifest(BaseModel):
    """Everything needed to repeat a command bit-exactly"""
    command: str
    argv: list[str]
    config: dict[str, Any] = Field(default_factory=dict)
    seeds: list[int] = Field(default_factory=list)
    stream_ids: list[int] = Field(default_factory=list)
    input_hashes: dict[str, str] = Field(default_factory=dict)
    artifacts: list[str] = Field(default_factory=list)
    versions: dict[str, str] = Field(default_factory=dict)
    wall_clock: float = 0.0
    created_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def collect_versions() -> dict[str, str]:
    import numpy
    import pandas
    import pydantic
    import scipy
    import sklearn

    return {
        settings.APP_NAME: settings.APP_VERSION,
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
        "pandas": pandas.__version__,
        "pydantic": pydantic.__version__,
    }


def write_manifest(manifest: RunManifest, out_dir: Union[str, Path]) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"Manifest written to {path}")
    return path


def read_manifest(path: Union[str, Path]) -> RunManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.is_file():
        raise FileNotFoundError(f"Manifest not found: {path}")
    try:
        return RunManifest.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, ValidationError) as e:
        raise DataValidationError(f"Invalid manifest {path}: {e}") from e


def find_manifest(directory: Union[str, Path]) -> Optional[RunManifest]:
    path = Path(directory) / MANIFEST_NAME
    return read_manifest(path) if path.is_file() else None
