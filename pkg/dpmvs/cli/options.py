import argparse
import types
from typing import Literal, Optional, Union, get_args, get_origin

from pydantic import BaseModel

from dpmvs import settings
from dpmvs.common.run_config import McmcConfig, PriorConfig, RunConfig, load_run_config

FLAG_ALIASES = {"split_merge_sweeps": ["--L"], "gamma_updates": ["--L_g"]}


def _flag_spec(annotation) -> Optional[tuple[type, Optional[list]]]:
    """argparse type and choices for a model field, or None when it has no flag form."""
    origin = get_origin(annotation)
    if origin is Literal:
        return str, list(get_args(annotation))
    if origin in (Union, types.UnionType):
        for arg in get_args(annotation):
            if arg is type(None):
                continue
            spec = _flag_spec(arg)
            if spec:
                return spec
        return None
    if annotation in (int, float, str, bool):
        return annotation, None
    return None


def _add_model_flags(group, model: type[BaseModel]) -> None:
    for name, info in model.model_fields.items():
        spec = _flag_spec(info.annotation)
        if spec is None:
            continue
        kind, choices = spec
        flags = [f"--{name.replace('_', '-')}"] + FLAG_ALIASES.get(name, [])
        help_text = info.description or f"default: {info.default}"
        if kind is bool:
            group.add_argument(*flags, dest=name, action=argparse.BooleanOptionalAction, default=None, help=help_text)
        else:
            group.add_argument(*flags, dest=name, type=kind, choices=choices, default=None, help=help_text)


def add_config_flags(parser: argparse.ArgumentParser) -> None:
    """--config plus one flag per PriorConfig / McmcConfig field."""
    parser.add_argument("--config", default=None, help="JSON file with prior and sampler settings")
    _add_model_flags(parser.add_argument_group("prior"), PriorConfig)
    _add_model_flags(parser.add_argument_group("sampler"), McmcConfig)


def add_output_flags(parser: argparse.ArgumentParser, workers: bool = True) -> None:
    parser.add_argument("--out-dir", default=settings.OUT_DIR, help="output directory (env DPMVS_OUT_DIR)")
    if workers:
        parser.add_argument(
            "--workers", type=int, default=settings.WORKERS, help="worker processes (env DPMVS_WORKERS)"
        )


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Flag > config file > default."""
    names = set(PriorConfig.model_fields) | set(McmcConfig.model_fields)
    overrides = {name: getattr(args, name) for name in names if hasattr(args, name)}
    return load_run_config(args.config, **overrides)
