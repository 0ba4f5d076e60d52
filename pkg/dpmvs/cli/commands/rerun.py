import argparse
import logging

from dpmvs.cli.schemas.manifest_schemas import read_manifest

# Configure logging
logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("rerun", help="repeat a command from its manifest")
    parser.add_argument("--manifest", required=True, help="manifest.json or the directory holding it")
    parser.add_argument("--out-dir", default=None, help="write the repeated run here instead")
    parser.set_defaults(func=run)


def replay_argv(argv: list[str], out_dir: str | None) -> list[str]:
    """The recorded argv with --out-dir replaced (or appended) when out_dir is given."""
    if out_dir is None:
        return list(argv)
    replayed, skip = [], False
    for token in argv:
        if skip:
            skip = False
            continue
        if token == "--out-dir":
            skip = True
            continue
        if token.startswith("--out-dir="):
            continue
        replayed.append(token)
    return replayed + ["--out-dir", out_dir]


def run(args: argparse.Namespace) -> int:
    from dpmvs.cli.main import main

    manifest = read_manifest(args.manifest)
    argv = replay_argv(manifest.argv, args.out_dir)
    logger.info(f"Re-running '{manifest.command}' with seeds {manifest.seeds}")
    return main(argv)
