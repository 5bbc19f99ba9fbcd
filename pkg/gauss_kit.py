import argparse
import logging
import os
import sys

import run_flow
import settings_manager
from gauss_errors import (
    ConfigError,
    ContinuationAbort,
    GaussKitError,
    MeshMismatchError,
    MissingInputError,
    MountainPassError,
)
from run_logging import setup_logging

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONTINUATION_ABORT = 3
EXIT_MOUNTAIN_PASS = 4


def get_base_directory():
    """Folder holding this script; default settings live in its assets."""
    return os.path.dirname(os.path.abspath(__file__))


BASE_DIR = get_base_directory()
DEFAULT_SETTINGS_PATH = settings_manager.get_settings_path(os.path.join(BASE_DIR, "assets"))

COMMANDS = {
    "mesh": run_flow.cmd_mesh,
    "qdiff": run_flow.cmd_qdiff,
    "continue": run_flow.cmd_continue,
    "mpass": run_flow.cmd_mpass,
    "geom": run_flow.cmd_geom,
    "report": run_flow.cmd_report,
    "certify": run_flow.cmd_certify,
}


class UsageParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so main owns the exit code."""

    def error(self, message):
        raise ConfigError(message)


def build_parser():
    parser = UsageParser(
        prog="gauss_kit",
        description="Gauss-equation solver for minimal immersions of the Bolza surface.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", metavar="PATH", help="JSON settings file")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument("--resume", action="store_true", help="continue from stored checkpoints")
    parser.add_argument("--refine", metavar="N", type=int, help="mesh refinement level")
    parser.add_argument("--seed", metavar="N", type=int, help="random seed")
    parser.add_argument("--t-list", metavar="a,b,c", help="mountain-pass parameters")
    return parser


def resolve_settings(args):
    config_path = args.config

    if config_path is None and os.path.exists(DEFAULT_SETTINGS_PATH):
        config_path = DEFAULT_SETTINGS_PATH

    settings = settings_manager.load_run_settings(config_path)
    t_list = None if args.t_list is None else settings_manager.parse_t_list(args.t_list)
    settings = settings_manager.apply_cli_overrides(
        settings,
        output_dir=args.out,
        refine=args.refine,
        seed=args.seed,
        t_list=t_list,
    )
    return settings_manager.validate_run_settings(settings)


def run_command(args, settings):
    command = COMMANDS[args.command]

    if args.command == "continue":
        return command(settings, resume=args.resume)

    return command(settings)


def main(argv=None):
    logger = logging.getLogger("gauss_kit")

    try:
        args = build_parser().parse_args(argv)
        settings = resolve_settings(args)
    except ConfigError as e:
        setup_logging()
        logger.error(f"USAGE: {e}")
        return EXIT_USAGE

    output = settings["outputSettings"]
    setup_logging(output["output_dir"], output["debug_mode"])

    try:
        run_command(args, settings)

    except ContinuationAbort as e:
        logger.error(f"CONTINUE: {e}; partial branch kept ({len(e.branch.points)} points)")
        return EXIT_CONTINUATION_ABORT

    except MountainPassError as e:
        logger.error(f"MPASS: {e}")
        return EXIT_MOUNTAIN_PASS

    except (ConfigError, MissingInputError, MeshMismatchError, ValueError) as e:
        logger.error(f"USAGE: {e}")
        return EXIT_USAGE

    except GaussKitError as e:
        logger.error(f"ERROR: {e}")
        return EXIT_USAGE

    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
