import argparse
import sys

from loguru import logger

from sdk.config import settings
from sdk.errors import AgfaError, CheckpointError, ConfigError, DataError, NonFiniteError
from services.experiments.commands import eval as eval_command
from services.experiments.commands import sweep, synth, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment config")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. --set swad.n_e=4 (repeatable)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--json", action="store_true", help="print a machine-readable report")

    parser = argparse.ArgumentParser(prog="python -m services.experiments",
                                     description="Adversarial Fourier-amplitude domain generalisation experiments")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in (train, eval_command, sweep, synth):
        command.add_parser(subparsers, common)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    sink = logger.add(settings.log_file, rotation="5 MB", level=settings.log_level)
    try:
        return args.handler(args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (DataError, CheckpointError, FileNotFoundError) as e:
        logger.error(f"Data error: {e}")
        return EXIT_DATA
    except NonFiniteError as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERIC
    except AgfaError as e:
        logger.error(f"Computation failed ({type(e).__name__}): {e}")
        return EXIT_NUMERIC
    finally:
        logger.remove(sink)


if __name__ == "__main__":
    sys.exit(main())
