import sys

from loguru import logger

from edgeidle.cli import main as cli_main
from edgeidle.logger import configure_logging


def main() -> int:
    # 0) Set up logs
    configure_logging()

    # 1) Dispatch the subcommand
    code = cli_main(sys.argv[1:])
    if code:
        logger.debug("Exiting with status {}", code)
    return code


if __name__ == "__main__":
    sys.exit(main())
