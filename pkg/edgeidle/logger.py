import sys
import os
from loguru import logger

# Custom levels below DEBUG, registered at import so library callers that
# never run configure_logging() can still log at them.
TRACKS_LEVEL = "TRACKS"
WINDOWS_LEVEL = "WINDOWS"
_DEBUG_NO = 10

DEFAULT_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | "
    "<level>{level: <7}</level> | "
    "{message}"
)


def _register_levels() -> None:
    for name, no, icon in ((TRACKS_LEVEL, 8, "🚜"), (WINDOWS_LEVEL, 9, "⏱")):
        try:
            logger.level(name)
        except ValueError:
            logger.level(name, no=no, icon=icon, color="<magenta>")


_register_levels()


def console_format(base: str):
    """Loguru format callable: per-frame and per-window records also name their origin."""
    detail = base.replace("{message}", "<dim>{name}:{function}</dim> | {message}")
    if detail == base:
        detail = base + " <dim>({name}:{function})</dim>"

    def fmt(record) -> str:
        line = detail if record["level"].no < _DEBUG_NO else base
        return line + "\n{exception}"

    return fmt


def configure_logging(
    *,
    level: str = "INFO",
    colorize: bool = True,
    format: str = DEFAULT_FORMAT,
):
    """
    Parameters:
    - level: minimum log level to output (e.g., "DEBUG", "INFO", "TRACKS").
    - colorize: whether to use ANSI colors in the console.
    - format: Loguru format string for console output. TRACKS and WINDOWS
      records get the emitting module and function added before the message.

    Logs go to stderr; stdout is reserved for report tables.
    """
    env_level = os.getenv("APP_LOG_LEVEL", "").upper()
    env_colorize = os.getenv("APP_LOG_COLORIZE", "").lower()
    env_format = os.getenv("APP_LOG_FORMAT", "")

    effective_level = env_level if env_level else (level or "INFO")
    effective_colorize = env_colorize in ("1", "true", "yes") if env_colorize else colorize
    effective_format = env_format if env_format else format

    logger.remove()
    _register_levels()

    logger.add(
        sys.stderr,
        level=effective_level,
        colorize=effective_colorize,
        format=console_format(effective_format),
        enqueue=True,
    )
