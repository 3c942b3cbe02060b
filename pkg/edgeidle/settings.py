import os
from pathlib import Path


def _env_int(name: str, default: int | None) -> int | None:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}")


def _env_float(name: str, default: float | None) -> float | None:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"{name} must be a number, got {raw!r}")


def _env_flag(name: str, default: str = "false") -> bool:
    return os.getenv(name, default).lower() in ("1", "true", "yes")


# Project root
BASE_DIR = Path(__file__).resolve().parent.parent

# File paths
CONFIG_PATH = Path(os.getenv("APP_CONFIG_PATH", str(BASE_DIR / "config.yaml")))
_raw_model = os.getenv("APP_MODEL_PATH")
MODEL_PATH = Path(_raw_model) if _raw_model else None
OUTPUT_DIR = Path(os.getenv("APP_OUTPUT_DIR", "output"))

# Overrides for config-file values; None means "use the config file"
SEED = _env_int("APP_SEED", None)
BUFFER = _env_int("APP_BUFFER", None)
FPS = _env_float("APP_FPS", None)

# Behavior
INCLUDE_PARSE = _env_flag("APP_INCLUDE_PARSE")
JOBS = _env_int("APP_JOBS", 1)
