import math
import re

from loguru import logger

REAL_PLACES = 6


def fmt_real(value: float) -> str:
    """
    Render a real with the fixed 6-place precision used in every CSV/JSONL
    writer. Negative zero is normalised so golden files stay stable.
    """
    if not math.isfinite(value):
        raise ValueError(f"Cannot serialise non-finite value {value!r}")
    text = f"{value:.{REAL_PLACES}f}"
    if text.startswith("-") and float(text) == 0.0:
        text = text[1:]
    return text


def parse_int_list(s: str) -> list[int]:
    """
    Parse a human-friendly list of positive integers.
      - "15"          -> [15]
      - "10,15,20"    -> [10, 15, 20]
      - "10:30:5"     -> [10, 15, 20, 25, 30]  (start:stop:step, inclusive)
      - "10 to 20"    -> [10, 11, ..., 20]
    """
    s = s.strip().strip('"').strip("'").lower()
    if not s:
        raise ValueError("Empty integer list")

    if (m := re.fullmatch(r'(\d+)\s*:\s*(\d+)(?:\s*:\s*(\d+))?', s)):
        start, stop = int(m.group(1)), int(m.group(2))
        step = int(m.group(3)) if m.group(3) else 1
        values = list(range(start, stop + 1, step)) if step > 0 else []
    elif " to " in s:
        a, b = re.split(r"\s+to\s+", s)
        values = list(range(int(a), int(b) + 1))
    else:
        try:
            values = [int(part) for part in s.split(",") if part.strip()]
        except ValueError:
            logger.error("Cannot parse integer list from {!r}", s)
            raise ValueError(f"Invalid integer list: '{s}'")

    if not values or any(v <= 0 for v in values):
        raise ValueError(f"Integer list must be non-empty and positive: '{s}'")
    return values
