import sys

import pytest
from loguru import logger

from edgeidle.logger import TRACKS_LEVEL, WINDOWS_LEVEL, configure_logging, console_format
from edgeidle.utils import fmt_real, parse_int_list


@pytest.mark.parametrize("value, text", [
    (0.0, "0.000000"),
    (-0.0, "0.000000"),
    (-1e-9, "0.000000"),
    (2.4613463131, "2.461346"),
    (1234.5, "1234.500000"),
    (-3.25, "-3.250000"),
])
def test_fmt_real(value, text):
    assert fmt_real(value) == text


@pytest.mark.parametrize("bad", [float("nan"), float("inf")])
def test_fmt_real_rejects_non_finite(bad):
    with pytest.raises(ValueError):
        fmt_real(bad)


@pytest.mark.parametrize("text, values", [
    ("15", [15]),
    ("10,15,20", [10, 15, 20]),
    ("10:30:5", [10, 15, 20, 25, 30]),
    ("3 to 5", [3, 4, 5]),
    ("'5:7'", [5, 6, 7]),
])
def test_parse_int_list(text, values):
    assert parse_int_list(text) == values


@pytest.mark.parametrize("text", ["", "a,b", "0", "5:1", "-3"])
def test_parse_int_list_rejects(text):
    with pytest.raises(ValueError):
        parse_int_list(text)


@pytest.fixture
def restore_logger():
    yield
    logger.remove()
    logger.add(sys.__stderr__)


def test_custom_levels_sit_below_debug():
    assert logger.level(TRACKS_LEVEL).no == 8
    assert logger.level(WINDOWS_LEVEL).no == 9


def test_environment_overrides_logging(monkeypatch, capsys, restore_logger):
    monkeypatch.setenv("APP_LOG_LEVEL", "error")
    monkeypatch.setenv("APP_LOG_FORMAT", "{level}|{message}")
    configure_logging(level="DEBUG", colorize=False)
    logger.warning("dropped")
    logger.error("kept")
    logger.complete()
    err = capsys.readouterr().err
    assert "ERROR|kept" in err
    assert "dropped" not in err


def test_custom_levels_reach_the_sink(monkeypatch, capsys, restore_logger):
    monkeypatch.delenv("APP_LOG_LEVEL", raising=False)
    monkeypatch.setenv("APP_LOG_FORMAT", "{level}|{message}")
    configure_logging(level=TRACKS_LEVEL, colorize=False)
    logger.log(WINDOWS_LEVEL, "window closed")
    logger.debug("frame done")
    logger.complete()
    err = capsys.readouterr().err.splitlines()
    assert err == [
        f"WINDOWS|{__name__}:test_custom_levels_reach_the_sink | window closed",
        "DEBUG|frame done",
    ]


def test_console_format_without_message_field():
    fmt = console_format("{level}")
    assert fmt({"level": logger.level(TRACKS_LEVEL)}) == "{level} <dim>({name}:{function})</dim>\n{exception}"
    assert fmt({"level": logger.level("INFO")}) == "{level}\n{exception}"
