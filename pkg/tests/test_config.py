from pathlib import Path

import pytest

import edgeidle.settings as settings
from edgeidle.config import load_config, with_overrides
from edgeidle.core import DEFAULT_CLASSES
from edgeidle.errors import ConfigError, SchemaVersionError
from edgeidle.idle import MadVariant


def write(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "config.yaml"
    path.write_text(text)
    return path


def test_missing_default_path_uses_defaults(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "CONFIG_PATH", tmp_path / "absent.yaml")
    cfg = load_config()
    assert cfg.tracker.track_buffer == 30
    assert cfg.tracker.match_thresh == 0.8
    assert cfg.idle.capacity == 15 and cfg.idle.fps == 10.0
    assert cfg.idle.window_seconds == 1.5
    assert cfg.evaluation.alignment == "exact"
    assert cfg.classes == DEFAULT_CLASSES
    assert cfg.seed is None


def test_missing_explicit_path_is_an_error(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "absent.yaml")


def test_bundled_config():
    cfg = load_config(settings.BASE_DIR / "config.yaml")
    assert cfg.idle.model == settings.BASE_DIR / "models" / "published.yaml"
    assert cfg.idle.mad_variant is MadVariant.MEAN_OF_DEVIATIONS
    assert cfg.scenario.name == "site_demo.yaml"


def test_relative_paths_resolve_against_the_config_file(tmp_path):
    path = write(tmp_path, "schema_version: 1\nidle:\n  model: fitted.yaml\nscenario: /abs/scene.yaml\nseed: 3\n")
    cfg = load_config(path)
    assert cfg.idle.model == tmp_path / "fitted.yaml"
    assert cfg.scenario == Path("/abs/scene.yaml")
    assert cfg.seed == 3


@pytest.mark.parametrize("text, field", [
    ("schema_version: 1\ntracker:\n  bogus: 1\n", "tracker.bogus"),
    ("schema_version: 1\nwhatever: 1\n", "whatever"),
    ("schema_version: 1\ntracker:\n  track_buffer: 2.5\n", "tracker.track_buffer"),
    ("schema_version: 1\ntracker:\n  class_gated: 1\n", "tracker.class_gated"),
    ("schema_version: 1\ntracker:\n  low_thresh: 0.7\n", "tracker.low_thresh"),
    ("schema_version: 1\nidle:\n  capacity: 1\n", "idle.capacity"),
    ("schema_version: 1\nidle:\n  mad_variant: mean\n", "idle.mad_variant"),
    ("schema_version: 1\nevaluation:\n  alignment: nearest\n", "evaluation.alignment"),
    ("schema_version: 1\nevaluation:\n  iou_match: 0\n", "evaluation.iou_match"),
    ("schema_version: 1\nclasses: []\n", "classes"),
    ("schema_version: 1\nclasses:\n  - {id: 0, name: a}\n  - {id: 0, name: b}\n", "classes"),
    ("schema_version: 1\nseed: -1\n", "seed"),
    ("schema_version: 1\nseed: abc\n", "seed"),
])
def test_invalid_documents_name_the_field(tmp_path, text, field):
    with pytest.raises(ConfigError) as e:
        load_config(write(tmp_path, text))
    assert e.value.field == field


def test_schema_version_and_shape(tmp_path):
    with pytest.raises(SchemaVersionError):
        load_config(write(tmp_path, "schema_version: 2\n"))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "- 1\n- 2\n"))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "schema_version: [1\n"))


def test_overrides_take_precedence(tmp_path):
    cfg = load_config(write(tmp_path, "schema_version: 1\nidle:\n  capacity: 20\n  fps: 5\nseed: 1\n"))
    assert with_overrides(cfg) == cfg
    out = with_overrides(cfg, seed=9, buffer=30, fps=15.0, model=Path("m.yaml"))
    assert (out.seed, out.idle.capacity, out.idle.fps, out.idle.model) == (9, 30, 15.0, Path("m.yaml"))
    assert cfg.idle.capacity == 20
    with pytest.raises(ConfigError):
        with_overrides(cfg, buffer=1)


@pytest.mark.parametrize("name, variant", [
    ("as_printed", MadVariant.MEAN_OF_DEVIATIONS),
    ("mean_of_deviations", MadVariant.MEAN_OF_DEVIATIONS),
    ("median_of_deviations", MadVariant.MEDIAN_OF_DEVIATIONS),
])
def test_mad_variant_names(tmp_path, name, variant):
    cfg = load_config(write(tmp_path, f"schema_version: 1\nidle:\n  mad_variant: {name}\n"))
    assert cfg.idle.mad_variant is variant
