from pathlib import Path

import yaml
from loguru import logger

from edgeidle.errors import ConfigError, SchemaVersionError
from edgeidle.idle import IdleModel
from edgeidle.io import model_document, model_from_document
from edgeidle.pipeline import Pipeline

CHECKPOINT_SCHEMA_VERSION = 1
CHECKPOINT_KEYS = ("schema_version", "last_frame", "model", "state")


def save_checkpoint(path, pipeline: Pipeline) -> None:
    """
    Persist tracker, idle buffers and pending output rows so a later run can
    continue the stream exactly where this one stopped.
    """
    path = Path(path)
    doc = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "last_frame": pipeline.last_frame,
        "model": model_document(pipeline.engine.model),
        "state": pipeline.state_dict(),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(doc, sort_keys=False), encoding="utf-8")
    logger.info("Checkpoint at frame {} written to {}", pipeline.last_frame, path)


def load_checkpoint(path, model: IdleModel | None = None) -> Pipeline:
    """
    Restore a pipeline. The model stored in the checkpoint is used unless one
    is given explicitly.
    """
    path = Path(path)
    data = yaml.safe_load(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ConfigError(str(path), "checkpoint must be a mapping")
    if data.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise SchemaVersionError("checkpoint", CHECKPOINT_SCHEMA_VERSION, data.get("schema_version"))
    missing = [k for k in CHECKPOINT_KEYS if k not in data]
    if missing:
        raise ConfigError(missing[0], "is required in a checkpoint")
    stored = model_from_document(data["model"], "model.")
    pipeline = Pipeline.from_state(data["state"], model or stored)
    logger.info("Resuming from checkpoint {} after frame {}", path, data["last_frame"])
    return pipeline
