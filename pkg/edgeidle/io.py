"""Readers and writers for every file crossing the pipeline boundary.

JSON-lines files (detections, ground truth) may start with a header object
carrying ``schema`` and ``version``. CSV files (tracks, verdicts, labelled
windows) start with a ``# <schema> v<N>`` comment line followed by a header
row. YAML documents carry ``schema_version``. Reals are written with six
decimals so a second write of anything read back is byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
import math
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator

import yaml
from loguru import logger

from edgeidle.core import BBox, ClassLabel, ClassRegistry, Detection, TrackId
from edgeidle.errors import (
    ConfigError,
    RangeError,
    RecordFormatError,
    SchemaVersionError,
    StreamOrderError,
    ValidationError,
)
from edgeidle.idle import IdleModel, IdleState, IdleVerdict, MadVariant, WindowFeatures
from edgeidle.simulator import (
    GroundTruth,
    GroundTruthObject,
    Linear,
    MachineSpec,
    MotionScript,
    NoiseSpec,
    ScenarioSpec,
    Segment,
    Stationary,
    StopGo,
    random_scenario,
)
from edgeidle.utils import fmt_real

DETECTIONS_SCHEMA = "edgeidle.detections"
GROUND_TRUTH_SCHEMA = "edgeidle.ground_truth"
TRACKS_SCHEMA = "edgeidle.tracks"
VERDICTS_SCHEMA = "edgeidle.verdicts"
LABELED_WINDOWS_SCHEMA = "edgeidle.labeled_windows"
SCHEMA_VERSION = 1

TRACK_COLUMNS = ["frame", "track_id", "class_id", "x", "y", "w", "h", "confidence", "state", "p"]
VERDICT_COLUMNS = ["track_id", "class_id", "first_frame", "last_frame", "n", "mad_ad", "mad_cd", "p", "state"]
LABELED_COLUMNS = ["mad_ad", "mad_cd", "n", "label"]

Source = str | Path | IO[str] | IO[bytes]


@contextmanager
def _open(target: Source, mode: str) -> Iterator[IO[str]]:
    if isinstance(target, (str, Path)):
        with open(target, mode, encoding="utf-8", newline="") as f:
            yield f
    elif isinstance(target, (io.RawIOBase, io.BufferedIOBase)):
        wrapper = io.TextIOWrapper(target, encoding="utf-8", newline="")
        try:
            yield wrapper
        finally:
            wrapper.detach()
    else:
        yield target


def _name(target: Source) -> str:
    return str(target) if isinstance(target, (str, Path)) else getattr(target, "name", "<stream>")


# ---------------------------------------------------------------------------
# JSON-lines helpers
# ---------------------------------------------------------------------------


def _json_line(fields: dict[str, object]) -> str:
    parts = []
    for key, value in fields.items():
        if value is None:
            text = "null"
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, int):
            text = str(value)
        elif isinstance(value, float):
            text = fmt_real(value)
        elif isinstance(value, (list, tuple)):
            text = "[" + ",".join(fmt_real(float(v)) for v in value) + "]"
        else:
            text = json.dumps(value, separators=(",", ":"))
        parts.append(f'"{key}":{text}')
    return "{" + ",".join(parts) + "}\n"


def _parse_object(line: str, lineno: int, source: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise RecordFormatError(lineno, f"malformed record: {e.msg} at column {e.colno}", source) from None
    if not isinstance(obj, dict):
        raise RecordFormatError(lineno, "record must be an object", source)
    return obj


def _check_header(obj: dict, schema: str, lineno: int, source: str) -> None:
    if obj.get("schema") != schema:
        raise RecordFormatError(lineno, f"expected schema {schema!r}, found {obj.get('schema')!r}", source)
    if obj.get("version") != SCHEMA_VERSION:
        raise SchemaVersionError(schema, SCHEMA_VERSION, obj.get("version"))


def _int_field(obj: dict, key: str, lineno: int, source: str) -> int:
    value = obj.get(key)
    if isinstance(value, bool) or not isinstance(value, int):
        raise RecordFormatError(lineno, f"field {key!r} must be an integer", source)
    return value


def _real_field(obj: dict, key: str, lineno: int, source: str) -> float:
    value = obj.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise RecordFormatError(lineno, f"field {key!r} must be a number", source)
    value = float(value)
    if not math.isfinite(value):
        raise RangeError(lineno, f"field {key!r} must be finite", source)
    return value


# ---------------------------------------------------------------------------
# Detections
# ---------------------------------------------------------------------------

DETECTION_KEYS = {"frame", "cls", "conf", "x", "y", "w", "h"}


class DetectionReader:
    """Lazy, single-pass reader; holds one line at a time.

    ``frame_count`` is known once the header line (if any) has been read.
    """

    def __init__(self, source: Source, registry: ClassRegistry | None = None):
        self.source = source
        self.registry = registry or ClassRegistry()
        self.frame_count: int | None = None

    def __iter__(self) -> Iterator[Detection]:
        name = _name(self.source)
        last_frame = -1
        seen_record = False
        with _open(self.source, "r") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                obj = _parse_object(line, lineno, name)
                if "schema" in obj:
                    if seen_record or lineno != 1:
                        raise RecordFormatError(lineno, "header must be the first line", name)
                    _check_header(obj, DETECTIONS_SCHEMA, lineno, name)
                    frames = obj.get("frames")
                    if frames is not None:
                        self.frame_count = _int_field(obj, "frames", lineno, name)
                    continue
                seen_record = True
                det = self._record(obj, lineno, name)
                if det.frame_index < last_frame:
                    logger.error("{}:{}: frame {} after frame {}", name, lineno, det.frame_index, last_frame)
                    raise StreamOrderError(f"{name}:{lineno}: frame {det.frame_index} after frame {last_frame}")
                last_frame = det.frame_index
                yield det

    def _record(self, obj: dict, lineno: int, name: str) -> Detection:
        extra = set(obj) - DETECTION_KEYS
        missing = DETECTION_KEYS - set(obj)
        if missing or extra:
            raise RecordFormatError(
                lineno, f"expected keys {sorted(DETECTION_KEYS)}, missing {sorted(missing)}, extra {sorted(extra)}", name
            )
        frame = _int_field(obj, "frame", lineno, name)
        cls_id = _int_field(obj, "cls", lineno, name)
        conf = _real_field(obj, "conf", lineno, name)
        x, y, w, h = (_real_field(obj, k, lineno, name) for k in ("x", "y", "w", "h"))
        if frame < 0:
            raise RangeError(lineno, f"frame must be >= 0, got {frame}", name)
        if cls_id < 0:
            raise RangeError(lineno, f"cls must be >= 0, got {cls_id}", name)
        if not (0.0 <= conf <= 1.0):
            raise RangeError(lineno, f"conf must be in [0, 1], got {conf}", name)
        if w <= 0 or h <= 0:
            raise RangeError(lineno, f"w and h must be positive, got {w}, {h}", name)
        return Detection(frame, BBox(x, y, w, h), conf, self.registry.resolve(cls_id))


def read_detections(source: Source, registry: ClassRegistry | None = None) -> DetectionReader:
    return DetectionReader(source, registry)


def detection_line(d: Detection) -> str:
    return _json_line({
        "frame": d.frame_index, "cls": d.cls.id, "conf": d.confidence,
        "x": d.bbox.x, "y": d.bbox.y, "w": d.bbox.w, "h": d.bbox.h,
    })


def write_detections(target: Source, detections: Iterable[Detection], frame_count: int | None = None) -> int:
    n = 0
    with _open(target, "w") as f:
        header = {"schema": DETECTIONS_SCHEMA, "version": SCHEMA_VERSION}
        if frame_count is not None:
            header["frames"] = frame_count
        f.write(_json_line(header))
        for d in detections:
            f.write(detection_line(d))
            n += 1
    logger.debug("Wrote {} detections to {}", n, _name(target))
    return n


def iter_frames(
    detections: Iterable[Detection], frame_count: int | None = None
) -> Iterator[tuple[int, list[Detection]]]:
    """Group a frame-ordered stream per frame, yielding empty frames for gaps."""
    current: list[Detection] = []
    frame = 0
    for d in detections:
        while frame < d.frame_index:
            yield frame, current
            current = []
            frame += 1
        current.append(d)
    total = frame_count if frame_count is not None else getattr(detections, "frame_count", None)
    if current or (total is not None and frame < total):
        yield frame, current
        frame += 1
    while total is not None and frame < total:
        yield frame, []
        frame += 1


# ---------------------------------------------------------------------------
# Ground truth
# ---------------------------------------------------------------------------


def write_ground_truth(target: Source, gt: GroundTruth) -> None:
    with _open(target, "w") as f:
        f.write(_json_line({
            "schema": GROUND_TRUTH_SCHEMA, "version": SCHEMA_VERSION, "fps": float(gt.fps),
            "frame_size": list(gt.frame_size), "frames": gt.frame_count,
        }))
        for t, objs in enumerate(gt.frames):
            for o in objs:
                b = o.bbox
                f.write(_json_line({
                    "frame": t, "entity": o.entity_id, "cls": o.cls.id, "name": o.cls.name,
                    "x": b.x if b else None, "y": b.y if b else None,
                    "w": b.w if b else None, "h": b.h if b else None,
                    "visible": o.visible, "clipped": o.clipped,
                }))
    logger.debug("Wrote ground truth for {} frames to {}", gt.frame_count, _name(target))


def read_ground_truth(source: Source) -> GroundTruth:
    name = _name(source)
    header = None
    fps, frame_size = 0.0, (0.0, 0.0)
    frames: list[list[GroundTruthObject]] = []
    with _open(source, "r") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            obj = _parse_object(line, lineno, name)
            if header is None:
                _check_header(obj, GROUND_TRUTH_SCHEMA, lineno, name)
                header = obj
                frames = [[] for _ in range(_int_field(obj, "frames", lineno, name))]
                fps = _real_field(obj, "fps", lineno, name)
                if fps <= 0:
                    raise RangeError(lineno, "field 'fps' must be positive", name)
                size = obj.get("frame_size")
                if not isinstance(size, list) or len(size) != 2:
                    raise RecordFormatError(lineno, "frame_size must be [width, height]", name)
                frame_size = tuple(_real_field({"frame_size": v}, "frame_size", lineno, name) for v in size)
                continue
            t = _int_field(obj, "frame", lineno, name)
            if not (0 <= t < len(frames)):
                raise RangeError(lineno, f"frame {t} outside [0, {len(frames)})", name)
            if obj.get("x") is None:
                bbox = None
            else:
                bbox = BBox(*(_real_field(obj, k, lineno, name) for k in ("x", "y", "w", "h")))
            visible, clipped = obj.get("visible"), obj.get("clipped")
            if not isinstance(visible, bool) or not isinstance(clipped, bool):
                raise RecordFormatError(lineno, "visible and clipped must be booleans", name)
            cls = ClassLabel(_int_field(obj, "cls", lineno, name), str(obj.get("name")))
            frames[t].append(GroundTruthObject(_int_field(obj, "entity", lineno, name), cls, bbox, visible, clipped))
    if header is None:
        raise RecordFormatError(1, "missing ground-truth header", name)
    return GroundTruth(fps, frame_size, frames)


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------


def _csv_rows(source: Source, schema: str, columns: list[str]) -> Iterator[tuple[int, list[str], str]]:
    name = _name(source)
    with _open(source, "r") as f:
        first = f.readline()
        expected = f"# {schema} v"
        if not first.startswith(expected):
            raise RecordFormatError(1, f"expected '# {schema} v{SCHEMA_VERSION}' comment line", name)
        try:
            version = int(first[len(expected):].strip())
        except ValueError:
            raise RecordFormatError(1, "unreadable schema version", name) from None
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(schema, SCHEMA_VERSION, version)
        reader = csv.reader(f)
        header = next(reader, None)
        if header != columns:
            raise RecordFormatError(2, f"expected header {','.join(columns)}", name)
        for row in reader:
            lineno = reader.line_num + 1
            if not row:
                continue
            if len(row) != len(columns):
                raise RecordFormatError(lineno, f"expected {len(columns)} columns, got {len(row)}", name)
            yield lineno, row, name


def _csv_writer(f: IO[str], schema: str, columns: list[str]):
    f.write(f"# {schema} v{SCHEMA_VERSION}\n")
    writer = csv.writer(f, lineterminator="\n")
    writer.writerow(columns)
    return writer


def _parse_int(text: str, lineno: int, name: str, column: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise RecordFormatError(lineno, f"column {column!r} must be an integer, got {text!r}", name) from None


def _parse_real(text: str, lineno: int, name: str, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise RecordFormatError(lineno, f"column {column!r} must be a number, got {text!r}", name) from None
    if not math.isfinite(value):
        raise RangeError(lineno, f"column {column!r} must be finite", name)
    return value


# ---------------------------------------------------------------------------
# Tracks
# ---------------------------------------------------------------------------


class TrackRowState(str, Enum):
    ACTIVE_UNKNOWN = "ACTIVE_UNKNOWN"
    IDLE = "IDLE"
    ACTIVE = "ACTIVE"

    @classmethod
    def from_idle(cls, state: IdleState | None) -> TrackRowState:
        if state is None:
            return cls.ACTIVE_UNKNOWN
        return cls.IDLE if state is IdleState.IDLE else cls.ACTIVE


@dataclass(frozen=True, slots=True)
class TrackRecord:
    frame_index: int
    track_id: TrackId
    cls: ClassLabel
    bbox: BBox
    confidence: float
    state: TrackRowState = TrackRowState.ACTIVE_UNKNOWN
    p: float | None = None


def track_row(r: TrackRecord) -> list[str]:
    b = r.bbox
    return [
        str(r.frame_index), str(int(r.track_id)), str(r.cls.id),
        fmt_real(b.x), fmt_real(b.y), fmt_real(b.w), fmt_real(b.h),
        fmt_real(r.confidence), r.state.value, "" if r.p is None else fmt_real(r.p),
    ]


class _CsvRecordWriter:
    """Incremental CSV writer; use as a context manager."""

    schema: str
    columns: list[str]

    def __init__(self, target: Source):
        self.target = target
        self.rows = 0
        self._ctx = None
        self._writer = None

    def __enter__(self):
        self._ctx = _open(self.target, "w")
        f = self._ctx.__enter__()
        self._writer = _csv_writer(f, self.schema, self.columns)
        return self

    def to_row(self, record) -> list[str]:
        raise NotImplementedError

    def write(self, record) -> None:
        self._writer.writerow(self.to_row(record))
        self.rows += 1

    def __exit__(self, *exc) -> None:
        self._ctx.__exit__(*exc)


class TrackWriter(_CsvRecordWriter):
    schema = TRACKS_SCHEMA
    columns = TRACK_COLUMNS

    def to_row(self, record: TrackRecord) -> list[str]:
        return track_row(record)


def write_tracks(target: Source, records: Iterable[TrackRecord]) -> int:
    with TrackWriter(target) as w:
        for r in records:
            w.write(r)
    return w.rows


def read_tracks(source: Source, registry: ClassRegistry | None = None) -> Iterator[TrackRecord]:
    registry = registry or ClassRegistry()
    for lineno, row, name in _csv_rows(source, TRACKS_SCHEMA, TRACK_COLUMNS):
        frame = _parse_int(row[0], lineno, name, "frame")
        track_id = _parse_int(row[1], lineno, name, "track_id")
        class_id = _parse_int(row[2], lineno, name, "class_id")
        x, y, w, h, conf = (_parse_real(row[i], lineno, name, TRACK_COLUMNS[i]) for i in range(3, 8))
        try:
            state = TrackRowState(row[8])
        except ValueError:
            raise RecordFormatError(lineno, f"unknown state {row[8]!r}", name) from None
        p = None if row[9] == "" else _parse_real(row[9], lineno, name, "p")
        if frame < 0 or track_id < 1 or class_id < 0:
            raise RangeError(lineno, "frame, track_id and class_id out of range", name)
        if not (0.0 <= conf <= 1.0) or (p is not None and not (0.0 <= p <= 1.0)):
            raise RangeError(lineno, "confidence and p must be in [0, 1]", name)
        if w <= 0 or h <= 0:
            raise RangeError(lineno, "w and h must be positive", name)
        if (p is None) != (state is TrackRowState.ACTIVE_UNKNOWN):
            raise RecordFormatError(lineno, "p must be present exactly when a verdict covers the row", name)
        yield TrackRecord(frame, TrackId(track_id), registry.resolve(class_id), BBox(x, y, w, h), conf, state, p)


# ---------------------------------------------------------------------------
# Verdicts and labelled windows
# ---------------------------------------------------------------------------


def verdict_row(v: IdleVerdict) -> list[str]:
    return [
        str(int(v.track_id)), "" if v.cls is None else str(v.cls.id),
        str(v.first_frame), str(v.last_frame), str(v.features.n),
        fmt_real(v.features.mad_ad), fmt_real(v.features.mad_cd), fmt_real(v.p),
        TrackRowState.from_idle(v.state).value,
    ]


class VerdictWriter(_CsvRecordWriter):
    schema = VERDICTS_SCHEMA
    columns = VERDICT_COLUMNS

    def to_row(self, record: IdleVerdict) -> list[str]:
        return verdict_row(record)


def write_verdicts(target: Source, verdicts: Iterable[IdleVerdict]) -> int:
    with VerdictWriter(target) as w:
        for v in verdicts:
            w.write(v)
    return w.rows


def _idle_state(text: str, lineno: int, name: str) -> IdleState:
    try:
        return IdleState(text.lower())
    except ValueError:
        raise RecordFormatError(lineno, f"state must be IDLE or ACTIVE, got {text!r}", name) from None


def read_verdicts(source: Source, registry: ClassRegistry | None = None) -> list[IdleVerdict]:
    registry = registry or ClassRegistry()
    out = []
    for lineno, row, name in _csv_rows(source, VERDICTS_SCHEMA, VERDICT_COLUMNS):
        track_id, first, last, n = (_parse_int(row[i], lineno, name, VERDICT_COLUMNS[i]) for i in (0, 2, 3, 4))
        cls = None if row[1] == "" else registry.resolve(_parse_int(row[1], lineno, name, "class_id"))
        mad_ad, mad_cd, p = (_parse_real(row[i], lineno, name, VERDICT_COLUMNS[i]) for i in (5, 6, 7))
        if first > last or not (0.0 <= p <= 1.0):
            raise RangeError(lineno, "window bounds or p out of range", name)
        try:
            features = WindowFeatures(mad_ad, mad_cd, n)
        except ValidationError as e:
            raise RangeError(lineno, str(e), name) from None
        out.append(IdleVerdict(TrackId(track_id), first, last, p, _idle_state(row[8], lineno, name), features, cls))
    return out


def write_labeled_windows(target: Source, rows: Iterable[tuple[WindowFeatures, IdleState]]) -> int:
    n = 0
    with _open(target, "w") as f:
        writer = _csv_writer(f, LABELED_WINDOWS_SCHEMA, LABELED_COLUMNS)
        for features, label in rows:
            writer.writerow([fmt_real(features.mad_ad), fmt_real(features.mad_cd), str(features.n),
                             IdleState(label).value.upper()])
            n += 1
    return n


def read_labeled_windows(source: Source) -> list[tuple[WindowFeatures, IdleState]]:
    out = []
    for lineno, row, name in _csv_rows(source, LABELED_WINDOWS_SCHEMA, LABELED_COLUMNS):
        mad_ad = _parse_real(row[0], lineno, name, "mad_ad")
        mad_cd = _parse_real(row[1], lineno, name, "mad_cd")
        n = _parse_int(row[2], lineno, name, "n")
        try:
            features = WindowFeatures(mad_ad, mad_cd, n)
        except ValidationError as e:
            raise RangeError(lineno, str(e), name) from None
        out.append((features, _idle_state(row[3], lineno, name)))
    return out


# ---------------------------------------------------------------------------
# YAML documents
# ---------------------------------------------------------------------------


def load_yaml_document(path: str | Path, schema: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        logger.debug("Loading {} from {}", schema, path)
        try:
            doc = yaml.safe_load(f)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            line = mark.line + 1 if mark is not None else 0
            raise RecordFormatError(line, f"invalid YAML: {getattr(e, 'problem', e)}", str(path)) from None
    if not isinstance(doc, dict):
        raise ConfigError(schema, "document must be a mapping")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(schema, SCHEMA_VERSION, version)
    return doc


def dump_yaml_document(path: str | Path, doc: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(doc, sort_keys=False), encoding="utf-8")


def _require(doc: dict, key: str, path: str, kind: type | tuple[type, ...]):
    if key not in doc:
        raise ConfigError(f"{path}{key}", "is required")
    value = doc[key]
    kinds = kind if isinstance(kind, tuple) else (kind,)
    if not isinstance(value, kinds) or (isinstance(value, bool) and bool not in kinds):
        raise ConfigError(f"{path}{key}", "has the wrong type")
    return value


def _real(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"must be a number, got {value!r}")
    return float(value)


def _int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"must be an integer, got {value!r}")
    return value


def model_document(m: IdleModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "beta0": m.beta0,
        "beta1": m.beta1,
        "beta2": m.beta2,
        "positive_label": m.positive_label.value,
        "mad_variant": m.mad_variant.value,
        "capacity": m.capacity,
        "fps": m.fps,
    }


def model_from_document(doc: dict, prefix: str = "") -> IdleModel:
    number = (int, float)
    try:
        return IdleModel(
            beta0=float(_require(doc, "beta0", prefix, number)),
            beta1=float(_require(doc, "beta1", prefix, number)),
            beta2=float(_require(doc, "beta2", prefix, number)),
            positive_label=IdleState(doc.get("positive_label", IdleState.IDLE.value)),
            mad_variant=MadVariant(doc.get("mad_variant", MadVariant.MEAN_OF_DEVIATIONS.value)),
            capacity=int(_require(doc, "capacity", prefix, int)),
            fps=float(_require(doc, "fps", prefix, number)),
        )
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(prefix.rstrip(".") or "model", str(e)) from None


def write_model(path: str | Path, m: IdleModel) -> None:
    dump_yaml_document(path, model_document(m))
    logger.info("Wrote model to {}", path)


def read_model(path: str | Path) -> IdleModel:
    return model_from_document(load_yaml_document(path, "model"))


def _mode(seg: dict, path: str):
    kind = seg.get("mode")
    number = (int, float)
    if kind == "stationary":
        return Stationary(_real(seg.get("jitter_std", 0.0), f"{path}jitter_std"))
    if kind == "linear":
        return Linear(float(_require(seg, "vx", path, number)), _real(seg.get("vy", 0.0), f"{path}vy"))
    if kind == "stopgo":
        return StopGo(
            _require(seg, "period", path, int),
            float(_require(seg, "duty", path, number)),
            _real(seg.get("vx", 5.0), f"{path}vx"),
            _real(seg.get("vy", 0.0), f"{path}vy"),
        )
    raise ConfigError(f"{path}mode", f"must be stationary, linear or stopgo, got {kind!r}")


def _pair(value, path: str, convert) -> tuple:
    if not isinstance(value, list) or len(value) != 2:
        raise ConfigError(path, f"must be a pair, got {value!r}")
    return convert(value[0], f"{path}[0]"), convert(value[1], f"{path}[1]")


def scenario_from_document(doc: dict, registry: ClassRegistry | None = None) -> ScenarioSpec:
    registry = registry or ClassRegistry()
    noise_doc = doc.get("noise") or {}
    if not isinstance(noise_doc, dict):
        raise ConfigError("noise", "must be a mapping")
    known = set(NoiseSpec.__dataclass_fields__)
    unknown = set(noise_doc) - known
    if unknown:
        raise ConfigError(f"noise.{sorted(unknown)[0]}", "unknown field")
    noise = NoiseSpec(**{k: _real(v, f"noise.{k}") for k, v in noise_doc.items()})

    if "random" in doc:
        r = doc["random"] or {}
        if not isinstance(r, dict):
            raise ConfigError("random", "must be a mapping")
        n_machines = r.get("n_machines")
        return random_scenario(
            _int(r.get("seed", doc.get("seed", 0)), "random.seed"),
            n_machines=None if n_machines is None else _int(n_machines, "random.n_machines"),
            frame_count=_int(doc.get("frame_count", 300), "frame_count"),
            frame_size=_pair(doc.get("frame_size", [1920, 1080]), "frame_size", _real),
            fps=_real(doc.get("fps", 10.0), "fps"),
            noise=noise,
            idle_fraction=_real(r.get("idle_fraction", 0.5), "random.idle_fraction"),
        ).validate()

    machines = []
    for i, m in enumerate(_require(doc, "machines", "", list)):
        path = f"machines[{i}]."
        if not isinstance(m, dict):
            raise ConfigError(path.rstrip("."), "must be a mapping")
        try:
            cls = registry.lookup(_require(m, "class", path, (int, str)))
        except ValidationError as e:
            raise ConfigError(f"{path}class", str(e)) from None
        bbox_raw = _require(m, "bbox", path, list)
        if len(bbox_raw) != 4:
            raise ConfigError(f"{path}bbox", "must be [x, y, w, h]")
        values = [_real(v, f"{path}bbox[{k}]") for k, v in enumerate(bbox_raw)]
        try:
            bbox = BBox(*values)
        except ValidationError as e:
            raise ConfigError(f"{path}bbox", str(e)) from None
        segments = []
        for j, seg in enumerate(m.get("script") or []):
            spath = f"{path}script[{j}]."
            if not isinstance(seg, dict):
                raise ConfigError(spath.rstrip("."), "must be a mapping")
            duration = _require(seg, "duration", spath, int)
            if duration < 1:
                raise ConfigError(f"{spath}duration", "must be >= 1")
            segments.append(Segment(duration, _mode(seg, spath)))
        occlusions_raw = m.get("occlusions") or []
        if not isinstance(occlusions_raw, list):
            raise ConfigError(f"{path}occlusions", "must be a list of [start, end] pairs")
        occlusions = tuple(_pair(o, f"{path}occlusions[{k}]", _int) for k, o in enumerate(occlusions_raw))
        machines.append(MachineSpec(cls, bbox, MotionScript(tuple(segments)), occlusions))

    return ScenarioSpec(
        frame_count=_require(doc, "frame_count", "", int),
        frame_size=_pair(_require(doc, "frame_size", "", list), "frame_size", _real),
        fps=float(_require(doc, "fps", "", (int, float))),
        machines=tuple(machines),
        noise=noise,
        seed=_int(doc.get("seed", 0), "seed"),
    ).validate()


def read_scenario(path: str | Path, registry: ClassRegistry | None = None) -> ScenarioSpec:
    return scenario_from_document(load_yaml_document(path, "scenario"), registry)


def read_config(path: str | Path):
    from edgeidle.config import load_config

    return load_config(path)
