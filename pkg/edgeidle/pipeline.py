"""Tracker and idle engine bound together for one detection stream.

Track rows are held back until the window covering them has been
classified, so each written row carries the verdict that applies to it.
Rows are released in (frame, track id) order.
"""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from loguru import logger

from edgeidle.core import BBox, ClassLabel, Detection, TrackId
from edgeidle.errors import InvariantError, StreamOrderError
from edgeidle.idle import IdleEngine, IdleModel, IdleVerdict
from edgeidle.io import TrackRecord, TrackRowState, TrackWriter, VerdictWriter, iter_frames, read_detections
from edgeidle.tracker import TrackedObject, TrackerStore


class _Row:
    __slots__ = ("obj", "state", "p", "resolved")

    def __init__(self, obj: TrackedObject, state=TrackRowState.ACTIVE_UNKNOWN, p=None, resolved=False):
        self.obj = obj
        self.state = state
        self.p = p
        self.resolved = resolved

    def record(self) -> TrackRecord:
        o = self.obj
        return TrackRecord(o.frame_index, o.track_id, o.cls, o.bbox, o.confidence, self.state, self.p)

    def to_dict(self) -> dict:
        o = self.obj
        return {
            "frame": o.frame_index,
            "track_id": int(o.track_id),
            "class_id": o.cls.id,
            "class_name": o.cls.name,
            "bbox": list(o.bbox.to_tlwh()),
            "confidence": o.confidence,
            "state": self.state.value,
            "p": self.p,
            "resolved": self.resolved,
        }

    @classmethod
    def from_dict(cls, d: dict) -> _Row:
        obj = TrackedObject(
            int(d["frame"]), TrackId(int(d["track_id"])), ClassLabel(int(d["class_id"]), d["class_name"]),
            BBox(*d["bbox"]), float(d["confidence"]),
        )
        return cls(obj, TrackRowState(d["state"]), d["p"], bool(d["resolved"]))


class Annotator:
    """Reorder buffer attaching verdicts to the rows of their window."""

    def __init__(self):
        self._frames: deque[tuple[int, list[_Row]]] = deque()
        self._open: dict[TrackId, list[_Row]] = {}

    def __len__(self) -> int:
        return sum(len(rows) for _, rows in self._frames)

    def add(self, frame_index: int, tracked: list[TrackedObject]) -> None:
        rows = [_Row(o) for o in tracked]
        for row in rows:
            self._open.setdefault(row.obj.track_id, []).append(row)
        self._frames.append((frame_index, rows))

    def resolve(self, verdict: IdleVerdict) -> None:
        rows = self._open.pop(verdict.track_id, [])
        state = TrackRowState.from_idle(verdict.state)
        for row in rows:
            if not (verdict.first_frame <= row.obj.frame_index <= verdict.last_frame):
                raise InvariantError(f"Row at frame {row.obj.frame_index} outside window {verdict.window}")
            row.state, row.p, row.resolved = state, verdict.p, True

    def abandon(self, track_id: TrackId) -> None:
        for row in self._open.pop(track_id, []):
            row.resolved = True

    def release(self) -> list[TrackRecord]:
        out = []
        while self._frames and all(r.resolved for r in self._frames[0][1]):
            _, rows = self._frames.popleft()
            out.extend(r.record() for r in sorted(rows, key=lambda r: r.obj.track_id))
        return out

    def flush(self) -> list[TrackRecord]:
        for tid in list(self._open):
            self.abandon(tid)
        return self.release()

    def state_dict(self) -> dict:
        return {"frames": [{"frame": f, "rows": [r.to_dict() for r in rows]} for f, rows in self._frames]}

    @classmethod
    def from_state(cls, state: dict) -> Annotator:
        ann = cls()
        for entry in state["frames"]:
            rows = [_Row.from_dict(d) for d in entry["rows"]]
            for row in rows:
                if not row.resolved:
                    ann._open.setdefault(row.obj.track_id, []).append(row)
            ann._frames.append((int(entry["frame"]), rows))
        return ann


@dataclass
class FrameResult:
    frame_index: int
    tracked: list[TrackedObject]
    verdicts: list[IdleVerdict]
    released: list[TrackRecord]
    track_seconds: float = 0.0
    idle_seconds: float = 0.0


@dataclass
class Pipeline:
    tracker: TrackerStore
    engine: IdleEngine
    annotator: Annotator = field(default_factory=Annotator)

    @property
    def last_frame(self) -> int | None:
        return self.tracker.last_frame

    def step(self, frame_index: int, detections: Iterable[Detection]) -> FrameResult:
        t0 = time.perf_counter()
        tracked = self.tracker.step(detections, frame_index)
        t1 = time.perf_counter()
        for tid in self.tracker.last_terminated:
            self.engine.drop_track(tid)
            self.annotator.abandon(tid)
        self.annotator.add(frame_index, tracked)
        verdicts = []
        for obj in tracked:
            verdict = self.engine.push_observation(obj.track_id, obj.bbox, frame_index, obj.cls)
            if verdict is not None:
                self.annotator.resolve(verdict)
                verdicts.append(verdict)
        t2 = time.perf_counter()
        return FrameResult(frame_index, tracked, verdicts, self.annotator.release(), t1 - t0, t2 - t1)

    def run(self, frames: Iterable[tuple[int, list[Detection]]]) -> Iterator[FrameResult]:
        for frame_index, detections in frames:
            yield self.step(frame_index, detections)

    def finish(self) -> list[TrackRecord]:
        """End of stream: partial windows are discarded without a verdict."""
        for tid in list(self.engine.buffers):
            self.engine.drop_track(tid)
        return self.annotator.flush()

    def state_dict(self) -> dict:
        return {
            "tracker": self.tracker.state_dict(),
            "idle": self.engine.state_dict(),
            "annotator": self.annotator.state_dict(),
        }

    @classmethod
    def from_state(cls, state: dict, model: IdleModel) -> Pipeline:
        return cls(
            TrackerStore.from_state(state["tracker"]),
            IdleEngine.from_state(state["idle"], model),
            Annotator.from_state(state["annotator"]),
        )


@dataclass
class StreamSummary:
    detections: Path
    frames: int = 0
    rows: int = 0
    verdicts: int = 0
    tracks: int = 0


def run_stream(
    pipeline: Pipeline,
    detections: Iterable[Detection],
    tracks_out,
    verdicts_out,
    *,
    until: int | None = None,
    finish: bool = True,
) -> StreamSummary:
    """Drive ``pipeline`` over a stream, writing tracks and verdicts as they are released.

    Frames at or before the pipeline's last processed frame are skipped, so a
    restored pipeline resumes where its checkpoint left off.
    """
    start_after = pipeline.last_frame if pipeline.last_frame is not None else -1
    summary = StreamSummary(Path(str(getattr(detections, "source", "<stream>"))))
    with TrackWriter(tracks_out) as tracks, VerdictWriter(verdicts_out) as verdicts:
        for frame_index, dets in iter_frames(detections):
            if frame_index <= start_after:
                continue
            if until is not None and frame_index > until:
                break
            result = pipeline.step(frame_index, dets)
            summary.frames += 1
            for verdict in result.verdicts:
                verdicts.write(verdict)
            for record in result.released:
                tracks.write(record)
        if finish:
            for record in pipeline.finish():
                tracks.write(record)
    summary.rows, summary.verdicts, summary.tracks = tracks.rows, verdicts.rows, pipeline.tracker.tracks_created
    logger.info(
        "Processed {} frames: {} track rows, {} verdicts, {} tracks",
        summary.frames, summary.rows, summary.verdicts, summary.tracks,
    )
    return summary


def run_idle_stage(
    engine: IdleEngine,
    records: Iterable[TrackRecord],
    verdicts_out,
    annotated_out=None,
    *,
    max_gap: int = 30,
) -> StreamSummary:
    """Idle classification alone, over an already tracked stream.

    Track termination is not known here, so buffers of tracks unseen for
    more than ``max_gap`` frames are dropped instead.
    """
    annotator = Annotator()
    summary = StreamSummary(Path("<tracks>"))
    seen: set[TrackId] = set()
    annotated = TrackWriter(annotated_out) if annotated_out is not None else None

    def write(rows: list[TrackRecord]) -> None:
        if annotated is not None:
            for r in rows:
                annotated.write(r)

    def flush_frame(frame_index: int, rows: list[TrackRecord]) -> None:
        for tid in engine.evict_stale(frame_index, max_gap):
            annotator.abandon(tid)
        annotator.add(frame_index, [
            TrackedObject(r.frame_index, r.track_id, r.cls, r.bbox, r.confidence) for r in rows
        ])
        for r in rows:
            seen.add(r.track_id)
            verdict = engine.push_observation(r.track_id, r.bbox, frame_index, r.cls)
            if verdict is not None:
                annotator.resolve(verdict)
                verdicts.write(verdict)
        summary.frames += 1
        write(annotator.release())

    with VerdictWriter(verdicts_out) as verdicts:
        if annotated is not None:
            annotated.__enter__()
        try:
            current: list[TrackRecord] = []
            frame = None
            for r in records:
                if frame is not None and r.frame_index < frame:
                    raise StreamOrderError(f"track row at frame {r.frame_index} after frame {frame}")
                if frame is not None and r.frame_index != frame:
                    flush_frame(frame, current)
                    current = []
                frame = r.frame_index
                current.append(r)
            if frame is not None:
                flush_frame(frame, current)
            for tid in list(engine.buffers):
                engine.drop_track(tid)
            write(annotator.flush())
        finally:
            if annotated is not None:
                annotated.__exit__(None, None, None)
    summary.verdicts = verdicts.rows
    summary.rows = annotated.rows if annotated is not None else 0
    summary.tracks = len(seen)
    logger.info("Classified {} windows over {} frames of {} tracks", summary.verdicts, summary.frames, summary.tracks)
    return summary


def run_file(
    detections_path: Path,
    tracks_out: Path,
    verdicts_out: Path,
    tracker_config,
    model: IdleModel,
    capacity: int,
    fps: float,
    registry=None,
) -> StreamSummary:
    """One independent stream, suitable for a worker process."""
    pipeline = Pipeline(TrackerStore(tracker_config), IdleEngine(model, capacity, fps))
    summary = run_stream(pipeline, read_detections(detections_path, registry), tracks_out, verdicts_out)
    summary.detections = Path(detections_path)
    return summary
