"""Two-stage association tracker.

Per frame, detections are split by confidence into high- and low-confidence
groups. High-confidence detections are matched first against active and
lost tracks; low-confidence detections can only extend active tracks that
are still unmatched. Track lifecycle: Tentative -> Active -> Lost ->
Terminated, with Lost tracks recovering their id when matched again.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from edgeidle.core import BBox, ClassLabel, Detection, TrackId, bbox_area, boxes_to_array, iou_matrix
from edgeidle.errors import ConfigError, StreamOrderError, ValidationError
from edgeidle.kalman import KalmanState, kalman_init, kalman_predict_many, kalman_update
from edgeidle.logger import TRACKS_LEVEL, logger
from edgeidle.matching import hungarian_assign

INADMISSIBLE = 2.0


@dataclass
class TrackerConfig:
    high_thresh: float = 0.5
    low_thresh: float = 0.1
    new_track_thresh: float = 0.6
    match_thresh: float = 0.8
    low_match_thresh: float = 0.5
    track_buffer: int = 30
    min_box_area: float = 10.0
    class_gated: bool = True
    activate_first_frame: bool = True

    def validate(self, prefix: str = "tracker") -> TrackerConfig:
        if not (0.0 < self.high_thresh <= 1.0):
            raise ConfigError(f"{prefix}.high_thresh", "must be in (0, 1]")
        if not (0.0 <= self.low_thresh < self.high_thresh):
            raise ConfigError(f"{prefix}.low_thresh", "must be in [0, high_thresh)")
        if not (0.0 <= self.new_track_thresh <= 1.0):
            raise ConfigError(f"{prefix}.new_track_thresh", "must be in [0, 1]")
        for name in ("match_thresh", "low_match_thresh"):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise ConfigError(f"{prefix}.{name}", "must be an IoU in [0, 1]")
        if int(self.track_buffer) != self.track_buffer or self.track_buffer < 1:
            raise ConfigError(f"{prefix}.track_buffer", "must be a positive integer")
        if self.min_box_area < 0:
            raise ConfigError(f"{prefix}.min_box_area", "must be >= 0")
        return self


class TrackState(str, Enum):
    TENTATIVE = "tentative"
    ACTIVE = "active"
    LOST = "lost"
    TERMINATED = "terminated"


@dataclass
class Track:
    id: TrackId
    cls: ClassLabel
    state: TrackState
    kalman: KalmanState
    last_bbox: BBox
    last_confidence: float
    start_frame: int
    frames_since_update: int = 0
    age: int = 0

    def update(self, det: Detection) -> None:
        self.kalman = kalman_update(self.kalman, det.bbox)
        self.last_bbox = det.bbox
        self.last_confidence = det.confidence
        self.frames_since_update = 0
        self.state = TrackState.ACTIVE

    def to_dict(self) -> dict:
        return {
            "id": int(self.id),
            "class_id": self.cls.id,
            "class_name": self.cls.name,
            "state": self.state.value,
            "kalman": self.kalman.to_dict(),
            "last_bbox": list(self.last_bbox.to_tlwh()),
            "last_confidence": self.last_confidence,
            "start_frame": self.start_frame,
            "frames_since_update": self.frames_since_update,
            "age": self.age,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Track:
        return cls(
            id=TrackId(int(d["id"])),
            cls=ClassLabel(int(d["class_id"]), d["class_name"]),
            state=TrackState(d["state"]),
            kalman=KalmanState.from_dict(d["kalman"]),
            last_bbox=BBox(*d["last_bbox"]),
            last_confidence=float(d["last_confidence"]),
            start_frame=int(d["start_frame"]),
            frames_since_update=int(d["frames_since_update"]),
            age=int(d["age"]),
        )


@dataclass(frozen=True, slots=True)
class TrackedObject:
    frame_index: int
    track_id: TrackId
    cls: ClassLabel
    bbox: BBox
    confidence: float


class TrackerStore:
    """State for one detection stream. Calls to ``step`` must be serialised."""

    def __init__(self, config: TrackerConfig | None = None):
        self.config = (config or TrackerConfig()).validate()
        self.tracks: list[Track] = []
        self.last_frame: int | None = None
        self.last_terminated: list[TrackId] = []
        self._next_id = 1

    @property
    def tracks_created(self) -> int:
        return self._next_id - 1

    def _new_id(self) -> TrackId:
        tid = TrackId(self._next_id)
        self._next_id += 1
        return tid

    def _cost(self, tracks: Sequence[Track], dets: Sequence[Detection]) -> np.ndarray:
        if not tracks or not dets:
            return np.zeros((len(tracks), len(dets)))
        track_boxes = np.array([t.kalman.to_bbox().to_tlwh() for t in tracks])
        cost = 1.0 - iou_matrix(track_boxes, boxes_to_array(d.bbox for d in dets))
        if self.config.class_gated:
            t_cls = np.array([t.cls.id for t in tracks])[:, None]
            d_cls = np.array([d.cls.id for d in dets])[None, :]
            cost = np.where(t_cls == d_cls, cost, INADMISSIBLE)
        return cost

    def _predict(self, steps: int) -> None:
        if not self.tracks:
            return
        means = np.array([t.kalman.mean for t in self.tracks])
        covs = np.array([t.kalman.covariance for t in self.tracks])
        lost = np.array([t.state == TrackState.LOST for t in self.tracks])
        means[lost, 7] = 0.0
        for _ in range(steps):
            means, covs = kalman_predict_many(means, covs)
        for t, m, c in zip(self.tracks, means, covs):
            t.kalman = KalmanState(m, c)
            t.frames_since_update += steps
            t.age += steps

    def step(self, detections: Iterable[Detection], frame_index: int) -> list[TrackedObject]:
        cfg = self.config
        if self.last_frame is not None and frame_index <= self.last_frame:
            logger.error("Frame {} received after frame {}", frame_index, self.last_frame)
            raise StreamOrderError(f"frame {frame_index} is not after previous frame {self.last_frame}")
        first_frame = self.last_frame is None
        steps = 1 if first_frame else frame_index - self.last_frame
        self.last_frame = frame_index
        self.last_terminated = []

        # 1) discard weak and tiny detections, split the rest by confidence
        high: list[Detection] = []
        low: list[Detection] = []
        for det in detections:
            if det.frame_index != frame_index:
                raise ValidationError(f"Detection for frame {det.frame_index} passed to frame {frame_index}")
            if det.confidence < cfg.low_thresh or bbox_area(det.bbox) < cfg.min_box_area:
                continue
            (high if det.confidence >= cfg.high_thresh else low).append(det)

        # 2) predict every live track
        self._predict(steps)

        tentative = [t for t in self.tracks if t.state == TrackState.TENTATIVE]
        pool = [t for t in self.tracks if t.state in (TrackState.ACTIVE, TrackState.LOST)]

        # 3) first stage: high-confidence detections vs active + lost tracks
        first = hungarian_assign(self._cost(pool, high), 1.0 - cfg.match_thresh)
        recovered = 0
        for ti, di in first.matches:
            if pool[ti].state == TrackState.LOST:
                recovered += 1
            pool[ti].update(high[di])

        # 4) second stage: low-confidence detections vs still-unmatched active tracks
        r_active = [pool[i] for i in first.unmatched_rows if pool[i].state == TrackState.ACTIVE]
        second = hungarian_assign(self._cost(r_active, low), 1.0 - cfg.low_match_thresh)
        for ti, di in second.matches:
            r_active[ti].update(low[di])
        unmatched_active = {r_active[i].id for i in second.unmatched_rows}

        # tentative tracks confirm against the leftover high-confidence detections
        left_high = [high[i] for i in first.unmatched_cols]
        third = hungarian_assign(self._cost(tentative, left_high), 1.0 - cfg.match_thresh)
        for ti, di in third.matches:
            tentative[ti].update(left_high[di])
        for ti in third.unmatched_rows:
            tentative[ti].state = TrackState.TERMINATED

        # 5) spawn tracks from unclaimed high-confidence detections
        for di in third.unmatched_cols:
            det = left_high[di]
            if det.confidence < cfg.new_track_thresh:
                continue
            state = TrackState.ACTIVE if (first_frame and cfg.activate_first_frame) else TrackState.TENTATIVE
            self.tracks.append(Track(
                id=self._new_id(),
                cls=det.cls,
                state=state,
                kalman=kalman_init(det.bbox),
                last_bbox=det.bbox,
                last_confidence=det.confidence,
                start_frame=frame_index,
            ))

        # 6) lifecycle: unmatched active -> lost, stale lost -> terminated
        for t in self.tracks:
            if t.id in unmatched_active:
                t.state = TrackState.LOST
            if t.state == TrackState.LOST and t.frames_since_update > cfg.track_buffer:
                t.state = TrackState.TERMINATED

        self.last_terminated = [t.id for t in self.tracks if t.state == TrackState.TERMINATED]
        self.tracks = [t for t in self.tracks if t.state != TrackState.TERMINATED]

        output = [
            TrackedObject(frame_index, t.id, t.cls, t.kalman.to_bbox(), t.last_confidence)
            for t in self.tracks
            if t.state == TrackState.ACTIVE
        ]
        logger.log(
            TRACKS_LEVEL,
            "frame {}: {} high / {} low dets, {} active, {} recovered, {} terminated",
            frame_index, len(high), len(low), len(output), recovered, len(self.last_terminated),
        )
        return output

    def state_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "next_id": self._next_id,
            "last_frame": self.last_frame,
            "tracks": [t.to_dict() for t in self.tracks],
        }

    @classmethod
    def from_state(cls, state: dict) -> TrackerStore:
        store = cls(TrackerConfig(**state["config"]))
        store._next_id = int(state["next_id"])
        store.last_frame = None if state["last_frame"] is None else int(state["last_frame"])
        store.tracks = [Track.from_dict(d) for d in state["tracks"]]
        return store


def tracker_step(store: TrackerStore, detections: Iterable[Detection], frame_index: int) -> list[TrackedObject]:
    return store.step(detections, frame_index)
