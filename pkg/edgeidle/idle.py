"""Idle/active classification from bounding-box variability.

Each track keeps a tumbling buffer of box areas and centroids. When the
buffer fills, consecutive area differences (AD) and centroid distances (CD)
are reduced to one variability figure each, the pair is scored with a
logistic model, and the buffer is cleared.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from edgeidle.core import BBox, ClassLabel, TrackId, bbox_area, bbox_centroid
from edgeidle.errors import (
    DegenerateTrainingError,
    DuplicateObservationError,
    InsufficientWindowError,
    StreamOrderError,
    ValidationError,
)
from edgeidle.logger import WINDOWS_LEVEL, logger

EXP_CLAMP = 50.0


class IdleState(str, Enum):
    IDLE = "idle"
    ACTIVE = "active"

    @property
    def other(self) -> IdleState:
        return IdleState.ACTIVE if self is IdleState.IDLE else IdleState.IDLE


class MadVariant(str, Enum):
    MEAN_OF_DEVIATIONS = "mean_of_deviations"
    MEDIAN_OF_DEVIATIONS = "median_of_deviations"

    @classmethod
    def _missing_(cls, value):
        # older config files name the mean variant "as_printed"
        if value == "as_printed":
            return cls.MEAN_OF_DEVIATIONS
        return None


@dataclass(frozen=True, slots=True)
class WindowFeatures:
    mad_ad: float
    mad_cd: float
    n: int

    def __post_init__(self):
        for name in ("mad_ad", "mad_cd"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"{name} must be finite and non-negative, got {value!r}")
        if self.n < 2:
            raise ValidationError(f"Window length must be >= 2, got {self.n}")


@dataclass(frozen=True)
class IdleModel:
    """Logistic coefficients plus the window parameters they were fitted for.

    ``p`` is the probability of ``positive_label``.
    """

    beta0: float
    beta1: float
    beta2: float
    positive_label: IdleState = IdleState.IDLE
    mad_variant: MadVariant = MadVariant.MEAN_OF_DEVIATIONS
    capacity: int = 15
    fps: float = 10.0

    def __post_init__(self):
        if not all(math.isfinite(b) for b in (self.beta0, self.beta1, self.beta2)):
            raise ValidationError(f"Model coefficients must be finite: {self!r}")
        if self.capacity < 2:
            raise ValidationError(f"Model capacity must be >= 2, got {self.capacity}")
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise ValidationError(f"Model fps must be positive, got {self.fps}")
        object.__setattr__(self, "positive_label", IdleState(self.positive_label))
        object.__setattr__(self, "mad_variant", MadVariant(self.mad_variant))

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([self.beta0, self.beta1, self.beta2])

    def decision(self, mad_ad: float, mad_cd: float) -> float:
        return self.beta0 + self.beta1 * mad_ad + self.beta2 * mad_cd


# Published fit: buffer 15 at 10 FPS, p read as the probability of Idle.
PUBLISHED_MODEL = IdleModel(beta0=2.4613463131, beta1=-0.00136793, beta2=-0.36581202)


class Classification(NamedTuple):
    p: float
    state: IdleState


@dataclass(frozen=True, slots=True)
class IdleVerdict:
    track_id: TrackId
    first_frame: int
    last_frame: int
    p: float
    state: IdleState
    features: WindowFeatures
    cls: ClassLabel | None = None

    @property
    def window(self) -> tuple[int, int]:
        return (self.first_frame, self.last_frame)


@dataclass
class WindowBuffer:
    track_id: TrackId
    capacity: int
    areas: list[float] = field(default_factory=list)
    centroids: list[tuple[float, float]] = field(default_factory=list)
    first_frame: int | None = None
    last_frame: int | None = None

    def __len__(self) -> int:
        return len(self.areas)

    @property
    def full(self) -> bool:
        return len(self.areas) >= self.capacity

    def append(self, b: BBox, frame_index: int) -> None:
        if not self.areas:
            self.first_frame = frame_index
        self.areas.append(bbox_area(b))
        self.centroids.append(bbox_centroid(b))
        self.last_frame = frame_index

    def clear(self) -> None:
        # last_frame survives so duplicates across a window boundary are still caught
        self.areas.clear()
        self.centroids.clear()
        self.first_frame = None

    def to_dict(self) -> dict:
        return {
            "track_id": int(self.track_id),
            "capacity": self.capacity,
            "areas": list(self.areas),
            "centroids": [list(c) for c in self.centroids],
            "first_frame": self.first_frame,
            "last_frame": self.last_frame,
        }

    @classmethod
    def from_dict(cls, d: dict) -> WindowBuffer:
        return cls(
            track_id=TrackId(int(d["track_id"])),
            capacity=int(d["capacity"]),
            areas=[float(a) for a in d["areas"]],
            centroids=[(float(x), float(y)) for x, y in d["centroids"]],
            first_frame=d["first_frame"],
            last_frame=d["last_frame"],
        )


def area_differences(areas: Sequence[float]) -> np.ndarray:
    a = np.asarray(areas, dtype=float)
    if a.ndim != 1 or len(a) < 2:
        raise InsufficientWindowError(f"Need at least 2 areas, got {len(a)}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("Areas must be finite")
    return np.abs(a[:-1] - a[1:])


def centroid_differences(centroids: Sequence[tuple[float, float]]) -> np.ndarray:
    c = np.asarray(centroids, dtype=float).reshape(-1, 2)
    if len(c) < 2:
        raise InsufficientWindowError(f"Need at least 2 centroids, got {len(c)}")
    d = c[1:] - c[:-1]
    return np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])


def mad(series: Sequence[float], variant: MadVariant | str = MadVariant.MEAN_OF_DEVIATIONS) -> float:
    """Spread of ``series`` about its median.

    ``mean_of_deviations`` averages the absolute deviations; ``median_of_deviations``
    takes their median (the textbook MAD).
    """
    s = np.asarray(series, dtype=float)
    if s.size == 0:
        raise InsufficientWindowError("Cannot compute MAD of an empty series")
    if not np.all(np.isfinite(s)):
        raise ValidationError("Series must be finite")
    deviations = np.abs(s - np.median(s))
    if MadVariant(variant) is MadVariant.MEDIAN_OF_DEVIATIONS:
        return float(np.median(deviations))
    return float(np.mean(deviations))


def window_features(buffer: WindowBuffer, variant: MadVariant | str = MadVariant.MEAN_OF_DEVIATIONS) -> WindowFeatures:
    return WindowFeatures(
        mad_ad=mad(area_differences(buffer.areas), variant),
        mad_cd=mad(centroid_differences(buffer.centroids), variant),
        n=len(buffer),
    )


def classify_window(f: WindowFeatures, m: IdleModel) -> Classification:
    z = min(EXP_CLAMP, max(-EXP_CLAMP, m.decision(f.mad_ad, f.mad_cd)))
    p = 1.0 / (1.0 + math.exp(-z))
    state = m.positive_label if p >= 0.5 else m.positive_label.other
    return Classification(p, state)


class IdleEngine:
    """Per-track tumbling windows for one stream. Not thread-safe."""

    def __init__(
        self,
        model: IdleModel = PUBLISHED_MODEL,
        capacity: int | None = None,
        fps: float | None = None,
        mad_variant: MadVariant | str | None = None,
    ):
        self.model = model
        self.capacity = int(capacity if capacity is not None else model.capacity)
        self.fps = float(fps if fps is not None else model.fps)
        self.mad_variant = MadVariant(mad_variant if mad_variant is not None else model.mad_variant)
        if self.capacity < 2:
            raise ValidationError(f"Buffer capacity must be >= 2, got {self.capacity}")
        if not self.fps > 0:
            raise ValidationError(f"fps must be positive, got {self.fps}")
        if self.capacity != model.capacity or self.fps != model.fps:
            logger.warning(
                "Model was fitted for buffer {} at {} FPS; running with buffer {} at {} FPS",
                model.capacity, model.fps, self.capacity, self.fps,
            )
        self.buffers: dict[TrackId, WindowBuffer] = {}

    @property
    def window_seconds(self) -> float:
        return self.capacity / self.fps

    def push_observation(
        self, track_id: TrackId, bbox: BBox, frame_index: int, cls: ClassLabel | None = None
    ) -> IdleVerdict | None:
        buf = self.buffers.get(track_id)
        if buf is None:
            buf = self.buffers[track_id] = WindowBuffer(track_id, self.capacity)
        elif buf.last_frame is not None and frame_index <= buf.last_frame:
            if frame_index == buf.last_frame:
                raise DuplicateObservationError(f"Track {track_id} already observed at frame {frame_index}")
            raise StreamOrderError(f"Track {track_id}: frame {frame_index} after frame {buf.last_frame}")

        buf.append(bbox, frame_index)
        if not buf.full:
            return None

        features = window_features(buf, self.mad_variant)
        p, state = classify_window(features, self.model)
        verdict = IdleVerdict(track_id, buf.first_frame, buf.last_frame, p, state, features, cls)
        buf.clear()
        logger.log(
            WINDOWS_LEVEL,
            "track {} frames {}-{}: MAD_AD={:.4f} MAD_CD={:.4f} p={:.4f} -> {}",
            track_id, verdict.first_frame, verdict.last_frame,
            features.mad_ad, features.mad_cd, p, state.value,
        )
        return verdict

    def drop_track(self, track_id: TrackId) -> int:
        """Forget a track; returns how many buffered observations were discarded."""
        buf = self.buffers.pop(track_id, None)
        if buf is None:
            return 0
        if len(buf):
            logger.log(WINDOWS_LEVEL, "track {}: discarding partial window of {}", track_id, len(buf))
        return len(buf)

    def evict_stale(self, frame_index: int, max_gap: int) -> list[TrackId]:
        stale = [
            tid for tid, buf in self.buffers.items()
            if buf.last_frame is not None and frame_index - buf.last_frame > max_gap
        ]
        for tid in stale:
            self.drop_track(tid)
        return stale

    def state_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "fps": self.fps,
            "mad_variant": self.mad_variant.value,
            "buffers": [b.to_dict() for b in self.buffers.values()],
        }

    @classmethod
    def from_state(cls, state: dict, model: IdleModel) -> IdleEngine:
        engine = cls(model, capacity=state["capacity"], fps=state["fps"], mad_variant=state["mad_variant"])
        for d in state["buffers"]:
            buf = WindowBuffer.from_dict(d)
            engine.buffers[buf.track_id] = buf
        return engine


def push_observation(
    engine: IdleEngine, track_id: TrackId, bbox: BBox, frame_index: int, cls: ClassLabel | None = None
) -> IdleVerdict | None:
    return engine.push_observation(track_id, bbox, frame_index, cls)


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitOptions:
    l2: float = 1e-4
    learning_rate: float = 0.1
    tol: float = 1e-8
    max_iter: int = 10_000
    positive_label: IdleState = IdleState.IDLE


def _design(features: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(len(features)), features])


def log_likelihood(beta, features, y, l2: float = 0.0) -> float:
    """Mean log-likelihood minus an L2 penalty on the non-intercept weights."""
    beta = np.asarray(beta, dtype=float)
    z = _design(np.asarray(features, dtype=float)) @ beta
    y = np.asarray(y, dtype=float)
    ll = np.mean(y * z - np.logaddexp(0.0, z))
    return float(ll - 0.5 * l2 * np.dot(beta[1:], beta[1:]))


def log_likelihood_gradient(beta, features, y, l2: float = 0.0) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    x = _design(np.asarray(features, dtype=float))
    z = x @ beta
    residual = np.asarray(y, dtype=float) - np.exp(-np.logaddexp(0.0, -z))
    grad = x.T @ residual / len(x)
    penalty = l2 * beta
    penalty[0] = 0.0
    return grad - penalty


def _as_arrays(windows, positive_label: IdleState) -> tuple[np.ndarray, np.ndarray]:
    feats = np.array([[f.mad_ad, f.mad_cd] for f, _ in windows], dtype=float).reshape(-1, 2)
    y = np.array([1.0 if IdleState(label) is positive_label else 0.0 for _, label in windows])
    return feats, y


def fit_model(
    windows: Sequence[tuple[WindowFeatures, IdleState]],
    opts: FitOptions | None = None,
    *,
    capacity: int = 15,
    fps: float = 10.0,
    mad_variant: MadVariant | str = MadVariant.MEAN_OF_DEVIATIONS,
) -> IdleModel:
    opts = opts or FitOptions()
    positive = IdleState(opts.positive_label)
    if len(windows) < 2:
        logger.error("Need at least 2 labelled windows, got {}", len(windows))
        raise DegenerateTrainingError(f"Need at least 2 labelled windows, got {len(windows)}")
    feats, y = _as_arrays(windows, positive)
    if y.min() == y.max():
        logger.error("All {} training windows carry the same label", len(y))
        raise DegenerateTrainingError("Training windows must contain both Idle and Active labels")

    mu = feats.mean(axis=0)
    sd = feats.std(axis=0)
    sd[sd == 0] = 1.0
    scaled = (feats - mu) / sd

    beta = np.zeros(3)
    it = 0
    for it in range(1, opts.max_iter + 1):
        grad = log_likelihood_gradient(beta, scaled, y, opts.l2)
        if np.max(np.abs(grad)) < opts.tol:
            break
        beta = beta + opts.learning_rate * grad
    logger.debug("Logistic fit stopped after {} iterations", it)

    raw = beta[1:] / sd
    intercept = beta[0] - float(np.dot(raw, mu))
    model = IdleModel(
        beta0=float(intercept),
        beta1=float(raw[0]),
        beta2=float(raw[1]),
        positive_label=positive,
        mad_variant=MadVariant(mad_variant),
        capacity=capacity,
        fps=fps,
    )
    logger.info(
        "Fitted model on {} windows: beta=({:.6f}, {:.6f}, {:.6f}), training accuracy {:.4f}",
        len(windows), model.beta0, model.beta1, model.beta2, training_accuracy(model, windows),
    )
    return model


def training_accuracy(model: IdleModel, windows: Sequence[tuple[WindowFeatures, IdleState]]) -> float:
    if not windows:
        return 0.0
    hits = sum(classify_window(f, model).state is IdleState(label) for f, label in windows)
    return hits / len(windows)
