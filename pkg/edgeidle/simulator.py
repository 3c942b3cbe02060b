"""Synthetic construction-site detection streams with ground truth.

A scenario scripts each machine's true motion, occlusions and the detector's
noise. ``generate`` turns it into a detection stream plus ground truth; the
oracle labels windows Idle or Active from the true (noise-free) motion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

from edgeidle.core import DEFAULT_CLASSES, BBox, ClassLabel, Detection, bbox_area, bbox_centroid
from edgeidle.errors import ConfigError
from edgeidle.idle import IdleState
from edgeidle.logger import logger

DEFAULT_EPS_V = 0.5
MIN_TRUE_SIDE = 1.0


@dataclass(frozen=True)
class Stationary:
    jitter_std: float = 0.0


@dataclass(frozen=True)
class Linear:
    vx: float
    vy: float = 0.0


@dataclass(frozen=True)
class StopGo:
    """Moves at (vx, vy) for the first round(duty * period) frames of every period."""

    period: int
    duty: float
    vx: float = 5.0
    vy: float = 0.0

    @property
    def moving_frames(self) -> int:
        return round(self.duty * self.period)


Mode = Union[Stationary, Linear, StopGo]


@dataclass(frozen=True)
class Segment:
    duration: int
    mode: Mode


@dataclass(frozen=True)
class MotionScript:
    """Ordered segments; after the last one the machine stands still."""

    segments: tuple[Segment, ...] = ()

    @property
    def total_frames(self) -> int:
        return sum(s.duration for s in self.segments)

    def mode_at(self, t: int) -> tuple[Mode, int]:
        """Mode in force at frame t and the frame's offset inside its segment."""
        start = 0
        for seg in self.segments:
            if t < start + seg.duration:
                return seg.mode, t - start
            start += seg.duration
        return Stationary(0.0), t - start


@dataclass(frozen=True)
class MachineSpec:
    cls: ClassLabel
    initial: BBox
    script: MotionScript
    # half-open [start, end) frame intervals
    occlusions: tuple[tuple[int, int], ...] = ()

    def occluded(self, t: int) -> bool:
        return any(start <= t < end for start, end in self.occlusions)


@dataclass(frozen=True)
class NoiseSpec:
    miss_prob: float = 0.0
    bbox_jitter_std: float = 0.0
    confidence_mean: float = 0.9
    confidence_std: float = 0.0
    false_positive_rate: float = 0.0
    fp_confidence_mean: float = 0.3


@dataclass(frozen=True)
class ScenarioSpec:
    frame_count: int
    frame_size: tuple[float, float]
    fps: float
    machines: tuple[MachineSpec, ...]
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0

    def validate(self) -> ScenarioSpec:
        if self.frame_count < 1:
            raise ConfigError("frame_count", "must be >= 1")
        width, height = self.frame_size
        if not (width > 0 and height > 0):
            raise ConfigError("frame_size", "width and height must be positive")
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise ConfigError("fps", "must be positive")
        if not (0 <= self.seed < 2**64):
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        n = self.noise
        for name in ("miss_prob",):
            if not (0.0 <= getattr(n, name) <= 1.0):
                raise ConfigError(f"noise.{name}", "must be a probability in [0, 1]")
        for name in ("confidence_mean", "fp_confidence_mean"):
            if not (0.0 <= getattr(n, name) <= 1.0):
                raise ConfigError(f"noise.{name}", "must be in [0, 1]")
        for name in ("bbox_jitter_std", "confidence_std", "false_positive_rate"):
            if getattr(n, name) < 0:
                raise ConfigError(f"noise.{name}", "must be >= 0")
        for i, m in enumerate(self.machines):
            path = f"machines[{i}]"
            if not m.initial.inside(width, height):
                raise ConfigError(f"{path}.initial", "initial box must lie inside the frame")
            for j, seg in enumerate(m.script.segments):
                spath = f"{path}.script[{j}]"
                if seg.duration < 1:
                    raise ConfigError(f"{spath}.duration", "must be >= 1")
                mode = seg.mode
                if isinstance(mode, Stationary) and mode.jitter_std < 0:
                    raise ConfigError(f"{spath}.jitter_std", "must be >= 0")
                if isinstance(mode, StopGo):
                    if mode.period < 1:
                        raise ConfigError(f"{spath}.period", "must be >= 1")
                    if not (0.0 <= mode.duty <= 1.0):
                        raise ConfigError(f"{spath}.duty", "must be in [0, 1]")
            for k, (start, end) in enumerate(m.occlusions):
                if not (0 <= start < end):
                    raise ConfigError(f"{path}.occlusions[{k}]", "needs 0 <= start < end")
        return self


@dataclass(frozen=True, slots=True)
class GroundTruthObject:
    entity_id: int
    cls: ClassLabel
    bbox: BBox | None
    visible: bool
    clipped: bool = False


@dataclass
class GroundTruth:
    fps: float
    frame_size: tuple[float, float]
    frames: list[list[GroundTruthObject]]

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    def entity_ids(self) -> list[int]:
        return sorted({o.entity_id for objs in self.frames for o in objs})

    def visible_track(self, entity_id: int) -> list[tuple[int, BBox]]:
        return [
            (t, o.bbox)
            for t, objs in enumerate(self.frames)
            for o in objs
            if o.entity_id == entity_id and o.visible
        ]

    def entity_class(self, entity_id: int) -> ClassLabel:
        for objs in self.frames:
            for o in objs:
                if o.entity_id == entity_id:
                    return o.cls
        raise KeyError(entity_id)


@dataclass(frozen=True, slots=True)
class WindowLabel:
    entity_id: int
    first_frame: int
    last_frame: int
    label: IdleState


def _step(mode: Mode, offset: int) -> tuple[float, float]:
    if isinstance(mode, Linear):
        return mode.vx, mode.vy
    if isinstance(mode, StopGo):
        if offset % mode.period < mode.moving_frames:
            return mode.vx, mode.vy
    return 0.0, 0.0


def true_boxes(machine: MachineSpec, frame_count: int, rng: np.random.Generator) -> Iterator[BBox]:
    """Unclipped true box per frame. Frame 0 is the initial box."""
    x, y, w, h = machine.initial.to_tlwh()
    for t in range(frame_count):
        mode, offset = machine.script.mode_at(t)
        if t > 0:
            dx, dy = _step(mode, offset)
            x, y = x + dx, y + dy
        if isinstance(mode, Stationary) and mode.jitter_std > 0:
            jx, jy, jw, jh = rng.normal(0.0, mode.jitter_std, 4)
            yield BBox(x + jx, y + jy, max(w + jw, MIN_TRUE_SIDE), max(h + jh, MIN_TRUE_SIDE))
        else:
            yield BBox(x, y, w, h)


def _sample_confidence(rng: np.random.Generator, mean: float, std: float) -> float:
    if std == 0:
        return float(mean)
    return float(np.clip(rng.normal(mean, std), 0.0, 1.0))


def generate(spec: ScenarioSpec) -> tuple[list[Detection], GroundTruth]:
    spec.validate()
    width, height = spec.frame_size
    noise = spec.noise
    motion_seq, noise_seq = np.random.SeedSequence(spec.seed).spawn(2)
    motion_rngs = [np.random.default_rng(s) for s in motion_seq.spawn(len(spec.machines))]
    noise_rng = np.random.default_rng(noise_seq)
    clutter_classes = sorted({m.cls for m in spec.machines}, key=lambda c: c.id) or list(DEFAULT_CLASSES)

    paths = [list(true_boxes(m, spec.frame_count, rng)) for m, rng in zip(spec.machines, motion_rngs)]

    detections: list[Detection] = []
    frames: list[list[GroundTruthObject]] = []
    clipped_entities: set[int] = set()
    for t in range(spec.frame_count):
        objs = []
        for i, machine in enumerate(spec.machines):
            entity_id = i + 1
            raw = paths[i][t]
            box = raw.clipped(width, height)
            clipped = box is None or box != raw
            if clipped:
                clipped_entities.add(entity_id)
            visible = box is not None and not machine.occluded(t)
            objs.append(GroundTruthObject(entity_id, machine.cls, box, visible, clipped))
            if not visible:
                continue
            if noise.miss_prob > 0 and noise_rng.random() < noise.miss_prob:
                continue
            det_box = box
            if noise.bbox_jitter_std > 0:
                jx, jy, jw, jh = noise_rng.normal(0.0, noise.bbox_jitter_std, 4)
                x, y, w, h = box.to_tlwh()
                det_box = BBox(x + jx, y + jy, max(w + jw, MIN_TRUE_SIDE), max(h + jh, MIN_TRUE_SIDE))
                det_box = det_box.clipped(width, height)
                if det_box is None:
                    continue
            conf = _sample_confidence(noise_rng, noise.confidence_mean, noise.confidence_std)
            detections.append(Detection(t, det_box, conf, machine.cls))

        if noise.false_positive_rate > 0:
            for _ in range(noise_rng.poisson(noise.false_positive_rate)):
                w = float(noise_rng.uniform(20.0, min(120.0, width)))
                h = float(noise_rng.uniform(20.0, min(120.0, height)))
                x = float(noise_rng.uniform(0.0, width - w))
                y = float(noise_rng.uniform(0.0, height - h))
                cls = clutter_classes[int(noise_rng.integers(len(clutter_classes)))]
                conf = _sample_confidence(noise_rng, noise.fp_confidence_mean, noise.confidence_std)
                detections.append(Detection(t, BBox(x, y, w, h), conf, cls))
        frames.append(objs)

    for entity_id in sorted(clipped_entities):
        logger.warning("Machine {} left the frame and was clipped to its bounds", entity_id)
    logger.debug(
        "Generated {} detections for {} machines over {} frames (seed {})",
        len(detections), len(spec.machines), spec.frame_count, spec.seed,
    )
    return detections, GroundTruth(spec.fps, (width, height), frames)


# ---------------------------------------------------------------------------
# Oracle labelling
# ---------------------------------------------------------------------------


def _span_label(track: list[tuple[int, BBox]], eps_v: float) -> IdleState:
    eps_a = eps_v * eps_v
    for (f0, b0), (f1, b1) in zip(track, track[1:]):
        gap = f1 - f0
        (x0, y0), (x1, y1) = bbox_centroid(b0), bbox_centroid(b1)
        if math.hypot(x1 - x0, y1 - y0) / gap >= eps_v:
            return IdleState.ACTIVE
        if abs(bbox_area(b1) - bbox_area(b0)) / gap >= eps_a:
            return IdleState.ACTIVE
    return IdleState.IDLE


def oracle_idle_labels(gt: GroundTruth, buffer: int, eps_v: float = DEFAULT_EPS_V) -> list[WindowLabel]:
    """Tumbling windows of ``buffer`` visible frames per entity, labelled from true motion."""
    if buffer < 2:
        raise ConfigError("buffer", "must be >= 2")
    labels = []
    for entity_id in gt.entity_ids():
        track = gt.visible_track(entity_id)
        for start in range(0, len(track) - buffer + 1, buffer):
            chunk = track[start:start + buffer]
            labels.append(WindowLabel(entity_id, chunk[0][0], chunk[-1][0], _span_label(chunk, eps_v)))
    return labels


def oracle_label_span(
    gt: GroundTruth, entity_id: int, first: int, last: int, eps_v: float = DEFAULT_EPS_V
) -> IdleState | None:
    """Label an arbitrary span; None when fewer than two visible frames fall inside it."""
    track = [(t, b) for t, b in gt.visible_track(entity_id) if first <= t <= last]
    if len(track) < 2:
        return None
    return _span_label(track, eps_v)


# ---------------------------------------------------------------------------
# Random multi-machine scenarios
# ---------------------------------------------------------------------------

ACTIVE_STYLES = ("shuttle", "stopgo", "working")


def _random_script(
    rng: np.random.Generator,
    frame_count: int,
    amplitude: float,
    idle_fraction: float,
    active_styles: tuple[str, ...],
) -> MotionScript:
    segments: list[Segment] = []
    total = 0
    while total < frame_count:
        duration = int(rng.integers(45, 91))
        if not active_styles or rng.random() < idle_fraction:
            segments.append(Segment(duration, Stationary(0.0)))
            total += duration
            continue
        style = active_styles[int(rng.integers(len(active_styles)))]
        if style == "working":
            segments.append(Segment(duration, Stationary(float(rng.uniform(1.0, 2.0)))))
            total += duration
            continue
        half = max(duration // 2, 1)
        if style == "shuttle":
            v = min(float(rng.uniform(1.0, 3.0)), amplitude / half)
            out, back = Linear(v, 0.0), Linear(-v, 0.0)
        else:
            period = int(rng.integers(4, 9))
            duty = 0.5
            moving = round(duty * period) * (half / period + 1)
            v = min(float(rng.uniform(2.0, 5.0)), amplitude / moving)
            out, back = StopGo(period, duty, v, 0.0), StopGo(period, duty, -v, 0.0)
        direction = 1 if rng.random() < 0.5 else -1
        first, second = (out, back) if direction > 0 else (back, out)
        segments += [Segment(half, first), Segment(half, second)]
        total += 2 * half
    return MotionScript(tuple(segments))


def random_scenario(
    seed: int,
    *,
    n_machines: int | None = None,
    frame_count: int = 300,
    frame_size: tuple[float, float] = (1920.0, 1080.0),
    fps: float = 10.0,
    noise: NoiseSpec | None = None,
    idle_fraction: float = 0.5,
    active_styles: tuple[str, ...] = ACTIVE_STYLES,
) -> ScenarioSpec:
    """Two to six machines, one per cell of a 3x2 grid, never overlapping."""
    rng = np.random.default_rng(seed)
    cols, rows = 3, 2
    n = int(rng.integers(2, cols * rows + 1)) if n_machines is None else n_machines
    if not (1 <= n <= cols * rows):
        raise ConfigError("n_machines", f"must be between 1 and {cols * rows}")
    width, height = frame_size
    cell_w, cell_h = width / cols, height / rows
    cells = rng.permutation(cols * rows)[:n]
    machines = []
    for cell in sorted(int(c) for c in cells):
        col, row = cell % cols, cell // cols
        w = float(rng.uniform(0.30, 0.45) * cell_w)
        h = float(rng.uniform(0.30, 0.45) * cell_h)
        amplitude = (cell_w - w) / 2 - 0.1 * cell_w
        x = col * cell_w + (cell_w - w) / 2
        y = row * cell_h + (cell_h - h) / 2
        cls = DEFAULT_CLASSES[int(rng.integers(len(DEFAULT_CLASSES)))]
        script = _random_script(rng, frame_count, amplitude, idle_fraction, active_styles)
        machines.append(MachineSpec(cls, BBox(x, y, w, h), script))
    return ScenarioSpec(
        frame_count=frame_count,
        frame_size=(width, height),
        fps=fps,
        machines=tuple(machines),
        noise=noise or NoiseSpec(),
        seed=seed,
    )
