"""Throughput and latency accounting for the tracking + idle pipeline.

A warm-up pass runs first and is not timed. Parsing is excluded unless
asked for, so the figures isolate the per-frame algorithmic cost.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from loguru import logger

from edgeidle.core import ClassRegistry, Detection
from edgeidle.errors import InvariantError, ValidationError
from edgeidle.idle import IdleEngine, IdleModel
from edgeidle.io import iter_frames, read_detections
from edgeidle.pipeline import Pipeline
from edgeidle.tracker import TrackerConfig, TrackerStore

STAGES = ("parse", "track", "idle", "total")


def video_processing_metric(video_seconds: float, fps: float) -> float:
    """Seconds of video over the FPS the pipeline sustained on it."""
    if fps <= 0:
        raise ValidationError(f"fps must be positive, got {fps}")
    return video_seconds / fps


@dataclass(frozen=True)
class LatencyStats:
    mean_ms: float
    min_ms: float
    max_ms: float
    p95_ms: float

    @classmethod
    def from_seconds(cls, samples: Sequence[float]) -> LatencyStats:
        if len(samples) == 0:
            return cls(0.0, 0.0, 0.0, 0.0)
        ms = np.asarray(samples, dtype=float) * 1000.0
        return cls(float(ms.mean()), float(ms.min()), float(ms.max()), float(np.percentile(ms, 95)))


@dataclass
class BenchReport:
    frames_processed: int
    wall_time: float
    throughput_fps: float
    stages: dict[str, LatencyStats]
    video_duration_equivalent: float
    speed_factor: float
    fps: float
    capacity: int
    repetitions: int
    include_parse: bool
    track_rows: int = 0
    verdicts: int = 0
    tracks: int = 0
    processing_metric: float = field(init=False)

    def __post_init__(self):
        self.processing_metric = video_processing_metric(self.video_duration_equivalent, self.throughput_fps)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stages"] = {k: asdict(v) for k, v in self.stages.items()}
        return d

    def render(self) -> str:
        lines = [
            f"Frames processed     {self.frames_processed}",
            f"Wall time (s)        {self.wall_time:.4f}",
            f"Throughput (FPS)     {self.throughput_fps:.2f}",
            f"Video duration (s)   {self.video_duration_equivalent:.2f}",
            f"Speed factor         {self.speed_factor:.4f}",
            f"Processing metric    {self.processing_metric:.2f} ({self.video_duration_equivalent:.0f}/{self.throughput_fps:.1f})",
            "",
            f"{'Stage':<8}{'mean ms':>10}{'min ms':>10}{'max ms':>10}{'p95 ms':>10}",
        ]
        for name, s in self.stages.items():
            lines.append(f"{name:<8}{s.mean_ms:>10.4f}{s.min_ms:>10.4f}{s.max_ms:>10.4f}{s.p95_ms:>10.4f}")
        return "\n".join(lines) + "\n"


def _timed_frames(
    path: Path, registry: ClassRegistry, samples: list[float]
) -> Iterator[tuple[int, list[Detection]]]:
    frames = iter_frames(read_detections(path, registry))
    while True:
        t0 = time.perf_counter()
        try:
            item = next(frames)
        except StopIteration:
            return
        samples.append(time.perf_counter() - t0)
        yield item


def _one_pass(
    frames: Iterable[tuple[int, list[Detection]]],
    tracker_config: TrackerConfig,
    model: IdleModel,
    capacity: int,
    fps: float,
    samples: dict[str, list[float]],
) -> tuple[int, int, int, int]:
    pipeline = Pipeline(TrackerStore(tracker_config), IdleEngine(model, capacity, fps))
    n = rows = verdicts = 0
    parse_before = len(samples["parse"])
    start = time.perf_counter()
    for frame_index, dets in frames:
        t0 = time.perf_counter()
        result = pipeline.step(frame_index, dets)
        samples["track"].append(result.track_seconds)
        samples["idle"].append(result.idle_seconds)
        samples["total"].append(time.perf_counter() - t0)
        rows += len(result.released)
        verdicts += len(result.verdicts)
        n += 1
    rows += len(pipeline.finish())
    # parse time belongs to the frame it produced
    parse = samples["parse"][parse_before:]
    for i, p in enumerate(parse[:n]):
        samples["total"][-n + i] += p
    logger.debug("Pass over {} frames took {:.4f}s", n, time.perf_counter() - start)
    return n, rows, verdicts, pipeline.tracker.tracks_created


def run_bench(
    detections_path: Path,
    tracker_config: TrackerConfig,
    model: IdleModel,
    *,
    capacity: int,
    fps: float,
    repetitions: int = 3,
    include_parse: bool = False,
    registry: ClassRegistry | None = None,
) -> BenchReport:
    if repetitions < 1:
        raise ValidationError(f"repetitions must be >= 1, got {repetitions}")
    registry = registry or ClassRegistry()
    preloaded = None if include_parse else list(iter_frames(read_detections(detections_path, registry)))

    def frames(samples):
        return _timed_frames(detections_path, registry, samples["parse"]) if include_parse else preloaded

    logger.info("Warm-up pass over {}", detections_path)
    _one_pass(frames({"parse": []}), tracker_config, model, capacity, fps,
              {"parse": [], "track": [], "idle": [], "total": []})

    samples: dict[str, list[float]] = {name: [] for name in STAGES}
    counts = None
    frames_processed = 0
    wall = 0.0
    for rep in range(repetitions):
        start = time.perf_counter()
        n, rows, verdicts, tracks = _one_pass(frames(samples), tracker_config, model, capacity, fps, samples)
        wall += time.perf_counter() - start
        frames_processed += n
        if counts is not None and counts != (n, rows, verdicts, tracks):
            raise InvariantError(f"Repetition {rep} produced {(n, rows, verdicts, tracks)}, expected {counts}")
        counts = (n, rows, verdicts, tracks)

    if frames_processed == 0 or wall <= 0:
        raise ValidationError(f"No frames to benchmark in {detections_path}")
    stages = {name: LatencyStats.from_seconds(samples[name]) for name in STAGES if samples[name]}
    video = frames_processed / fps
    report = BenchReport(
        frames_processed=frames_processed,
        wall_time=wall,
        throughput_fps=frames_processed / wall,
        stages=stages,
        video_duration_equivalent=video,
        speed_factor=wall / video,
        fps=fps,
        capacity=capacity,
        repetitions=repetitions,
        include_parse=include_parse,
        track_rows=counts[1],
        verdicts=counts[2],
        tracks=counts[3],
    )
    logger.info("Bench: {:.1f} FPS over {} frames (buffer {})", report.throughput_fps, frames_processed, capacity)
    return report


def sweep_buffer(
    detections_path: Path,
    tracker_config: TrackerConfig,
    model: IdleModel,
    buffers: Sequence[int],
    *,
    fps: float,
    repetitions: int = 3,
    include_parse: bool = False,
    registry: ClassRegistry | None = None,
) -> list[BenchReport]:
    return [
        run_bench(
            detections_path, tracker_config, model,
            capacity=b, fps=fps, repetitions=repetitions, include_parse=include_parse, registry=registry,
        )
        for b in buffers
    ]


def render_sweep(reports: Sequence[BenchReport]) -> str:
    header = f"{'Buffer':>6}{'Window s':>10}{'FPS':>10}{'idle ms':>10}{'verdicts':>10}"
    lines = [header]
    for r in reports:
        idle = r.stages.get("idle")
        lines.append(
            f"{r.capacity:>6}{r.capacity / r.fps:>10.2f}{r.throughput_fps:>10.1f}"
            f"{(idle.mean_ms if idle else 0.0):>10.4f}{r.verdicts:>10}"
        )
    return "\n".join(lines) + "\n"
