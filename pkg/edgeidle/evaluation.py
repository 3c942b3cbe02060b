"""Scores for idle classification, tracking and detection.

Idle is the positive class throughout. Tracking scores come from
motmetrics with our own IoU distance so that the match threshold is
``iou_match`` exactly.
"""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Literal, Protocol, Sequence

import motmetrics as mm
import numpy as np

from edgeidle import __version__
from edgeidle.core import BBox, ClassLabel, Detection, TrackId, boxes_to_array, iou_matrix
from edgeidle.errors import EmptyEvaluationError, ValidationError
from edgeidle.idle import IdleState, IdleVerdict, WindowFeatures
from edgeidle.logger import logger
from edgeidle.matching import hungarian_assign
from edgeidle.simulator import DEFAULT_EPS_V, GroundTruth, GroundTruthObject, WindowLabel, oracle_label_span

REPORT_SCHEMA_VERSION = 1
MOT_METRICS = [
    "mota", "motp", "idf1", "idp", "idr",
    "num_switches", "num_false_positives", "num_misses", "num_objects",
]


class TrackLike(Protocol):
    frame_index: int
    track_id: TrackId
    bbox: BBox


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass(frozen=True)
class IdleReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_counts(cls, tp: int, fp: int, tn: int, fn: int) -> IdleReport:
        total = tp + fp + tn + fn
        if total == 0:
            raise EmptyEvaluationError("No windows to evaluate")
        precision = _ratio(tp, tp + fp)
        recall = _ratio(tp, tp + fn)
        return cls(
            accuracy=(tp + tn) / total,
            precision=precision,
            recall=recall,
            f1=_f1(precision, recall),
            tp=tp, fp=fp, tn=tn, fn=fn,
        )


@dataclass(frozen=True)
class MotReport:
    mota: float
    motp: float
    idf1: float
    id_precision: float
    id_recall: float
    id_switches: int
    false_positives: int
    false_negatives: int
    num_objects: int


@dataclass(frozen=True)
class ClassPRF:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class DetectionReport:
    overall: ClassPRF
    per_class: dict[str, ClassPRF]


@dataclass(frozen=True, slots=True)
class AlignedWindow:
    """A verdict joined to its ground-truth label.

    Unmatched verdicts and unmatched oracle windows are kept with ``matched``
    False and a truth/prediction pair that always disagrees.
    """

    predicted: IdleState
    truth: IdleState
    matched: bool
    verdict: IdleVerdict | None = None
    entity_id: int | None = None
    window: tuple[int, int] | None = None


# ---------------------------------------------------------------------------
# Idle classification
# ---------------------------------------------------------------------------


def idle_metrics(aligned: Iterable[AlignedWindow]) -> IdleReport:
    counts = Counter()
    for a in aligned:
        pred_idle = a.predicted is IdleState.IDLE
        true_idle = a.truth is IdleState.IDLE
        counts[("t" if pred_idle == true_idle else "f") + ("p" if pred_idle else "n")] += 1
    if not counts:
        logger.error("Nothing to evaluate: no verdicts and no oracle windows")
        raise EmptyEvaluationError("Empty join between verdicts and oracle labels")
    return IdleReport.from_counts(counts["tp"], counts["fp"], counts["tn"], counts["fn"])


def _frames(tracks: Iterable[TrackLike]) -> dict[int, list[TrackLike]]:
    by_frame: dict[int, list[TrackLike]] = defaultdict(list)
    for t in tracks:
        by_frame[t.frame_index].append(t)
    return by_frame


def _match_frame(hyps: Sequence[TrackLike], objs: Sequence[GroundTruthObject], iou_match: float):
    if not hyps or not objs:
        return []
    iou = iou_matrix(boxes_to_array(o.bbox for o in objs), boxes_to_array(h.bbox for h in hyps))
    return hungarian_assign(1.0 - iou, 1.0 - iou_match).matches


def track_owners(tracks: Iterable[TrackLike], gt: GroundTruth, iou_match: float = 0.5) -> dict[TrackId, int]:
    """Entity owning at least half of each track's matched frames."""
    hits: dict[TrackId, Counter] = defaultdict(Counter)
    for frame, hyps in sorted(_frames(tracks).items()):
        if frame >= gt.frame_count:
            continue
        objs = [o for o in gt.frames[frame] if o.visible]
        for gi, hi in _match_frame(hyps, objs, iou_match):
            hits[hyps[hi].track_id][objs[gi].entity_id] += 1
    owners = {}
    for tid, counter in hits.items():
        entity, n = min(counter.items(), key=lambda kv: (-kv[1], kv[0]))
        if 2 * n >= sum(counter.values()):
            owners[tid] = entity
    return owners


def _unmatched_verdict(v: IdleVerdict) -> AlignedWindow:
    return AlignedWindow(v.state, v.state.other, False, v, None, v.window)


def align_verdicts(
    verdicts: Sequence[IdleVerdict],
    tracks: Iterable[TrackLike],
    gt: GroundTruth,
    windows: Sequence[WindowLabel] = (),
    mode: Literal["exact", "span"] = "exact",
    *,
    iou_match: float = 0.5,
    eps_v: float = DEFAULT_EPS_V,
) -> list[AlignedWindow]:
    """Join verdicts to ground truth.

    ``exact`` matches a verdict to the oracle window with the same span for
    the entity that owns its track; leftover verdicts and leftover windows
    count as errors. ``span`` labels each verdict's own span from the owner's
    true motion and ignores oracle windows.
    """
    if mode not in ("exact", "span"):
        raise ValidationError(f"Unknown alignment mode {mode!r}")
    owners = track_owners(tracks, gt, iou_match)
    ordered = sorted(verdicts, key=lambda v: (v.first_frame, v.track_id))
    out: list[AlignedWindow] = []

    if mode == "span":
        for v in ordered:
            owner = owners.get(v.track_id)
            truth = None if owner is None else oracle_label_span(gt, owner, v.first_frame, v.last_frame, eps_v)
            if truth is None:
                out.append(_unmatched_verdict(v))
            else:
                out.append(AlignedWindow(v.state, truth, True, v, owner, v.window))
        return out

    open_windows = {(w.entity_id, w.first_frame, w.last_frame): w for w in windows}
    for v in ordered:
        owner = owners.get(v.track_id)
        w = open_windows.pop((owner, v.first_frame, v.last_frame), None) if owner is not None else None
        if w is None:
            out.append(_unmatched_verdict(v))
        else:
            out.append(AlignedWindow(v.state, w.label, True, v, owner, v.window))
    for w in sorted(open_windows.values(), key=lambda w: (w.first_frame, w.entity_id)):
        out.append(AlignedWindow(w.label.other, w.label, False, None, w.entity_id, (w.first_frame, w.last_frame)))
    unmatched = sum(not a.matched for a in out)
    if unmatched:
        logger.debug("{} of {} aligned windows are unmatched", unmatched, len(out))
    return out


def labeled_windows(aligned: Iterable[AlignedWindow]) -> list[tuple[WindowFeatures, IdleState]]:
    return [(a.verdict.features, a.truth) for a in aligned if a.matched and a.verdict is not None]


# ---------------------------------------------------------------------------
# Tracking
# ---------------------------------------------------------------------------


def mot_metrics(tracks: Iterable[TrackLike], gt: GroundTruth, iou_match: float = 0.5) -> MotReport:
    by_frame = _frames(tracks)
    last = max([gt.frame_count - 1, *by_frame])
    acc = mm.MOTAccumulator(auto_id=False)
    for frame in range(last + 1):
        objs = [o for o in gt.frames[frame] if o.visible] if frame < gt.frame_count else []
        hyps = by_frame.get(frame, [])
        iou = iou_matrix(boxes_to_array(o.bbox for o in objs), boxes_to_array(h.bbox for h in hyps))
        dist = np.where(iou >= iou_match, 1.0 - iou, np.nan)
        acc.update([o.entity_id for o in objs], [int(h.track_id) for h in hyps], dist, frameid=frame)

    summary = mm.metrics.create().compute(acc, metrics=MOT_METRICS, name="overall")
    row = summary.loc["overall"]

    def real(name: str) -> float:
        value = float(row[name])
        return value if np.isfinite(value) else 0.0

    motp_distance = float(row["motp"])
    report = MotReport(
        mota=real("mota") if row["num_objects"] else 0.0,
        motp=1.0 - motp_distance if np.isfinite(motp_distance) else 0.0,
        idf1=real("idf1"),
        id_precision=real("idp"),
        id_recall=real("idr"),
        id_switches=int(row["num_switches"]),
        false_positives=int(row["num_false_positives"]),
        false_negatives=int(row["num_misses"]),
        num_objects=int(row["num_objects"]),
    )
    logger.debug("MOT: {}", report)
    return report


def ground_truth_from_tracks(
    tracks: Iterable[TrackLike], fps: float = 10.0, frame_size: tuple[float, float] = (1920.0, 1080.0)
) -> GroundTruth:
    """Treat a tracked stream as ground truth (track ids become entity ids)."""
    by_frame = _frames(tracks)
    frame_count = max(by_frame, default=-1) + 1
    frames = []
    for t in range(frame_count):
        frames.append([
            GroundTruthObject(int(h.track_id), getattr(h, "cls", None) or ClassLabel(0, "unknown"), h.bbox, True)
            for h in by_frame.get(t, [])
        ])
    return GroundTruth(fps, frame_size, frames)


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------


def detection_prf(detections: Iterable[Detection], gt: GroundTruth, iou_thresh: float = 0.5) -> DetectionReport:
    """Greedy, confidence-descending one-to-one matching per frame and class."""
    counts: dict[str, Counter] = defaultdict(Counter)
    by_frame: dict[int, list[Detection]] = defaultdict(list)
    for d in detections:
        by_frame[d.frame_index].append(d)

    for frame in range(max([gt.frame_count - 1, *by_frame.keys()], default=-1) + 1):
        objs = [o for o in gt.frames[frame] if o.visible] if frame < gt.frame_count else []
        preds = sorted(by_frame.get(frame, []), key=lambda d: -d.confidence)
        taken = [False] * len(objs)
        iou = iou_matrix(boxes_to_array(d.bbox for d in preds), boxes_to_array(o.bbox for o in objs))
        for pi, d in enumerate(preds):
            best, best_iou = None, iou_thresh
            for gi, o in enumerate(objs):
                if taken[gi] or o.cls.id != d.cls.id:
                    continue
                if iou[pi, gi] >= best_iou:
                    if best is None or iou[pi, gi] > iou[pi, best]:
                        best, best_iou = gi, iou[pi, gi]
            if best is None:
                counts[d.cls.name]["fp"] += 1
            else:
                taken[best] = True
                counts[d.cls.name]["tp"] += 1
        for gi, o in enumerate(objs):
            if not taken[gi]:
                counts[o.cls.name]["fn"] += 1

    def prf(c: Counter) -> ClassPRF:
        p = _ratio(c["tp"], c["tp"] + c["fp"])
        r = _ratio(c["tp"], c["tp"] + c["fn"])
        return ClassPRF(p, r, _f1(p, r), c["tp"], c["fp"], c["fn"])

    total = sum(counts.values(), Counter())
    return DetectionReport(prf(total), {name: prf(c) for name, c in sorted(counts.items())})


# ---------------------------------------------------------------------------
# Utilization and reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UtilizationRow:
    key: str
    idle_seconds: float
    active_seconds: float

    @property
    def idle_ratio(self) -> float:
        return _ratio(self.idle_seconds, self.idle_seconds + self.active_seconds)


@dataclass(frozen=True)
class UtilizationSummary:
    per_track: list[UtilizationRow] = field(default_factory=list)
    per_class: list[UtilizationRow] = field(default_factory=list)


def utilization_summary(verdicts: Iterable[IdleVerdict], fps: float) -> UtilizationSummary:
    """Idle and active seconds per track and per class, from verdict window lengths."""
    if fps <= 0:
        raise ValidationError(f"fps must be positive, got {fps}")
    tracks: dict[int, list[float]] = defaultdict(lambda: [0.0, 0.0])
    classes: dict[str, list[float]] = defaultdict(lambda: [0.0, 0.0])
    for v in verdicts:
        seconds = v.features.n / fps
        slot = 0 if v.state is IdleState.IDLE else 1
        tracks[int(v.track_id)][slot] += seconds
        classes[v.cls.name if v.cls else "unknown"][slot] += seconds
    return UtilizationSummary(
        per_track=[UtilizationRow(str(k), *tracks[k]) for k in sorted(tracks)],
        per_class=[UtilizationRow(k, *classes[k]) for k in sorted(classes)],
    )


def _pct(x: float) -> str:
    return f"{100 * x:.2f}%"


def render_table(
    idle: IdleReport | None = None,
    mot: MotReport | None = None,
    detection: DetectionReport | None = None,
) -> str:
    rows: list[tuple[str, str]] = []
    if idle is not None:
        rows += [
            ("Accuracy", _pct(idle.accuracy)),
            ("Precision", _pct(idle.precision)),
            ("Recall", _pct(idle.recall)),
            ("F1", _pct(idle.f1)),
        ]
    if mot is not None:
        rows += [
            ("MOTA", _pct(mot.mota)),
            ("MOTP", _pct(mot.motp)),
            ("IDF1", _pct(mot.idf1)),
            ("ID Precision", _pct(mot.id_precision)),
            ("ID Recall", _pct(mot.id_recall)),
            ("ID Switches", str(mot.id_switches)),
            ("False Positives", str(mot.false_positives)),
            ("False Negatives", str(mot.false_negatives)),
        ]
    if detection is not None:
        rows += [
            ("Detection Precision", _pct(detection.overall.precision)),
            ("Detection Recall", _pct(detection.overall.recall)),
            ("Detection F1", _pct(detection.overall.f1)),
        ]
    if not rows:
        return ""
    name_w = max(len("Metric"), *(len(n) for n, _ in rows))
    value_w = max(len("Value"), *(len(v) for _, v in rows))
    lines = [f"{'Metric':<{name_w}}  {'Value':>{value_w}}", f"{'-' * name_w}  {'-' * value_w}"]
    lines += [f"{n:<{name_w}}  {v:>{value_w}}" for n, v in rows]
    return "\n".join(lines) + "\n"


def report_document(
    idle: IdleReport | None = None,
    mot: MotReport | None = None,
    detection: DetectionReport | None = None,
    utilization: UtilizationSummary | None = None,
) -> dict:
    doc: dict = {"schema_version": REPORT_SCHEMA_VERSION, "generator": f"edgeidle {__version__}"}
    if idle is not None:
        doc["idle"] = asdict(idle)
    if mot is not None:
        doc["mot"] = asdict(mot)
    if detection is not None:
        doc["detection"] = {
            "overall": asdict(detection.overall),
            "per_class": {k: asdict(v) for k, v in detection.per_class.items()},
        }
    if utilization is not None:
        doc["utilization"] = {
            section: [
                {"key": r.key, "idle_seconds": r.idle_seconds, "active_seconds": r.active_seconds,
                 "idle_ratio": r.idle_ratio}
                for r in rows
            ]
            for section, rows in (("per_track", utilization.per_track), ("per_class", utilization.per_class))
        }
    return doc
