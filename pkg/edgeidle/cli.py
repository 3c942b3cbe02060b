"""Command-line surface: simulate, track, idle, pipeline, fit, eval, bench.

Precedence for shared values: command-line flag, then ``APP_*`` environment
variable, then the config file, then built-in defaults.
"""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import yaml
from loguru import logger

import edgeidle.settings as settings
from edgeidle import __version__
from edgeidle.bench import render_sweep, run_bench, sweep_buffer
from edgeidle.checkpoint import load_checkpoint, save_checkpoint
from edgeidle.config import PipelineConfig, load_config, with_overrides
from edgeidle.errors import EdgeIdleError, InvariantError, ValidationError
from edgeidle.evaluation import (
    align_verdicts,
    detection_prf,
    idle_metrics,
    labeled_windows,
    mot_metrics,
    render_table,
    report_document,
    utilization_summary,
)
from edgeidle.idle import PUBLISHED_MODEL, FitOptions, IdleEngine, IdleModel, IdleState, fit_model
from edgeidle.io import (
    TrackRecord,
    TrackWriter,
    dump_yaml_document,
    iter_frames,
    read_detections,
    read_ground_truth,
    read_labeled_windows,
    read_model,
    read_scenario,
    read_tracks,
    read_verdicts,
    write_detections,
    write_ground_truth,
    write_labeled_windows,
    write_model,
)
from edgeidle.pipeline import Pipeline, run_file, run_idle_stage, run_stream
from edgeidle.simulator import generate, oracle_idle_labels
from edgeidle.tracker import TrackerStore
from edgeidle.utils import parse_int_list

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_INVARIANT = 3


class _Parser(argparse.ArgumentParser):
    # Usage errors are validation failures.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _first(*values):
    return next((v for v in values if v is not None), None)


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    return with_overrides(
        cfg,
        seed=_first(args.seed, settings.SEED),
        buffer=_first(args.buffer, settings.BUFFER),
        fps=_first(args.fps, settings.FPS),
        model=_first(args.model, settings.MODEL_PATH),
    )


def _model(cfg: PipelineConfig) -> IdleModel:
    if cfg.idle.model is None:
        logger.debug("No model configured, using the published coefficients")
        model = PUBLISHED_MODEL
    else:
        model = read_model(cfg.idle.model)
    if cfg.idle.mad_variant is not None and cfg.idle.mad_variant != model.mad_variant:
        model = replace(model, mad_variant=cfg.idle.mad_variant)
    return model


def _engine(cfg: PipelineConfig, model: IdleModel) -> IdleEngine:
    return IdleEngine(model, cfg.idle.capacity, cfg.idle.fps, cfg.idle.mad_variant)


def _out(path: Path | None, default_name: str) -> Path:
    out = Path(path) if path is not None else settings.OUTPUT_DIR / default_name
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def _companion(tracks: Path) -> Path:
    return tracks.with_name(f"{tracks.stem}_verdicts.csv")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _config(args)
    path = _first(args.scenario, cfg.scenario)
    if path is None:
        raise ValidationError("No scenario given: pass --scenario or set scenario in the config")
    spec = read_scenario(path, cfg.registry())
    if cfg.seed is not None:
        spec = replace(spec, seed=cfg.seed)
    detections, gt = generate(spec)
    det_out = _out(args.detections, "detections.jsonl")
    gt_out = _out(args.ground_truth, "ground_truth.jsonl")
    write_detections(det_out, detections, spec.frame_count)
    write_ground_truth(gt_out, gt)
    logger.info("Simulated {} frames (seed {}): {} detections -> {}, ground truth -> {}",
                spec.frame_count, spec.seed, len(detections), det_out, gt_out)
    return EXIT_OK


def cmd_track(args) -> int:
    cfg = _config(args)
    store = TrackerStore(cfg.tracker)
    out = _out(args.tracks, f"{Path(args.detections).stem}_tracks.csv")
    with TrackWriter(out) as writer:
        for frame_index, dets in iter_frames(read_detections(args.detections, cfg.registry())):
            for o in store.step(dets, frame_index):
                writer.write(TrackRecord(o.frame_index, o.track_id, o.cls, o.bbox, o.confidence))
    logger.info("Wrote {} track rows for {} tracks to {}", writer.rows, store.tracks_created, out)
    return EXIT_OK


def cmd_idle(args) -> int:
    cfg = _config(args)
    engine = _engine(cfg, _model(cfg))
    verdicts = _out(args.verdicts, f"{Path(args.tracks).stem}_verdicts.csv")
    run_idle_stage(
        engine, read_tracks(args.tracks, cfg.registry()), verdicts, args.annotated, max_gap=cfg.idle.max_gap
    )
    logger.info("Wrote verdicts to {}", verdicts)
    return EXIT_OK


def _pipeline_many(args, cfg: PipelineConfig, model: IdleModel) -> int:
    if args.resume or args.checkpoint_out or args.until is not None or args.tracks or args.verdicts:
        raise ValidationError("--tracks, --verdicts, --until, --checkpoint-out and --resume take one stream only")
    out_dir = Path(args.out_dir) if args.out_dir else settings.OUTPUT_DIR
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = []
    for path in args.detections:
        tracks = out_dir / f"{Path(path).stem}_tracks.csv"
        jobs.append((Path(path), tracks, _companion(tracks)))
    workers = max(1, _first(args.jobs, settings.JOBS))
    logger.info("Processing {} streams with {} workers", len(jobs), workers)
    common = (cfg.tracker, model, cfg.idle.capacity, cfg.idle.fps, cfg.registry())
    if workers == 1:
        summaries = [run_file(*job, *common) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_file, *job, *common) for job in jobs]
            summaries = [f.result() for f in futures]
    for s in summaries:
        logger.info("{}: {} frames, {} rows, {} verdicts", s.detections, s.frames, s.rows, s.verdicts)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    model = _model(cfg)
    if len(args.detections) > 1:
        return _pipeline_many(args, cfg, model)

    detections = Path(args.detections[0])
    tracks = _out(args.tracks, f"{detections.stem}_tracks.csv")
    verdicts = Path(args.verdicts) if args.verdicts else _companion(tracks)
    verdicts.parent.mkdir(parents=True, exist_ok=True)
    if args.resume:
        explicit = args.model is not None or settings.MODEL_PATH is not None
        pipeline = load_checkpoint(args.resume, model if explicit else None)
    else:
        pipeline = Pipeline(TrackerStore(cfg.tracker), _engine(cfg, model))

    run_stream(
        pipeline,
        read_detections(detections, cfg.registry()),
        tracks,
        verdicts,
        until=args.until,
        finish=args.until is None,
    )
    if args.checkpoint_out:
        save_checkpoint(args.checkpoint_out, pipeline)
    elif args.until is not None:
        logger.warning("Stopped at frame {} without --checkpoint-out; pending rows are lost", args.until)
    logger.info("Tracks written to {}, verdicts to {}", tracks, verdicts)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _config(args)
    windows = read_labeled_windows(args.windows)
    opts = FitOptions(
        l2=args.l2,
        learning_rate=args.learning_rate,
        max_iter=args.max_iter,
        positive_label=IdleState(args.positive_label),
    )
    variant = cfg.idle.mad_variant or PUBLISHED_MODEL.mad_variant
    model = fit_model(windows, opts, capacity=cfg.idle.capacity, fps=cfg.idle.fps, mad_variant=variant)
    write_model(_out(args.out, "model.yaml"), model)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    registry = cfg.registry()
    ev = cfg.evaluation
    alignment = args.alignment or ev.alignment
    gt = read_ground_truth(args.ground_truth)
    tracks = list(read_tracks(args.tracks, registry))

    verdict_path = Path(args.verdicts) if args.verdicts else _companion(Path(args.tracks))
    idle = utilization = aligned = None
    if verdict_path.exists():
        verdicts = read_verdicts(verdict_path, registry)
        windows = oracle_idle_labels(gt, cfg.idle.capacity, ev.eps_v) if alignment == "exact" else ()
        aligned = align_verdicts(
            verdicts, tracks, gt, windows, alignment, iou_match=ev.iou_match, eps_v=ev.eps_v
        )
        idle = idle_metrics(aligned)
        utilization = utilization_summary(verdicts, cfg.idle.fps)
    elif args.verdicts:
        raise FileNotFoundError(verdict_path)
    else:
        logger.warning("No verdict file at {}; reporting tracking only", verdict_path)

    mot = mot_metrics(tracks, gt, ev.iou_match)
    detection = None
    if args.detections:
        detection = detection_prf(read_detections(args.detections, registry), gt, ev.detection_iou)

    sys.stdout.write(render_table(idle, mot, detection))
    if args.report:
        dump_yaml_document(args.report, report_document(idle, mot, detection, utilization))
        logger.info("Report written to {}", args.report)
    if args.labeled_out:
        if aligned is None:
            raise ValidationError("--labeled-out needs a verdict file")
        n = write_labeled_windows(args.labeled_out, labeled_windows(aligned))
        logger.info("Wrote {} labelled windows to {}", n, args.labeled_out)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config(args)
    model = _model(cfg)
    include_parse = args.include_parse or settings.INCLUDE_PARSE
    common = dict(fps=cfg.idle.fps, repetitions=args.repetitions, include_parse=include_parse,
                  registry=cfg.registry())
    if args.sweep_buffer:
        reports = sweep_buffer(args.detections, cfg.tracker, model, args.sweep_buffer, **common)
        sys.stdout.write(render_sweep(reports))
    else:
        reports = [run_bench(args.detections, cfg.tracker, model, capacity=cfg.idle.capacity, **common)]
        sys.stdout.write(reports[0].render())
    if args.report:
        out = Path(args.report)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(
            yaml.safe_dump({"schema_version": 1, "runs": [r.to_dict() for r in reports]}, sort_keys=False),
            encoding="utf-8",
        )
        logger.info("Bench report written to {}", out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    try:
        return parse_int_list(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="pipeline config YAML")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--model", type=Path, default=None, help="idle model YAML")
    common.add_argument("--buffer", type=int, default=None, help="idle window capacity in frames")
    common.add_argument("--fps", type=float, default=None, help="stream frame rate")

    parser = _Parser(prog="edgeidle", description="Construction machinery tracking and idle-state detection")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="generate detections and ground truth")
    p.add_argument("--scenario", type=Path, default=None)
    p.add_argument("--detections", type=Path, default=None)
    p.add_argument("--ground-truth", type=Path, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", parents=[common], help="run the tracker only")
    p.add_argument("detections", type=Path)
    p.add_argument("--tracks", type=Path, default=None)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("idle", parents=[common], help="classify windows of an existing track file")
    p.add_argument("tracks", type=Path)
    p.add_argument("--verdicts", type=Path, default=None)
    p.add_argument("--annotated", type=Path, default=None, help="also write the tracks with verdicts attached")
    p.set_defaults(func=cmd_idle)

    p = sub.add_parser("pipeline", parents=[common], help="tracking and idle classification end to end")
    p.add_argument("detections", type=Path, nargs="+")
    p.add_argument("--tracks", type=Path, default=None)
    p.add_argument("--verdicts", type=Path, default=None)
    p.add_argument("--out-dir", type=Path, default=None, help="output directory for several streams")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--until", type=int, default=None, help="stop after this frame")
    p.add_argument("--checkpoint-out", type=Path, default=None)
    p.add_argument("--resume", type=Path, default=None)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("fit", parents=[common], help="fit the logistic idle model")
    p.add_argument("windows", type=Path, help="labelled windows CSV")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--l2", type=float, default=FitOptions.l2)
    p.add_argument("--learning-rate", type=float, default=FitOptions.learning_rate)
    p.add_argument("--max-iter", type=int, default=FitOptions.max_iter)
    p.add_argument("--positive-label", choices=[s.value for s in IdleState], default=IdleState.IDLE.value)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", parents=[common], help="score tracks and verdicts against ground truth")
    p.add_argument("tracks", type=Path)
    p.add_argument("ground_truth", type=Path)
    p.add_argument("--verdicts", type=Path, default=None)
    p.add_argument("--detections", type=Path, default=None)
    p.add_argument("--alignment", choices=["exact", "span"], default=None)
    p.add_argument("--report", type=Path, default=None)
    p.add_argument("--labeled-out", type=Path, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common], help="throughput and latency of tracking + idle")
    p.add_argument("detections", type=Path)
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--include-parse", action="store_true")
    p.add_argument("--sweep-buffer", type=_int_list, default=None, metavar="LIST")
    p.add_argument("--report", type=Path, default=None)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvariantError as e:
        logger.critical("Internal invariant broken: {}", e)
        return EXIT_INVARIANT
    except ValidationError as e:
        logger.error("{}", e)
        return EXIT_VALIDATION
    except (EdgeIdleError, OSError) as e:
        logger.error("{}", e)
        return EXIT_RUNTIME
