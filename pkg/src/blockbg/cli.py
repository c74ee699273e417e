"""Command-line entry point: ``blockbg {estimate,evaluate,segment,synth}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import EstimatorConfig, load_config_file
from .errors import BlockBgError, ConfigError, SnapshotError
from .evalkit import (average_reports, direct_gaussian_model, evaluate_background,
                      segment_sequence)
from .frame_io import load_sequence, read_image, write_image, write_sequence
from .mrf import BackgroundGrid, estimate_background
from .snapshot import load_model, save_model

REPORT_SCHEMA = "blockbg.report/1"


class StageError(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage} failed: {cause}")
        self.stage = stage


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, (BlockBgError, ValueError, OSError)):
            raise StageError(self.name, exc) from exc
        return False


_CONFIG_FLAGS = {
    "block_size": ("--block-size", int),
    "t1": ("--t1", float),
    "t2": ("--t2", float),
    "fps": ("--fps", float),
    "eta": ("--eta", float),
    "w_max_seconds": ("--w-max-seconds", float),
    "icm_iterations": ("--icm-iterations", int),
    "temperature_divisor": ("--temperature-divisor", float),
    "truncation": ("--truncation", str),
    "training_frames": ("--training-frames", int),
}


def _add_estimator_flags(parser):
    group = parser.add_argument_group("estimator configuration")
    group.add_argument("--config", help="flat key = value configuration file")
    for key, (flag, kind) in _CONFIG_FLAGS.items():
        extra = {"choices": ("square", "zigzag")} if key == "truncation" else {}
        group.add_argument(flag, dest=key, type=kind, default=None, **extra)
    group.add_argument("--parallel", dest="parallel", action="store_true", default=None,
                       help="synchronous-update ICM across threads")
    group.add_argument("--width", type=int, help="frame width for raw input")
    group.add_argument("--height", type=int, help="frame height for raw input")


def _effective_config(args) -> EstimatorConfig:
    config = load_config_file(args.config) if args.config else EstimatorConfig()
    overrides = {k: getattr(args, k) for k in list(_CONFIG_FLAGS) + ["parallel"]
                 if getattr(args, k, None) is not None}
    try:
        return config.replace(**overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _write_report(path, report: dict) -> None:
    text = json.dumps(report, indent=2, sort_keys=True, default=_json_default) + "\n"
    if path is None:
        sys.stdout.write(text)
        return
    Path(path).write_text(text)


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _base_report(command: str, config: EstimatorConfig | None, args) -> dict:
    report = {"schema": REPORT_SCHEMA, "version": __version__, "command": command,
              "argv": [str(a) for a in sys.argv[1:]]}
    if config is not None:
        report["config"] = config.as_dict()
    return report


def _load(path, args, config: EstimatorConfig):
    return load_sequence(path, width=args.width, height=args.height, fps=config.fps)


def run_estimate(args) -> int:
    with _Stage("configuration"):
        config = _effective_config(args)
    with _Stage("ingest"):
        frames = _load(args.input, args, config)
    with _Stage("estimate"):
        result = estimate_background(frames, config)
    report = _base_report("estimate", config, args)
    report.update(result.report)
    if args.truth:
        with _Stage("evaluate"):
            truth = read_image(args.truth)
            h, w = result.image.shape
            report.update(evaluate_background(result.image, truth[:h, :w]).as_dict())
    with _Stage("write"):
        write_image(result.image, args.out)
        if args.model_out:
            save_model(result.model, args.model_out, labels=result.grid.labels)
        _write_report(args.report, report)
    return 0


def run_evaluate(args) -> int:
    config = None
    with _Stage("ingest"):
        truth = read_image(args.truth)
    if args.input:
        with _Stage("configuration"):
            config = _effective_config(args)
        with _Stage("ingest"):
            frames = _load(args.input, args, config)
        reports, runs = [], []
        with _Stage("estimate"):
            for part in frames.split(args.splits):
                result = estimate_background(part, config)
                h, w = result.image.shape
                reports.append(evaluate_background(result.image, truth[:h, :w], args.threshold))
                runs.append({"frames": part.frame_count, **reports[-1].as_dict(),
                             "runtime_ms": result.report["runtime_ms"],
                             "peak_model_bytes": result.report["peak_model_bytes"],
                             "frames_per_second": result.report["frames_per_second"]})
        report = _base_report("evaluate", config, args)
        report.update(average_reports(reports))
        report.update(splits=args.splits, runs=runs,
                      runtime_ms=float(sum(r["runtime_ms"] for r in runs)),
                      peak_model_bytes=max(r["peak_model_bytes"] for r in runs),
                      frames_per_second=float(np.mean([r["frames_per_second"] for r in runs])))
    elif args.estimate:
        with _Stage("evaluate"):
            estimate = read_image(args.estimate)
            if estimate.shape != truth.shape:
                raise StageError("evaluate", ValueError(
                    f"estimate is {estimate.shape[1]}x{estimate.shape[0]}, "
                    f"truth is {truth.shape[1]}x{truth.shape[0]}"))
            report = _base_report("evaluate", None, args)
            report.update(evaluate_background(estimate, truth, args.threshold).as_dict())
    else:
        raise StageError("configuration", ConfigError("give --estimate or --in"))
    with _Stage("write"):
        _write_report(args.report, report)
    return 0


def run_segment(args) -> int:
    with _Stage("snapshot"):
        model, labels = load_model(args.model)
        if labels is None:
            raise SnapshotError(f"{args.model}: snapshot holds no chosen background labels")
        grid = BackgroundGrid(model, labels)
    with _Stage("ingest"):
        frames = load_sequence(args.input, width=args.width, height=args.height, fps=model.fps)
        train = frames if not args.train else load_sequence(
            args.train, width=args.width, height=args.height, fps=model.fps)
        truth_masks = None
        if args.truth_masks:
            truth_masks = load_sequence(args.truth_masks).frames > 127
            if len(truth_masks) != len(frames):
                raise ConfigError(f"{len(truth_masks)} truth masks for {len(frames)} frames")
    with _Stage("segment"):
        mrf_mean = grid.mean_image()
        mrf_var = grid.render_variance()
        h, w = mrf_mean.shape
        direct_mean, direct_var = direct_gaussian_model(train.frames[:, :h, :w])
        masks, mrf_score = segment_sequence(frames, mrf_mean, mrf_var, truth_masks,
                                            args.k, args.var_floor)
        _, direct_score = segment_sequence(frames, direct_mean, direct_var, truth_masks,
                                           args.k, args.var_floor)
    report = _base_report("segment", None, args)
    report.update(frames=len(frames), k=args.k, var_floor=args.var_floor)
    if mrf_score is not None:
        report["modes"] = {"mrf": mrf_score.as_dict(), "direct": direct_score.as_dict()}
        report["similarity"] = mrf_score.similarity
        base = direct_score.similarity
        report["relative_improvement"] = (mrf_score.similarity - base) / base if base else None
    with _Stage("write"):
        if args.out_masks:
            write_sequence([(m * 255).astype(np.uint8) for m in masks], args.out_masks)
        _write_report(args.report, report)
    return 0


def run_synth(args) -> int:
    from .synth import bootstrap_spec, load_spec, stationary_occluder_spec, synth_sequence, write_synthetic

    with _Stage("configuration"):
        if args.spec:
            spec = load_spec(args.spec)
        else:
            spec = bootstrap_spec() if args.preset == "bootstrap" else stationary_occluder_spec()
        spec.validate()
    with _Stage("synthesise"):
        seq = synth_sequence(spec, seed=args.seed)
    with _Stage("write"):
        write_synthetic(seq, spec, args.seed, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockbg", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate the background of a sequence")
    p.add_argument("--in", dest="input", required=True, help="frame directory or raw luma file")
    p.add_argument("--out", required=True, help="background image (.pgm or .png)")
    p.add_argument("--report", help="JSON report path (stdout when omitted)")
    p.add_argument("--truth", help="true background, adds age/ep/cep to the report")
    p.add_argument("--model-out", help="write a scene-model snapshot with the chosen labels")
    _add_estimator_flags(p)
    p.set_defaults(func=run_estimate)

    p = sub.add_parser("evaluate", help="score a background against ground truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--estimate", help="estimated background image")
    p.add_argument("--in", dest="input", help="estimate from these frames instead")
    p.add_argument("--splits", type=int, choices=(1, 2, 4), default=1,
                   help="estimate on 1, 2 or 4 consecutive sub-sequences and average")
    p.add_argument("--threshold", type=float, default=20.0, help="error-pixel threshold")
    p.add_argument("--report")
    _add_estimator_flags(p)
    p.set_defaults(func=run_evaluate)

    p = sub.add_parser("segment", help="Gaussian foreground segmentation")
    p.add_argument("--model", required=True, help="snapshot written by estimate --model-out")
    p.add_argument("--in", dest="input", required=True, help="frames to segment")
    p.add_argument("--train", help="training frames for direct initialisation (default: --in)")
    p.add_argument("--truth-masks", help="directory of ground-truth masks")
    p.add_argument("--out-masks", help="directory for predicted masks")
    p.add_argument("--k", type=float, default=2.5)
    p.add_argument("--var-floor", type=float, default=4.0)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--report")
    p.set_defaults(func=run_segment)

    p = sub.add_parser("synth", help="render a synthetic cluttered sequence")
    p.add_argument("--spec", help="JSON sequence description")
    p.add_argument("--preset", choices=("stationary", "bootstrap"), default="stationary")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=run_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"blockbg {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
