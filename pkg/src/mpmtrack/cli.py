"""Command-line interface.

Subcommands: simulate, encode, track, eval, render. Option precedence is
command-line flags over --config file values over built-in defaults; the
effective configuration is echoed as JSON into each command's output
directory. Exit codes: 0 success, 1 validation failure, 2 I/O failure,
3 internal error.
"""

import argparse
import json
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .detection import DetectorConfig
from .errors import (
    ConfigError,
    GenerationError,
    InputError,
    SequenceError,
)
from .fields import EncoderConfig, validate_annotations
from .formats import (
    FileProvider,
    field_path,
    read_annotations,
    read_tracks,
    write_annotations,
    write_mpm,
    write_tracks,
)
from .metrics import DetectionMatchConfig, evaluate_tracking, match_detections
from .render import render_tracks
from .simulate import NoiseConfig, SimConfig, degrade, oracle_provider, simulate
from .tracking import TrackerConfig, registry_from_annotations, track_sequence


def _read_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON: {e}") from None
    if not isinstance(data, dict):
        raise InputError(f"{path}: config must be a JSON object")
    return data


def _merged(args, defaults: dict) -> dict:
    """flags > config file > defaults, restricted to the known keys."""
    file_cfg = {}
    if getattr(args, "config", None):
        file_cfg = _read_config_file(args.config)
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise InputError(
                f"{args.config}: unknown config keys: {', '.join(sorted(unknown))}"
            )
    merged = {}
    for key, default in defaults.items():
        value = getattr(args, key, None)
        if value is None:
            value = file_cfg.get(key, default)
        merged[key] = value
    return merged


def _echo_config(directory, command: str, merged: dict) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, **merged}
    (directory / f"{command}_config.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _thread_cap() -> int:
    raw = os.environ.get("MPM_THREADS", "1").strip() or "1"
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"MPM_THREADS must be an integer, got {raw!r}") from None
    return max(1, value)


_SIM_DEFAULTS = {
    "width": 256,
    "height": 256,
    "cells": 10,
    "frames": 50,
    "step_sigma": 2.0,
    "max_step": 6.0,
    "division_prob": 0.0,
    "min_separation": 48.0,
    "margin": 10.0,
    "seed": 0,
}


def _cmd_simulate(args) -> int:
    cfg_values = _merged(args, _SIM_DEFAULTS)
    cfg = SimConfig(
        width=int(cfg_values["width"]),
        height=int(cfg_values["height"]),
        n_initial_cells=int(cfg_values["cells"]),
        n_frames=int(cfg_values["frames"]),
        step_sigma=float(cfg_values["step_sigma"]),
        max_step=float(cfg_values["max_step"]),
        division_prob=float(cfg_values["division_prob"]),
        min_separation=float(cfg_values["min_separation"]),
        boundary_margin=float(cfg_values["margin"]),
        seed=int(cfg_values["seed"]),
    )
    annotations = simulate(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_annotations(annotations, out)
    _echo_config(out.parent, "simulate", cfg_values)
    cells = len({a.cell_id for a in annotations})
    print(f"simulated {cells} cells over {cfg.n_frames} frames -> {out}")
    return 0


_ENCODE_DEFAULTS = {
    "width": 256,
    "height": 256,
    "sigma": 6.0,
    "cutoff": None,
    "gap": 1,
}


def _cmd_encode(args) -> int:
    values = _merged(args, _ENCODE_DEFAULTS)
    encoder = EncoderConfig(
        width=int(values["width"]),
        height=int(values["height"]),
        sigma=float(values["sigma"]),
        cutoff_radius=None if values["cutoff"] is None else float(values["cutoff"]),
    )
    gap = int(values["gap"])
    if gap < 1:
        raise InputError(f"gap must be >= 1, got {gap}")
    annotations = read_annotations(args.annotations)
    validate_annotations(annotations, encoder.width, encoder.height)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    provider = oracle_provider(annotations, encoder)
    jobs = []
    if annotations:
        for earlier in range(provider.first, provider.last - gap + 1):
            jobs.append((earlier, earlier + gap))

    def encode_one(pair):
        earlier, later = pair
        field = provider.get(earlier, later)
        write_mpm(field, field_path(out_dir, earlier, later))

    workers = _thread_cap()
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(encode_one, jobs))
    else:
        for job in jobs:
            encode_one(job)
    _echo_config(out_dir, "encode", {**values, "cutoff": encoder.cutoff_radius})
    print(f"encoded {len(jobs)} field(s) -> {out_dir}")
    return 0


_TRACK_DEFAULTS = {
    "width": 256,
    "height": 256,
    "sigma": 6.0,
    "cutoff": None,
    "q": 5,
    "max_termination_age": 10,
    "eps": 1e-3,
    "smooth_sigma": 2.0,
    "peak_threshold": 0.3,
    "min_separation": 3,
    "drop_prob": 0.0,
    "max_consecutive_drops": 2,
    "vector_noise": 0.0,
    "clutter_rate": 0.0,
    "noise_seed": 0,
    "first": None,
    "last": None,
    "no_recovery": False,
}


def _cmd_track(args) -> int:
    if bool(args.annotations) == bool(args.fields_dir):
        raise InputError("exactly one of --annotations or --fields-dir is required")
    values = _merged(args, _TRACK_DEFAULTS)
    tracker_cfg = TrackerConfig(
        q=int(values["q"]),
        max_termination_age=int(values["max_termination_age"]),
        zero_confidence_eps=float(values["eps"]),
        detector=DetectorConfig(
            smooth_sigma=float(values["smooth_sigma"]),
            peak_threshold=float(values["peak_threshold"]),
            min_separation=int(values["min_separation"]),
        ),
    )
    first, last = values["first"], values["last"]
    if args.annotations:
        annotations = read_annotations(args.annotations)
        encoder = EncoderConfig(
            width=int(values["width"]),
            height=int(values["height"]),
            sigma=float(values["sigma"]),
            cutoff_radius=None if values["cutoff"] is None else float(values["cutoff"]),
        )
        validate_annotations(annotations, encoder.width, encoder.height)
        provider = oracle_provider(annotations, encoder)
        noise = NoiseConfig(
            drop_prob=float(values["drop_prob"]),
            max_consecutive_drops=int(values["max_consecutive_drops"]),
            vector_noise_sigma=float(values["vector_noise"]),
            clutter_rate=float(values["clutter_rate"]),
            seed=int(values["noise_seed"]),
        )
        if noise.drop_prob > 0 or noise.vector_noise_sigma > 0 or noise.clutter_rate > 0:
            provider = degrade(provider, noise)
        if annotations:
            frames = sorted({a.frame for a in annotations})
            if first is None:
                first = frames[0]
            if last is None:
                last = frames[-1]
        else:
            first = 0 if first is None else first
            last = 0 if last is None else last
    else:
        provider = FileProvider(args.fields_dir)
        span = provider.frame_range()
        if span is None and (first is None or last is None):
            raise InputError(
                f"{args.fields_dir}: no adjacent field files; pass --first/--last"
            )
        if first is None:
            first = span[0]
        if last is None:
            last = span[1]
    first, last = int(first), int(last)
    registry = track_sequence(
        provider, first, last, tracker_cfg, recover=not bool(values["no_recovery"])
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_tracks(registry, out)
    _echo_config(out.parent, "track", {**values, "first": first, "last": last})
    n_div = sum(
        1 for t in registry.trajectories.values() if t.parent_track is not None
    )
    print(
        f"tracked frames [{first}, {last}]: {len(registry.trajectories)} track(s), "
        f"{n_div // 2} division(s) -> {out}"
    )
    return 0


_EVAL_DEFAULTS = {"radius": 10.0, "greedy": False}


def _cmd_eval(args) -> int:
    values = _merged(args, _EVAL_DEFAULTS)
    cfg = DetectionMatchConfig(
        match_radius=float(values["radius"]), greedy=bool(values["greedy"])
    )
    annotations = read_annotations(args.truth)
    truth = registry_from_annotations(annotations)
    pred = read_tracks(args.pred)

    truth_frames = {pt.frame for t in truth.trajectories.values() for pt in t.points}
    pred_frames = {pt.frame for t in pred.trajectories.values() for pt in t.points}
    if truth_frames and pred_frames and not (truth_frames & pred_frames):
        print("warning: truth and prediction frame ranges are disjoint", file=sys.stderr)

    tp = fp = fn = 0
    by_frame_truth: dict[int, list[tuple[float, float]]] = {}
    by_frame_pred: dict[int, list[tuple[float, float]]] = {}
    for t in truth.trajectories.values():
        for pt in t.points:
            by_frame_truth.setdefault(pt.frame, []).append((pt.x, pt.y))
    for t in pred.trajectories.values():
        for pt in t.points:
            by_frame_pred.setdefault(pt.frame, []).append((pt.x, pt.y))
    for f in sorted(truth_frames | pred_frames):
        score = match_detections(
            by_frame_truth.get(f, []), by_frame_pred.get(f, []), cfg
        )
        tp += score.tp
        fp += score.fp
        fn += score.fn
    precision = 1.0 if tp + fp == 0 else tp / (tp + fp)
    recall = 1.0 if tp + fn == 0 else tp / (tp + fn)
    f1 = 0.0 if precision == 0 or recall == 0 else 2 * precision * recall / (precision + recall)

    score = evaluate_tracking(truth, pred, cfg)
    report = {
        "detection": {
            "tp": tp,
            "fp": fp,
            "fn": fn,
            "precision": precision,
            "recall": recall,
            "f1": f1,
        },
        "association_accuracy": {
            "numerator": score.assoc_true,
            "denominator": score.assoc_total,
            "value": score.association_accuracy,
        },
        "target_effectiveness": {
            "numerator": score.covered_frames,
            "denominator": score.target_frames,
            "value": score.target_effectiveness,
            "macro": score.target_effectiveness_macro,
            "per_target": [
                {"target": tid, "effectiveness": eff} for tid, eff in score.per_target
            ],
        },
    }
    print(f"detection: tp={tp} fp={fp} fn={fn} precision={precision:.6f} "
          f"recall={recall:.6f} f1={f1:.6f}")
    print(f"association_accuracy: {score.assoc_true}/{score.assoc_total} "
          f"= {score.association_accuracy:.6f}")
    print(f"target_effectiveness: {score.covered_frames}/{score.target_frames} "
          f"= {score.target_effectiveness:.6f} (macro {score.target_effectiveness_macro:.6f})")
    if args.json:
        out = Path(args.json)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        _echo_config(out.parent, "eval", values)
    return 0


_RENDER_DEFAULTS = {"width": 256, "height": 256}


def _cmd_render(args) -> int:
    values = _merged(args, _RENDER_DEFAULTS)
    registry = read_tracks(args.tracks)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    render_tracks(registry, int(values["width"]), int(values["height"]), out)
    _echo_config(out.parent, "render", values)
    print(f"rendered {len(registry.trajectories)} track(s) -> {out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpmtrack",
        description="Cell tracking on motion-and-position vector fields",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic annotated sequence")
    p.add_argument("--out", required=True, help="annotation CSV to write")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--cells", type=int, help="initial cell count")
    p.add_argument("--frames", type=int)
    p.add_argument("--step-sigma", dest="step_sigma", type=float)
    p.add_argument("--max-step", dest="max_step", type=float)
    p.add_argument("--division-prob", dest="division_prob", type=float)
    p.add_argument("--min-separation", dest="min_separation", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("encode", help="encode annotation pairs into field files")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--cutoff", type=float)
    p.add_argument("--gap", type=int)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("track", help="track a sequence into trajectories")
    p.add_argument("--annotations", help="track oracle fields encoded from this CSV")
    p.add_argument("--fields-dir", dest="fields_dir", help="track field files from this directory")
    p.add_argument("--out", required=True, help="track CSV to write")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--cutoff", type=float)
    p.add_argument("--q", type=int)
    p.add_argument("--max-termination-age", dest="max_termination_age", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--smooth-sigma", dest="smooth_sigma", type=float)
    p.add_argument("--peak-threshold", dest="peak_threshold", type=float)
    p.add_argument("--min-separation", dest="min_separation", type=int)
    p.add_argument("--drop-prob", dest="drop_prob", type=float)
    p.add_argument("--max-consecutive-drops", dest="max_consecutive_drops", type=int)
    p.add_argument("--vector-noise", dest="vector_noise", type=float)
    p.add_argument("--clutter-rate", dest="clutter_rate", type=float)
    p.add_argument("--noise-seed", dest="noise_seed", type=int)
    p.add_argument("--first", type=int)
    p.add_argument("--last", type=int)
    p.add_argument(
        "--no-recovery",
        dest="no_recovery",
        action="store_const",
        const=True,
        help="disable gap recovery of terminated tracks",
    )
    p.set_defaults(func=_cmd_track)

    p = sub.add_parser("eval", help="score predicted tracks against annotations")
    p.add_argument("--truth", required=True, help="annotation CSV")
    p.add_argument("--pred", required=True, help="track CSV")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--radius", type=float)
    p.add_argument(
        "--greedy", action="store_const", const=True, help="greedy per-frame matching"
    )
    p.add_argument("--json", help="write a machine-readable report here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("render", help="draw tracks into a PNG")
    p.add_argument("--tracks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.set_defaults(func=_cmd_render)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as e:
        return 0 if not e.code else 1
    try:
        return args.func(args)
    except (ConfigError, InputError, GenerationError, SequenceError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        traceback.print_exc(file=sys.stderr)
        print(f"internal error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
