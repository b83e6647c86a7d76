"""Command-line interface.

Subcommands: ``simulate``, ``process``, ``detect``, ``track``, ``e2e``,
``report``.  Radio/config flags mirror the config-file keys (for example
``--carrier-freq-hz``) and override file values; ``--seed`` overrides every
random seed a scene uses.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from pathlib import Path

import numpy as np

from .core import SYSTEM_CONFIG_KEYS, load_system_config, system_config_from_entries
from .detect import CfarConfig
from .features import WeightMode
from .fileio import read_csi_file, split_frames, ingest_stream, write_csi_file, FRAME_MAGIC
from .pipeline import (
    PipelineOptions,
    read_heights_csv,
    read_truth_csv,
    run_pipeline,
    write_detections_csv,
    write_features_csv,
    write_heights_csv,
    write_truth_csv,
)
from .preprocess import WindowFunction
from .simulator import load_scene
from .track import align_and_score, kalman_unwrap, heights_from_phases, HeightSeries


def _add_config_overrides(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("config overrides")
    for key in sorted(SYSTEM_CONFIG_KEYS):
        group.add_argument(f"--{key.replace('_', '-')}", dest=f"cfg_{key}", default=None)


def _config_overrides(args) -> dict:
    out = {}
    for key in SYSTEM_CONFIG_KEYS:
        value = getattr(args, f"cfg_{key}", None)
        if value is not None:
            out[key] = value
    return out


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("pipeline")
    # the analysis window length comes from the config override
    # --window-duration-s; only the step is a pipeline-level knob
    group.add_argument("--window-step-s", type=float, default=None)
    group.add_argument("--doppler-span-hz", type=float, default=0.5,
                       help="half span of the Doppler grid")
    group.add_argument("--doppler-bins", type=int, default=257)
    group.add_argument("--delay-oversample", type=int, default=4)
    group.add_argument("--loading-db", type=float, default=-20.0)
    group.add_argument("--window-fn", choices=["hamming", "rect"], default="hamming")
    group.add_argument("--cfar-reference", type=int, default=4,
                       help="reference cells per side")
    group.add_argument("--cfar-guard", type=int, default=2, help="guard cells per side")
    group.add_argument("--threshold-factor", type=float, default=0.01)
    group.add_argument("--weight-mode", choices=["auto", "mvdr", "das"], default="auto")
    group.add_argument("--spatial", choices=["auto", "on", "off"], default="auto")
    group.add_argument("--angle-bins", type=int, default=64)
    group.add_argument("--stabilizer-depth", type=int, default=5)
    group.add_argument("--stabilizer-gate", type=int, default=2)
    group.add_argument("--kalman-q", type=float, default=0.01)
    group.add_argument("--kalman-r", type=float, default=0.25)
    group.add_argument("--angle-deg", type=float, default=None,
                       help="fixed reflection angle; default derives from geometry")


def _pipeline_options(args) -> PipelineOptions:
    mode = {"auto": None, "mvdr": WeightMode.MVDR, "das": WeightMode.DELAY_AND_SUM}[args.weight_mode]
    spatial = {"auto": None, "on": True, "off": False}[args.spatial]
    return PipelineOptions(
        window_step_s=args.window_step_s,
        doppler_half_span_hz=args.doppler_span_hz,
        doppler_bins=args.doppler_bins,
        delay_oversample=args.delay_oversample,
        loading_db=args.loading_db,
        window_fn=WindowFunction(args.window_fn),
        cfar=CfarConfig(
            num_reference_cells=args.cfar_reference,
            num_guard_cells=args.cfar_guard,
            threshold_factor=args.threshold_factor,
        ),
        weight_mode=mode,
        spatial=spatial,
        angle_bins=args.angle_bins,
        stabilizer_depth=args.stabilizer_depth,
        stabilizer_gate=args.stabilizer_gate,
        kalman_q=args.kalman_q,
        kalman_r=args.kalman_r,
        reflection_angle_deg=args.angle_deg,
    )


def _load_scene_with_overrides(args):
    scene = load_scene(args.scene, seed=args.seed)
    overrides = _config_overrides(args)
    if overrides:
        entries = [(0, k, str(v)) for k, v in overrides.items()]
        config = system_config_from_entries(entries, source="<cli>", defaults=scene.config)
        scene = dataclasses.replace(scene, config=config)
    if getattr(args, "duration_s", None) is not None:
        scene = dataclasses.replace(scene, duration_s=args.duration_s)
    return scene


def _write_outputs(result, out_dir: Path, stage: str = "all") -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    det = out_dir / "detections.csv"
    write_detections_csv(result, det)
    written.append(det)
    if stage == "all":
        feat = out_dir / "features.csv"
        heights = out_dir / "heights.csv"
        write_features_csv(result, feat)
        write_heights_csv(result, heights)
        written += [feat, heights]
    return written


def cmd_simulate(args) -> int:
    scene = _load_scene_with_overrides(args)
    recording = scene.simulate()
    write_csi_file(recording, args.out)
    print(f"wrote {args.out}: {recording.samples.shape} samples, "
          f"{recording.timestamps_s[-1]:.1f} s")
    if args.truth_out:
        duration = scene.duration_s or scene.config.window_duration_s
        times = np.arange(0.0, duration + 1e-9, args.truth_step_s)
        write_truth_csv(times, scene.truth_level(times), args.truth_out)
        print(f"wrote {args.truth_out}")
    return 0


def _load_input(path: str, config):
    raw = Path(path).read_bytes()
    if raw[:8] == FRAME_MAGIC:
        frames = list(split_frames(raw))
        windows, dropped = ingest_stream(frames, config)
        if not windows:
            return [], dropped
        return windows, dropped
    return read_csi_file(path, config), 0


def cmd_process(args, stage: str = "all") -> int:
    config = (
        load_system_config(args.config, overrides=_config_overrides(args), ignore_unknown=True)
        if args.config
        else None
    )
    source, dropped = _load_input(args.input, config)
    if isinstance(source, list) and not source:
        print("no complete windows in input", file=sys.stderr)
        if config is None:
            print("empty frame input needs --config to proceed", file=sys.stderr)
            return 2
    if config is None:
        sample = source if not isinstance(source, list) else source[0]
        config = sample.config
    result = run_pipeline(config, source, _pipeline_options(args))
    result.dropped_frames = dropped
    written = _write_outputs(result, Path(args.out_dir), stage)
    print(
        f"processed {len(result.windows)} windows, detected {result.detected_count}, "
        f"dropped frames {dropped}, {result.elapsed_s:.2f} s"
    )
    for p in written:
        print(f"wrote {p}")
    return 0


def cmd_detect(args) -> int:
    return cmd_process(args, stage="detect")


def cmd_track(args) -> int:
    if args.config:
        config = load_system_config(args.config, overrides=_config_overrides(args), ignore_unknown=True)
        wavelength = config.wavelength_m
        theta = (
            math.radians(args.angle_deg)
            if args.angle_deg is not None
            else config.geometry.reflection_angle_rad()
        )
    else:
        if args.wavelength_m is None or args.angle_deg is None:
            print("track needs --config or both --wavelength-m and --angle-deg", file=sys.stderr)
            return 2
        wavelength = args.wavelength_m
        theta = math.radians(args.angle_deg)
    streams: dict[str, list[tuple[int, float, bool]]] = {}
    with open(args.features, "r", encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            widx, antenna, phase, coast = int(parts[0]), parts[1], float(parts[5]), parts[9]
            streams.setdefault(antenna, []).append((widx, phase, coast == "true"))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("time_s,antenna,phase_unwrapped_rad,delta_h_m,level_change_m,coasting\n")
        for name in sorted(streams):
            rows = sorted(streams[name])
            phases = [p for _, p, _ in rows]
            unwrapped = kalman_unwrap(phases, q=args.kalman_q, r=args.kalman_r)
            times = [w * args.step_s for w, _, _ in rows]
            series = heights_from_phases(times, unwrapped, wavelength, theta)
            for (t, h, u, (_, _, c)) in zip(series.times_s, series.heights_m, unwrapped, rows):
                fh.write(
                    f"{t:.12g},{name},{u:.12g},{h:.12g},{-h:.12g},{str(c).lower()}\n"
                )
    print(f"wrote {args.out}")
    return 0


def cmd_e2e(args) -> int:
    scene = _load_scene_with_overrides(args)
    result = run_pipeline(scene.config, scene, _pipeline_options(args))
    out_dir = Path(args.out_dir)
    written = _write_outputs(result, out_dir)
    print(
        f"processed {len(result.windows)} windows, detected {result.detected_count}, "
        f"{result.elapsed_s:.2f} s"
    )
    if scene.trajectory is not None and result.height_series:
        duration = scene.duration_s or scene.config.window_duration_s
        times = np.arange(0.0, duration + 1e-9, 1.0)
        truth_path = out_dir / "truth.csv"
        write_truth_csv(times, scene.truth_level(times), truth_path)
        written.append(truth_path)
        truth = HeightSeries(times, scene.truth_level(times))
        name = "combined" if "combined" in result.height_series else sorted(result.height_series)[0]
        series = result.height_series[name]
        level = HeightSeries(series.times_s, -series.heights_m)
        score = align_and_score(level, truth)
        print(
            f"stream {name}: MAE {score.mean_abs_error_m * 100:.4f} cm, "
            f"std {score.std_m * 100:.4f} cm"
        )
    for p in written:
        print(f"wrote {p}")
    return 0


def cmd_report(args) -> int:
    lines = []
    csv_rows = ["metric,stream,value"]
    if args.heights and args.truth:
        truth = read_truth_csv(args.truth)
        for name, series in sorted(read_heights_csv(args.heights).items()):
            score = align_and_score(series, truth)
            lines.append(
                f"stream {name}: MAE {score.mean_abs_error_m * 100:.4f} cm, "
                f"std {score.std_m * 100:.4f} cm over {score.times_s.size} points"
            )
            csv_rows.append(f"mae_m,{name},{score.mean_abs_error_m:.12g}")
            csv_rows.append(f"std_m,{name},{score.std_m:.12g}")
    if args.detections:
        detected = total = 0
        with open(args.detections, "r", encoding="utf-8") as fh:
            fh.readline()
            for line in fh:
                if not line.strip():
                    continue
                total += 1
                detected += line.split(",")[1] == "true"
        if args.expect == "variation":
            lines.append(f"detection: TP {detected}/{total} ({100.0 * detected / max(total, 1):.2f}%)")
            csv_rows.append(f"tp_count,,{detected}")
            csv_rows.append(f"window_count,,{total}")
        else:
            lines.append(f"detection: FP {detected}/{total} ({100.0 * detected / max(total, 1):.2f}%)")
            csv_rows.append(f"fp_count,,{detected}")
            csv_rows.append(f"window_count,,{total}")
    for line in lines:
        print(line)
    if args.out:
        Path(args.out).write_text("\n".join(csv_rows) + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hydrocsi",
        description="Water-level sensing from bi-static CSI.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize a CSI recording from a scene file")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth-out", default=None)
    p.add_argument("--truth-step-s", type=float, default=1.0)
    p.add_argument("--duration-s", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    _add_config_overrides(p)
    p.set_defaults(func=cmd_simulate)

    for name, help_text, func in (
        ("process", "run the full pipeline on a CSI or frame file", cmd_process),
        ("detect", "run the pipeline and write the detection log only", cmd_detect),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("input")
        p.add_argument("--config", default=None,
                       help="config file (a scene file works too)")
        p.add_argument("--out-dir", required=True)
        _add_config_overrides(p)
        _add_pipeline_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("track", help="unwrap a feature log into heights")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--wavelength-m", type=float, default=None)
    p.add_argument("--angle-deg", type=float, default=None)
    p.add_argument("--step-s", type=float, default=22.0,
                   help="seconds per window index in the feature log")
    p.add_argument("--kalman-q", type=float, default=0.01)
    p.add_argument("--kalman-r", type=float, default=0.25)
    _add_config_overrides(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("e2e", help="simulate a scene and process it end to end")
    p.add_argument("--scene", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--duration-s", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    _add_config_overrides(p)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_e2e)

    p = sub.add_parser("report", help="summarize heights/detections against ground truth")
    p.add_argument("--heights", default=None)
    p.add_argument("--truth", default=None)
    p.add_argument("--detections", default=None)
    p.add_argument("--expect", choices=["variation", "static"], default="variation")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
