"""Pipeline orchestration: logical windowing, per-window processing, stream
tracking, and CSV reporting.

Windows are purely logical: a recording (one long :class:`CsiWindow`) is
sliced by its own timestamps into analysis windows of the configured length,
advanced by the session period by default so every window sees the same
relative sampling pattern.  That alignment matters on intermittent schedules:
the spectral leakage pattern of the burst sampling then contributes the same
phase offset to every window and cancels in the phase differences the height
transform uses.

Per window: power -> mean removal -> Doppler transform -> delay sweep ->
CFAR.  On detection the chosen cell is oriented onto its delay-matched side,
gated against the recent history, and the complex water feature is extracted
per antenna (optionally combined across the array).  Phase tracking runs per
stream ("combined", or one per antenna when spatial refinement is off).

All CSV output uses fixed formatting, so identical inputs and seeds produce
byte-identical files.  Windows are mutually independent (the bin stabilizer
and phase trackers are the only sequential state), and records/rows are kept
in window order, so the output is deterministic regardless of how the
per-window work would be scheduled.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import CsiWindow, DelayGrid, DopplerGrid, SystemConfig, reflection_angle
from .detect import CfarConfig, DetectionResult, detect_water
from .features import (
    BinStabilizer,
    FeatureSample,
    WeightMode,
    water_features,
)
from .heatmap import DEFAULT_LOADING_DB, DopplerRangeHeatmap, build_heatmap
from .preprocess import WindowFunction, csi_power, doppler_transform, remove_mean
from .simulator import Scene
from .track import HeightSeries, heights_from_phases, kalman_unwrap

_FMT = "{:.12g}".format
_log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineOptions:
    """Tunables for a pipeline run; defaults follow the module defaults."""

    window_duration_s: float | None = None  # None: config window length
    window_step_s: float | None = None  # None: session + gap period
    doppler_half_span_hz: float = 0.5
    doppler_bins: int = 257
    delay_oversample: int = 4
    loading_db: float = DEFAULT_LOADING_DB
    window_fn: WindowFunction = WindowFunction.HAMMING
    cfar: CfarConfig = field(default_factory=CfarConfig)
    weight_mode: WeightMode | None = None  # None: MVDR if multi-antenna
    spatial: bool | None = None  # None: on when >= 2 antennas
    angle_bins: int = 64
    stabilizer_depth: int = 5
    stabilizer_gate: int = 2
    kalman_q: float = 0.01
    kalman_r: float = 0.25
    reflection_angle_deg: float | None = None  # None: from geometry
    # hook for long-term tracking where the reflection angle drifts: called
    # per window with the tracked FeatureSample, returns the angle (radians)
    # to use for that window's height increment, or None to keep the default
    angle_hook: object = None


@dataclass
class WindowRecord:
    """Everything retained from one processed window."""

    index: int
    start_s: float
    detection: DetectionResult
    doppler_hz: float | None = None
    range_m: float | None = None
    power: float | None = None
    threshold: float | None = None
    coasting: bool = False
    features: list[FeatureSample] = field(default_factory=list)
    combined: FeatureSample | None = None


@dataclass
class PipelineResult:
    config: SystemConfig
    options: PipelineOptions
    windows: list[WindowRecord]
    height_series: dict[str, HeightSeries]
    phase_series: dict[str, np.ndarray]
    dropped_frames: int = 0
    failed_windows: list[tuple[int, str]] = field(default_factory=list)
    elapsed_s: float = 0.0

    @property
    def detected_count(self) -> int:
        return sum(1 for w in self.windows if w.detection.detected)


def iter_windows(recording: CsiWindow, duration_s: float, step_s: float):
    """Slice a recording into (start_time, CsiWindow) analysis windows.

    Timestamps are re-based to each window start, so downstream processing is
    translation invariant.  Slices with fewer than 2 samples are skipped.
    """
    from .core import median_sample_interval

    t = recording.timestamps_s
    # a window is complete when the data reaches within one (median) sample
    # interval of its end
    end = float(t[-1]) + median_sample_interval(t)
    start = 0.0
    while start + duration_s <= end + 1e-9:
        mask = (t >= start - 1e-12) & (t < start + duration_s - 1e-12)
        if int(mask.sum()) >= 2:
            yield start, CsiWindow(
                samples=recording.samples[:, :, mask],
                timestamps_s=t[mask] - start,
                config=recording.config,
            )
        start += step_s


def orient_cell(heatmap: DopplerRangeHeatmap, cell: tuple[int, int]) -> tuple[int, int]:
    """Flip a (doppler, delay) cell onto its delay-matched side.

    Of a conjugate bin pair, only the delay-matched one shows high
    minimum-variance power at the positive relative delay; comparing the cell
    against its mirror therefore resolves which side carries the matched
    component, robustly even deep in noise.
    """
    b, d = cell
    mirror = heatmap.doppler_grid.mirror_index(b)
    if heatmap.power[mirror, d] > heatmap.power[b, d]:
        return mirror, d
    return b, d


def run_pipeline(
    config: SystemConfig,
    source,
    options: PipelineOptions = PipelineOptions(),
) -> PipelineResult:
    """Run the full processing chain.

    ``source`` may be a :class:`CsiWindow` recording (sliced into logical
    windows here), an iterable of pre-cut ``CsiWindow`` objects (e.g. from
    the stream ingestor), or a :class:`Scene` (simulated first).
    """
    t0 = time.perf_counter()
    dropped = 0
    if isinstance(source, Scene):
        source = source.simulate()
    if isinstance(source, CsiWindow):
        duration = options.window_duration_s or config.window_duration_s
        step = options.window_step_s or (config.session_duration_s + config.gap_duration_s)
        window_iter = iter_windows(source, duration, step)
    else:
        step = options.window_step_s or (config.session_duration_s + config.gap_duration_s)
        window_iter = ((i * step, w) for i, w in enumerate(source))

    grid = DopplerGrid.symmetric(options.doppler_half_span_hz, options.doppler_bins)
    delays = DelayGrid.for_config(config, options.delay_oversample)
    stabilizer = BinStabilizer(options.stabilizer_depth, options.stabilizer_gate)

    records: list[WindowRecord] = []
    failed: list[tuple[int, str]] = []
    stream_phases: dict[str, list[float]] = {}
    stream_times: dict[str, list[float]] = {}
    stream_coast: dict[str, list[bool]] = {}
    stream_angles: dict[str, list[float | None]] = {}

    for index, (start, window) in enumerate(window_iter):
        try:
            spectrum = doppler_transform(
                remove_mean(csi_power(window)), grid, options.window_fn
            )
            hm = build_heatmap(spectrum, delays, options.loading_db)
            detection = detect_water(hm, options.cfar)
            record = WindowRecord(index=index, start_s=start, detection=detection)
            if detection.detected:
                cell = orient_cell(hm, detection.chosen_cell)
                (db, rb), coasting = stabilizer.update(cell)
                per_antenna, combined = water_features(
                    spectrum,
                    db,
                    rb,
                    delays,
                    loading_db=options.loading_db,
                    mode=options.weight_mode,
                    window_index=index,
                    coasting=coasting,
                    spatial=options.spatial,
                    angle_bins=options.angle_bins,
                )
                peak_bin, peak_power, peak_threshold = max(
                    detection.peaks, key=lambda p: p[1]
                )
                record.doppler_hz = per_antenna[0].doppler_bin_hz
                record.range_m = per_antenna[0].range_m
                record.power = peak_power
                record.threshold = peak_threshold
                record.coasting = coasting
                record.features = per_antenna
                record.combined = combined
                if combined is not None:
                    streams = {"combined": combined}
                else:
                    streams = {str(s.antenna_index): s for s in per_antenna}
                for name, sample in streams.items():
                    stream_phases.setdefault(name, []).append(sample.phase)
                    stream_times.setdefault(name, []).append(start)
                    stream_coast.setdefault(name, []).append(coasting)
                    angle = options.angle_hook(sample) if options.angle_hook else None
                    stream_angles.setdefault(name, []).append(angle)
        except Exception as exc:  # per-window failures are logged, not fatal
            _log.warning("window %d (t=%.1f s) skipped: %s", index, start, exc)
            failed.append((index, str(exc)))
            continue
        records.append(record)

    theta = (
        math.radians(options.reflection_angle_deg)
        if options.reflection_angle_deg is not None
        else reflection_angle(config.geometry)
    )
    height_series: dict[str, HeightSeries] = {}
    phase_series: dict[str, np.ndarray] = {}
    for name, phases in stream_phases.items():
        unwrapped = kalman_unwrap(phases, q=options.kalman_q, r=options.kalman_r)
        phase_series[name] = unwrapped
        angles = np.array(
            [theta if a is None else float(a) for a in stream_angles[name]]
        )
        height_series[name] = heights_from_phases(
            stream_times[name],
            unwrapped,
            config.wavelength_m,
            angles,
            coasting=stream_coast[name],
        )
    if len(height_series) > 1:
        # convenience median across antenna streams (reported as an extra
        # stream, not a replacement)
        names = sorted(height_series)
        times = height_series[names[0]].times_s
        if all(np.array_equal(height_series[n].times_s, times) for n in names):
            stack = np.vstack([height_series[n].heights_m for n in names])
            height_series["median"] = HeightSeries(
                times_s=times, heights_m=np.median(stack, axis=0)
            )
    return PipelineResult(
        config=config,
        options=options,
        windows=records,
        height_series=height_series,
        phase_series=phase_series,
        dropped_frames=dropped,
        failed_windows=failed,
        elapsed_s=time.perf_counter() - t0,
    )


# --- CSV output ---------------------------------------------------------------


def write_detections_csv(result: PipelineResult, path) -> None:
    """`window_index, detected, doppler_hz, range_m, power, threshold` rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("window_index,detected,doppler_hz,range_m,power,threshold\n")
        for w in result.windows:
            if w.detection.detected:
                fh.write(
                    f"{w.index},true,{_FMT(w.doppler_hz)},{_FMT(w.range_m)},"
                    f"{_FMT(w.power)},{_FMT(w.threshold)}\n"
                )
            else:
                fh.write(f"{w.index},false,,,,\n")


def write_features_csv(result: PipelineResult, path) -> None:
    """Per-antenna and combined feature log."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            "window_index,antenna,re,im,amplitude,phase,doppler_hz,range_m,aoa_deg,coasting\n"
        )
        for w in result.windows:
            for s in list(w.features) + ([w.combined] if w.combined else []):
                antenna = "combined" if s.antenna_index is None else str(s.antenna_index)
                aoa = "" if s.aoa_bin_deg is None else _FMT(s.aoa_bin_deg)
                fh.write(
                    f"{s.window_index},{antenna},{_FMT(s.value.real)},{_FMT(s.value.imag)},"
                    f"{_FMT(s.amplitude)},{_FMT(s.phase)},{_FMT(s.doppler_bin_hz)},"
                    f"{_FMT(s.range_m)},{aoa},{str(s.coasting).lower()}\n"
                )


def write_heights_csv(result: PipelineResult, path) -> None:
    """`time_s, antenna, phase_unwrapped_rad, delta_h_m, level_change_m,
    coasting` rows; ``delta_h_m`` is positive when the reflection path
    lengthened (level fell), ``level_change_m`` is its negation (positive =
    level rise).  The ``median`` stream is a reporting convenience."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("time_s,antenna,phase_unwrapped_rad,delta_h_m,level_change_m,coasting\n")
        for name in sorted(result.height_series):
            series = result.height_series[name]
            phases = result.phase_series.get(name)
            for i, (t, h) in enumerate(zip(series.times_s, series.heights_m)):
                phase = _FMT(phases[i]) if phases is not None else ""
                coast = (
                    str(bool(series.coasting[i])).lower()
                    if series.coasting is not None
                    else "false"
                )
                fh.write(
                    f"{_FMT(t)},{name},{phase},{_FMT(h)},{_FMT(-h)},{coast}\n"
                )


def write_truth_csv(times_s, heights_m, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("time_s,height_m\n")
        for t, h in zip(times_s, heights_m):
            fh.write(f"{_FMT(t)},{_FMT(h)}\n")


def read_truth_csv(path) -> HeightSeries:
    """Two-column ground truth: `time_s, height_m` with a header row."""
    times, heights = [], []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        for line in fh:
            line = line.strip()
            if not line:
                continue
            t, h = line.split(",")[:2]
            times.append(float(t))
            heights.append(float(h))
    return HeightSeries(times_s=np.array(times), heights_m=np.array(heights))


def read_heights_csv(path) -> dict[str, HeightSeries]:
    """Read a heights CSV back into per-stream series (level_change column)."""
    streams: dict[str, dict[str, list]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            line = line.strip()
            if not line:
                continue
            t, name, _phase, _dh, level, coast = line.split(",")
            entry = streams.setdefault(name, {"t": [], "h": [], "c": []})
            entry["t"].append(float(t))
            entry["h"].append(float(level))
            entry["c"].append(coast == "true")
    return {
        name: HeightSeries(
            times_s=np.array(v["t"]),
            heights_m=np.array(v["h"]),
            coasting=np.array(v["c"], dtype=bool),
        )
        for name, v in streams.items()
    }
