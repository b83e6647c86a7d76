"""Synthetic bi-static CSI generation from a scripted scene.

A scene is a set of static multipath components plus one water-surface
reflection whose delay follows a water-level trajectory, optional fast
"mover" clutter, and transceiver impairments (combined TO/CFO phase,
per-antenna hardware phase, slow power drift, AWGN).  Every stage of the
processing pipeline is tested against data produced here, because the
injected ground truth (delays, Doppler, level trajectory) is known exactly.

Sign conventions:

* ``WaterTrajectory`` stores water-*level* changes: positive means the level
  rose.
* :func:`height_to_path_delta` takes the water-surface *drop*: positive drop
  lengthens the reflection path.  A level rise is therefore passed in
  negated.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ConfigError,
    CsiWindow,
    Geometry,
    SPEED_OF_LIGHT,
    SystemConfig,
    make_sampling_schedule,
    phasor,
    read_key_values,
    reflection_angle,
    system_config_from_entries,
)


class PathModel(enum.Enum):
    """How a level change maps to reflection-path length change.

    EXACT_GEOMETRIC evaluates the mirror-image path length difference
    directly; LINEAR uses the first-order form ``2 * drop * sin(theta)``
    (exactly invertible by the height transform in :mod:`hydrocsi.track`).
    The two coincide to first order only at a 45-degree reflection angle; the
    linear form keeps end-to-end tests closed, the geometric form is the more
    physical default elsewhere.
    """

    EXACT_GEOMETRIC = "exact"
    LINEAR = "linear"


@dataclass(frozen=True)
class StaticPath:
    """A time-invariant multipath component (amplitude, absolute delay, AoA).

    AoA is the arrival angle at the receive array, in (-pi/2, pi/2).
    """

    amplitude: float
    delay_s: float
    aoa_rad: float = 0.0

    def __post_init__(self):
        if not (self.amplitude > 0 and math.isfinite(self.amplitude)):
            raise ConfigError("static path amplitude must be positive and finite")
        if self.delay_s < 0:
            raise ConfigError("static path delay must be nonnegative")
        if not (-math.pi / 2 < self.aoa_rad < math.pi / 2):
            raise ConfigError("static path aoa must lie in (-pi/2, pi/2)")


@dataclass(frozen=True)
class WaterPath:
    """The water-surface reflection at the start of the scene.

    ``base_delay_s`` must exceed the scene's reference (strongest static)
    delay so the relative delay stays positive; checked at generation time.
    """

    base_amplitude: float
    base_delay_s: float
    aoa_rad: float = 0.0
    path_model: PathModel = PathModel.EXACT_GEOMETRIC

    def __post_init__(self):
        if not (self.base_amplitude > 0 and math.isfinite(self.base_amplitude)):
            raise ConfigError("water path amplitude must be positive and finite")
        if self.base_delay_s <= 0:
            raise ConfigError("water path delay must be positive")


@dataclass(frozen=True)
class Mover:
    """Fast clutter: a reflection whose path length drifts at a fixed Doppler.

    Reuses the water-path form; the Doppler should be well above the water's
    (an order of magnitude or more) so the two are separable in frequency.
    """

    path: WaterPath
    doppler_hz: float


@dataclass(frozen=True)
class WaterTrajectory:
    """Piecewise-linear water-level change over time.

    Breakpoints are (time_s, level_change_m) with positive = level rise;
    the first breakpoint must be (0, 0).  Beyond the last breakpoint the
    level holds.
    """

    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self):
        bp = tuple((float(t), float(h)) for t, h in self.breakpoints)
        object.__setattr__(self, "breakpoints", bp)
        if not bp:
            raise ConfigError("trajectory needs at least one breakpoint")
        if bp[0] != (0.0, 0.0):
            raise ConfigError("trajectory must start at (0, 0)")
        times = [t for t, _ in bp]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("trajectory times must be strictly increasing")

    def level_at(self, times_s) -> np.ndarray:
        t = np.asarray(times_s, dtype=float)
        xs = np.array([p[0] for p in self.breakpoints])
        ys = np.array([p[1] for p in self.breakpoints])
        return np.interp(t, xs, ys)


@dataclass(frozen=True)
class Impairments:
    """Transceiver imperfections applied multiplicatively to the clean CSI.

    * ``to_cfo_seed``: when set, each time sample gets a random timing offset
      uniform in [0, 1/f_c), producing phase 2*pi*f_j*dt shared by all
      antennas; unit modulus, so CSI power is unaffected.
    * ``hw_phases_rad``: fixed per-antenna phase (cable/PLL), one per power-up.
    * power drift: gain 1 + A*sin(2*pi*t/T + phi) with A <= 0.2 and period
      T >= half the analysis window.
    * ``awgn_snr_db``: additive complex Gaussian noise level (None = off).
    """

    to_cfo_seed: int | None = None
    hw_phases_rad: tuple[float, ...] | None = None
    drift_amplitude: float = 0.0
    drift_period_s: float = 0.0
    drift_phase_rad: float = 0.0
    awgn_snr_db: float | None = None
    awgn_seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.drift_amplitude <= 0.2):
            raise ConfigError("drift_amplitude must be in [0, 0.2]")
        if self.drift_amplitude > 0 and self.drift_period_s <= 0:
            raise ConfigError("drift_period_s must be positive when drift is enabled")


NO_IMPAIRMENTS = Impairments()


def reference_static(static_paths) -> StaticPath:
    """The strongest static path: the delay reference that anchors all
    relative delays."""
    paths = list(static_paths)
    if not paths:
        raise ConfigError("a scene needs at least one static path as delay reference")
    return max(paths, key=lambda p: p.amplitude)


def height_to_path_delta(geometry: Geometry, drop_m: float, model: PathModel) -> float:
    """Reflection-path length change (meters) when the water surface drops by
    ``drop_m``.

    LINEAR: ``2 * drop * sin(theta)`` with theta the geometric
    reflection angle.  EXACT_GEOMETRIC: difference of mirror-image path
    lengths, ``sqrt(d^2 + (H + 2*drop)^2) - sqrt(d^2 + H^2)`` with
    ``H = h_bs + h_ue``.  A drop that would put the surface above either
    antenna (effective height <= 0) is rejected in geometric mode.
    """
    if model is PathModel.LINEAR:
        return 2.0 * drop_m * math.sin(reflection_angle(geometry))
    h_min = min(geometry.bs_height_m, geometry.ue_height_m)
    if drop_m <= -h_min:
        raise ValueError(
            f"water drop {drop_m} m puts the surface at or above an antenna "
            f"(min height {h_min} m)"
        )
    d = geometry.horizontal_distance_m
    h = geometry.bs_height_m + geometry.ue_height_m
    return math.hypot(d, h + 2.0 * drop_m) - math.hypot(d, h)


def _dynamic_term(config, amp0, delay0_s, aoa_rad, delays_s, out):
    """Accumulate one dynamic path into ``out`` (antennas, subcarriers, L).

    Amplitude scales inversely with path length (free-space spreading);
    the exact constant is irrelevant to phase-based processing.
    """
    f = config.subcarrier_freqs_hz()
    amps = amp0 * (delay0_s / delays_s)
    delay_ph = phasor(2.0 * np.pi * f[None, :, None] * delays_s[None, None, :])
    aoa_ph = phasor(np.pi * np.arange(config.num_antennas) * math.sin(aoa_rad))
    out += amps[None, None, :] * delay_ph * aoa_ph[:, None, None]


def generate_csi(
    config: SystemConfig,
    static_paths,
    water_path: WaterPath | None = None,
    trajectory: WaterTrajectory | None = None,
    movers=(),
    impairments: Impairments = NO_IMPAIRMENTS,
    schedule: np.ndarray | None = None,
) -> CsiWindow:
    """Synthesize a CSI recording for the given scene on the given schedule.

    Each sample is the coherent sum of static and dynamic path terms
    ``amp * exp(-2j pi f_j tau) * exp(-1j pi (i-1) sin(aoa))`` multiplied by
    the impairment factors.  The water path's delay follows the level
    trajectory; movers drift linearly at their stated Doppler.  Fully
    deterministic given the impairment seeds.
    """
    statics = list(static_paths)
    ref = reference_static(statics)
    if schedule is None:
        schedule = make_sampling_schedule(config)
    t = np.asarray(schedule, dtype=np.float64)
    n, m, ell = config.num_antennas, config.num_subcarriers, t.size
    f = config.subcarrier_freqs_hz()
    ant = np.arange(n)

    h = np.zeros((n, m, ell), dtype=np.complex128)
    for p in statics:
        term = (
            p.amplitude
            * phasor(2.0 * np.pi * f * p.delay_s)[None, :]
            * phasor(np.pi * ant * math.sin(p.aoa_rad))[:, None]
        )
        h += term[:, :, None]

    if water_path is not None:
        if water_path.base_delay_s <= ref.delay_s:
            raise ConfigError(
                "water path delay must exceed the reference static delay "
                f"({water_path.base_delay_s} <= {ref.delay_s})"
            )
        if trajectory is None:
            trajectory = WaterTrajectory(((0.0, 0.0),))
        level = trajectory.level_at(t)
        geometry = config.geometry
        model = water_path.path_model
        if model is PathModel.LINEAR:
            deltas = 2.0 * (-level) * math.sin(reflection_angle(geometry))
        else:
            deltas = np.array(
                [height_to_path_delta(geometry, -lv, model) for lv in level]
            )
        delays = water_path.base_delay_s + deltas / SPEED_OF_LIGHT
        _dynamic_term(
            config, water_path.base_amplitude, water_path.base_delay_s,
            water_path.aoa_rad, delays, h,
        )

    for mover in movers:
        # path-length rate v gives Doppler f_D = v f_c / c, so drift the
        # delay at f_D / f_c seconds per second
        delays = mover.path.base_delay_s + mover.doppler_hz / config.carrier_freq_hz * t
        if np.any(delays <= 0):
            raise ConfigError("mover delay becomes nonpositive within the scene")
        _dynamic_term(
            config, mover.path.base_amplitude, mover.path.base_delay_s,
            mover.path.aoa_rad, delays, h,
        )

    gain = np.ones(ell)
    if impairments.drift_amplitude > 0:
        if impairments.drift_period_s < config.window_duration_s / 2:
            raise ConfigError(
                "drift_period_s must be at least half the analysis window"
            )
        gain = gain + impairments.drift_amplitude * np.sin(
            2.0 * np.pi * t / impairments.drift_period_s + impairments.drift_phase_rad
        )
    h *= gain[None, None, :]

    if impairments.to_cfo_seed is not None:
        rng = np.random.default_rng(impairments.to_cfo_seed)
        dt = rng.uniform(0.0, 1.0 / config.carrier_freq_hz, size=ell)
        h *= phasor(2.0 * np.pi * f[:, None] * dt[None, :])[None, :, :]

    if impairments.hw_phases_rad is not None:
        ph = np.asarray(impairments.hw_phases_rad, dtype=float)
        if ph.shape != (n,):
            raise ConfigError(f"hw_phases_rad must have length {n}")
        h *= phasor(ph)[:, None, None]

    window = CsiWindow(
        samples=h.astype(np.complex64), timestamps_s=t, config=config
    )
    if impairments.awgn_snr_db is not None and math.isfinite(impairments.awgn_snr_db):
        window = add_awgn(window, impairments.awgn_snr_db, impairments.awgn_seed)
    return window


def add_awgn(window: CsiWindow, snr_db: float, seed: int = 0) -> CsiWindow:
    """Add circular complex Gaussian noise at the given SNR.

    Noise power per entry is ``P_csi / 10^(snr_db/10)`` with ``P_csi`` the
    mean squared magnitude over the whole window.  ``snr_db = inf`` is the
    "off" sentinel and returns the input unchanged.  Deterministic per seed.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return window
    s = np.asarray(window.samples, dtype=np.complex128)
    p_csi = float(np.mean(s.real**2 + s.imag**2))
    p_noise = p_csi / (10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    scale = math.sqrt(p_noise / 2.0)
    noise = scale * (rng.standard_normal(s.shape) + 1j * rng.standard_normal(s.shape))
    return CsiWindow(
        samples=(s + noise).astype(np.complex64),
        timestamps_s=window.timestamps_s,
        config=window.config,
    )


# --- scene files -------------------------------------------------------------


@dataclass(frozen=True)
class Scene:
    """A complete simulation description: radio config plus scripted paths,
    trajectory, impairments, duration, and the master seed."""

    config: SystemConfig
    static_paths: tuple[StaticPath, ...]
    water_path: WaterPath | None = None
    trajectory: WaterTrajectory | None = None
    movers: tuple[Mover, ...] = ()
    impairments: Impairments = NO_IMPAIRMENTS
    duration_s: float | None = None
    seed: int = 0

    def simulate(self) -> CsiWindow:
        duration = self.duration_s or self.config.window_duration_s
        schedule = make_sampling_schedule(self.config, duration_s=duration)
        return generate_csi(
            self.config,
            self.static_paths,
            self.water_path,
            self.trajectory,
            self.movers,
            self.impairments,
            schedule,
        )

    def truth_level(self, times_s) -> np.ndarray:
        """Ground-truth water-level change (m, positive = rise) at the given
        times; zero if the scene has no trajectory."""
        if self.trajectory is None:
            return np.zeros_like(np.asarray(times_s, dtype=float))
        return self.trajectory.level_at(times_s)


_SCENE_KEYS = {
    "static_path", "water_path", "path_model", "trajectory", "mover",
    "to_cfo", "hw_phases_deg", "drift_amplitude", "drift_period_s",
    "awgn_snr_db", "duration_s", "seed",
}


def _parse_floats(value, count, what, source, lineno):
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != count:
        raise ConfigError(
            f"{what} expects {count} comma-separated values", source=source, line=lineno
        )
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"bad {what}: {exc}", source=source, line=lineno)


def parse_scene(text: str, source: str = "<scene>", seed: int | None = None) -> Scene:
    """Parse a scene description (key-value format; see the bundled scene
    files for the full vocabulary).  ``seed`` overrides the file's seed."""
    entries = read_key_values(text, source=source)
    config = system_config_from_entries(entries, source=source, ignore_unknown=True)
    statics: list[StaticPath] = []
    movers: list[Mover] = []
    water = None
    water_raw = None
    model = PathModel.EXACT_GEOMETRIC
    trajectory = None
    imp: dict = {}
    duration = None
    file_seed = 0
    to_cfo_on = False
    for lineno, key, value in entries:
        if key in _SCENE_KEYS:
            if key == "static_path":
                amp, delay_ns, aoa_deg = _parse_floats(value, 3, key, source, lineno)
                statics.append(StaticPath(amp, delay_ns * 1e-9, math.radians(aoa_deg)))
            elif key == "water_path":
                water_raw = _parse_floats(value, 3, key, source, lineno)
            elif key == "path_model":
                try:
                    model = PathModel(value.lower())
                except ValueError:
                    raise ConfigError(
                        "path_model must be 'exact' or 'linear'", source=source, line=lineno
                    )
            elif key == "trajectory":
                points = []
                for part in value.split(";"):
                    part = part.strip()
                    if not part:
                        continue
                    if ":" not in part:
                        raise ConfigError(
                            "trajectory points are 'time:height'", source=source, line=lineno
                        )
                    ts, hs = part.split(":", 1)
                    points.append((float(ts), float(hs)))
                trajectory = WaterTrajectory(tuple(points))
            elif key == "mover":
                amp, delay_ns, aoa_deg, dop = _parse_floats(value, 4, key, source, lineno)
                movers.append(
                    Mover(WaterPath(amp, delay_ns * 1e-9, math.radians(aoa_deg)), dop)
                )
            elif key == "to_cfo":
                to_cfo_on = value.lower() in ("on", "true", "1", "yes")
            elif key == "hw_phases_deg":
                ph = [math.radians(float(p)) for p in value.split(",")]
                imp["hw_phases_rad"] = tuple(ph)
            elif key == "drift_amplitude":
                imp["drift_amplitude"] = float(value)
            elif key == "drift_period_s":
                imp["drift_period_s"] = float(value)
            elif key == "awgn_snr_db":
                if value.lower() != "off":
                    imp["awgn_snr_db"] = float(value)
            elif key == "duration_s":
                duration = float(value)
            elif key == "seed":
                file_seed = int(value)
    master = file_seed if seed is None else seed
    sub = np.random.SeedSequence(master).generate_state(2)
    if to_cfo_on:
        imp["to_cfo_seed"] = int(sub[0])
    if "awgn_snr_db" in imp:
        imp["awgn_seed"] = int(sub[1])
    if water_raw is not None:
        amp, delay_ns, aoa_deg = water_raw
        water = WaterPath(amp, delay_ns * 1e-9, math.radians(aoa_deg), model)
    return Scene(
        config=config,
        static_paths=tuple(statics),
        water_path=water,
        trajectory=trajectory,
        movers=tuple(movers),
        impairments=Impairments(**imp),
        duration_s=duration,
        seed=master,
    )


def load_scene(path, seed: int | None = None) -> Scene:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scene(fh.read(), source=str(path), seed=seed)
