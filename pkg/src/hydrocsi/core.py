"""Shared domain types: system configuration, CSI containers, and analysis grids.

Everything here is an immutable value object; numpy payloads are marked
read-only so instances can be shared across threads freely.

Sign convention: propagation phase terms rotate as ``exp(-1j * phase)``.
The simulator, steering vectors, and the Doppler transform all build their
phasors through :func:`phasor` so the convention lives in one place.

Time indexing note: sample ``k`` is described 1-based in the math docs of the
processing modules; storage is 0-based, i.e. documented index k corresponds
to ``array[..., k - 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s

# Propagation phasors are exp(PHASE_SIGN * 1j * phase); see module docstring.
PHASE_SIGN = -1.0


def phasor(phase):
    """Unit-modulus propagation phasor for the given phase (radians)."""
    return np.exp(PHASE_SIGN * 1j * np.asarray(phase))


class ConfigError(ValueError):
    """Raised for invalid configuration values or unparseable config files."""

    def __init__(self, message, source=None, line=None):
        self.source = source
        self.line = line
        if source is not None and line is not None:
            message = f"{source}:{line}: {message}"
        elif line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


def _readonly(arr):
    a = np.asarray(arr)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Geometry:
    """Transceiver/water geometry: antenna heights above the surface and
    horizontal separation, all in meters."""

    bs_height_m: float
    ue_height_m: float
    horizontal_distance_m: float

    def __post_init__(self):
        _require(self.bs_height_m > 0, "bs_height_m must be positive")
        _require(self.ue_height_m > 0, "ue_height_m must be positive")
        _require(self.horizontal_distance_m > 0, "horizontal_distance_m must be positive")

    def reflection_angle_rad(self) -> float:
        return reflection_angle(self)


def reflection_angle(geometry: Geometry) -> float:
    """Specular reflection angle of the water-surface path, measured from the
    vertical, in radians.

    The dominant reflection is assumed to come from the mirror point between
    the two antennas, giving ``arctan(d / (h_bs + h_ue))``.  Always in
    (0, pi/2) for valid geometry.
    """
    return math.atan2(
        geometry.horizontal_distance_m, geometry.bs_height_m + geometry.ue_height_m
    )


@dataclass(frozen=True)
class SystemConfig:
    """Radio and sampling parameters shared by every pipeline stage.

    Antennas form a uniform linear array at half-wavelength spacing;
    ``antenna_spacing`` is expressed in half-wavelength units and only 1.0 is
    accepted (the spatial phase term ``pi * (i - 1) * sin(theta)`` presumes
    it).

    The sampling schedule is intermittent: bursts of ``session_duration_s``
    sampled at ``intra_session_rate_hz``, separated by ``gap_duration_s``,
    repeated until ``window_duration_s`` is covered.
    """

    carrier_freq_hz: float
    subcarrier_spacing_hz: float
    num_subcarriers: int
    num_antennas: int
    geometry: Geometry
    antenna_spacing: float = 1.0
    window_duration_s: float = 300.0
    session_duration_s: float = 2.0
    gap_duration_s: float = 20.0
    intra_session_rate_hz: float = 100.0

    def __post_init__(self):
        _require(self.carrier_freq_hz > 0, "carrier_freq_hz must be positive")
        _require(self.subcarrier_spacing_hz > 0, "subcarrier_spacing_hz must be positive")
        _require(self.num_subcarriers >= 1, "num_subcarriers must be >= 1")
        _require(self.num_antennas >= 1, "num_antennas must be >= 1")
        _require(
            self.antenna_spacing == 1.0,
            "antenna_spacing is fixed to 1.0 (half-wavelength) in this version",
        )
        _require(self.window_duration_s > 0, "window_duration_s must be positive")
        _require(self.session_duration_s > 0, "session_duration_s must be positive")
        _require(self.gap_duration_s >= 0, "gap_duration_s must be nonnegative")
        _require(self.intra_session_rate_hz > 0, "intra_session_rate_hz must be positive")
        _require(
            self.window_duration_s >= self.session_duration_s + self.gap_duration_s,
            "window_duration_s must be >= session_duration_s + gap_duration_s",
        )

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq_hz

    def subcarrier_freqs_hz(self) -> np.ndarray:
        """Absolute subcarrier frequencies f_j = f_c + (j - 1) * delta_f."""
        return self.carrier_freq_hz + np.arange(self.num_subcarriers) * self.subcarrier_spacing_hz


def make_sampling_schedule(config: SystemConfig, duration_s: float | None = None) -> np.ndarray:
    """Timestamps (seconds, relative to window start) of the intermittent
    sampling schedule.

    Sessions start every ``session + gap`` seconds; within a session, samples
    are taken at the intra-session rate.  The schedule is truncated at the
    window end (strictly: every timestamp < duration).

    ``duration_s`` overrides the config window length, which is how longer
    recordings spanning several analysis windows are scheduled.

    Raises
    ------
    ConfigError
        If the configuration produces fewer than 2 samples.
    """
    duration = config.window_duration_s if duration_s is None else float(duration_s)
    period = config.session_duration_s + config.gap_duration_s
    rate = config.intra_session_rate_hz
    per_session = int(math.ceil(config.session_duration_s * rate))
    times = []
    start = 0.0
    session_index = 0
    while start < duration:
        n = np.arange(per_session)
        t = start + n / rate
        t = t[(t < start + config.session_duration_s) & (t < duration)]
        times.append(t)
        session_index += 1
        start = session_index * period
    schedule = np.concatenate(times) if times else np.empty(0)
    if schedule.size < 2:
        raise ConfigError(
            f"sampling schedule has {schedule.size} samples; at least 2 are required"
        )
    return schedule


def median_sample_interval(timestamps_s: np.ndarray) -> float:
    """Median spacing between consecutive samples.

    With an intermittent schedule the intra-session interval dominates the
    diffs, so this is the representative sample interval; every operation
    that needs "the" interval of a non-uniform schedule uses this.
    """
    t = np.asarray(timestamps_s, dtype=float)
    if t.size < 2:
        raise ValueError("need at least 2 timestamps")
    return float(np.median(np.diff(t)))


@dataclass(frozen=True)
class CsiWindow:
    """One window of raw CSI: complex tensor indexed
    [antenna][subcarrier][time] plus per-sample timestamps.

    Timestamps are seconds relative to the window start and strictly
    increasing; the tensor shape must match the config exactly.
    """

    samples: np.ndarray
    timestamps_s: np.ndarray
    config: SystemConfig

    def __post_init__(self):
        samples = _readonly(self.samples)
        timestamps = _readonly(np.asarray(self.timestamps_s, dtype=np.float64))
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "timestamps_s", timestamps)
        n, m, ell = (
            self.config.num_antennas,
            self.config.num_subcarriers,
            timestamps.shape[0],
        )
        if samples.shape != (n, m, ell):
            raise ValueError(
                f"samples shape {samples.shape} does not match "
                f"(antennas, subcarriers, samples) = {(n, m, ell)}"
            )
        if ell < 2:
            raise ValueError("a CSI window needs at least 2 time samples")
        if not np.all(np.diff(timestamps) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(samples)):
            raise ValueError("CSI samples must be finite")

    @property
    def num_samples(self) -> int:
        return self.timestamps_s.shape[0]


@dataclass(frozen=True)
class PowerWindow:
    """Real-valued CSI power tensor [antenna][subcarrier][time].

    Values are nonnegative as produced by :func:`~hydrocsi.preprocess.csi_power`
    and become zero-mean along time after mean removal.
    """

    values: np.ndarray
    timestamps_s: np.ndarray
    config: SystemConfig

    def __post_init__(self):
        values = _readonly(np.asarray(self.values, dtype=np.float64))
        timestamps = _readonly(np.asarray(self.timestamps_s, dtype=np.float64))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "timestamps_s", timestamps)
        if values.ndim != 3 or values.shape[2] != timestamps.shape[0]:
            raise ValueError("values must be (antennas, subcarriers, samples)")
        if not np.all(np.isfinite(values)):
            raise ValueError("power values must be finite")


@dataclass(frozen=True)
class DopplerGrid:
    """Uniform Doppler frequency grid, symmetric about an exact 0 Hz bin."""

    bins_hz: np.ndarray

    def __post_init__(self):
        bins = _readonly(np.asarray(self.bins_hz, dtype=np.float64))
        object.__setattr__(self, "bins_hz", bins)
        if bins.ndim != 1 or bins.size < 3:
            raise ValueError("doppler grid needs at least 3 bins")
        d = np.diff(bins)
        if not np.all(d > 0):
            raise ValueError("doppler bins must be strictly ascending")
        if not np.allclose(d, d[0], rtol=1e-9, atol=0.0):
            raise ValueError("doppler bins must be uniformly spaced")
        if bins.size % 2 == 0 or bins[bins.size // 2] != 0.0:
            raise ValueError("doppler grid must contain a bin at exactly 0 Hz")
        if not np.allclose(bins + bins[::-1], 0.0, atol=1e-12 * max(abs(bins[0]), 1.0)):
            raise ValueError("doppler grid must be symmetric about 0")

    @classmethod
    def symmetric(cls, half_span_hz: float = 0.5, num_bins: int = 257) -> "DopplerGrid":
        """Grid of ``num_bins`` (odd) bins covering [-half_span, +half_span].

        Built from mirrored halves so 0 Hz and the +/- symmetry are exact.
        """
        if num_bins % 2 == 0:
            raise ValueError("num_bins must be odd so that 0 Hz is a bin")
        half = num_bins // 2
        pos = half_span_hz * np.arange(1, half + 1) / half
        return cls(np.concatenate([-pos[::-1], [0.0], pos]))

    @property
    def num_bins(self) -> int:
        return self.bins_hz.size

    @property
    def resolution_hz(self) -> float:
        return float(self.bins_hz[1] - self.bins_hz[0])

    @property
    def zero_index(self) -> int:
        return self.bins_hz.size // 2

    def mirror_index(self, index: int) -> int:
        """Index of the bin at the negated frequency."""
        return self.bins_hz.size - 1 - index


@dataclass(frozen=True)
class DelayGrid:
    """Grid of candidate relative delays (seconds), strictly positive and
    uniform.

    Delays are relative to the strongest static path, so only positive values
    are physical: the water reflection is always longer than the reference
    path.  ``subcarrier_spacing_hz`` is carried along because it defines both
    the steering phases and the alias-free span (0, 1/(2*delta_f)].
    """

    bins_s: np.ndarray
    subcarrier_spacing_hz: float

    def __post_init__(self):
        bins = _readonly(np.asarray(self.bins_s, dtype=np.float64))
        object.__setattr__(self, "bins_s", bins)
        if bins.ndim != 1 or bins.size < 2:
            raise ValueError("delay grid needs at least 2 bins")
        if bins[0] <= 0:
            raise ValueError("delay bins must be strictly positive")
        d = np.diff(bins)
        if not np.all(d > 0) or not np.allclose(d, d[0], rtol=1e-9, atol=0.0):
            raise ValueError("delay bins must be ascending and uniformly spaced")
        _require(self.subcarrier_spacing_hz > 0, "subcarrier_spacing_hz must be positive")
        if bins[-1] > 1.0 / (2.0 * self.subcarrier_spacing_hz) * (1 + 1e-12):
            raise ValueError("delay bins must not exceed the alias-free span 1/(2*delta_f)")

    @classmethod
    def for_config(cls, config: SystemConfig, oversample: int = 4) -> "DelayGrid":
        """Default grid: ``oversample``x finer than the Fourier delay
        resolution 1/(M*delta_f), spanning (0, 1/(2*delta_f)]."""
        m, df = config.num_subcarriers, config.subcarrier_spacing_hz
        step = 1.0 / (oversample * m * df)
        count = int(round(oversample * m / 2))
        return cls(step * np.arange(1, count + 1), df)

    @property
    def num_bins(self) -> int:
        return self.bins_s.size

    @property
    def ranges_m(self) -> np.ndarray:
        return self.bins_s * SPEED_OF_LIGHT


# --- flat key-value config files -------------------------------------------


def read_key_values(text: str, source: str = "<config>") -> list[tuple[int, str, str]]:
    """Parse ``key = value`` lines with ``#`` comments.

    Returns (line_number, key, value) triples preserving order and repeats.
    Malformed lines raise :class:`ConfigError` with the offending line number.
    """
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", source=source, line=lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError("empty key", source=source, line=lineno)
        entries.append((lineno, key, value))
    return entries


_SYSTEM_FLOAT_KEYS = {
    "carrier_freq_hz",
    "subcarrier_spacing_hz",
    "antenna_spacing",
    "window_duration_s",
    "session_duration_s",
    "gap_duration_s",
    "intra_session_rate_hz",
}
_SYSTEM_INT_KEYS = {"num_subcarriers", "num_antennas"}
_GEOMETRY_KEYS = {"bs_height_m", "ue_height_m", "horizontal_distance_m"}

SYSTEM_CONFIG_KEYS = _SYSTEM_FLOAT_KEYS | _SYSTEM_INT_KEYS | _GEOMETRY_KEYS


def system_config_from_entries(
    entries: Sequence[tuple[int, str, str]],
    source: str = "<config>",
    defaults: SystemConfig | None = None,
    ignore_unknown: bool = False,
) -> SystemConfig:
    """Build a :class:`SystemConfig` from parsed key-value entries.

    Keys are the snake_case field names; geometry fields appear flattened
    (``bs_height_m`` etc.).  Unknown keys raise unless ``ignore_unknown`` is
    set (scene files mix system keys with scene keys).
    """
    fields: dict = {}
    geo: dict = {}
    if defaults is not None:
        for name in _SYSTEM_FLOAT_KEYS | _SYSTEM_INT_KEYS:
            fields[name] = getattr(defaults, name)
        geo = {
            "bs_height_m": defaults.geometry.bs_height_m,
            "ue_height_m": defaults.geometry.ue_height_m,
            "horizontal_distance_m": defaults.geometry.horizontal_distance_m,
        }
    for lineno, key, value in entries:
        try:
            if key in _SYSTEM_FLOAT_KEYS:
                fields[key] = float(value)
            elif key in _SYSTEM_INT_KEYS:
                fields[key] = int(value)
            elif key in _GEOMETRY_KEYS:
                geo[key] = float(value)
            elif not ignore_unknown:
                raise ConfigError(f"unknown key {key!r}", source=source, line=lineno)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", source=source, line=lineno)
    missing = (
        {"carrier_freq_hz", "subcarrier_spacing_hz", "num_subcarriers", "num_antennas"}
        - fields.keys()
    ) | (_GEOMETRY_KEYS - geo.keys())
    if missing:
        raise ConfigError(f"{source}: missing required keys: {sorted(missing)}")
    try:
        geometry = Geometry(**geo)
        return SystemConfig(geometry=geometry, **fields)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_system_config(
    path, overrides: dict | None = None, ignore_unknown: bool = False
) -> SystemConfig:
    """Read a system config file; ``overrides`` (key -> string) win over the
    file contents.  ``ignore_unknown`` permits extra keys, so a scene file
    doubles as a config file."""
    with open(path, "r", encoding="utf-8") as fh:
        entries = read_key_values(fh.read(), source=str(path))
    if overrides:
        entries += [(0, k, str(v)) for k, v in overrides.items()]
    return system_config_from_entries(
        entries, source=str(path), ignore_unknown=ignore_unknown
    )
