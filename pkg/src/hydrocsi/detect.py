"""Water-level variation detection: 1-D Doppler profile plus cell-averaging
CFAR.

The heatmap is collapsed along the range axis (Doppler resolution is much
finer than range resolution here, so the profile is taken along Doppler) and
a cell-averaging constant-false-alarm-rate test marks Doppler bins whose
power stands far enough above the locally estimated noise floor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .heatmap import DopplerRangeHeatmap


@dataclass(frozen=True)
class CfarConfig:
    """Cell-averaging CFAR parameters, per side of the cell under test.

    Defaults give 8 reference and 4 guard cells in total.  The threshold
    factor is a single scalar: for values <= 1 the threshold is
    ``reference_mean / threshold_factor`` (0.01 = a 20 dB margin); values > 1
    are used directly as the multiplicative scale.  The mapping is a config
    knob because "factor" alone underdetermines the role.
    """

    num_reference_cells: int = 4
    num_guard_cells: int = 2
    threshold_factor: float = 0.01

    def __post_init__(self):
        if self.num_reference_cells < 2:
            raise ValueError("need at least 2 reference cells per side")
        if self.num_guard_cells < 0:
            raise ValueError("guard cells must be nonnegative")
        if not self.threshold_factor > 0:
            raise ValueError("threshold_factor must be positive")

    @property
    def scale(self) -> float:
        """Multiplicative threshold scale in linear power."""
        f = self.threshold_factor
        return 1.0 / f if f <= 1.0 else f

    @property
    def min_profile_length(self) -> int:
        return 2 * (self.num_reference_cells + self.num_guard_cells) + 1


@dataclass(frozen=True)
class DetectionResult:
    """CFAR outcome for one window.

    ``peaks`` holds (doppler_bin, profile_power, threshold) for every bin
    that passed; ``chosen_cell`` is the (doppler_bin, delay_bin) of the
    strongest heatmap cell among the detected rows, present iff detected.
    """

    detected: bool
    peaks: tuple[tuple[int, float, float], ...]
    chosen_cell: tuple[int, int] | None = None

    def __post_init__(self):
        if self.detected != bool(self.peaks):
            raise ValueError("peaks must be nonempty iff detected")
        if self.detected != (self.chosen_cell is not None):
            raise ValueError("chosen_cell must be present iff detected")


def doppler_profile(heatmap: DopplerRangeHeatmap) -> np.ndarray:
    """Arithmetic mean of each Doppler row across the delay bins."""
    return heatmap.power.mean(axis=1)


def ca_cfar(
    profile: np.ndarray,
    cfg: CfarConfig = CfarConfig(),
    heatmap: DopplerRangeHeatmap | None = None,
    masked_bins=(),
) -> DetectionResult:
    """Cell-averaging CFAR over a 1-D power profile.

    Per cell, the noise level is the mean of the reference cells on both
    sides, skipping the guard cells and any masked bins; edge cells fall back
    to the one-sided references that exist (Doppler endpoints are physically
    unrelated, so no wrap-around).  A cell is a peak when it is a local
    maximum, strictly positive, and ``>= noise * scale``.

    When ``heatmap`` is given, the chosen cell is the strongest heatmap cell
    among the detected rows; ties prefer the slower (smaller |Doppler|) row.
    Without a heatmap the chosen cell is the strongest profile peak's row
    with a placeholder delay index of 0.
    """
    p = np.asarray(profile, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("profile must be 1-D")
    if p.size < cfg.min_profile_length:
        raise ValueError(
            f"profile of length {p.size} is too short for CFAR; "
            f"need at least {cfg.min_profile_length}"
        )
    masked = set(int(b) for b in masked_bins)
    guard, ref = cfg.num_guard_cells, cfg.num_reference_cells
    scale = cfg.scale
    peaks = []
    for i in range(p.size):
        if i in masked:
            continue
        lo = [j for j in range(i - guard - ref, i - guard) if 0 <= j < p.size and j not in masked]
        hi = [j for j in range(i + guard + 1, i + guard + ref + 1) if j < p.size and j not in masked]
        refs = lo + hi
        if not refs:
            continue
        noise = float(np.mean(p[refs]))
        threshold = noise * scale
        left = p[i - 1] if i > 0 and (i - 1) not in masked else -np.inf
        right = p[i + 1] if i + 1 < p.size and (i + 1) not in masked else -np.inf
        if p[i] > 0 and p[i] >= threshold and p[i] >= left and p[i] >= right:
            peaks.append((i, float(p[i]), threshold))
    if not peaks:
        return DetectionResult(detected=False, peaks=())
    chosen = None
    if heatmap is not None:
        zero = heatmap.doppler_grid.zero_index
        best = None
        for b, _, _ in peaks:
            d = int(np.argmax(heatmap.power[b]))
            key = (-heatmap.power[b, d], abs(b - zero))
            if best is None or key < best[0]:
                best = (key, (b, d))
        chosen = best[1]
    else:
        # no heatmap: fall back to the strongest profile peak's row
        b = max(peaks, key=lambda t: t[1])[0]
        chosen = (b, 0)
    return DetectionResult(detected=True, peaks=tuple(peaks), chosen_cell=chosen)


def detect_water(heatmap: DopplerRangeHeatmap, cfg: CfarConfig = CfarConfig()) -> DetectionResult:
    """Full detection step: profile the heatmap, mask the 0 Hz bin, run CFAR."""
    profile = doppler_profile(heatmap)
    return ca_cfar(profile, cfg, heatmap=heatmap, masked_bins=(heatmap.doppler_grid.zero_index,))
