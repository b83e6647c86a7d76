"""Complex water-reflection feature extraction at the detected Doppler/range
bins: beamformer weights, per-antenna subcarrier combining, optional spatial
(antenna-axis) refinement, and bin stabilization across windows.

Doppler sign bookkeeping
------------------------

The power time series is real, so its spectrum is conjugate-symmetric and the
water line appears at both +f and -f.  Detection settles on the row whose
frequency-axis phase slope matches a positive relative delay, i.e. the row
proportional to ``exp(-2j pi delta_f m dtau)`` -- the *conjugate* of the
underlying modulated component.  The component itself, whose phase is
``+2 pi f_c dtau`` and therefore rises and falls with the reflection-path
length, lives at the mirrored bin, where the slice is the exact conjugate of
the detected one.  :func:`water_features` therefore extracts at the mirror
bin with conjugated weights, which yields features whose phase *decreases
when the water level rises* (shorter path) and increases when it falls.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import DelayGrid, SPEED_OF_LIGHT
from .heatmap import (
    CovarianceEstimate,
    DEFAULT_LOADING_DB,
    IllConditionedCovarianceError,
    estimate_covariance,
    steering_vector,
    _COND_LIMIT,
)
from .preprocess import DopplerSpectrum


class WeightMode(enum.Enum):
    MVDR = "mvdr"
    DELAY_AND_SUM = "delay_and_sum"


def beamformer_weights(
    cov: CovarianceEstimate,
    delay_s: float,
    mode: WeightMode,
    subcarrier_spacing_hz: float,
) -> np.ndarray:
    """Subcarrier combining weights steered at the given relative delay.

    MVDR: ``w = R^-1 a / (a^H R^-1 a)``; DELAY_AND_SUM: ``w = a / M``.  Both
    satisfy the distortionless constraint ``w^H a = 1`` exactly.  A
    degenerate or ill-conditioned covariance raises
    :class:`IllConditionedCovarianceError`; callers may fall back to
    delay-and-sum, which needs no inversion and is the stable choice for
    single-snapshot covariances.
    """
    m = cov.matrix.shape[0]
    a = steering_vector(delay_s, m, subcarrier_spacing_hz)
    if mode is WeightMode.DELAY_AND_SUM:
        return a / m
    if cov.degenerate:
        raise IllConditionedCovarianceError("degenerate covariance")
    eig = np.linalg.eigvalsh(cov.matrix)
    if eig[0] <= 0 or eig[-1] / eig[0] > _COND_LIMIT:
        raise IllConditionedCovarianceError("covariance too ill-conditioned for weights")
    z = np.linalg.solve(cov.matrix, a)
    return z / (a.conj() @ z)


def extract_feature(
    spectrum: DopplerSpectrum, doppler_index: int, weights: np.ndarray, antenna_index: int
) -> complex:
    """Combine one antenna's subcarriers at one Doppler bin:
    ``Y = sum_j conj(w_j) X[antenna, j, bin]``."""
    return complex(np.vdot(weights, spectrum.values[antenna_index, :, doppler_index]))


def spatial_refine(features: np.ndarray, angle_bins: int = 64) -> tuple[complex, float]:
    """Zero-padded FFT across the antenna axis; returns the strongest bin and
    its angle label.

    The label comes from the half-wavelength array response
    ``exp(-1j pi i sin(theta))`` and is *relative* (the static reference
    path's own angle is folded in), so it orders candidates rather than
    measuring absolute arrival direction.  The returned value is normalized
    by the antenna count, so its magnitude is at least ``|sum Y_i| / N``
    (the zero-angle bin) by construction of the maximum.

    Raises
    ------
    ValueError
        For single-antenna input; callers should bypass this stage instead.
    """
    y = np.asarray(features, dtype=np.complex128)
    if y.ndim != 1 or y.size < 2:
        raise ValueError("spatial refinement needs >= 2 antennas; bypass for single-antenna data")
    k = max(int(angle_bins), y.size)
    s = np.fft.fft(y, n=k) / y.size
    u = 2.0 * np.fft.fftfreq(k)  # sin-space in [-1, 1)
    peak = int(np.argmax(np.abs(s)))
    return complex(s[peak]), math.degrees(math.asin(-u[peak]))


def stabilize_bins(
    history, candidate: tuple[int, int], depth: int = 5, gate: int = 2
) -> tuple[tuple[int, int], bool]:
    """Gate a (doppler_bin, range_bin) candidate against the recent history.

    The candidate passes when both coordinates are within ``gate`` bins of
    the running median over the last ``depth`` accepted pairs; otherwise the
    median pair is returned and the window is marked as coasting.  An empty
    history passes the candidate through.
    """
    recent = list(history)[-depth:]
    if not recent:
        return candidate, False
    med_d = int(np.rint(np.median([d for d, _ in recent])))
    med_r = int(np.rint(np.median([r for _, r in recent])))
    if abs(candidate[0] - med_d) <= gate and abs(candidate[1] - med_r) <= gate:
        return candidate, False
    return (med_d, med_r), True


class BinStabilizer:
    """Per-stream bin stabilizer; owns its small history (not thread-safe,
    one instance per tracked stream)."""

    def __init__(self, depth: int = 5, gate: int = 2):
        self.depth = depth
        self.gate = gate
        self.history: list[tuple[int, int]] = []

    def update(self, candidate: tuple[int, int]) -> tuple[tuple[int, int], bool]:
        accepted, coasting = stabilize_bins(self.history, candidate, self.depth, self.gate)
        self.history.append(accepted)
        if len(self.history) > self.depth:
            del self.history[: -self.depth]
        return accepted, coasting


@dataclass(frozen=True)
class FeatureSample:
    """One window's complex water-reflection feature with its bin provenance.

    ``antenna_index`` is None for the spatially combined feature;
    ``aoa_bin_deg`` is only set by spatial refinement.
    """

    window_index: int
    value: complex
    doppler_bin_hz: float
    range_m: float
    aoa_bin_deg: float | None = None
    antenna_index: int | None = None
    coasting: bool = False

    @property
    def amplitude(self) -> float:
        return abs(self.value)

    @property
    def phase(self) -> float:
        """Wrapped phase in [-pi, pi]."""
        return math.atan2(self.value.imag, self.value.real)


def water_features(
    spectrum: DopplerSpectrum,
    doppler_bin: int,
    delay_bin: int,
    delays: DelayGrid,
    loading_db: float = DEFAULT_LOADING_DB,
    mode: WeightMode | None = None,
    window_index: int = 0,
    coasting: bool = False,
    spatial: bool | None = None,
    angle_bins: int = 64,
) -> tuple[list[FeatureSample], FeatureSample | None]:
    """Extract per-antenna water features at a detected (doppler, delay) cell.

    ``doppler_bin`` is the detected (delay-matched) row; extraction happens
    at its mirror with conjugated weights so the feature phase carries the
    physical sign (see the module docstring).  ``mode`` defaults to MVDR with
    several antennas and delay-and-sum for one; an ill-conditioned MVDR solve
    also falls back to delay-and-sum.  With ``spatial`` enabled (default for
    multi-antenna data) the per-antenna features are additionally combined
    across the array.

    Returns (per-antenna samples, combined sample or None).
    """
    n_ant = spectrum.values.shape[0]
    if mode is None:
        mode = WeightMode.MVDR if n_ant > 1 else WeightMode.DELAY_AND_SUM
    if spatial is None:
        spatial = n_ant >= 2
    delay_s = float(delays.bins_s[delay_bin])
    df = delays.subcarrier_spacing_hz
    cov = estimate_covariance(spectrum.slice_at(doppler_bin), loading_db)
    try:
        w = beamformer_weights(cov, delay_s, mode, df)
    except IllConditionedCovarianceError:
        w = beamformer_weights(cov, delay_s, WeightMode.DELAY_AND_SUM, df)
    mirror = spectrum.grid.mirror_index(doppler_bin)
    w_phys = w.conj()
    doppler_hz = float(spectrum.grid.bins_hz[mirror])
    range_m = delay_s * SPEED_OF_LIGHT
    per_antenna = []
    for i in range(n_ant):
        y = extract_feature(spectrum, mirror, w_phys, i)
        per_antenna.append(
            FeatureSample(
                window_index=window_index,
                value=y,
                doppler_bin_hz=doppler_hz,
                range_m=range_m,
                antenna_index=i,
                coasting=coasting,
            )
        )
    combined = None
    if spatial and n_ant >= 2:
        z, aoa = spatial_refine(np.array([s.value for s in per_antenna]), angle_bins)
        combined = FeatureSample(
            window_index=window_index,
            value=z,
            doppler_bin_hz=doppler_hz,
            range_m=range_m,
            aoa_bin_deg=aoa,
            antenna_index=None,
            coasting=coasting,
        )
    return per_antenna, combined
