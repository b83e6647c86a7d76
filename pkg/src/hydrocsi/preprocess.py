"""Raw CSI to Doppler domain: power de-offsetting, mean removal, and the
windowed non-uniform Doppler transform.

Working with the squared magnitude of the CSI kills every unit-modulus
impairment (sampling-time offset, carrier frequency offset, per-antenna
hardware phase) while keeping the *differences* between path phases, which is
what carries the water-level signal.  The remaining slow-time variation is
then mapped to Doppler frequency with a direct-evaluation Fourier sum that
tolerates the intermittent sampling schedule.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import (
    CsiWindow,
    DopplerGrid,
    PowerWindow,
    SystemConfig,
    median_sample_interval,
    _readonly,
)


class WindowFunction(enum.Enum):
    HAMMING = "hamming"
    RECT = "rect"


@dataclass(frozen=True)
class DopplerSpectrum:
    """Complex Doppler spectrum per (antenna, subcarrier): values has shape
    (antennas, subcarriers, doppler bins).

    For real-valued input on a symmetric grid the spectrum is conjugate
    symmetric: ``values[..., mirror(b)] == conj(values[..., b])``.
    """

    values: np.ndarray
    grid: DopplerGrid
    config: SystemConfig

    def __post_init__(self):
        values = _readonly(np.asarray(self.values, dtype=np.complex128))
        object.__setattr__(self, "values", values)
        if values.ndim != 3 or values.shape[2] != self.grid.num_bins:
            raise ValueError("values must be (antennas, subcarriers, doppler bins)")
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrum must be finite")

    def slice_at(self, bin_index: int) -> np.ndarray:
        """(subcarriers, antennas) observation matrix at one Doppler bin."""
        return np.ascontiguousarray(self.values[:, :, bin_index].T)


def csi_power(window: CsiWindow) -> PowerWindow:
    """Elementwise squared magnitude of the CSI.

    Multiplying each sample by its own conjugate removes the random phase
    offsets of the unsynchronized transceiver exactly: those factors are
    unit-modulus, so ``|CSI|^2`` is independent of them.  The cross terms
    between static and dynamic paths survive as cosines of the path phase
    differences.
    """
    s = np.asarray(window.samples)
    values = (s.real.astype(np.float64)) ** 2 + (s.imag.astype(np.float64)) ** 2
    return PowerWindow(values=values, timestamps_s=window.timestamps_s, config=window.config)


def remove_mean(power: PowerWindow) -> PowerWindow:
    """Subtract the temporal mean per (antenna, subcarrier).

    Suppresses the static-power pedestal so the Doppler transform is not
    dominated by a DC spike.  Output sums to ~0 along time.
    """
    values = power.values - power.values.mean(axis=2, keepdims=True)
    return PowerWindow(values=values, timestamps_s=power.timestamps_s, config=power.config)


def window_weights(timestamps_s: np.ndarray, window_fn: WindowFunction) -> np.ndarray:
    """Taper weights evaluated at the normalized position of each timestamp.

    The taper must follow the actual (non-uniform) sample times, not the
    sample index, or the intermittent schedule would distort its shape.
    """
    t = np.asarray(timestamps_s, dtype=np.float64)
    if window_fn is WindowFunction.RECT:
        return np.ones_like(t)
    span = t[-1] - t[0]
    pos = (t - t[0]) / span if span > 0 else np.zeros_like(t)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * pos)


def doppler_transform(
    power: PowerWindow,
    grid: DopplerGrid,
    window_fn: WindowFunction = WindowFunction.HAMMING,
) -> DopplerSpectrum:
    """Windowed direct-sum Fourier transform onto the Doppler grid.

    X[i, j](f) = sum_k w(t_k) P[i, j, k] exp(-2j pi f t_k) / sum_k w(t_k)

    The coherent-gain normalization (division by the weight sum) keeps
    amplitudes comparable across schedules and window functions.  The 0 Hz
    bin is computed like any other but downstream peak searches exclude it.

    Raises
    ------
    ValueError
        If any grid bin exceeds the schedule's non-uniform Nyquist bound
        1 / (2 * median sample interval).
    """
    t = power.timestamps_s
    nyquist = 1.0 / (2.0 * median_sample_interval(t))
    max_bin = float(np.max(np.abs(grid.bins_hz)))
    if max_bin > nyquist * (1 + 1e-12):
        raise ValueError(
            f"doppler grid extends to {max_bin:g} Hz, above the schedule's "
            f"Nyquist bound {nyquist:g} Hz"
        )
    w = window_weights(t, window_fn)
    n_ant, n_sub, n_t = power.values.shape
    flat = power.values.reshape(n_ant * n_sub, n_t)
    spec = kernels.nudft(flat, t, w, grid.bins_hz) / w.sum()
    values = spec.reshape(n_ant, n_sub, grid.num_bins)
    return DopplerSpectrum(values=values, grid=grid, config=power.config)
