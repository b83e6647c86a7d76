"""Delay power estimation per Doppler bin and Doppler-range heatmap assembly.

For every Doppler bin the (subcarriers x antennas) spectrum slice is turned
into a covariance estimate (snapshot average over antennas, forward-backward
smoothed, diagonally loaded) and swept with a minimum-variance spectral
estimator over a positive relative-delay grid.  Stacking the sweeps gives the
Doppler-range heatmap whose peak localizes the water reflection.

Because the power spectrum of a real signal is conjugate-symmetric in
Doppler, each physical component appears in both the +f and -f rows; only one
of them has the frequency-domain phase slope matching a *positive* relative
delay, so the one-sided delay grid is what disambiguates the Doppler sign.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla

from . import kernels
from .core import DelayGrid, DopplerGrid, _readonly, phasor
from .preprocess import DopplerSpectrum

DEFAULT_LOADING_DB = -20.0

# With loading eps relative to trace/M, cond(R) <= M/eps + 1; anything at or
# above this floor therefore cannot be ill-conditioned and the per-bin
# condition check can be skipped.
_COND_LIMIT = 1e12


class IllConditionedCovarianceError(RuntimeError):
    """Covariance too ill-conditioned to invert reliably."""

    def __init__(self, message, doppler_bin: int | None = None):
        super().__init__(message)
        self.doppler_bin = doppler_bin


class CovarianceMode(enum.Enum):
    MULTI_ANTENNA_SNAPSHOTS = "snapshots"
    SINGLE_ANTENNA_OUTER = "outer"


@dataclass(frozen=True)
class CovarianceEstimate:
    """Loaded, forward-backward-smoothed covariance of one spectrum slice.

    ``loading`` is the absolute value added to the diagonal.  ``degenerate``
    marks an all-zero (or non-finite) slice; downstream skips such bins.
    """

    matrix: np.ndarray
    loading: float
    mode: CovarianceMode
    degenerate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "matrix", _readonly(np.asarray(self.matrix, np.complex128)))


def steering_vector(delay_s: float, num_subcarriers: int, subcarrier_spacing_hz: float) -> np.ndarray:
    """Frequency-domain steering vector for a relative delay:
    ``a_m = exp(-2j pi delta_f m delay)`` for m = 0..M-1."""
    m = np.arange(num_subcarriers)
    return phasor(2.0 * np.pi * subcarrier_spacing_hz * m * delay_s)


def steering_matrix(delays: DelayGrid, num_subcarriers: int) -> np.ndarray:
    """(M, D) matrix whose columns are steering vectors of the delay grid."""
    m = np.arange(num_subcarriers)[:, None]
    return phasor(2.0 * np.pi * delays.subcarrier_spacing_hz * m * delays.bins_s[None, :])


def estimate_covariance(spectrum_slice: np.ndarray, loading_db: float = DEFAULT_LOADING_DB) -> CovarianceEstimate:
    """Covariance of a (subcarriers, antennas) slice at one Doppler bin.

    Snapshot average ``Lambda Lambda^H / N`` over the antenna columns (a
    plain outer product when N = 1), then persymmetric forward-backward
    averaging ``(R + J conj(R) J)/2``, then diagonal loading
    ``10^(loading_db/10) * trace/M``.  Loading is what keeps the estimate
    invertible with so few snapshots.
    """
    lam = np.asarray(spectrum_slice, dtype=np.complex128)
    if lam.ndim == 1:
        lam = lam[:, None]
    m, n = lam.shape
    mode = CovarianceMode.SINGLE_ANTENNA_OUTER if n == 1 else CovarianceMode.MULTI_ANTENNA_SNAPSHOTS
    r = lam @ lam.conj().T / n
    trace = float(np.trace(r).real)
    if not np.isfinite(trace) or trace <= 0.0:
        return CovarianceEstimate(np.zeros((m, m)), 0.0, mode, degenerate=True)
    r = 0.5 * (r + r[::-1, ::-1].conj())
    alpha = (10.0 ** (loading_db / 10.0)) * trace / m
    r[np.diag_indices(m)] += alpha
    return CovarianceEstimate(r, alpha, mode)


def mvdr_spectrum(
    cov: CovarianceEstimate,
    delays: DelayGrid,
    check_condition: bool = True,
    doppler_bin: int | None = None,
) -> np.ndarray:
    """Minimum-variance delay power spectrum ``P(d) = 1 / |a^H R^-1 a|``.

    Strictly positive on every grid bin.  ``check_condition`` performs an
    exact eigenvalue condition estimate and raises
    :class:`IllConditionedCovarianceError` above 1e12; the batched heatmap
    path skips it because the loading bound makes it impossible.
    """
    if cov.degenerate:
        raise IllConditionedCovarianceError("degenerate covariance", doppler_bin)
    r = cov.matrix
    m = r.shape[0]
    if check_condition:
        eig = np.linalg.eigvalsh(r)
        if eig[0] <= 0 or eig[-1] / eig[0] > _COND_LIMIT:
            raise IllConditionedCovarianceError(
                f"covariance condition number exceeds {_COND_LIMIT:g}", doppler_bin
            )
    a = steering_matrix(delays, m)
    try:
        factor = sla.cho_factor(r, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedCovarianceError(str(exc), doppler_bin) from exc
    z = sla.cho_solve(factor, a, check_finite=False)
    quad = np.einsum("md,md->d", a.conj(), z).real
    return 1.0 / np.abs(quad)


@dataclass(frozen=True)
class DopplerRangeHeatmap:
    """Power surface over (doppler bins x delay bins).

    Degenerate Doppler bins appear as zeroed rows and are listed in
    ``degenerate_rows``; the 0 Hz row is always zeroed (the DC residue is
    meaningless after mean removal) and is not counted as degenerate.
    ``peak_mask`` is optional per-cell metadata filled in by detection.
    """

    power: np.ndarray
    doppler_grid: DopplerGrid
    delay_grid: DelayGrid
    degenerate_rows: tuple[int, ...] = ()
    peak_mask: np.ndarray | None = None

    def __post_init__(self):
        power = _readonly(np.asarray(self.power, dtype=np.float64))
        object.__setattr__(self, "power", power)
        if power.shape != (self.doppler_grid.num_bins, self.delay_grid.num_bins):
            raise ValueError("power must be (doppler bins, delay bins)")
        if not np.all(np.isfinite(power)) or np.any(power < 0):
            raise ValueError("heatmap power must be finite and nonnegative")

    @property
    def warning_count(self) -> int:
        return len(self.degenerate_rows)

    @property
    def ranges_m(self) -> np.ndarray:
        return self.delay_grid.ranges_m

    def with_peaks(self, mask: np.ndarray) -> "DopplerRangeHeatmap":
        return replace(self, peak_mask=np.asarray(mask, dtype=bool))


def build_heatmap(
    spectrum: DopplerSpectrum,
    delays: DelayGrid,
    loading_db: float = DEFAULT_LOADING_DB,
) -> DopplerRangeHeatmap:
    """Sweep every Doppler bin (except 0 Hz) with the minimum-variance delay
    estimator and stack the results into a heatmap.

    Row semantics match ``mvdr_spectrum(estimate_covariance(slice))`` bin by
    bin; degenerate bins become zeroed rows with a warning count rather than
    errors.
    """
    if delays.subcarrier_spacing_hz != spectrum.config.subcarrier_spacing_hz:
        raise ValueError("delay grid subcarrier spacing does not match the spectrum's")
    values = spectrum.values  # (N, M, F)
    slices = np.ascontiguousarray(values.transpose(2, 1, 0))  # (F, M, N)
    a = steering_matrix(delays, spectrum.config.num_subcarriers)
    eps = 10.0 ** (loading_db / 10.0)
    power, degen = kernels.mvdr_rows(slices, a, eps)
    zero = spectrum.grid.zero_index
    power[zero] = 0.0
    degen_rows = tuple(int(i) for i in np.nonzero(degen)[0] if i != zero)
    return DopplerRangeHeatmap(
        power=power,
        doppler_grid=spectrum.grid,
        delay_grid=delays,
        degenerate_rows=degen_rows,
    )


def heatmap_to_csv(heatmap: DopplerRangeHeatmap, path) -> None:
    """Write the heatmap as CSV: header row of range bins (meters), first
    column of Doppler bins (Hz)."""
    with open(path, "w", encoding="utf-8") as fh:
        header = ",".join(f"{r:.9g}" for r in heatmap.ranges_m)
        fh.write("doppler_hz," + header + "\n")
        for f, row in zip(heatmap.doppler_grid.bins_hz, heatmap.power):
            fh.write(f"{f:.9g}," + ",".join(f"{p:.9g}" for p in row) + "\n")
