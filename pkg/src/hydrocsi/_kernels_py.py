"""Pure-numpy kernels: the reference implementations of the two hot loops.

These define the semantics; the compiled extension in ``_kernels.pyx`` must
agree with them to near machine precision (checked in the test suite).
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla


def nudft(weighted_values: np.ndarray, timestamps: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """Direct-sum non-uniform DFT of real-valued streams.

    out[s, f] = sum_k weighted_values[s, k] * exp(-2j * pi * freqs[f] * t[k])

    ``weighted_values`` is (streams, samples) real; window weights are already
    folded in by the caller.  Returns (streams, freqs) complex128.
    """
    v = np.ascontiguousarray(weighted_values, dtype=np.float64)
    t = np.asarray(timestamps, dtype=np.float64)
    f = np.asarray(freqs, dtype=np.float64)
    arg = -2.0 * np.pi * np.outer(t, f)
    # input is real, so two real matmuls beat one complex one
    return (v @ np.cos(arg)) + 1j * (v @ np.sin(arg))


def mvdr_rows(
    slices: np.ndarray, steering: np.ndarray, loading: float
) -> tuple[np.ndarray, np.ndarray]:
    """Minimum-variance delay power spectra for a batch of spectrum slices.

    For each row ``b``, ``slices[b]`` is the (subcarriers, antennas)
    observation matrix at one Doppler bin.  The covariance is the snapshot
    average over antennas, forward-backward averaged (persymmetric), then
    diagonally loaded with ``loading * trace/M``.  Output power per steering
    column is ``1 / |a^H R^-1 a|``.

    Returns (power (B, D) float64, degenerate (B,) bool).  Degenerate rows
    (zero or non-finite energy, or a failed factorization) come back as all
    zeros.
    """
    slices = np.asarray(slices, dtype=np.complex128)
    a = np.asarray(steering, dtype=np.complex128)
    b_rows, m, n = slices.shape
    power = np.zeros((b_rows, a.shape[1]))
    degenerate = np.zeros(b_rows, dtype=bool)
    for b in range(b_rows):
        lam = slices[b]
        r = lam @ lam.conj().T / n
        trace = float(np.trace(r).real)
        if not np.isfinite(trace) or trace <= 0.0:
            degenerate[b] = True
            continue
        r = 0.5 * (r + r[::-1, ::-1].conj())
        r[np.diag_indices(m)] += loading * trace / m
        try:
            factor = sla.cho_factor(r, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            degenerate[b] = True
            continue
        z = sla.cho_solve(factor, a, check_finite=False)
        quad = np.einsum("md,md->d", a.conj(), z).real
        power[b] = 1.0 / np.abs(quad)
    return power, degenerate
