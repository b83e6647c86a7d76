"""Backend selection for the hot kernels.

The compiled extension is used when available; setting the environment
variable ``HYDROCSI_PURE_PYTHON=1`` (before import) forces the numpy
fallback.  Both backends implement identical semantics and the test suite
cross-checks them.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py as _py

_native = None
if os.environ.get("HYDROCSI_PURE_PYTHON", "0") in ("", "0"):
    try:
        from . import _kernels as _native  # type: ignore[no-redef]
    except ImportError:
        _native = None


def backend() -> str:
    """Name of the active backend: ``"native"`` or ``"python"``."""
    return "native" if _native is not None else "python"


def _is_uniform(freqs: np.ndarray) -> bool:
    if freqs.size < 3:
        return True
    d = np.diff(freqs)
    return bool(np.allclose(d, d[0], rtol=1e-9, atol=0.0))


def nudft(
    values: np.ndarray,
    timestamps: np.ndarray,
    weights: np.ndarray,
    freqs: np.ndarray,
    force_reference: bool = False,
) -> np.ndarray:
    """Windowed direct-sum non-uniform DFT of real streams.

    out[s, f] = sum_k weights[k] * values[s, k] * exp(-2j pi freqs[f] t[k])

    The compiled path requires a uniform frequency grid (phasor recurrence);
    otherwise the reference path is used.
    """
    v = np.asarray(values, dtype=np.float64)
    t = np.ascontiguousarray(timestamps, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    f = np.ascontiguousarray(freqs, dtype=np.float64)
    weighted = np.ascontiguousarray(v * w)
    if _native is not None and not force_reference and _is_uniform(f):
        return _native.nudft(weighted, t, f)
    return _py.nudft(weighted, t, f)


def mvdr_rows(
    slices: np.ndarray,
    steering: np.ndarray,
    loading: float,
    force_reference: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched minimum-variance delay power sweep.

    See :func:`hydrocsi._kernels_py.mvdr_rows` for the exact semantics.
    """
    s = np.ascontiguousarray(slices, dtype=np.complex128)
    if _native is not None and not force_reference:
        a = np.asfortranarray(steering, dtype=np.complex128)
        return _native.mvdr_rows(s, a, float(loading))
    return _py.mvdr_rows(s, np.asarray(steering, dtype=np.complex128), float(loading))


def nudft_reference(values, timestamps, weights, freqs):
    """Reference-path NUDFT (always pure numpy)."""
    return nudft(values, timestamps, weights, freqs, force_reference=True)


def mvdr_rows_reference(slices, steering, loading):
    """Reference-path MVDR sweep (always pure numpy)."""
    return mvdr_rows(slices, steering, loading, force_reference=True)
