"""Phase unwrapping with a scalar Kalman filter, phase-to-height conversion,
and ground-truth alignment/scoring.

The per-window feature phase is wrapped into [-pi, pi]; continuous tracking
needs the integer number of whole turns back.  A constant-phase Kalman filter
supplies the trend: each new measurement is unwrapped onto the branch nearest
the filter's prediction, and the filter state is then updated with the
corrected residual.  The smoothed state provides the cycle bookkeeping while
the branch-corrected measurement itself is the unwrapped phase handed
downstream (the state lags a steep ramp by design -- its gain trades lag for
noise -- so it would bias heights if used directly).

Height sign convention: the transform returns a positive height change when
the reflection path *lengthened*, i.e. when the water level fell.  Reports
negate it into ``level_change`` (positive = level rise).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import _readonly

TWO_PI = 2.0 * math.pi


def wrap_phase(phase: float) -> float:
    """Wrap to [-pi, pi] via the modulo identity ``mod(x + pi, 2 pi) - pi``."""
    return (phase + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class KalmanState:
    """Scalar constant-phase Kalman filter state.

    ``x`` is the running unwrapped-phase estimate, ``p`` its variance.
    Process and measurement noise default to 0.01 and 0.25.
    """

    x: float
    p: float = 1.0
    q: float = 0.01
    r: float = 0.25

    def __post_init__(self):
        if not (self.p > 0 and self.q > 0 and self.r > 0):
            raise ValueError("p, q, r must all be positive")


def kalman_unwrap_step(
    state: KalmanState, measured_phase: float
) -> tuple[KalmanState, float]:
    """One predict/unwrap/update cycle.

    The prediction is wrapped into [-pi, pi] and compared with the
    measurement; if the raw residual leaves [-pi, pi] a single +/-2 pi
    correction brings it back (it cannot be off by more, both operands being
    wrapped).  The corrected residual updates the state through the scalar
    gain ``P / (P + R)``.

    Returns the updated state and the unwrapped measurement
    ``prediction + corrected residual``, which sits on the 2 pi branch
    nearest the prediction.

    Raises
    ------
    ValueError
        If the measurement lies outside [-pi, pi]; wrap it first.
    """
    if not -math.pi - 1e-12 <= measured_phase <= math.pi + 1e-12:
        raise ValueError(f"measured phase {measured_phase} is outside [-pi, pi]")
    x_pred = state.x  # identity transition
    p_pred = state.p + state.q
    wrapped_pred = wrap_phase(x_pred)
    residual = measured_phase - wrapped_pred
    if residual > math.pi:
        correction = -1
    elif residual < -math.pi:
        correction = 1
    else:
        correction = 0
    y = residual + TWO_PI * correction
    gain = p_pred / (p_pred + state.r)
    new_state = replace(state, x=x_pred + gain * y, p=(1.0 - gain) * p_pred)
    return new_state, x_pred + y


def kalman_unwrap(
    phases, q: float = 0.01, r: float = 0.25, p0: float = 1.0
) -> np.ndarray:
    """Unwrap a wrapped phase sequence; returns the unwrapped measurements.

    The state is seeded with the first measurement (avoids a startup
    transient the filter would otherwise have to burn off).
    """
    phases = np.asarray(phases, dtype=float)
    if phases.size == 0:
        return phases.copy()
    state = KalmanState(x=float(phases[0]), p=p0, q=q, r=r)
    out = np.empty_like(phases)
    out[0] = phases[0]
    for k in range(1, phases.size):
        state, out[k] = kalman_unwrap_step(state, float(phases[k]))
    return out


def phase_to_path_change(delta_phase: float, wavelength_m: float) -> float:
    """Path-length change for an unwrapped phase change:
    ``wavelength * delta_phase / (2 pi)``."""
    return wavelength_m * delta_phase / TWO_PI


def phase_to_height(
    phase_prev: float, phase_next: float, wavelength_m: float, reflection_angle_rad: float
) -> float:
    """Water-height change between two windows from their unwrapped phases:
    ``(lambda / 4 pi) * (phase_next - phase_prev) / sin(theta)``.

    Positive output means the reflection path lengthened, i.e. the water
    level *fell*; negate for a level change (see module docstring).

    Raises
    ------
    ValueError
        If the reflection angle is outside (0, pi/2).
    """
    if not 0.0 < reflection_angle_rad < math.pi / 2:
        raise ValueError("reflection angle must lie in (0, pi/2)")
    return (
        wavelength_m
        / (4.0 * math.pi)
        * (phase_next - phase_prev)
        / math.sin(reflection_angle_rad)
    )


@dataclass(frozen=True)
class HeightSeries:
    """Cumulative height-change series with per-sample coasting flags."""

    times_s: np.ndarray
    heights_m: np.ndarray
    coasting: np.ndarray | None = None

    def __post_init__(self):
        t = _readonly(np.asarray(self.times_s, dtype=float))
        h = _readonly(np.asarray(self.heights_m, dtype=float))
        object.__setattr__(self, "times_s", t)
        object.__setattr__(self, "heights_m", h)
        if t.shape != h.shape or t.ndim != 1:
            raise ValueError("times and heights must be 1-D and equal length")
        if t.size and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        if self.coasting is not None:
            c = _readonly(np.asarray(self.coasting, dtype=bool))
            object.__setattr__(self, "coasting", c)
            if c.shape != t.shape:
                raise ValueError("coasting flags must match the series length")


def heights_from_phases(
    times_s,
    unwrapped_phases,
    wavelength_m: float,
    reflection_angle_rad,
    coasting=None,
) -> HeightSeries:
    """Cumulative height change (path-lengthening positive) from an unwrapped
    phase series, anchored at zero for the first window.

    ``reflection_angle_rad`` is normally one fixed angle; long-term tracking
    may pass a per-window sequence (same length as the phases), in which case
    each increment uses its own window's angle.
    """
    phases = np.asarray(unwrapped_phases, dtype=float)
    angles = np.broadcast_to(
        np.asarray(reflection_angle_rad, dtype=float), phases.shape
    )
    heights = np.zeros_like(phases)
    for k in range(1, phases.size):
        heights[k] = heights[k - 1] + phase_to_height(
            phases[k - 1], phases[k], wavelength_m, angles[k]
        )
    return HeightSeries(times_s=np.asarray(times_s, float), heights_m=heights, coasting=coasting)


@dataclass(frozen=True)
class AlignmentScore:
    mean_abs_error_m: float
    std_m: float
    times_s: np.ndarray
    aligned_estimate_m: np.ndarray
    aligned_truth_m: np.ndarray


def align_and_score(est: HeightSeries, truth: HeightSeries) -> AlignmentScore:
    """Normalize both series (mean-subtract, then shift to start at zero),
    interpolate the estimate onto the truth timestamps, and score.

    Only the overlapping time support is compared; no overlap is an error.
    Scores are the mean absolute error and the standard deviation of the
    error.
    """
    if est.times_s.size == 0 or truth.times_s.size == 0:
        raise ValueError("both series must be nonempty")
    e = est.heights_m - est.heights_m.mean()
    e = e - e[0]
    g = truth.heights_m - truth.heights_m.mean()
    g = g - g[0]
    lo = max(est.times_s[0], truth.times_s[0])
    hi = min(est.times_s[-1], truth.times_s[-1])
    mask = (truth.times_s >= lo) & (truth.times_s <= hi)
    if not np.any(mask):
        raise ValueError("series have no temporal overlap")
    t = truth.times_s[mask]
    est_i = np.interp(t, est.times_s, e)
    err = est_i - g[mask]
    return AlignmentScore(
        mean_abs_error_m=float(np.mean(np.abs(err))),
        std_m=float(np.std(err)),
        times_s=t,
        aligned_estimate_m=est_i,
        aligned_truth_m=g[mask],
    )
