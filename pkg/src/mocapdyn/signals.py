"""Differencing, zero-phase low-pass filtering, and resampling.

The filtering standard used throughout the pipeline is a 3rd-order Butterworth
low-pass at 30 Hz, applied forward and backward (zero phase).  Note that the
double pass squares the magnitude response, so the gain at the cutoff is
-6 dB rather than the single-pass -3 dB.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, filtfilt

from .errors import InputError


@dataclass
class TimeSeries:
    """Uniformly sampled multichannel series: ``samples`` is (T, D)."""

    dt: float
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if not self.dt > 0:
            raise InputError("dt must be > 0")
        if self.samples.shape[0] < 1:
            raise InputError("need at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise InputError("samples must be finite")

    @property
    def length(self) -> int:
        return self.samples.shape[0]

    @property
    def channels(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return (self.length - 1) * self.dt


def central_difference2(series: TimeSeries) -> TimeSeries:
    """Second derivative by central differencing; endpoints copy their
    nearest interior value so the output length matches the input."""
    x = series.samples
    if x.shape[0] < 3:
        raise InputError("central differencing needs at least 3 frames")
    out = np.empty_like(x)
    out[1:-1] = (x[:-2] - 2.0 * x[1:-1] + x[2:]) / series.dt ** 2
    out[0] = out[1]
    out[-1] = out[-2]
    return TimeSeries(series.dt, out)


def central_difference1(series: TimeSeries) -> TimeSeries:
    """First derivative by central differencing, same endpoint policy."""
    x = series.samples
    if x.shape[0] < 3:
        raise InputError("central differencing needs at least 3 frames")
    out = np.empty_like(x)
    out[1:-1] = (x[2:] - x[:-2]) / (2.0 * series.dt)
    out[0] = out[1]
    out[-1] = out[-2]
    return TimeSeries(series.dt, out)


def butterworth_lowpass(series: TimeSeries, cutoff_hz: float,
                        order: int = 3) -> TimeSeries:
    """Zero-phase Butterworth low-pass (forward + backward pass).

    The discrete filter comes from the bilinear transform with frequency
    prewarping; edges are handled by odd reflection of 3 * order samples.
    """
    nyquist = 0.5 / series.dt
    if not 0 < cutoff_hz < nyquist:
        raise InputError(f"cutoff {cutoff_hz} Hz must lie in (0, {nyquist}) Hz")
    if order not in range(1, 7):
        raise InputError("order must be in 1..6")
    padlen = 3 * order
    if series.length <= padlen:
        raise InputError(
            f"series too short for order-{order} zero-phase filtering "
            f"(need > {padlen} frames, got {series.length})")
    b, a = butter(order, cutoff_hz / nyquist)
    out = filtfilt(b, a, series.samples, axis=0, padtype="odd", padlen=padlen)
    return TimeSeries(series.dt, out)


def resample(series: TimeSeries, target_hz: float) -> TimeSeries:
    """Linear interpolation onto a uniform grid spanning the original
    duration; the first sample is preserved exactly."""
    if not target_hz > 0:
        raise InputError("target_hz must be > 0")
    dt_new = 1.0 / target_hz
    n_new = int(np.floor(series.duration / dt_new + 1e-9)) + 1
    t_old = np.arange(series.length) * series.dt
    t_new = np.arange(n_new) * dt_new
    out = np.empty((n_new, series.channels))
    for c in range(series.channels):
        out[:, c] = np.interp(t_new, t_old, series.samples[:, c])
    return TimeSeries(dt_new, out)


def filter_cascade(samples: np.ndarray, dt: float, stages) -> np.ndarray:
    """Apply a sequence of (cutoff_hz, order) zero-phase low-pass stages to a
    (T, D) array.  Used to keep kinematics and force data consistently
    smoothed before comparing them."""
    arr = np.asarray(samples, dtype=float)
    ts = TimeSeries(dt, arr.reshape(arr.shape[0], -1))
    for cutoff_hz, order in stages:
        ts = butterworth_lowpass(ts, cutoff_hz, order)
    return ts.samples.reshape(arr.shape)
