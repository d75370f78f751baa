"""Centered running-mean detrending.

The trace of each sensor is approximated by the mean of the ``tau_av + 1``
samples centered at ``t``; the residual is the sample minus that mean.
Residuals exist only where the centered window fits inside the series,
i.e. for ``tau_av/2 <= t <= T - 1 - tau_av/2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from faultcorr.errors import InsufficientDataError, RangeError, ValidationError


def check_tau_av(tau_av: int) -> int:
    if int(tau_av) != tau_av or tau_av < 2 or tau_av % 2:
        raise ValidationError(f"tau_av must be an even integer >= 2, got {tau_av}")
    return int(tau_av)


@dataclass(frozen=True, eq=False)
class ResidualSeries:
    """Residuals of one sensor over its valid range.

    ``values[j]`` is the residual at absolute step ``start + j``. ``scale`` is
    the largest absolute input sample; correlation uses it to tell genuinely
    flat windows from rounding noise.
    """

    sensor: str
    values: np.ndarray
    tau_av: int
    start: int
    scale: float = 0.0

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if not np.isfinite(values).all():
            raise ValidationError(f"sensor {self.sensor!r}: residuals must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def valid_range(self) -> tuple[int, int]:
        """Inclusive step interval on which residuals are defined."""
        return self.start, self.start + len(self.values) - 1

    def at(self, t: int) -> float:
        lo, hi = self.valid_range
        if not lo <= t <= hi:
            raise RangeError(f"step {t} outside valid range [{lo}, {hi}]")
        return float(self.values[t - lo])

    def window(self, t_end: int, span: int) -> np.ndarray:
        """Residuals at steps ``t_end - span + 1 .. t_end``."""
        lo, hi = self.valid_range
        first = t_end - span + 1
        if span < 1 or first < lo or t_end > hi:
            raise RangeError(
                f"residual window [{first}, {t_end}] outside valid range [{lo}, {hi}] of {self.sensor!r}"
            )
        return self.values[first - lo : t_end - lo + 1]


def running_mean(series, tau_av: int, t: int) -> float:
    """Mean of the ``tau_av + 1`` samples centered at step ``t``."""
    tau_av = check_tau_av(tau_av)
    x = np.asarray(series, dtype=float)
    half = tau_av // 2
    if not half <= t <= len(x) - 1 - half:
        raise RangeError(f"step {t} outside valid range [{half}, {len(x) - 1 - half}]")
    seg = x[t - half : t + half + 1]
    return float(x[t] + (seg - x[t]).sum() / (tau_av + 1))


def residual_matrix(values: np.ndarray, tau_av: int) -> np.ndarray:
    """Residuals for every row of ``values`` (shape ``(N, T)``).

    Returns an array of shape ``(N, T - tau_av)`` whose column ``j`` is step
    ``tau_av/2 + j``. NaN inputs propagate to every residual whose window
    touches them.
    """
    tau_av = check_tau_av(tau_av)
    x = np.asarray(values, dtype=float)
    squeeze = x.ndim == 1
    x = np.atleast_2d(x)
    n_steps = x.shape[1]
    if n_steps <= tau_av:
        raise InsufficientDataError(f"series of length {n_steps} is too short for tau_av={tau_av}")
    half = tau_av // 2
    stop = n_steps - half
    center = x[:, half:stop]
    # offsets relative to the center keep constant windows exactly zero
    acc = np.zeros_like(center)
    for offset in range(-half, half + 1):
        acc += x[:, half + offset : stop + offset] - center
    out = -acc / (tau_av + 1)
    return out[0] if squeeze else out


def residuals(series, tau_av: int, sensor: str = "") -> ResidualSeries:
    """Detrended residuals of one series over its valid range."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValidationError("residuals expects a 1-D series")
    if not np.isfinite(x).all():
        raise ValidationError(f"sensor {sensor!r}: series contains missing or non-finite samples")
    r = residual_matrix(x, tau_av)
    scale = float(np.abs(x).max()) if len(x) else 0.0
    return ResidualSeries(sensor, r, int(tau_av), int(tau_av) // 2, scale)
