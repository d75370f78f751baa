"""Pearson correlation matrices of residual windows.

The correlation window is trailing: ``tau_corr`` residual samples ending at
``t_end``. Self-correlations are set to zero by convention, and sensors
whose window is flat (or was flagged as missing by the caller) are dropped
from the matrix rather than given zero correlation.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from faultcorr.detrend import ResidualSeries
from faultcorr.errors import DegenerateSignalError, InsufficientDataError, ValidationError

FLAT_RTOL = 1e-10
MIN_SENSORS = 3


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    matrix: np.ndarray
    sensors: tuple[str, ...]
    t_end: int
    tau_corr: int
    excluded: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != len(self.sensors):
            raise ValidationError(f"matrix shape {m.shape} does not match {len(self.sensors)} sensors")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "sensors", tuple(self.sensors))
        object.__setattr__(self, "excluded", tuple(self.excluded))

    @property
    def size(self) -> int:
        return len(self.sensors)

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


def as_matrix(m) -> np.ndarray:
    """Accept a :class:`CorrelationMatrix` or any square array-like."""
    arr = m.matrix if isinstance(m, CorrelationMatrix) else np.asarray(m, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {arr.shape}")
    return arr


def pearson(r_i, r_j) -> float:
    """Pearson coefficient of two equal-length windows, clamped to [-1, 1].

    Raises:
        DegenerateSignalError: either window has zero variance.
    """
    a = np.asarray(r_i, dtype=float)
    b = np.asarray(r_j, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError(f"windows must be 1-D and equal length, got {a.shape} and {b.shape}")
    da = a - a.mean()
    db = b - b.mean()
    na = np.sqrt(np.dot(da, da))
    nb = np.sqrt(np.dot(db, db))
    if na == 0.0 or nb == 0.0:
        raise DegenerateSignalError("zero-variance window")
    return float(np.clip(np.dot(da, db) / (na * nb), -1.0, 1.0))


def correlate_windows(
    windows: np.ndarray,
    sensors: Sequence[str],
    t_end: int,
    scales: Sequence[float] | None = None,
    excluded: Iterable[str] = (),
) -> CorrelationMatrix:
    """Correlation matrix of the rows of ``windows`` (shape ``(n, tau_corr)``).

    Rows with NaN or (relative to ``scales``) negligible variance are moved
    to ``excluded``.
    """
    w = np.asarray(windows, dtype=float)
    if w.ndim != 2 or w.shape[0] != len(sensors):
        raise ValidationError(f"windows shape {w.shape} does not match {len(sensors)} sensors")
    tau_corr = w.shape[1]
    if tau_corr < 3:
        raise ValidationError(f"tau_corr must be >= 3, got {tau_corr}")
    if scales is None:
        scales = np.zeros(len(sensors))

    finite = np.isfinite(w).all(axis=1)
    safe = np.where(finite[:, None], w, 0.0)
    centered = safe - safe.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centered, axis=1)
    ref = np.maximum(np.asarray(scales, dtype=float), np.abs(safe).max(axis=1))
    keep = finite & (norms > 0) & (norms > FLAT_RTOL * ref * np.sqrt(tau_corr))

    dropped = list(excluded) + [s for s, k in zip(sensors, keep) if not k]
    kept = tuple(s for s, k in zip(sensors, keep) if k)
    if len(kept) < MIN_SENSORS:
        raise InsufficientDataError(
            f"only {len(kept)} includable sensors at t_end={t_end} (need {MIN_SENSORS}); excluded {len(dropped)}"
        )
    z = centered[keep] / norms[keep, None]
    c = z @ z.T
    c = (c + c.T) / 2.0
    np.clip(c, -1.0, 1.0, out=c)
    np.fill_diagonal(c, 0.0)
    return CorrelationMatrix(c, kept, int(t_end), tau_corr, tuple(dropped))


def correlation_matrix(
    residuals: Sequence[ResidualSeries],
    t_end: int,
    tau_corr: int,
    excluded: Iterable[str] = (),
) -> CorrelationMatrix:
    """Pairwise Pearson matrix over the ``tau_corr`` residuals ending at ``t_end``.

    ``excluded`` lists sensors the caller already dropped (e.g. missing data);
    they are reported alongside any flat windows found here.
    """
    if tau_corr < 3:
        raise ValidationError(f"tau_corr must be >= 3, got {tau_corr}")
    if not residuals:
        raise InsufficientDataError("no residual series given")
    windows = np.stack([r.window(t_end, tau_corr) for r in residuals])
    scales = [r.scale for r in residuals]
    return correlate_windows(windows, [r.sensor for r in residuals], t_end, scales, excluded)


def save_matrix_csv(cm: CorrelationMatrix, dest: str | os.PathLike | IO[str]) -> None:
    """Dense CSV dump with sensor ids as header row and first column."""
    own = isinstance(dest, (str, os.PathLike))
    stream = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["", *cm.sensors])
        for sensor, row in zip(cm.sensors, cm.matrix):
            writer.writerow([sensor, *(repr(float(v)) for v in row)])
    finally:
        if own:
            stream.close()
