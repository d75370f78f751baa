"""Spectral-gap detection on correlation matrices.

The detector compares the top spacing of the spectrum against the second
spacing plus an empirical noise scale, the RMS of the interior spacings:

    delta = sqrt( sum_{i=2}^{N-1} Delta_i^2 / (N - 2) )
    detected  <=>  Delta_1 > Delta_2 + delta

Eigenvalues are sorted by algebraic value, largest first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from faultcorr.corr import as_matrix
from faultcorr.errors import InsufficientDataError, NumericalError


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    eigenvalues: np.ndarray
    spacings: np.ndarray
    noise_scale: float
    detected: bool
    margin: float

    @property
    def delta1(self) -> float:
        return float(self.spacings[0])

    @property
    def delta2(self) -> float:
        return float(self.spacings[1])

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "delta1": self.delta1,
            "delta2": self.delta2,
            "noise_scale": float(self.noise_scale),
            "detected": bool(self.detected),
            "margin": float(self.margin),
        }


def _diagnostics(m: np.ndarray) -> str:
    finite = np.isfinite(m)
    if not finite.all():
        return f"{int((~finite).sum())} non-finite entries"
    asym = float(np.abs(m - m.T).max()) if m.size else 0.0
    try:
        cond = float(np.linalg.cond(m))
    except np.linalg.LinAlgError:
        cond = float("nan")
    return f"shape={m.shape}, frobenius={np.linalg.norm(m):.3g}, max asymmetry={asym:.3g}, cond={cond:.3g}"


def eigen_spectrum(m) -> np.ndarray:
    """All eigenvalues of a symmetric matrix, descending."""
    arr = as_matrix(m)
    if not np.isfinite(arr).all():
        raise NumericalError(f"cannot diagonalize: {_diagnostics(arr)}")
    try:
        values = np.linalg.eigvalsh(arr)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed ({exc}); {_diagnostics(arr)}") from exc
    return values[::-1].copy()


def noise_scale(spacings) -> float:
    """RMS of the interior spacings Delta_2 .. Delta_{N-1}.

    ``spacings`` holds all N - 1 spacings Delta_1 .. Delta_{N-1}.
    """
    d = np.asarray(spacings, dtype=float)
    n = d.size + 1
    if n < 4:
        raise InsufficientDataError(f"noise scale needs N >= 4 eigenvalues, got {n}")
    interior = d[1:]
    return float(np.sqrt(np.dot(interior, interior) / (n - 2)))


def detect(m) -> SpectrumReport:
    """Run the spectral-gap test on a correlation matrix."""
    eig = eigen_spectrum(m)
    if eig.size < 4:
        raise InsufficientDataError(f"detection needs N >= 4, got {eig.size}")
    spacings = eig[:-1] - eig[1:]
    delta = noise_scale(spacings)
    margin = float(spacings[0] - spacings[1] - delta)
    return SpectrumReport(eig, spacings, delta, margin > 0.0, margin)
