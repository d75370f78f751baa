"""Synthetic inputs with known ground truth.

* Lazy random walks, some of which follow a master walk's increments.
* Spiked Wigner matrices ``theta * u u^T + W`` for checking the spectral
  phase transition.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from faultcorr.errors import ValidationError
from faultcorr.ingest import Dataset, LabelRegistry

PLANTED_TAG = "PLANTED"
BACKGROUND_TAG = "BACKGROUND"


@dataclass(frozen=True)
class WalkConfig:
    """Parameters of the random-walk ensemble.

    Attributes:
        n: Total number of walks.
        k0: Size of the correlated group (master included). 0 gives pure noise.
        t: Number of time steps.
        p0: Probability a walk stays put.
        p_step: Probability of each of the +1 / -1 moves.
        rho: Probability a follower copies the master's increment.
        seed: RNG seed.
        n_units: Number of decoy ``UNIT<j>`` tags spread round-robin over walks.
        coupling_window: Optional inclusive step range ``(t1, t2)``; followers
            only copy increments landing in it. None means always.
    """

    n: int = 900
    k0: int = 50
    t: int = 2000
    p0: float = 0.9
    p_step: float = 0.05
    rho: float = 0.5
    seed: int = 0
    n_units: int = 10
    coupling_window: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.n < 1 or self.t < 1:
            raise ValidationError(f"need n >= 1 and t >= 1, got n={self.n}, t={self.t}")
        if not 0 <= self.k0 <= self.n:
            raise ValidationError(f"k0 must be in [0, n], got {self.k0}")
        if min(self.p0, self.p_step) < 0 or abs(self.p0 + 2 * self.p_step - 1.0) > 1e-12:
            raise ValidationError(f"p0 + 2*p_step must equal 1, got {self.p0} + 2*{self.p_step}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValidationError(f"rho must be in [0, 1], got {self.rho}")
        if self.n_units < 1:
            raise ValidationError("n_units must be >= 1")


class WalkSample(NamedTuple):
    dataset: Dataset
    truth: tuple[int, ...]
    labels: LabelRegistry


def _lazy_increments(u: np.ndarray, p_step: float) -> np.ndarray:
    return np.where(u < p_step, -1.0, np.where(u < 2 * p_step, 1.0, 0.0))


def walk_ids(n: int) -> tuple[str, ...]:
    width = max(3, len(str(n - 1)))
    return tuple(f"w{i:0{width}d}" for i in range(n))


def generate_walks(config: WalkConfig) -> WalkSample:
    """Draw the walk ensemble.

    The correlated group is a random subset of size ``k0``; its smallest
    index is the master. All walks start at 0 and move by -1, 0 or +1.
    """
    rng = np.random.default_rng(config.seed)
    n, steps = config.n, config.t - 1
    inc = _lazy_increments(rng.random((n, steps)), config.p_step)
    truth = np.sort(rng.choice(n, config.k0, replace=False)) if config.k0 else np.empty(0, dtype=int)
    if config.k0 > 1:
        master, followers = truth[0], truth[1:]
        copy = rng.random((followers.size, steps)) < config.rho
        if config.coupling_window is not None:
            t1, t2 = config.coupling_window
            # increment j moves the walk from step j to step j + 1
            landed = np.arange(1, steps + 1)
            copy &= ((landed >= t1) & (landed <= t2))[None, :]
        inc[followers] = np.where(copy, inc[master][None, :], inc[followers])
    values = np.zeros((n, config.t))
    np.cumsum(inc, axis=1, out=values[:, 1:])

    ids = walk_ids(n)
    planted = set(truth.tolist())
    labels = LabelRegistry({
        s: (PLANTED_TAG if i in planted else BACKGROUND_TAG, f"UNIT{i % config.n_units}")
        for i, s in enumerate(ids)
    })
    return WalkSample(Dataset(ids, values, 0, 60.0), tuple(int(i) for i in truth), labels)


@dataclass(frozen=True)
class SpikedMatrixConfig:
    """``n``-dimensional spike of strength ``theta`` on ``support`` (None = all indices)."""

    n: int
    theta: float
    support: tuple[int, ...] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValidationError("n must be >= 1")
        if self.theta < 0:
            raise ValidationError(f"theta must be >= 0, got {self.theta}")
        if self.support is not None:
            if not self.support:
                raise ValidationError("support must be non-empty")
            if min(self.support) < 0 or max(self.support) >= self.n or len(set(self.support)) != len(self.support):
                raise ValidationError("support indices must be distinct and within range")


def spike_direction(config: SpikedMatrixConfig) -> np.ndarray:
    """Unit vector with equal entries on the support, zero elsewhere."""
    support = range(config.n) if config.support is None else config.support
    u = np.zeros(config.n)
    idx = np.fromiter(support, dtype=int)
    u[idx] = 1.0 / np.sqrt(idx.size)
    return u


def wigner(n: int, rng: np.random.Generator) -> np.ndarray:
    """Symmetric Gaussian matrix, off-diagonal variance ``1/n**2``, diagonal ``2/n**2``."""
    a = rng.standard_normal((n, n)) / n
    w = np.triu(a, 1)
    w = w + w.T
    w[np.diag_indices(n)] = rng.standard_normal(n) * (np.sqrt(2.0) / n)
    return w


def spiked_wigner(config: SpikedMatrixConfig) -> np.ndarray:
    """``theta * u u^T + W``. The diagonal is left as drawn."""
    rng = np.random.default_rng(config.seed)
    u = spike_direction(config)
    return config.theta * np.outer(u, u) + wigner(config.n, rng)


def bulk_edge(n: int, trials: int = 50, seed: int = 0) -> float:
    """Monte Carlo mean of the largest eigenvalue of the noise matrix alone."""
    tops = [
        np.linalg.eigvalsh(spiked_wigner(SpikedMatrixConfig(n, 0.0, seed=int(s))))[-1]
        for s in np.random.SeedSequence(seed).generate_state(trials)
    ]
    return float(np.mean(tops))


def leading_overlap(matrix: np.ndarray, u: np.ndarray) -> float:
    """``<u, u_1>**2`` with ``u_1`` the eigenvector of the largest eigenvalue."""
    _, vectors = np.linalg.eigh(matrix)
    return float(np.dot(u, vectors[:, -1]) ** 2)
