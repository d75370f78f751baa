"""End-to-end pipeline: detrend, correlate, detect, then localize and identify.

Localization and identification run only for windows that pass the
spectral-gap test.
"""

from __future__ import annotations

import contextlib
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Iterator, Sequence

import numpy as np

from faultcorr.corr import CorrelationMatrix, correlate_windows
from faultcorr.detrend import check_tau_av, residual_matrix
from faultcorr.errors import FaultCorrError, NumericalError, RangeError, ValidationError
from faultcorr.identify import CauseReport, enrich
from faultcorr.ingest import Dataset, LabelRegistry
from faultcorr.localize import ALGORITHMS, LocalizationResult, default_group_size, elbow, localize
from faultcorr.spectral import SpectrumReport, detect
from faultcorr.synth import WalkConfig, generate_walks

K_MODES = ("sqrtN", "fixed", "elbow")


@dataclass(frozen=True)
class PipelineParams:
    """Pipeline settings.

    ``k_mode`` is ``"sqrtN"`` (round(sqrt(N)) sensors), ``"fixed"`` (uses
    ``k``) or ``"elbow"`` (uses ``epsilon``). ``restarts`` defaults to 10000
    for ``sqrtN`` and 1000 otherwise.
    """

    tau_av: int = 10
    tau_corr: int = 200
    k_mode: str = "sqrtN"
    k: int | None = None
    epsilon: float | None = None
    algorithm: str = "lowrank"
    restarts: int | None = None
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        check_tau_av(self.tau_av)
        if self.tau_corr < 3:
            raise ValidationError(f"tau_corr must be >= 3, got {self.tau_corr}")
        if self.k_mode not in K_MODES:
            raise ValidationError(f"k_mode must be one of {K_MODES}, got {self.k_mode!r}")
        if self.k_mode == "fixed" and (self.k is None or self.k < 1):
            raise ValidationError("k_mode='fixed' needs k >= 1")
        if self.k_mode == "elbow" and not (self.epsilon and self.epsilon > 0):
            raise ValidationError("k_mode='elbow' needs epsilon > 0")
        if self.algorithm not in ALGORITHMS:
            raise ValidationError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.restarts is not None and self.restarts < 1:
            raise ValidationError("restarts must be >= 1")

    @property
    def effective_restarts(self) -> int:
        if self.restarts is not None:
            return self.restarts
        return 10_000 if self.k_mode == "sqrtN" else 1000

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class WindowRecord:
    t_end: int
    detected: bool
    margin: float
    spectrum: SpectrumReport
    sensors: tuple[str, ...]
    excluded: tuple[str, ...]
    localization: LocalizationResult | None = None
    cause_report: CauseReport | None = None
    mismatches: int | None = None
    recovered_fraction: float | None = None
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def selected_ids(self) -> list[str]:
        return self.localization.selected_ids if self.localization else []

    def to_dict(self) -> dict:
        spec = self.spectrum
        return {
            "t_end": self.t_end,
            "detected": self.detected,
            "margin": self.margin,
            "delta1": spec.delta1,
            "delta2": spec.delta2,
            "noise_scale": spec.noise_scale,
            "n_sensors": len(self.sensors),
            "excluded": list(self.excluded),
            "selected_ids": self.selected_ids,
            "localization": self.localization.to_dict() if self.localization else None,
            "cause_report": self.cause_report.to_list() if self.cause_report else None,
            "mismatches": self.mismatches,
            "recovered_fraction": self.recovered_fraction,
            "timings": self.timings,
        }


@dataclass
class ExperimentReport:
    params: PipelineParams
    records: list[WindowRecord]
    truth: tuple[str, ...] | None = None

    @property
    def runtime(self) -> dict[str, float]:
        total: dict[str, float] = {}
        for rec in self.records:
            for stage, secs in rec.timings.items():
                total[stage] = total.get(stage, 0.0) + secs
        return total

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "truth_ids": list(self.truth) if self.truth is not None else None,
            "windows": len(self.records),
            "detections": sum(r.detected for r in self.records),
            "runtime": self.runtime,
            "records": [r.to_dict() for r in self.records],
        }


@contextlib.contextmanager
def _stage(name: str, timings: dict[str, float]) -> Iterator[None]:
    start = time.perf_counter()
    try:
        yield
    except FaultCorrError as exc:
        if exc.stage is None:
            exc.stage = name
        raise
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        err = NumericalError(f"{name}: {exc}")
        err.stage = name
        raise err from exc
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - start


def score(result: LocalizationResult | Iterable[int], truth: Iterable[int]) -> tuple[int, float]:
    """``(mismatches, recovered_fraction)`` of a selection against ground truth.

    ``result`` may be a :class:`LocalizationResult` or any iterable of ids or
    indices comparable with ``truth``. An empty truth gives a recovered
    fraction of 0.
    """
    selected = set(result.selected if isinstance(result, LocalizationResult) else result)
    truth = set(truth)
    hits = len(selected & truth)
    return len(selected - truth), (hits / len(truth) if truth else 0.0)


def window_bounds(length: int, params: PipelineParams) -> tuple[int, int]:
    """Smallest and largest ``t_end`` whose correlation window has residuals."""
    half = params.tau_av // 2
    return params.tau_corr - 1 + half, length - 1 - half


def group_size(cm: CorrelationMatrix, params: PipelineParams) -> int:
    n = cm.size
    if params.k_mode == "sqrtN":
        k = default_group_size(n)
    elif params.k_mode == "fixed":
        k = int(params.k)  # type: ignore[arg-type]
    else:
        k = elbow(cm, float(params.epsilon)).k  # type: ignore[arg-type]
    return max(1, min(k, n))


def correlation_at(dataset: Dataset, params: PipelineParams, t_end: int, timings: dict[str, float] | None = None) -> CorrelationMatrix:
    """Residual correlation matrix of the window ending at ``t_end``.

    Sensors with a missing sample anywhere the window's residuals depend on
    are excluded.
    """
    timings = {} if timings is None else timings
    lo, hi = window_bounds(dataset.length, params)
    if not lo <= t_end <= hi:
        raise RangeError(f"t_end={t_end} outside [{lo}, {hi}] for length {dataset.length}")
    half = params.tau_av // 2
    with _stage("detrend", timings):
        seg = dataset.values[:, t_end - params.tau_corr + 1 - half : t_end + half + 1]
        complete = np.isfinite(seg).all(axis=1)
        sensors = [s for s, ok in zip(dataset.sensors, complete) if ok]
        missing = [s for s, ok in zip(dataset.sensors, complete) if not ok]
        resid = residual_matrix(seg[complete], params.tau_av) if sensors else np.empty((0, params.tau_corr))
        scales = np.abs(seg[complete]).max(axis=1) if sensors else np.empty(0)
    with _stage("correlate", timings):
        return correlate_windows(resid, sensors, t_end, scales, excluded=missing)


def run_pipeline(
    dataset: Dataset,
    labels: LabelRegistry | None,
    params: PipelineParams,
    t_end: int,
    truth: Iterable[str] | None = None,
) -> WindowRecord:
    """Process one window. ``truth`` holds ground-truth sensor ids, if known."""
    timings: dict[str, float] = {}
    cm = correlation_at(dataset, params, t_end, timings)
    with _stage("detect", timings):
        spectrum = detect(cm)
    rec = WindowRecord(t_end, spectrum.detected, spectrum.margin, spectrum, cm.sensors, cm.excluded, timings=timings)
    if not spectrum.detected:
        return rec
    with _stage("localize", timings):
        result = localize(cm, params.algorithm, group_size(cm, params), params.effective_restarts, params.seed, params.workers)
    rec.localization = result
    with _stage("identify", timings):
        rec.cause_report = enrich(result.selected_ids, labels or LabelRegistry(), cm.sensors)
    if truth is not None:
        rec.mismatches, rec.recovered_fraction = score(result.selected_ids, truth)
    return rec


def sweep(
    dataset: Dataset,
    labels: LabelRegistry | None,
    params: PipelineParams,
    stride: int | None = None,
    truth: Iterable[str] | None = None,
) -> ExperimentReport:
    """Run the pipeline on every ``stride``-th window (default ``tau_av/2``)."""
    stride = params.tau_av // 2 if stride is None else stride
    if stride < 1:
        raise ValidationError(f"stride must be >= 1, got {stride}")
    lo, hi = window_bounds(dataset.length, params)
    if lo > hi:
        raise RangeError(f"series of length {dataset.length} has no complete window")
    truth_t = tuple(truth) if truth is not None else None
    records = [run_pipeline(dataset, labels, params, t, truth_t) for t in range(lo, hi + 1, stride)]
    return ExperimentReport(params, records, truth_t)


@dataclass(frozen=True)
class PhasePoint:
    n: int
    k: int
    trials: int
    detections: int
    full: int
    half: int

    @property
    def p_detect(self) -> float:
        return self.detections / self.trials

    @property
    def p_full(self) -> float:
        return self.full / self.trials

    @property
    def p_half(self) -> float:
        return self.half / self.trials

    @property
    def p_half_given_detect(self) -> float | None:
        return self.half / self.detections if self.detections else None

    def to_dict(self) -> dict:
        return {
            "n": self.n, "k": self.k, "trials": self.trials, "detections": self.detections,
            "p_detect": self.p_detect, "p_full": self.p_full, "p_half": self.p_half,
            "p_half_given_detect": self.p_half_given_detect,
        }


@dataclass(frozen=True)
class PhaseTable:
    k0: int
    points: tuple[PhasePoint, ...]

    def to_dict(self) -> dict:
        return {"k0": self.k0, "points": [p.to_dict() for p in self.points]}

    def to_csv(self) -> str:
        cols = ["n", "k", "trials", "detections", "p_detect", "p_full", "p_half", "p_half_given_detect"]
        lines = [",".join(cols)]
        for p in self.points:
            d = p.to_dict()
            lines.append(",".join("" if d[c] is None else str(d[c]) for c in cols))
        return "\n".join(lines) + "\n"

    def crossing(self, level: float = 0.5) -> float | None:
        """N (linear interpolation in log N) where P(full) first drops below ``level``."""
        pts = self.points
        for a, b in zip(pts, pts[1:]):
            if a.p_full >= level > b.p_full:
                la, lb = math.log(a.n), math.log(b.n)
                frac = (a.p_full - level) / (a.p_full - b.p_full)
                return math.exp(la + frac * (lb - la))
        return None


def trial_seed(seed: int, n: int, trial: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(n), int(trial)]).generate_state(1)[0])


def recovery_flags(selected: Iterable[int], truth: Sequence[int], k: int) -> tuple[bool, bool]:
    """Full and at-least-half recovery, judged against ``min(k, |truth|)``.

    With ``k`` below the group size a perfect answer is ``k`` true sensors;
    above it, the whole group.
    """
    target = min(k, len(truth))
    hits = len(set(selected) & set(truth))
    return hits == target, hits >= math.ceil(0.5 * target)


def phase_transition(
    k0: int,
    n_grid: Sequence[int],
    trials: int = 100,
    params: PipelineParams | None = None,
    seed: int = 0,
    walk: WalkConfig | None = None,
    workers: int = 1,
) -> PhaseTable:
    """Success probabilities of detection and lowrank localization versus N.

    Each trial draws a fresh ensemble of N walks with a planted group of
    ``k0``. Walks are just long enough for one correlation window, which is
    the one analysed. Localization uses k = round(sqrt(N)) and runs only on
    positive detection.
    """
    params = replace(params or PipelineParams(), k_mode="sqrtN", algorithm="lowrank")
    walk = walk or WalkConfig()
    if not n_grid or k0 > min(n_grid):
        raise ValidationError(f"k0={k0} must not exceed min(n_grid)")
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    length = params.tau_corr + params.tau_av
    t_end = length - 1 - params.tau_av // 2

    def one(job: tuple[int, int]) -> tuple[bool, bool, bool]:
        n, trial = job
        sample = generate_walks(replace(walk, n=n, k0=k0, t=length, seed=trial_seed(seed, n, trial)))
        rec = run_pipeline(sample.dataset, sample.labels, params, t_end)
        if not rec.detected:
            return False, False, False
        truth_ids = [sample.dataset.sensors[i] for i in sample.truth]
        full, half = recovery_flags(rec.selected_ids, truth_ids, rec.localization.k)  # type: ignore[union-attr]
        return True, full, half

    points = []
    for n in n_grid:
        jobs = [(n, t) for t in range(trials)]
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(one, jobs))
        else:
            outcomes = [one(j) for j in jobs]
        points.append(PhasePoint(
            n, default_group_size(n), trials,
            sum(o[0] for o in outcomes), sum(o[1] for o in outcomes), sum(o[2] for o in outcomes),
        ))
    return PhaseTable(k0, tuple(points))
