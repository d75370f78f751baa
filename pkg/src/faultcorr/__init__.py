"""Detect and localize anomalously correlated sensor groups in multivariate time series."""

from faultcorr.corr import CorrelationMatrix, correlation_matrix, pearson
from faultcorr.detrend import ResidualSeries, residuals, running_mean
from faultcorr.errors import (
    FaultCorrError,
    InsufficientDataError,
    NumericalError,
    ParseError,
    RangeError,
    ValidationError,
)
from faultcorr.harness import PipelineParams, phase_transition, run_pipeline, score, sweep
from faultcorr.identify import CauseReport, enrich
from faultcorr.ingest import CsvSchema, Dataset, LabelRegistry, load_csv, load_labels, window
from faultcorr.localize import (
    LocalizationResult,
    default_group_size,
    elbow_size,
    igp,
    las,
    lowrank,
    rank1_approx,
    sparse_topk,
)
from faultcorr.spectral import SpectrumReport, detect, eigen_spectrum, noise_scale
from faultcorr.synth import SpikedMatrixConfig, WalkConfig, generate_walks, spiked_wigner

__version__ = "0.1.0"
