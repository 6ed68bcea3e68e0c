"""tracewatt: automatic energy-consumption models from smartphone usage traces.

Raw 1 Hz monitor logs go in; a cleaned feature matrix, an automatically
chosen feature count, a benchmarked and statistically ranked regressor
zoo, and a serializable winning model come out. The same pipeline is
reachable as a library, a CLI (``tracewatt``), and an HTTP service.
"""

from .biasim import PowerLaw, RunLengthPattern, SynthConfig, apply_bias, extract_run_lengths, synth_trace
from .cleaning import CleaningReport, drop_degenerate_features, lof_scores, remove_outliers
from .core import PowerSample, PowerSeries, energy_of_series, instantaneous_power, mean_absolute_error
from .evaluate import (
    BenchmarkResult,
    RankTable,
    SplitPlan,
    bootstrap_ci,
    choose_best,
    critical_difference,
    cross_validate,
    nemenyi_q,
    rank_with_ties,
    thirty_run_benchmark,
    time_series_splits,
)
from .featsel import KRankResult, ScoreStrategy, build_k_rank, f_test_scores, mutual_info_scores, select_k
from .ingest import FeatureMatrix, RawTrace, decompress_upload, derive_features, parse_trace
from .models import FittedModel, ModelSpec, fit, persistence_predict, predict
from .pipeline import PipelineConfig, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "BenchmarkResult",
    "CleaningReport",
    "FeatureMatrix",
    "FittedModel",
    "KRankResult",
    "ModelSpec",
    "PipelineConfig",
    "PowerLaw",
    "PowerSample",
    "PowerSeries",
    "RankTable",
    "RawTrace",
    "RunLengthPattern",
    "ScoreStrategy",
    "SplitPlan",
    "SynthConfig",
    "apply_bias",
    "bootstrap_ci",
    "build_k_rank",
    "choose_best",
    "critical_difference",
    "cross_validate",
    "decompress_upload",
    "derive_features",
    "drop_degenerate_features",
    "energy_of_series",
    "extract_run_lengths",
    "f_test_scores",
    "fit",
    "instantaneous_power",
    "lof_scores",
    "mean_absolute_error",
    "mutual_info_scores",
    "nemenyi_q",
    "parse_trace",
    "persistence_predict",
    "predict",
    "rank_with_ties",
    "remove_outliers",
    "run_pipeline",
    "select_k",
    "synth_trace",
    "thirty_run_benchmark",
    "time_series_splits",
    "__version__",
]
