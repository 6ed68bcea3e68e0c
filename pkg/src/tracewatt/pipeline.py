"""End-to-end model building, shared verbatim by the CLI and the service.

One call takes a parsed trace through cleaning, feature-count selection,
the thirty-run benchmark over the evaluated scenarios, and statistical
ranking, then writes deterministic JSON artifacts. Everything is seeded
from the config, so identical inputs produce byte-identical outputs no
matter which front door invoked it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .cleaning import (
    DEFAULT_LOF_NEIGHBORS,
    DEFAULT_LOF_THRESHOLD,
    DEFAULT_MAX_OUTLIER_FRACTION,
    DEFAULT_SPARSE_FRACTION,
    DEFAULT_VARIANCE_FLOOR,
    clean_feature_matrix,
)
from .errors import ParameterError
from .evaluate import BenchmarkResult, choose_best, thirty_run_benchmark
from .featsel import DEFAULT_MI_BINS, ScoreStrategy, build_k_rank, make_selector
from .ingest import ORIENTATION_FEATURE, FeatureMatrix, RawTrace, derive_features
from .models import ModelSpec, predict

SCENARIOS = ("full", "no-orientation", "feature-selected")

ARTIFACT_FORMAT = "tracewatt-artifact/1"
ARTIFACT_FILE = "artifact.json"

StageCallback = Callable[[str], None]


def default_models() -> list[ModelSpec]:
    # The benchmark forest is kept small so a full service job stays
    # interactive; heavier forests are one config edit away.
    return [
        ModelSpec("mean"),
        ModelSpec("ridge"),
        ModelSpec("knn"),
        ModelSpec("random_forest", {"trees": 10, "max_depth": 8, "min_leaf": 5}),
    ]


def default_k_rank_models() -> list[ModelSpec]:
    return [ModelSpec("ridge")]


@dataclass
class PipelineConfig:
    """Semantic knobs of one pipeline run; everything else is derived."""

    seed: int
    scenario: str = "all"
    strategies: list[str] = field(default_factory=lambda: ["f_test", "mutual_info"])
    chosen_strategy: str = "mutual_info"
    mi_bins: int = DEFAULT_MI_BINS
    models: list[ModelSpec] = field(default_factory=default_models)
    k_rank_models: list[ModelSpec] = field(default_factory=default_k_rank_models)
    sparse_fraction: float = DEFAULT_SPARSE_FRACTION
    variance_floor: float = DEFAULT_VARIANCE_FLOOR
    lof_neighbors: int = DEFAULT_LOF_NEIGHBORS
    lof_threshold: float = DEFAULT_LOF_THRESHOLD
    max_outlier_fraction: float = DEFAULT_MAX_OUTLIER_FRACTION
    alpha: float = 0.05

    def __post_init__(self) -> None:
        if self.scenario != "all" and self.scenario not in SCENARIOS:
            raise ParameterError(
                f"scenario must be 'all' or one of {SCENARIOS}, got {self.scenario!r}"
            )
        if not 2 <= len(self.models) <= 10:
            raise ParameterError(f"need 2..10 benchmark models, got {len(self.models)}")
        kinds = [m.kind for m in self.models]
        if len(set(kinds)) != len(kinds):
            raise ParameterError(f"benchmark model kinds must be unique, got {kinds}")
        if self.chosen_strategy not in self.strategies:
            raise ParameterError(
                f"chosen_strategy {self.chosen_strategy!r} not in strategies {self.strategies}"
            )
        for s in self.strategies:
            ScoreStrategy(s, self.mi_bins)  # validates

    def scenario_list(self) -> list[str]:
        return list(SCENARIOS) if self.scenario == "all" else [self.scenario]

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "scenario": self.scenario,
            "strategies": list(self.strategies),
            "chosen_strategy": self.chosen_strategy,
            "mi_bins": self.mi_bins,
            "models": [m.to_json_dict() for m in self.models],
            "k_rank_models": [m.to_json_dict() for m in self.k_rank_models],
            "sparse_fraction": self.sparse_fraction,
            "variance_floor": self.variance_floor,
            "lof_neighbors": self.lof_neighbors,
            "lof_threshold": self.lof_threshold,
            "max_outlier_fraction": self.max_outlier_fraction,
            "alpha": self.alpha,
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def canonical_json(doc: dict) -> str:
    """Stable serialization: sorted keys, fixed layout, no NaN leakage."""
    return json.dumps(_jsonable(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _scenario_matrix(cleaned: FeatureMatrix, scenario: str) -> FeatureMatrix:
    if scenario == "full":
        return cleaned
    names = [f for f in cleaned.feature_names if f != ORIENTATION_FEATURE]
    return cleaned.select(names)


def run_pipeline(
    trace: RawTrace,
    config: PipelineConfig,
    out_dir: Path | None = None,
    on_stage: StageCallback | None = None,
) -> dict:
    """Run every stage on one trace and return (and optionally write) the artifact."""

    def stage(name: str) -> None:
        if on_stage is not None:
            on_stage(name)

    stage("cleaning")
    matrix = derive_features(trace)
    cleaned, cleaning_report = clean_feature_matrix(
        matrix,
        sparse_fraction=config.sparse_fraction,
        variance_floor=config.variance_floor,
        lof_neighbors=config.lof_neighbors,
        lof_threshold=config.lof_threshold,
        max_drop_fraction=config.max_outlier_fraction,
    )

    stage("selecting")
    numeric = _scenario_matrix(cleaned, "no-orientation")
    k_rank_doc: dict = {}
    chosen_k: int | None = None
    for strategy_kind in config.strategies:
        strategy = ScoreStrategy(strategy_kind, config.mi_bins)
        k_rank_doc[strategy_kind] = {}
        for spec in config.k_rank_models:
            result = build_k_rank(
                numeric.X,
                numeric.y,
                spec.with_seed(config.seed),
                strategy,
                base_seed=config.seed,
            )
            k_rank_doc[strategy_kind][spec.kind] = result.to_json_dict()
            if strategy_kind == config.chosen_strategy and chosen_k is None:
                chosen_k = result.best_k

    stage("benchmarking")
    scenario_docs: dict = {}
    winners: list[tuple[str, BenchmarkResult, FeatureMatrix]] = []
    for scenario in config.scenario_list():
        base = _scenario_matrix(cleaned, scenario)
        select = None
        if scenario == "feature-selected":
            k = min(chosen_k if chosen_k is not None else base.p, base.p)
            select = make_selector(ScoreStrategy(config.chosen_strategy, config.mi_bins), k)
        benchmarks = [
            thirty_run_benchmark(
                spec.with_seed(config.seed),
                base.X,
                base.y,
                algorithm=spec.kind,
                select=None if spec.kind == "persistence" else select,
                feature_names=base.feature_names,
            )
            for spec in config.models
        ]
        table = choose_best(benchmarks, alpha=config.alpha)
        best = next(b for b in benchmarks if b.algorithm == table.winner)
        winners.append((scenario, best, base))
        scenario_docs[scenario] = {
            "benchmarks": [b.to_json_dict() for b in benchmarks],
            "rank_table": table.to_json_dict(),
        }

    stage("ranked")
    scenario_name, best_result, best_base = min(winners, key=lambda w: w[1].median)
    final_model = best_result.final_model
    probe_cols = [best_base.feature_names.index(f) for f in final_model.selected_features]
    probe_row = best_base.X[0, probe_cols]
    probe_prediction = float(predict(final_model, probe_row[None, :])[0])

    artifact = {
        "format": ARTIFACT_FORMAT,
        "config": config.to_json_dict(),
        "trace": {
            "rows_parsed": trace.n_rows,
            "rows_after_ingest": matrix.n,
            "rows_used": cleaned.n,
            "ingest_dropped_rows": matrix.dropped_rows,
            "features_used": list(cleaned.feature_names),
        },
        "cleaning_report": cleaning_report.to_json_dict(),
        "k_rank": k_rank_doc,
        "selected_k": chosen_k,
        "scenarios": scenario_docs,
        "winner": {
            "scenario": scenario_name,
            "algorithm": best_result.algorithm,
            "median_mae_mw": best_result.median,
        },
        "model": final_model.to_json_dict(),
        "probe": {"features": [float(v) for v in probe_row], "prediction": probe_prediction},
    }

    if out_dir is not None:
        write_artifacts(artifact, Path(out_dir))
    return artifact


def write_artifacts(artifact: dict, out_dir: Path) -> list[Path]:
    """Write the artifact plus per-scenario rank-diagram data files."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    path = out_dir / ARTIFACT_FILE
    path.write_text(canonical_json(artifact), encoding="utf-8")
    written.append(path)

    path = out_dir / "cleaning.json"
    path.write_text(canonical_json(artifact["cleaning_report"]), encoding="utf-8")
    written.append(path)

    path = out_dir / "k_rank.json"
    path.write_text(canonical_json(artifact["k_rank"]), encoding="utf-8")
    written.append(path)

    for scenario, doc in artifact["scenarios"].items():
        table = doc["rank_table"]
        lines = ["algorithm,mean_rank,cd"]
        for name, rank in zip(table["algorithms"], table["mean_ranks"]):
            lines.append(f"{name},{rank!r},{table['cd']!r}")
        path = out_dir / f"cd_diagram_{scenario}.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)
    return written
