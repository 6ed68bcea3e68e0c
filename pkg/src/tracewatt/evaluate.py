"""Benchmarking and statistical ranking of the regressor zoo.

Expanding-window time-series cross-validation, the thirty-run benchmark
with interquartile score filtering, average ranks with ties, the Nemenyi
q statistic and critical difference, and percentile-bootstrap confidence
intervals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import mean_absolute_error
from .errors import ParameterError, PipelineError, ShapeError
from .models import FittedModel, ModelSpec, fit, predict

#: Critical values of the Nemenyi test (studentized range / sqrt(2),
#: infinite degrees of freedom), indexed by number of algorithms.
Q_ALPHA = {
    0.05: {
        2: 1.959963985,
        3: 2.343700586,
        4: 2.569031773,
        5: 2.727774371,
        6: 2.849705420,
        7: 2.948320018,
        8: 3.030878450,
        9: 3.101730341,
        10: 3.163683577,
    },
    0.10: {
        2: 1.644853627,
        3: 2.052292730,
        4: 2.291341497,
        5: 2.459515764,
        6: 2.588520602,
        7: 2.692732101,
        8: 2.779883608,
        9: 2.854606431,
        10: 2.919888840,
    },
}

BENCHMARK_RUNS = 30

#: Per-split column chooser: (X_train, y_train) -> column indices.
ColumnSelector = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SplitPlan:
    """Expanding-window splits: train = [0, e), test = [e, e + t)."""

    n: int
    n_splits: int
    splits: tuple[tuple[int, int], ...]  # (train_stop, test_stop) pairs

    @property
    def first_test_start(self) -> int:
        return self.splits[0][0]


def time_series_splits(n: int, n_splits: int) -> SplitPlan:
    """Build the expanding-window split plan used everywhere.

    With t = floor(n / (n_splits + 1)) and r = n - n_splits * t, split i
    (1-based) trains on [0, r + (i-1)t) and tests on [r + (i-1)t, r + it).
    Training windows strictly grow, test windows tile [r, n), and every
    test follows its training window in time.
    """
    minimum = 2 * (n_splits + 1)
    if n_splits < 1:
        raise ParameterError(f"n_splits must be >= 1, got {n_splits}")
    if n < minimum:
        raise ParameterError(f"need at least {minimum} rows for {n_splits} splits, got {n}")
    t = n // (n_splits + 1)
    r = n - n_splits * t
    splits = tuple((r + (i - 1) * t, r + i * t) for i in range(1, n_splits + 1))
    return SplitPlan(n=n, n_splits=n_splits, splits=splits)


def cross_validate(
    spec: ModelSpec,
    X,
    y,
    plan: SplitPlan,
    select: ColumnSelector | None = None,
) -> list[float]:
    """Per-split test MAE, in plan order.

    Each split standardizes and fits on its training window only (both
    happen inside ``fit``); when ``select`` is given, the feature subset is
    likewise chosen from the training window alone. The persistence
    baseline is scored in its rolling form: each test-window prediction is
    the power reading one second earlier.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != plan.n or y.shape[0] != plan.n:
        raise ShapeError(f"plan built for n={plan.n}, data has {X.shape[0]} rows")
    scores = []
    for i, (train_stop, test_stop) in enumerate(plan.splits):
        try:
            if spec.kind == "persistence":
                pred = y[train_stop - 1 : test_stop - 1]
            else:
                cols = (
                    np.arange(X.shape[1])
                    if select is None
                    else select(X[:train_stop], y[:train_stop])
                )
                model = fit(spec, X[:train_stop, cols], y[:train_stop])
                pred = predict(model, X[train_stop:test_stop, cols])
        except PipelineError as exc:
            raise PipelineError(f"split {i} (train size {train_stop}): {exc}") from exc
        scores.append(mean_absolute_error(pred, y[train_stop:test_stop]))
    return scores


def iqr_retained_indices(values: Sequence[float]) -> tuple[list[int], dict]:
    """Indices of values strictly inside (median - 1.5*IQR, median + 1.5*IQR).

    Percentiles use linear interpolation between closest ranks. The
    interval is open, so boundary-equal values are excluded; with IQR = 0
    nothing survives and callers choose their own fallback.
    """
    v = np.asarray(values, dtype=float)
    med = float(np.percentile(v, 50))
    q25 = float(np.percentile(v, 25))
    q75 = float(np.percentile(v, 75))
    iiq = q75 - q25
    low = med - 1.5 * iiq
    high = med + 1.5 * iiq
    retained = [i for i, x in enumerate(v) if low < x < high]
    return retained, {"median": med, "q25": q25, "q75": q75, "iiq": iiq}


@dataclass
class BenchmarkResult:
    """One algorithm's thirty-run record plus its final fitted model."""

    algorithm: str
    run_scores: list[float]
    median: float
    q25: float
    q75: float
    iiq: float
    retained_runs: list[int]
    final_train_size: int
    final_model: FittedModel

    def to_json_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "run_scores": [float(s) for s in self.run_scores],
            "median": self.median,
            "q25": self.q25,
            "q75": self.q75,
            "iiq": self.iiq,
            "retained_runs": list(self.retained_runs),
            "final_train_size": self.final_train_size,
            "final_model": self.final_model.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "BenchmarkResult":
        return cls(
            algorithm=doc["algorithm"],
            run_scores=[float(s) for s in doc["run_scores"]],
            median=float(doc["median"]),
            q25=float(doc["q25"]),
            q75=float(doc["q75"]),
            iiq=float(doc["iiq"]),
            retained_runs=[int(i) for i in doc["retained_runs"]],
            final_train_size=int(doc["final_train_size"]),
            final_model=FittedModel.from_json_dict(doc["final_model"]),
        )


def thirty_run_benchmark(
    spec: ModelSpec,
    X,
    y,
    algorithm: str | None = None,
    select: ColumnSelector | None = None,
    feature_names: list[str] | None = None,
    runs: int = BENCHMARK_RUNS,
) -> BenchmarkResult:
    """Thirty-split benchmark with interquartile score filtering.

    Runs cross-validation over ``runs`` expanding splits, keeps the scores
    strictly inside median +/- 1.5*IQR (all of them when IQR is 0), then
    refits on the largest retained training window to produce the final
    model.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    plan = time_series_splits(X.shape[0], runs)
    run_scores = cross_validate(spec, X, y, plan, select=select)
    retained, stats = iqr_retained_indices(run_scores)
    if not retained:
        retained = list(range(len(run_scores)))
    final_train_size = max(plan.splits[i][0] for i in retained)

    Xf, yf = X[:final_train_size], y[:final_train_size]
    if spec.kind == "persistence" or select is None:
        cols = np.arange(X.shape[1])
    else:
        cols = select(Xf, yf)
    names = None
    if feature_names is not None:
        names = [feature_names[j] for j in cols]
    final_model = fit(spec, Xf[:, cols], yf, feature_names=names)

    return BenchmarkResult(
        algorithm=algorithm or spec.kind,
        run_scores=[float(s) for s in run_scores],
        median=stats["median"],
        q25=stats["q25"],
        q75=stats["q75"],
        iiq=stats["iiq"],
        retained_runs=retained,
        final_train_size=final_train_size,
        final_model=final_model,
    )


def rank_with_ties(values: Sequence[float], ascending: bool = True) -> list[float]:
    """Average ranks, 1 = best. Tied values share the mean positional rank."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ParameterError("cannot rank an empty list")
    key = v if ascending else -v
    order = np.argsort(key, kind="stable")
    ranks = np.empty(v.size, dtype=float)
    pos = 0
    while pos < v.size:
        stop = pos
        while stop + 1 < v.size and key[order[stop + 1]] == key[order[pos]]:
            stop += 1
        ranks[order[pos : stop + 1]] = (pos + stop) / 2.0 + 1.0
        pos = stop + 1
    return ranks.tolist()


def nemenyi_q(mean_rank_a: float, mean_rank_b: float, k: int, n: int) -> float:
    """The q statistic for one pair of algorithms.

    q = (Ra - Rb) / sqrt(k(k+1) / (6n)) for k algorithms ranked over n
    independent runs.
    """
    if k < 2:
        raise ParameterError(f"need at least 2 algorithms, got {k}")
    if n < 1:
        raise ParameterError(f"need at least 1 run, got {n}")
    return (mean_rank_a - mean_rank_b) / np.sqrt(k * (k + 1) / (6.0 * n))


def critical_difference(k: int, n: int, alpha: float = 0.05) -> float:
    """Mean-rank gap above which two algorithms differ significantly.

    CD = q_alpha(k) * sqrt(k(k+1) / (6n)), with q_alpha from the embedded
    table (k in 2..10, alpha in {0.05, 0.10}).
    """
    table = Q_ALPHA.get(round(alpha, 2))
    if table is None or k not in table:
        raise ParameterError(
            f"no critical value for k={k}, alpha={alpha}; "
            f"supported: k in 2..10, alpha in {sorted(Q_ALPHA)}"
        )
    if n < 1:
        raise ParameterError(f"need at least 1 run, got {n}")
    return float(table[k] * np.sqrt(k * (k + 1) / (6.0 * n)))


@dataclass
class RankTable:
    """Per-run ranks across algorithms and the resulting winner."""

    algorithms: list[str]
    scores: np.ndarray  # runs x algorithms
    ranks: np.ndarray  # runs x algorithms
    mean_ranks: list[float]
    cd: float
    alpha: float
    winner: str

    def significant_pairs(self) -> list[dict]:
        out = []
        for a in range(len(self.algorithms)):
            for b in range(a + 1, len(self.algorithms)):
                diff = abs(self.mean_ranks[a] - self.mean_ranks[b])
                out.append(
                    {
                        "a": self.algorithms[a],
                        "b": self.algorithms[b],
                        "mean_rank_diff": float(diff),
                        "significant": bool(diff > self.cd),
                    }
                )
        return out

    def to_json_dict(self) -> dict:
        return {
            "algorithms": list(self.algorithms),
            "scores": [[float(s) for s in row] for row in self.scores],
            "ranks": [[float(r) for r in row] for row in self.ranks],
            "mean_ranks": [float(r) for r in self.mean_ranks],
            "cd": float(self.cd),
            "alpha": float(self.alpha),
            "winner": self.winner,
            "pairs": self.significant_pairs(),
        }


def choose_best(results: list[BenchmarkResult], alpha: float = 0.05) -> RankTable:
    """Rank algorithms run-by-run and pick the one with the best mean rank.

    Lower MAE is better and earns rank 1; ties are averaged, so each run's
    ranks sum to k(k+1)/2. Two algorithms differ significantly when their
    mean-rank gap exceeds the critical difference.
    """
    if len(results) < 2:
        raise ParameterError("need at least 2 benchmark results to rank")
    runs = len(results[0].run_scores)
    for r in results:
        if len(r.run_scores) != runs:
            raise ShapeError(
                f"misaligned run counts: {r.algorithm} has {len(r.run_scores)}, expected {runs}"
            )
    algorithms = [r.algorithm for r in results]
    scores = np.array([r.run_scores for r in results], dtype=float).T
    ranks = np.array([rank_with_ties(row) for row in scores])
    mean_ranks = ranks.mean(axis=0).tolist()
    winner = algorithms[int(np.argmin(mean_ranks))]
    cd = critical_difference(len(algorithms), runs, alpha)
    return RankTable(
        algorithms=algorithms,
        scores=scores,
        ranks=ranks,
        mean_ranks=mean_ranks,
        cd=cd,
        alpha=alpha,
        winner=winner,
    )


def bootstrap_ci(
    samples: Sequence[float],
    resamples: int = 10000,
    alpha: float = 0.05,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile-bootstrap confidence interval for the mean.

    Resamples with replacement, takes the mean of each resample, and
    returns the (alpha/2, 1 - alpha/2) percentiles of those means.
    Deterministic for a given seed.
    """
    v = np.asarray(samples, dtype=float)
    if v.size < 2:
        raise ParameterError(f"need at least 2 samples, got {v.size}")
    if resamples < 100:
        raise ParameterError(f"need at least 100 resamples, got {resamples}")
    rng = np.random.default_rng(seed)
    means = np.empty(resamples, dtype=float)
    chunk = max(1, 4_000_000 // max(v.size, 1))
    for start in range(0, resamples, chunk):
        stop = min(start + chunk, resamples)
        idx = rng.integers(0, v.size, size=(stop - start, v.size))
        means[start:stop] = v[idx].mean(axis=1)
    lower, upper = np.percentile(means, [100 * alpha / 2.0, 100 * (1 - alpha / 2.0)])
    return float(lower), float(upper)
