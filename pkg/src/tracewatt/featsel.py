"""Univariate feature scoring and the automatic choice of feature count.

Two score functions rank features against the power target: a univariate
linear-regression F statistic and a quantile-binned plug-in estimate of
mutual information. The feature count k is chosen by benchmarking every
k under time-series cross-validation, repeating thirty times, filtering
the per-k medians by interquartile range, and taking the middle of what
survives.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import mean_absolute_error
from .errors import NumericError, ParameterError, PipelineError
from .evaluate import SplitPlan, iqr_retained_indices, time_series_splits
from .models import ModelSpec, fit, predict

logger = logging.getLogger(__name__)

STRATEGY_KINDS = ("f_test", "mutual_info")
DEFAULT_MI_BINS = 16
SELECT_K_SPLITS = 10
K_RANK_REPETITIONS = 30

#: Perfect correlations are clamped here so the F statistic stays finite
#: and still dominates every imperfect competitor.
R_SQUARED_CLAMP = 1.0 - 1e-12


@dataclass(frozen=True)
class ScoreStrategy:
    """Which score function ranks the features, plus its knobs."""

    kind: str
    bins: int = DEFAULT_MI_BINS

    def __post_init__(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise ParameterError(f"unknown strategy {self.kind!r}; choose from {STRATEGY_KINDS}")
        if self.kind == "mutual_info" and self.bins < 2:
            raise ParameterError(f"mutual_info needs bins >= 2, got {self.bins}")


def f_test_scores(X, y) -> np.ndarray:
    """Univariate regression F statistic per feature.

    F_j = r_j^2 / (1 - r_j^2) * (n - 2) with r_j the Pearson correlation
    between column j and the target. A constant target scores every
    feature 0; a constant feature is an error. r^2 is clamped just below
    1 so perfect correlations come back as a finite maximal score.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n < 3:
        raise ParameterError(f"need at least 3 rows for an F score, got {n}")
    sx = X.std(axis=0)
    dead = np.flatnonzero(sx == 0.0)
    if dead.size:
        raise NumericError(f"zero-variance feature column(s) at index {dead.tolist()}")
    sy = y.std()
    if sy == 0.0:
        return np.zeros(p)
    r = ((X - X.mean(axis=0)) * (y - y.mean())[:, None]).mean(axis=0) / (sx * sy)
    r2 = r * r
    clamped = r2 >= R_SQUARED_CLAMP
    if clamped.any():
        logger.warning(
            "perfect correlation clamped for feature column(s) %s",
            np.flatnonzero(clamped).tolist(),
        )
        r2 = np.minimum(r2, R_SQUARED_CLAMP)
    return r2 / (1.0 - r2) * (n - 2)


def quantile_bin_labels(x, bins: int) -> tuple[np.ndarray, int]:
    """Equal-frequency discretization into at most ``bins`` cells.

    Bin edges are the interior quantiles (linear interpolation). When the
    column has fewer distinct values than bins, every distinct value gets
    its own cell and the reduced count is reported back.
    """
    x = np.asarray(x, dtype=float)
    distinct = np.unique(x)
    if distinct.size <= bins:
        labels = np.searchsorted(distinct, x)
        if distinct.size < bins:
            logger.debug("bin count reduced from %d to %d distinct values", bins, distinct.size)
        return labels, int(distinct.size)
    edges = np.quantile(x, np.arange(1, bins) / bins)
    return np.searchsorted(edges, x, side="right"), bins


def _mi_from_labels(lx: np.ndarray, nx: int, ly: np.ndarray, ny: int) -> float:
    joint = np.bincount(lx * ny + ly, minlength=nx * ny).astype(float).reshape(nx, ny)
    pxy = joint / joint.sum()
    px = pxy.sum(axis=1)
    py = pxy.sum(axis=0)
    i, j = np.nonzero(pxy)
    terms = pxy[i, j] * np.log(pxy[i, j] / (px[i] * py[j]))
    return max(0.0, float(terms.sum()))


def mutual_info_scores(X, y, bins: int = DEFAULT_MI_BINS) -> np.ndarray:
    """Plug-in mutual information (nats) between each feature and the target.

    Both sides are discretized onto equal-frequency bins and the score is
    sum p(a,b) * log(p(a,b) / (p(a) p(b))) over the joint histogram.
    Symmetric in its two arguments and never negative.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if bins < 2:
        raise ParameterError(f"need bins >= 2, got {bins}")
    if n < bins * bins:
        raise ParameterError(f"need n >= bins^2 = {bins * bins} rows, got {n}")
    ly, ny = quantile_bin_labels(y, bins)
    out = np.empty(p)
    for j in range(p):
        lx, nx = quantile_bin_labels(X[:, j], bins)
        out[j] = _mi_from_labels(lx, nx, ly, ny)
    return out


def strategy_scores(strategy: ScoreStrategy, X, y) -> np.ndarray:
    """Score every feature with ``strategy``, shrinking MI bins to fit n.

    Inside cross-validation the training window can be small; the bin
    count is capped at n^(1/3) so the plug-in bias (roughly bins^2 / 2n
    nats, identical for every feature) stays well below the signal
    differences the ordering depends on.
    """
    if strategy.kind == "f_test":
        return f_test_scores(X, y)
    bins = max(2, min(strategy.bins, round(len(y) ** (1.0 / 3.0))))
    return mutual_info_scores(X, y, bins=bins)


def top_k_indices(scores: np.ndarray, k: int) -> np.ndarray:
    """Columns of the k best scores; ties break to the lower column index."""
    order = np.lexsort((np.arange(scores.size), -scores))
    return np.sort(order[:k])


def make_selector(strategy: ScoreStrategy, k: int):
    """Column selector usable inside cross-validation: fit-fold data in,
    top-k column indices out."""

    def select(X_train: np.ndarray, y_train: np.ndarray) -> np.ndarray:
        return top_k_indices(strategy_scores(strategy, X_train, y_train), k)

    return select


@dataclass
class KRankResult:
    """Outcome of the repeated per-k benchmark."""

    per_k_medians: list[tuple[int, float]]
    filtered: list[tuple[int, float]]
    best_k: int
    used_fallback: bool = False

    def to_json_dict(self) -> dict:
        return {
            "per_k_medians": [[k, float(m)] for k, m in self.per_k_medians],
            "filtered": [[k, float(m)] for k, m in self.filtered],
            "best_k": int(self.best_k),
            "used_fallback": bool(self.used_fallback),
        }


def _split_orders(X, y, strategy: ScoreStrategy, plan: SplitPlan) -> list[np.ndarray]:
    """Per split, feature indices in descending score order (index tiebreak).

    Scores are a pure function of each training window, so one pass serves
    every k and every repetition.
    """
    p = X.shape[1]
    orders = []
    for train_stop, _ in plan.splits:
        scores = strategy_scores(strategy, X[:train_stop], y[:train_stop])
        orders.append(np.lexsort((np.arange(p), -scores)))
    return orders


def _select_k_with_orders(
    X: np.ndarray,
    y: np.ndarray,
    spec: ModelSpec,
    plan: SplitPlan,
    orders: list[np.ndarray],
) -> list[tuple[int, list[float]]]:
    p = X.shape[1]
    results = []
    for k in range(1, p + 1):
        fold_scores = []
        for i, (train_stop, test_stop) in enumerate(plan.splits):
            cols = np.sort(orders[i][:k])
            try:
                model = fit(spec, X[:train_stop, cols], y[:train_stop])
                pred = predict(model, X[train_stop:test_stop, cols])
            except PipelineError as exc:
                raise PipelineError(f"k={k}, split {i}: {exc}") from exc
            fold_scores.append(mean_absolute_error(pred, y[train_stop:test_stop]))
        results.append((k, fold_scores))
    return results


def select_k(
    X,
    y,
    model: ModelSpec,
    strategy: ScoreStrategy,
    seed: int = 0,
    n_splits: int = SELECT_K_SPLITS,
) -> list[tuple[int, list[float]]]:
    """Cross-validated MAE for every candidate feature count.

    For k = 1..p: keep the k best-scored features (scored on each training
    window only), fit the model, and collect one MAE per split. Returns
    [(k, scores)] with one score list of length ``n_splits`` per k.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    plan = time_series_splits(len(y), n_splits)
    orders = _split_orders(X, y, strategy, plan)
    return _select_k_with_orders(X, y, model.with_seed(seed), plan, orders)


def build_k_rank(
    X,
    y,
    model: ModelSpec,
    strategy: ScoreStrategy,
    base_seed: int = 0,
    repetitions: int = K_RANK_REPETITIONS,
    n_splits: int = SELECT_K_SPLITS,
) -> KRankResult:
    """Choose the best feature count from repeated per-k benchmarks.

    Repetition r reruns select_k with the model seeded base_seed + r (fold
    boundaries stay fixed). Per k, the median of the per-repetition median
    MAEs is taken; medians strictly inside the interquartile band survive,
    and best_k is the k at the middle position (lower middle on even
    lengths) of the surviving list. If the band is empty -- all medians
    equal makes the open interval vanish -- the k with the smallest median
    is used and the fallback is flagged.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    plan = time_series_splits(len(y), n_splits)
    orders = _split_orders(X, y, strategy, plan)
    p = X.shape[1]

    rep_results = [
        _select_k_with_orders(X, y, model.with_seed(base_seed + r), plan, orders)
        for r in range(repetitions)
    ]

    per_k_medians: list[tuple[int, float]] = []
    for ki in range(p):
        rep_medians = [float(np.median(rep[ki][1])) for rep in rep_results]
        per_k_medians.append((ki + 1, float(np.median(rep_medians))))
    return pick_best_k(per_k_medians)


def pick_best_k(per_k_medians: list[tuple[int, float]]) -> KRankResult:
    """Interquartile filter plus middle-position pick over (k, median) pairs.

    Keeps pairs whose median sits strictly inside the band and returns the
    k at position floor(len/2) of the survivors. An empty band (all
    medians equal) falls back to the k with the smallest median.
    """
    values = [m for _, m in per_k_medians]
    retained, _ = iqr_retained_indices(values)
    filtered = [per_k_medians[i] for i in retained]
    if filtered:
        best_k = filtered[len(filtered) // 2][0]
        used_fallback = False
    else:
        best_k = per_k_medians[int(np.argmin(values))][0]
        used_fallback = True
    return KRankResult(
        per_k_medians=per_k_medians,
        filtered=filtered,
        best_k=best_k,
        used_fallback=used_fallback,
    )
