"""Degenerate-feature removal and Local Outlier Factor row filtering."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateInputError,
    ExcessiveOutlierError,
    InvalidSampleError,
    ParameterError,
)
from .ingest import FeatureMatrix

DEFAULT_SPARSE_FRACTION = 0.01
DEFAULT_VARIANCE_FLOOR = 1e-4
DEFAULT_LOF_NEIGHBORS = 20
DEFAULT_LOF_THRESHOLD = 1.5
DEFAULT_MAX_OUTLIER_FRACTION = 0.5

_DISTANCE_CHUNK = 512


@dataclass
class CleaningReport:
    """What cleaning removed and why. Serializes to JSON next to the model."""

    dropped_single_value: list[str] = field(default_factory=list)
    dropped_sparse: list[str] = field(default_factory=list)
    dropped_low_variance: list[str] = field(default_factory=list)
    outlier_mask: np.ndarray | None = None
    outlier_count: int = 0

    def to_json_dict(self) -> dict:
        return {
            "dropped_single_value": list(self.dropped_single_value),
            "dropped_sparse": list(self.dropped_sparse),
            "dropped_low_variance": list(self.dropped_low_variance),
            "outlier_count": int(self.outlier_count),
            "outlier_rows": (
                [int(i) for i in np.flatnonzero(self.outlier_mask)]
                if self.outlier_mask is not None
                else None
            ),
        }


def drop_degenerate_features(
    m: FeatureMatrix,
    sparse_fraction: float = DEFAULT_SPARSE_FRACTION,
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
) -> tuple[FeatureMatrix, CleaningReport]:
    """Remove single-valued, mostly-missing, and near-constant features.

    A feature is dropped when (a) its non-missing values are all equal,
    (b) its non-missing fraction is below ``sparse_fraction``, or (c) its
    variance after min-max scaling is below ``variance_floor``. The rules
    commute on the surviving set; each dropped feature is attributed to
    the first rule that caught it. The target is untouched.
    """
    if m.n == 0 or m.p == 0:
        raise DegenerateInputError("cannot clean an empty feature matrix")
    if not 0.0 <= sparse_fraction <= 1.0:
        raise ParameterError(f"sparse_fraction must be in [0, 1], got {sparse_fraction}")
    if variance_floor < 0.0:
        raise ParameterError(f"variance_floor must be >= 0, got {variance_floor}")

    report = CleaningReport()
    keep: list[int] = []
    for j, name in enumerate(m.feature_names):
        col = m.X[:, j]
        values = col[np.isfinite(col)]
        distinct = np.unique(values)
        if distinct.size == 1:
            report.dropped_single_value.append(name)
            continue
        if values.size / col.size < sparse_fraction:
            report.dropped_sparse.append(name)
            continue
        if distinct.size == 0:
            scaled_var = 0.0
        else:
            span = distinct[-1] - distinct[0]
            scaled_var = float(np.var((values - distinct[0]) / span)) if span > 0 else 0.0
        if scaled_var < variance_floor:
            report.dropped_low_variance.append(name)
            continue
        keep.append(j)

    if not keep:
        raise DegenerateInputError("every feature was removed as degenerate")
    cleaned = FeatureMatrix(
        feature_names=[m.feature_names[j] for j in keep],
        X=m.X[:, keep].copy(),
        y=m.y.copy(),
        dropped_rows=m.dropped_rows,
    )
    return cleaned, report


def lof_scores(points: np.ndarray, k: int = DEFAULT_LOF_NEIGHBORS) -> np.ndarray:
    """Local Outlier Factor of every row of ``points``.

    Classic definition: the k-distance of a point is the distance to its
    k-th nearest neighbor, reach-dist(p, o) = max(k-distance(o), d(p, o)),
    the local reachability density is the inverse mean reach distance over
    the k neighbors, and the score is the mean neighbor-to-point density
    ratio. Scores sit near 1 for inliers and grow for outliers.

    Columns are standardized internally before Euclidean distances are
    taken. Neighbors are ordered by (distance, row index), so ties resolve
    to the lower row. When a point's k-distance is 0 it sits inside a
    block of duplicates whose densities are all infinite; the ratio of a
    duplicate's density to its own is taken as 1, which scores exact
    duplicates as perfect inliers.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ParameterError(f"points must be a 2-d matrix, got shape {pts.shape}")
    n, p = pts.shape
    if not 1 <= k < n:
        raise ParameterError(f"need n > k >= 1, got n={n}, k={k}")
    if not np.isfinite(pts).all():
        raise InvalidSampleError("points contain non-finite values")

    mean = pts.mean(axis=0)
    std = pts.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    z = (pts - mean) / std

    neighbors = np.empty((n, k), dtype=int)
    neighbor_d = np.empty((n, k), dtype=float)
    for start in range(0, n, _DISTANCE_CHUNK):
        stop = min(start + _DISTANCE_CHUNK, n)
        block = z[start:stop]
        d2 = np.zeros((stop - start, n))
        for f in range(p):
            d2 += (block[:, f, None] - z[None, :, f]) ** 2
        dist = np.sqrt(d2)
        # Stable argsort on equal distances preserves row-index order.
        order = np.argsort(dist, axis=1, kind="stable")
        rows = np.arange(start, stop)[:, None]
        own = order != rows
        nn = order[own].reshape(stop - start, n - 1)[:, :k]
        neighbors[start:stop] = nn
        neighbor_d[start:stop] = np.take_along_axis(dist, nn, axis=1)

    k_distance = neighbor_d[:, k - 1]
    reach = np.maximum(k_distance[neighbors], neighbor_d)
    mean_reach = np.mean(reach, axis=1)
    with np.errstate(divide="ignore"):
        lrd = np.where(mean_reach > 0.0, 1.0 / mean_reach, np.inf)

    num = lrd[neighbors]
    den = lrd[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = num / den
    ratio[np.isinf(num) & np.isinf(den)] = 1.0
    return np.mean(ratio, axis=1)


def remove_outliers(
    m: FeatureMatrix,
    k: int = DEFAULT_LOF_NEIGHBORS,
    threshold: float = DEFAULT_LOF_THRESHOLD,
    max_drop_fraction: float = DEFAULT_MAX_OUTLIER_FRACTION,
) -> tuple[FeatureMatrix, CleaningReport]:
    """Drop rows whose LOF score exceeds ``threshold``.

    The score is computed jointly over the predictors and the power target,
    since gauge glitches show up in power. Surviving rows keep their order.
    Refuses (ExcessiveOutlierError) when more than ``max_drop_fraction`` of
    the rows would go; pass 1.0 to override.
    """
    if threshold <= 1.0:
        raise ParameterError(f"threshold must be > 1, got {threshold}")
    joint = np.column_stack([m.X, m.y])
    scores = lof_scores(joint, k=k)
    mask = scores > threshold
    count = int(mask.sum())
    if count > max_drop_fraction * m.n:
        raise ExcessiveOutlierError(
            f"would drop {count} of {m.n} rows "
            f"(limit {max_drop_fraction:.0%}); raise max_drop_fraction to override"
        )
    report = CleaningReport(outlier_mask=mask, outlier_count=count)
    keep = ~mask
    cleaned = FeatureMatrix(
        feature_names=list(m.feature_names),
        X=m.X[keep].copy(),
        y=m.y[keep].copy(),
        dropped_rows=m.dropped_rows,
    )
    return cleaned, report


def clean_feature_matrix(
    m: FeatureMatrix,
    sparse_fraction: float = DEFAULT_SPARSE_FRACTION,
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
    lof_neighbors: int = DEFAULT_LOF_NEIGHBORS,
    lof_threshold: float = DEFAULT_LOF_THRESHOLD,
    max_drop_fraction: float = DEFAULT_MAX_OUTLIER_FRACTION,
) -> tuple[FeatureMatrix, CleaningReport]:
    """Full cleaning pass: degenerate features first, then LOF rows."""
    cleaned, feature_report = drop_degenerate_features(m, sparse_fraction, variance_floor)
    cleaned, outlier_report = remove_outliers(
        cleaned, k=lof_neighbors, threshold=lof_threshold, max_drop_fraction=max_drop_fraction
    )
    feature_report.outlier_mask = outlier_report.outlier_mask
    feature_report.outlier_count = outlier_report.outlier_count
    return cleaned, feature_report
