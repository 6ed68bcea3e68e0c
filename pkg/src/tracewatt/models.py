"""The regressor zoo behind one fit/predict contract.

Five kinds: a persistence baseline (next power = last power), a mean
baseline, ridge regression via closed-form normal equations, k-nearest
neighbors, and a random forest of variance-reduction CART trees. Every
fit standardizes features internally and is deterministic given its seed;
fitted models serialize to JSON and round-trip bit-identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyInputError, NumericError, ParameterError, ShapeError

MODEL_KINDS = ("persistence", "mean", "ridge", "knn", "random_forest")

_DEFAULTS: dict[str, dict] = {
    "persistence": {},
    "mean": {},
    "ridge": {"lam": 1.0},
    "knn": {"k": 5},
    # feature_subsample None means ceil(p / 3), resolved at fit time.
    "random_forest": {
        "trees": 100,
        "max_depth": None,
        "min_leaf": 1,
        "feature_subsample": None,
        "seed": 0,
    },
}


@dataclass(frozen=True)
class ModelSpec:
    """Declarative regressor configuration: kind + hyperparameters."""

    kind: str
    hyperparameters: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ParameterError(f"unknown model kind {self.kind!r}; choose from {MODEL_KINDS}")
        merged = dict(_DEFAULTS[self.kind])
        unknown = set(self.hyperparameters) - set(merged)
        if unknown:
            raise ParameterError(f"unknown hyperparameters for {self.kind}: {sorted(unknown)}")
        merged.update(self.hyperparameters)
        _validate_hyperparameters(self.kind, merged)
        object.__setattr__(self, "hyperparameters", merged)

    def with_seed(self, seed: int) -> "ModelSpec":
        """Copy with the RNG seed replaced; identity for seedless kinds."""
        if self.kind != "random_forest":
            return self
        hp = dict(self.hyperparameters)
        hp["seed"] = int(seed)
        return replace(self, hyperparameters=hp)

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "hyperparameters": dict(self.hyperparameters)}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ModelSpec":
        return cls(doc["kind"], dict(doc["hyperparameters"]))


def _validate_hyperparameters(kind: str, hp: dict) -> None:
    if kind == "ridge" and not hp["lam"] >= 0.0:
        raise ParameterError(f"ridge lam must be >= 0, got {hp['lam']}")
    if kind == "knn" and not hp["k"] >= 1:
        raise ParameterError(f"knn k must be >= 1, got {hp['k']}")
    if kind == "random_forest":
        if not hp["trees"] >= 1:
            raise ParameterError(f"forest trees must be >= 1, got {hp['trees']}")
        if not hp["min_leaf"] >= 1:
            raise ParameterError(f"forest min_leaf must be >= 1, got {hp['min_leaf']}")
        if hp["max_depth"] is not None and hp["max_depth"] < 1:
            raise ParameterError(f"forest max_depth must be >= 1 or None, got {hp['max_depth']}")
        if hp["feature_subsample"] is not None and hp["feature_subsample"] < 1:
            raise ParameterError("forest feature_subsample must be >= 1 or None")


@dataclass
class FittedModel:
    """A trained regressor plus everything needed to reuse it elsewhere."""

    spec: ModelSpec
    scaler_params: list[tuple[float, float]]
    selected_features: list[str]
    parameters: dict
    train_rows: int

    def to_json_dict(self) -> dict:
        return {
            "spec": self.spec.to_json_dict(),
            "scaler_params": [[m, s] for m, s in self.scaler_params],
            "selected_features": list(self.selected_features),
            "parameters": self.parameters,
            "train_rows": self.train_rows,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FittedModel":
        return cls(
            spec=ModelSpec.from_json_dict(doc["spec"]),
            scaler_params=[(float(m), float(s)) for m, s in doc["scaler_params"]],
            selected_features=list(doc["selected_features"]),
            parameters=doc["parameters"],
            train_rows=int(doc["train_rows"]),
        )


def fit(spec: ModelSpec, X, y, feature_names: list[str] | None = None) -> FittedModel:
    """Train ``spec`` on (X, y). Deterministic given the spec's seed."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ShapeError(f"X must be 2-d, got shape {X.shape}")
    n, p = X.shape
    if y.shape != (n,):
        raise ShapeError(f"y must have shape ({n},), got {y.shape}")
    if n < 2:
        raise ParameterError(f"need at least 2 training rows, got {n}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise NumericError("training data contains non-finite values")
    if spec.kind == "knn" and n < spec.hyperparameters["k"] + 1:
        raise ParameterError(
            f"knn with k={spec.hyperparameters['k']} needs at least k+1 rows, got {n}"
        )
    if feature_names is None:
        feature_names = [f"f{j}" for j in range(p)]
    elif len(feature_names) != p:
        raise ShapeError(f"{len(feature_names)} feature names for {p} columns")

    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    z = (X - mean) / std

    if spec.kind == "mean":
        parameters: dict = {"mean": float(np.mean(y))}
    elif spec.kind == "persistence":
        parameters = {"last_value": float(y[-1])}
    elif spec.kind == "ridge":
        parameters = _fit_ridge(z, y, spec.hyperparameters["lam"])
    elif spec.kind == "knn":
        parameters = {"train_z": z.tolist(), "train_y": y.tolist()}
    else:
        parameters = _fit_forest(z, y, spec.hyperparameters)

    return FittedModel(
        spec=spec,
        scaler_params=[(float(m), float(s)) for m, s in zip(mean, std)],
        selected_features=list(feature_names),
        parameters=parameters,
        train_rows=n,
    )


def predict(model: FittedModel, X) -> np.ndarray:
    """Predict power (mW) for each row of X. Deterministic, finite."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ShapeError(f"X must be 2-d, got shape {X.shape}")
    if X.shape[1] != len(model.scaler_params):
        raise ShapeError(
            f"model expects {len(model.scaler_params)} features, got {X.shape[1]}"
        )
    mean = np.array([m for m, _ in model.scaler_params])
    std = np.array([s for _, s in model.scaler_params])
    z = (X - mean) / std

    kind = model.spec.kind
    if kind == "mean":
        return np.full(X.shape[0], model.parameters["mean"], dtype=float)
    if kind == "persistence":
        # Frozen at the last observed power; the rolling form lives in
        # persistence_predict, which needs the power series itself.
        return np.full(X.shape[0], model.parameters["last_value"], dtype=float)
    if kind == "ridge":
        coef = np.asarray(model.parameters["coefficients"], dtype=float)
        return model.parameters["intercept"] + z @ coef
    if kind == "knn":
        return _predict_knn(model, z)
    return _predict_forest(model, z)


def persistence_predict(power) -> np.ndarray:
    """Rolling persistence baseline: predict power[t] as power[t-1].

    Returns n-1 predictions aligned with targets power[1:].
    """
    p = np.asarray(power, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise EmptyInputError(f"need a series of at least 2 readings, got shape {p.shape}")
    return p[:-1].copy()


# -----------------------------
# Ridge
# -----------------------------


def _fit_ridge(z: np.ndarray, y: np.ndarray, lam: float) -> dict:
    n, p = z.shape
    intercept = float(np.mean(y))
    a = z.T @ z + lam * np.eye(p)
    b = z.T @ (y - intercept)
    try:
        coef = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            "ridge normal equations are singular; set lam > 0 to regularize"
        ) from exc
    return {"intercept": intercept, "coefficients": coef.tolist()}


# -----------------------------
# k-NN
# -----------------------------


def _predict_knn(model: FittedModel, z: np.ndarray) -> np.ndarray:
    train_z = np.asarray(model.parameters["train_z"], dtype=float)
    train_y = np.asarray(model.parameters["train_y"], dtype=float)
    k = model.spec.hyperparameters["k"]
    out = np.empty(z.shape[0], dtype=float)
    for start in range(0, z.shape[0], 1024):
        stop = min(start + 1024, z.shape[0])
        d2 = ((z[start:stop, None, :] - train_z[None, :, :]) ** 2).sum(axis=2)
        # Stable sort: equal distances resolve to the earlier training row.
        nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
        out[start:stop] = train_y[nn].mean(axis=1)
    return out


# -----------------------------
# Random forest
# -----------------------------


def _fit_forest(z: np.ndarray, y: np.ndarray, hp: dict) -> dict:
    n, p = z.shape
    n_sub = hp["feature_subsample"]
    if n_sub is None:
        n_sub = math.ceil(p / 3)
    n_sub = min(n_sub, p)
    max_depth = hp["max_depth"] if hp["max_depth"] is not None else math.inf
    trees = []
    for t in range(hp["trees"]):
        rng = np.random.default_rng(hp["seed"] + t)
        boot = rng.integers(0, n, size=n)
        trees.append(_build_tree(z[boot], y[boot], rng, max_depth, hp["min_leaf"], n_sub))
    return {"trees": trees}


def _build_tree(z, y, rng, max_depth, min_leaf, n_sub):
    """Grow one CART tree depth-first (left before right).

    Iterative so degenerate traces cannot blow the recursion limit; the
    node visit order fixes the RNG consumption order, keeping trees
    reproducible for a given seed.
    """
    root: dict = {}
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        ny = y[idx]
        if depth >= max_depth or len(ny) < 2 * min_leaf or np.all(ny == ny[0]):
            node.update(_leaf(ny))
            continue
        if n_sub < z.shape[1]:
            feats = np.sort(rng.choice(z.shape[1], size=n_sub, replace=False))
        else:
            feats = np.arange(z.shape[1])
        split = _best_split(z[idx], ny, feats, min_leaf)
        if split is None:
            node.update(_leaf(ny))
            continue
        feature, threshold = split
        left = z[idx, feature] <= threshold
        node.update(
            {
                "feature": int(feature),
                "threshold": float(threshold),
                "left": {},
                "right": {},
                "leaf_value": None,
            }
        )
        stack.append((node["right"], idx[~left], depth + 1))
        stack.append((node["left"], idx[left], depth + 1))
    return root


def _leaf(y) -> dict:
    return {
        "feature": None,
        "threshold": None,
        "left": None,
        "right": None,
        "leaf_value": float(np.mean(y)),
    }


def _best_split(z, y, feats, min_leaf):
    """Minimum-SSE split over candidate features and midpoint thresholds.

    Ties break to the lowest feature index, then the lowest threshold,
    which keeps tree construction bit-reproducible.
    """
    m = len(y)
    best = None
    best_sse = math.inf
    for feature in feats:
        values = z[:, feature]
        order = np.argsort(values, kind="stable")
        sv = values[order]
        sy = y[order]
        cs = np.cumsum(sy)
        css = np.cumsum(sy * sy)
        total_s = cs[-1]
        total_ss = css[-1]
        counts = np.arange(1, m)
        valid = (sv[:-1] < sv[1:]) & (counts >= min_leaf) & (m - counts >= min_leaf)
        if not valid.any():
            continue
        idx = np.flatnonzero(valid)
        left_n = counts[idx].astype(float)
        right_n = m - left_n
        left_s = cs[idx]
        left_ss = css[idx]
        sse = (
            left_ss
            - left_s * left_s / left_n
            + (total_ss - left_ss)
            - (total_s - left_s) ** 2 / right_n
        )
        pos = int(np.argmin(sse))
        if sse[pos] < best_sse:
            best_sse = float(sse[pos])
            cut = idx[pos]
            best = (int(feature), float((sv[cut] + sv[cut + 1]) / 2.0))
    return best


def _predict_forest(model: FittedModel, z: np.ndarray) -> np.ndarray:
    trees = model.parameters["trees"]
    acc = np.zeros(z.shape[0], dtype=float)
    for tree in trees:
        acc += _predict_tree(tree, z)
    return acc / len(trees)


def _predict_tree(tree: dict, z: np.ndarray) -> np.ndarray:
    out = np.empty(z.shape[0], dtype=float)
    stack = [(tree, np.arange(z.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if node["leaf_value"] is not None:
            out[idx] = node["leaf_value"]
            continue
        left = z[idx, node["feature"]] <= node["threshold"]
        if left.any():
            stack.append((node["left"], idx[left]))
        if not left.all():
            stack.append((node["right"], idx[~left]))
    return out
