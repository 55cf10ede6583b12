"""From-scratch classical classifiers and per-trial random hyperparameter search.

Four models share a fit/predict interface: Gaussian naive Bayes, a CART
decision tree, a random forest of such trees, and linear discriminant
analysis.  All argmax decisions break ties toward the lowest class index,
and every random choice flows from an explicit seed, so repeated runs with
the same inputs produce identical models and predictions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyInput,
    InvalidConfig,
    MissingClass,
    NotFitted,
    ShapeMismatch,
    SingularCovariance,
)
from .rng import derive_seed, make_rng

MODEL_KINDS = ("nb", "dt", "rf", "lda")


def accuracy(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ShapeMismatch(f"label shapes differ: {y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise EmptyInput("cannot score empty label arrays")
    return float(np.mean(y_true == y_pred))


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2:
        raise ShapeMismatch(f"X must be 2-D, got {X.shape}")
    if y.shape != (X.shape[0],):
        raise ShapeMismatch(f"y must be ({X.shape[0]},), got {y.shape}")
    if X.shape[0] == 0:
        raise EmptyInput("no training rows")
    return X, y


class GaussianNaiveBayes:
    """Per-class diagonal Gaussians; var_smoothing is added to every variance."""

    def __init__(self, var_smoothing: float = 1e-9):
        if var_smoothing <= 0:
            raise InvalidConfig(f"var_smoothing must be > 0, got {var_smoothing}")
        self.var_smoothing = var_smoothing
        self.classes_ = None
        self.priors = None
        self.means = None
        self.variances = None

    def fit(self, X, y) -> "GaussianNaiveBayes":
        X, y = _check_xy(X, y)
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise MissingClass(
                f"need at least 2 classes in y, got {self.classes_.tolist()}"
            )
        k, d = len(self.classes_), X.shape[1]
        self.priors = np.empty(k)
        self.means = np.empty((k, d))
        self.variances = np.empty((k, d))
        for i, cls in enumerate(self.classes_):
            rows = X[y == cls]
            self.priors[i] = rows.shape[0] / X.shape[0]
            self.means[i] = np.mean(rows, axis=0)
            self.variances[i] = np.var(rows, axis=0) + self.var_smoothing
        return self

    def log_likelihood(self, X) -> np.ndarray:
        """(N, K) joint log densities, log prior + sum of per-feature log pdfs."""
        if self.classes_ is None:
            raise NotFitted("fit before predict")
        X = np.asarray(X, dtype=np.float64)
        ll = np.empty((X.shape[0], len(self.classes_)))
        for i in range(len(self.classes_)):
            diff = X - self.means[i]
            ll[:, i] = (np.log(self.priors[i])
                        - 0.5 * np.sum(np.log(2.0 * np.pi * self.variances[i]))
                        - 0.5 * np.sum(diff * diff / self.variances[i], axis=1))
        return ll

    def predict(self, X) -> np.ndarray:
        return self.classes_[np.argmax(self.log_likelihood(X), axis=1)]

    def to_dict(self) -> dict:
        return {
            "kind": "nb",
            "var_smoothing": self.var_smoothing,
            "classes": self.classes_.tolist(),
            "priors": self.priors.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianNaiveBayes":
        model = cls(var_smoothing=d["var_smoothing"])
        model.classes_ = np.asarray(d["classes"])
        model.priors = np.asarray(d["priors"], dtype=np.float64)
        model.means = np.asarray(d["means"], dtype=np.float64)
        model.variances = np.asarray(d["variances"], dtype=np.float64)
        return model


@dataclass(frozen=True)
class DtParams:
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    criterion: str = "gini"

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 1:
            raise InvalidConfig(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_samples_split < 2:
            raise InvalidConfig(
                f"min_samples_split must be >= 2, got {self.min_samples_split}"
            )
        if self.min_samples_leaf < 1:
            raise InvalidConfig(
                f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}"
            )
        if self.criterion not in ("gini", "entropy"):
            raise InvalidConfig(f"criterion must be gini or entropy, got {self.criterion}")

    def to_dict(self) -> dict:
        return {"max_depth": self.max_depth,
                "min_samples_split": self.min_samples_split,
                "min_samples_leaf": self.min_samples_leaf,
                "criterion": self.criterion}


def _side_scores(left_counts, left_n, right_counts, right_n, criterion):
    """Score to maximize over candidate splits (higher = purer children)."""
    if criterion == "gini":
        return (np.sum(left_counts ** 2, axis=1) / left_n
                + np.sum(right_counts ** 2, axis=1) / right_n)
    # entropy: maximize sum over sides of sum_c cnt*log2(cnt/n_side)
    def side(counts, n):
        with np.errstate(divide="ignore", invalid="ignore"):
            term = counts * np.log2(counts / n[:, None])
        return np.sum(np.where(counts > 0, term, 0.0), axis=1)
    return side(left_counts, left_n) + side(right_counts, right_n)


def _best_split(X, y_codes, idx, features, n_classes, min_leaf, criterion):
    """Best (feature, threshold, score) over candidate features, or None.

    Candidates within a feature are midpoints between consecutive distinct
    sorted values.  Ties resolve to the lower feature index (features are
    scanned ascending, replacement needs a strict improvement) and within a
    feature to the lowest threshold (first argmax).
    """
    best = None
    n = idx.shape[0]
    labels = y_codes[idx]
    for f in features:
        v = X[idx, f]
        order = np.argsort(v, kind="stable")
        sv = v[order]
        sy = labels[order]
        cut = np.flatnonzero(sv[:-1] < sv[1:])  # split after position cut[i]
        if cut.size == 0:
            continue
        left_n = cut + 1
        right_n = n - left_n
        valid = (left_n >= min_leaf) & (right_n >= min_leaf)
        if not valid.any():
            continue
        onehot = sy[:, None] == np.arange(n_classes)[None, :]
        cum = np.cumsum(onehot, axis=0)
        left_counts = cum[cut]
        right_counts = cum[-1][None, :] - left_counts
        scores = _side_scores(left_counts, left_n, right_counts, right_n, criterion)
        scores = np.where(valid, scores, -np.inf)
        j = int(np.argmax(scores))
        if scores[j] == -np.inf:
            continue
        if best is None or scores[j] > best[2]:
            threshold = 0.5 * (sv[cut[j]] + sv[cut[j] + 1])
            best = (int(f), float(threshold), float(scores[j]))
    return best


class DecisionTree:
    """CART with greedy Gini (or entropy) splits; x <= threshold goes left.

    The fitted tree is stored as flat arrays: node i is a leaf when
    feature[i] < 0, otherwise rows split on threshold[i] toward
    left[i]/right[i].  counts[i] holds the training class histogram.
    """

    def __init__(self, params: DtParams = DtParams()):
        self.params = params
        self.classes_ = None
        self.feature = None
        self.threshold = None
        self.left = None
        self.right = None
        self.counts = None

    @property
    def n_nodes(self) -> int:
        return 0 if self.feature is None else len(self.feature)

    def fit(self, X, y, rng: np.random.Generator | None = None,
            max_features: int | None = None) -> "DecisionTree":
        """Grow the tree; rng and max_features enable per-split feature
        subsampling (used by the forest) and are off by default."""
        X, y = _check_xy(X, y)
        self.classes_ = np.unique(y)
        y_codes = np.searchsorted(self.classes_, y)
        n_classes = len(self.classes_)
        d = X.shape[1]
        if max_features is not None and not (1 <= max_features <= d):
            raise InvalidConfig(f"max_features must be in [1, {d}], got {max_features}")
        subsample = max_features is not None and max_features < d
        if subsample and rng is None:
            raise InvalidConfig("feature subsampling needs an rng")

        feature, threshold, left, right, counts = [], [], [], [], []

        def new_node():
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            counts.append(None)
            return len(feature) - 1

        # iterative depth-first growth; stack holds (node_id, row index array, depth)
        root = new_node()
        stack = [(root, np.arange(X.shape[0]), 0)]
        p = self.params
        while stack:
            node, idx, depth = stack.pop()
            node_counts = np.bincount(y_codes[idx], minlength=n_classes)
            counts[node] = node_counts
            pure = np.max(node_counts) == idx.shape[0]
            depth_capped = p.max_depth is not None and depth >= p.max_depth
            if pure or depth_capped or idx.shape[0] < p.min_samples_split:
                continue
            if subsample:
                cand = np.sort(rng.choice(d, size=max_features, replace=False))
            else:
                cand = np.arange(d)
            split = _best_split(X, y_codes, idx, cand, n_classes,
                                p.min_samples_leaf, p.criterion)
            if split is None:
                continue
            f, thr, _score = split
            go_left = X[idx, f] <= thr
            feature[node] = f
            threshold[node] = thr
            left[node] = new_node()
            right[node] = new_node()
            stack.append((right[node], idx[~go_left], depth + 1))
            stack.append((left[node], idx[go_left], depth + 1))

        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.counts = np.asarray(counts, dtype=np.int64)
        return self

    def _leaf_ids(self, X) -> np.ndarray:
        if self.feature is None:
            raise NotFitted("fit before predict")
        X = np.asarray(X, dtype=np.float64)
        cur = np.zeros(X.shape[0], dtype=np.int32)
        while True:
            at_leaf = self.feature[cur] < 0
            if at_leaf.all():
                return cur
            f = self.feature[cur]
            go_left = X[np.arange(X.shape[0]), np.maximum(f, 0)] <= self.threshold[cur]
            nxt = np.where(go_left, self.left[cur], self.right[cur])
            cur = np.where(at_leaf, cur, nxt).astype(np.int32)

    def predict(self, X) -> np.ndarray:
        leaf_counts = self.counts[self._leaf_ids(X)]
        return self.classes_[np.argmax(leaf_counts, axis=1)]

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int32)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max()) if self.n_nodes else 0

    def _node_dict(self, i: int) -> dict:
        if self.feature[i] < 0:
            return {"counts": self.counts[i].tolist()}
        return {"feature": int(self.feature[i]),
                "threshold": float(self.threshold[i]),
                "left": self._node_dict(self.left[i]),
                "right": self._node_dict(self.right[i])}

    def to_dict(self) -> dict:
        return {"kind": "dt", "params": self.params.to_dict(),
                "classes": self.classes_.tolist(),
                "root": self._node_dict(0)}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        model = cls(DtParams(**d["params"]))
        model.classes_ = np.asarray(d["classes"])
        n_classes = len(model.classes_)
        feature, threshold, left, right, counts = [], [], [], [], []

        def build(node_dict) -> int:
            i = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            counts.append(np.zeros(n_classes, dtype=np.int64))
            if "counts" in node_dict:
                counts[i] = np.asarray(node_dict["counts"], dtype=np.int64)
            else:
                feature[i] = node_dict["feature"]
                threshold[i] = node_dict["threshold"]
                left[i] = build(node_dict["left"])
                right[i] = build(node_dict["right"])
                counts[i] = counts[left[i]] + counts[right[i]]
            return i

        build(d["root"])
        model.feature = np.asarray(feature, dtype=np.int32)
        model.threshold = np.asarray(threshold, dtype=np.float64)
        model.left = np.asarray(left, dtype=np.int32)
        model.right = np.asarray(right, dtype=np.int32)
        model.counts = np.asarray(counts, dtype=np.int64)
        return model


@dataclass(frozen=True)
class RfParams:
    n_trees: int = 100
    max_features: str = "sqrt"  # "sqrt", "log2", or "all"
    bootstrap: bool = True
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    criterion: str = "gini"

    def __post_init__(self):
        if self.n_trees < 1:
            raise InvalidConfig(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_features not in ("sqrt", "log2", "all"):
            raise InvalidConfig(
                f"max_features must be sqrt, log2, or all, got {self.max_features!r}"
            )
        DtParams(self.max_depth, self.min_samples_split,
                 self.min_samples_leaf, self.criterion)

    def tree_params(self) -> DtParams:
        return DtParams(self.max_depth, self.min_samples_split,
                        self.min_samples_leaf, self.criterion)

    def resolve_max_features(self, d: int) -> int:
        if self.max_features == "sqrt":
            return max(1, int(np.sqrt(d)))
        if self.max_features == "log2":
            return max(1, int(np.log2(d)))
        return d

    def to_dict(self) -> dict:
        return {"n_trees": self.n_trees, "max_features": self.max_features,
                "bootstrap": self.bootstrap, "max_depth": self.max_depth,
                "min_samples_split": self.min_samples_split,
                "min_samples_leaf": self.min_samples_leaf,
                "criterion": self.criterion}


class RandomForest:
    """Bagged CART trees with per-split feature subsampling and majority vote."""

    def __init__(self, params: RfParams = RfParams(), seed: int = 0):
        self.params = params
        self.seed = seed
        self.classes_ = None
        self.trees = []
        self.tree_seeds = []

    def fit(self, X, y) -> "RandomForest":
        X, y = _check_xy(X, y)
        self.classes_ = np.unique(y)
        n, d = X.shape
        m = self.params.resolve_max_features(d)
        self.trees = []
        self.tree_seeds = [derive_seed(self.seed, t)
                           for t in range(self.params.n_trees)]
        for tree_seed in self.tree_seeds:
            rng = make_rng(tree_seed)
            if self.params.bootstrap:
                rows = rng.integers(0, n, size=n)
            else:
                rows = np.arange(n)
            tree = DecisionTree(self.params.tree_params())
            tree.fit(X[rows], y[rows], rng=rng,
                     max_features=m if m < d else None)
            self.trees.append(tree)
        return self

    def predict(self, X) -> np.ndarray:
        if not self.trees:
            raise NotFitted("fit before predict")
        X = np.asarray(X, dtype=np.float64)
        votes = np.zeros((X.shape[0], len(self.classes_)), dtype=np.int64)
        for tree in self.trees:
            pred_codes = np.searchsorted(self.classes_, tree.predict(X))
            votes[np.arange(X.shape[0]), pred_codes] += 1
        return self.classes_[np.argmax(votes, axis=1)]

    def to_dict(self) -> dict:
        return {"kind": "rf", "params": self.params.to_dict(), "seed": self.seed,
                "classes": self.classes_.tolist(),
                "tree_seeds": self.tree_seeds,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        model = cls(RfParams(**d["params"]), seed=d["seed"])
        model.classes_ = np.asarray(d["classes"])
        model.tree_seeds = list(d["tree_seeds"])
        model.trees = [DecisionTree.from_dict(t) for t in d["trees"]]
        return model


class LinearDiscriminant:
    """LDA with pooled within-class covariance plus a ridge term.

    Discriminant for class k: x^T S^-1 mu_k - 0.5 mu_k^T S^-1 mu_k + log pi_k.
    """

    def __init__(self, ridge_eps: float = 1e-6):
        if ridge_eps < 0:
            raise InvalidConfig(f"ridge_eps must be >= 0, got {ridge_eps}")
        self.ridge_eps = ridge_eps
        self.classes_ = None
        self.class_means = None
        self.priors = None
        self.pooled_covariance_inverse = None
        self._coefs = None
        self._intercepts = None

    def fit(self, X, y) -> "LinearDiscriminant":
        X, y = _check_xy(X, y)
        self.classes_ = np.unique(y)
        k, d = len(self.classes_), X.shape[1]
        if k < 2:
            raise MissingClass(f"need at least 2 classes, got {self.classes_.tolist()}")
        self.class_means = np.empty((k, d))
        self.priors = np.empty(k)
        scatter = np.zeros((d, d))
        for i, cls in enumerate(self.classes_):
            rows = X[y == cls]
            if rows.shape[0] < 2:
                raise MissingClass(
                    f"class {cls!r} needs at least 2 samples, got {rows.shape[0]}"
                )
            self.priors[i] = rows.shape[0] / X.shape[0]
            self.class_means[i] = np.mean(rows, axis=0)
            centered = rows - self.class_means[i]
            scatter += centered.T @ centered
        pooled = scatter / (X.shape[0] - k) + self.ridge_eps * np.eye(d)
        try:
            np.linalg.cholesky(pooled)
        except np.linalg.LinAlgError as exc:
            raise SingularCovariance(
                f"pooled covariance not positive definite at ridge {self.ridge_eps}"
            ) from exc
        self.pooled_covariance_inverse = np.linalg.inv(pooled)
        self._coefs = self.class_means @ self.pooled_covariance_inverse
        self._intercepts = (-0.5 * np.sum(self._coefs * self.class_means, axis=1)
                            + np.log(self.priors))
        return self

    def discriminants(self, X) -> np.ndarray:
        if self._coefs is None:
            raise NotFitted("fit before predict")
        X = np.asarray(X, dtype=np.float64)
        return X @ self._coefs.T + self._intercepts

    def predict(self, X) -> np.ndarray:
        return self.classes_[np.argmax(self.discriminants(X), axis=1)]

    def to_dict(self) -> dict:
        return {"kind": "lda", "ridge_eps": self.ridge_eps,
                "classes": self.classes_.tolist(),
                "class_means": self.class_means.tolist(),
                "priors": self.priors.tolist(),
                "pooled_covariance_inverse":
                    self.pooled_covariance_inverse.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearDiscriminant":
        model = cls(ridge_eps=d["ridge_eps"])
        model.classes_ = np.asarray(d["classes"])
        model.class_means = np.asarray(d["class_means"], dtype=np.float64)
        model.priors = np.asarray(d["priors"], dtype=np.float64)
        model.pooled_covariance_inverse = np.asarray(
            d["pooled_covariance_inverse"], dtype=np.float64)
        model._coefs = model.class_means @ model.pooled_covariance_inverse
        model._intercepts = (-0.5 * np.sum(model._coefs * model.class_means, axis=1)
                             + np.log(model.priors))
        return model


@dataclass(frozen=True)
class SearchSpace:
    """Hyperparameter ranges for random search; integer bounds inclusive."""

    n_iter: int = 20
    inner_val_fraction: float = 0.2
    dt_max_depth: tuple[int, int] = (2, 32)
    dt_min_samples_split: tuple[int, int] = (2, 64)
    dt_min_samples_leaf: tuple[int, int] = (1, 32)
    rf_n_trees: tuple[int, int] = (10, 200)
    rf_max_features: tuple[str, ...] = ("sqrt", "log2", "all")
    nb_var_smoothing: tuple[float, float] = (1e-12, 1e-6)
    lda_ridge_eps: tuple[float, float] = (1e-9, 1e-3)

    def __post_init__(self):
        if self.n_iter < 1:
            raise InvalidConfig(f"n_iter must be >= 1, got {self.n_iter}")
        if not (0.0 < self.inner_val_fraction < 1.0):
            raise InvalidConfig(
                f"inner_val_fraction must be in (0, 1), got {self.inner_val_fraction}"
            )

    def to_dict(self) -> dict:
        return {
            "n_iter": self.n_iter,
            "inner_val_fraction": self.inner_val_fraction,
            "dt_max_depth": list(self.dt_max_depth),
            "dt_min_samples_split": list(self.dt_min_samples_split),
            "dt_min_samples_leaf": list(self.dt_min_samples_leaf),
            "rf_n_trees": list(self.rf_n_trees),
            "rf_max_features": list(self.rf_max_features),
            "nb_var_smoothing": list(self.nb_var_smoothing),
            "lda_ridge_eps": list(self.lda_ridge_eps),
        }


def _draw_int(rng, bounds) -> int:
    return int(rng.integers(bounds[0], bounds[1] + 1))


def _draw_log_uniform(rng, bounds) -> float:
    return float(10.0 ** rng.uniform(np.log10(bounds[0]), np.log10(bounds[1])))


def draw_params(model_kind: str, space: SearchSpace, rng: np.random.Generator) -> dict:
    """One uniform draw from the model's search space."""
    if model_kind == "nb":
        return {"var_smoothing": _draw_log_uniform(rng, space.nb_var_smoothing)}
    if model_kind == "dt":
        return {"max_depth": _draw_int(rng, space.dt_max_depth),
                "min_samples_split": _draw_int(rng, space.dt_min_samples_split),
                "min_samples_leaf": _draw_int(rng, space.dt_min_samples_leaf)}
    if model_kind == "rf":
        return {"n_trees": _draw_int(rng, space.rf_n_trees),
                "max_features": str(rng.choice(list(space.rf_max_features))),
                "max_depth": _draw_int(rng, space.dt_max_depth),
                "min_samples_split": _draw_int(rng, space.dt_min_samples_split),
                "min_samples_leaf": _draw_int(rng, space.dt_min_samples_leaf)}
    if model_kind == "lda":
        return {"ridge_eps": _draw_log_uniform(rng, space.lda_ridge_eps)}
    raise InvalidConfig(f"model_kind must be one of {MODEL_KINDS}, got {model_kind!r}")


def train_model(model_kind: str, params: dict, X, y, seed: int = 0):
    """Train one model of the given kind; seed only matters for the forest."""
    if model_kind == "nb":
        return GaussianNaiveBayes(**params).fit(X, y)
    if model_kind == "dt":
        return DecisionTree(DtParams(**params)).fit(X, y)
    if model_kind == "rf":
        return RandomForest(RfParams(**params), seed=seed).fit(X, y)
    if model_kind == "lda":
        return LinearDiscriminant(**params).fit(X, y)
    raise InvalidConfig(f"model_kind must be one of {MODEL_KINDS}, got {model_kind!r}")


def _inner_holdout(subject_ids: np.ndarray, fraction: float,
                   rng: np.random.Generator):
    """Subject-level holdout masks (train_mask, val_mask).

    Holds out round(n_subjects * fraction) subjects, at least 1 and at most
    n_subjects - 1.  With a single subject, falls back to a row-level split.
    """
    subject_ids = np.asarray(subject_ids, dtype=str)
    subjects = np.unique(subject_ids)
    if len(subjects) >= 2:
        n_val = int(np.floor(len(subjects) * fraction + 0.5))
        n_val = min(max(n_val, 1), len(subjects) - 1)
        val_subjects = rng.choice(subjects, size=n_val, replace=False)
        val_mask = np.isin(subject_ids, val_subjects)
    else:
        n = len(subject_ids)
        n_val = min(max(int(np.floor(n * fraction + 0.5)), 1), n - 1)
        val_rows = rng.choice(n, size=n_val, replace=False)
        val_mask = np.zeros(n, dtype=bool)
        val_mask[val_rows] = True
    return ~val_mask, val_mask


def random_search(model_kind: str, space: SearchSpace, X, y,
                  subject_ids, seed: int):
    """Pick hyperparameters by random search with a subject-held-out set.

    Draws space.n_iter configurations, scores each by accuracy on the inner
    validation subjects, and returns (best_params, history) where history
    lists {"params", "inner_val_accuracy"} in draw order.  Ties keep the
    first-drawn configuration.
    """
    X, y = _check_xy(X, y)
    subject_ids = np.asarray(subject_ids, dtype=str)
    if subject_ids.shape != y.shape:
        raise ShapeMismatch(
            f"subject_ids must be ({y.shape[0]},), got {subject_ids.shape}"
        )
    draw_rng = make_rng(derive_seed(seed, 0))
    split_rng = make_rng(derive_seed(seed, 1))
    configs = [draw_params(model_kind, space, draw_rng)
               for _ in range(space.n_iter)]
    train_mask, val_mask = _inner_holdout(subject_ids,
                                          space.inner_val_fraction, split_rng)
    history = []
    best_params, best_acc = None, -1.0
    for i, params in enumerate(configs):
        model = train_model(model_kind, params, X[train_mask], y[train_mask],
                            seed=derive_seed(seed, 2 + i))
        acc = accuracy(y[val_mask], model.predict(X[val_mask]))
        history.append({"params": params, "inner_val_accuracy": acc})
        if acc > best_acc:
            best_params, best_acc = params, acc
    return best_params, history


def measure_predict_latency(model, X_test, repeats: int = 10) -> dict:
    """Mean and std wall-clock milliseconds of a full test-set predict call.

    One warm-up call runs first and is not timed; std is over the repeats.
    """
    if repeats < 3:
        raise InvalidConfig(f"repeats must be >= 3, got {repeats}")
    X_test = np.asarray(X_test, dtype=np.float64)
    model.predict(X_test)
    timings = np.empty(repeats)
    for i in range(repeats):
        start = time.perf_counter()
        model.predict(X_test)
        timings[i] = (time.perf_counter() - start) * 1e3
    return {"mean_ms": float(np.mean(timings)), "std_ms": float(np.std(timings))}
