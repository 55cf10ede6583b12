"""Principal component analysis of the 20-column feature space.

Fit mean-centers the data, builds the sample covariance with 1/(N-1), and
eigendecomposes it with numpy's symmetric solver.  Components are sorted by
eigenvalue descending and sign-fixed so each component's largest-magnitude
element is positive, which makes fits reproducible across runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadK, DegenerateInput, NotFitted, ShapeMismatch


@dataclass(frozen=True)
class PcaModel:
    """Fitted PCA: components[i] is the i-th principal axis (unit norm)."""

    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        components = np.asarray(self.components, dtype=np.float64)
        eigenvalues = np.asarray(self.eigenvalues, dtype=np.float64)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", components)
        object.__setattr__(self, "eigenvalues", eigenvalues)
        if components.ndim != 2 or components.shape[1] != mean.shape[0]:
            raise ShapeMismatch(
                f"components {components.shape} do not match mean {mean.shape}"
            )
        if eigenvalues.shape != (components.shape[0],):
            raise ShapeMismatch("one eigenvalue per component required")
        if np.any(eigenvalues < 0):
            raise ValueError("eigenvalues must be nonnegative")
        if np.any(np.diff(eigenvalues) > 1e-12):
            raise ValueError("eigenvalues must be sorted descending")

    @property
    def k_max(self) -> int:
        return self.components.shape[0]

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        return explained_variance_ratio(self)

    def to_json(self) -> str:
        return json.dumps({
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, payload: str) -> "PcaModel":
        d = json.loads(payload)
        return cls(mean=np.asarray(d["mean"]),
                   components=np.asarray(d["components"]),
                   eigenvalues=np.asarray(d["eigenvalues"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "PcaModel":
        return cls.from_json(Path(path).read_text())


def fit_pca(X: np.ndarray) -> PcaModel:
    """Fit PCA on an (N, d) matrix; requires N >= 2 and nonzero variance."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeMismatch(f"X must be 2-D, got shape {X.shape}")
    if X.shape[0] < 2:
        raise DegenerateInput(f"need at least 2 rows to fit PCA, got {X.shape[0]}")
    mean = np.mean(X, axis=0)
    centered = X - mean
    cov = centered.T @ centered / (X.shape[0] - 1)
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.maximum(eigenvalues[order], 0.0)
    components = eigenvectors[:, order].T
    if np.sum(eigenvalues) == 0.0:
        raise DegenerateInput("all feature columns are constant")
    # sign convention: largest-magnitude element of each component positive
    for i in range(components.shape[0]):
        j = np.argmax(np.abs(components[i]))
        if components[i, j] < 0:
            components[i] = -components[i]
    return PcaModel(mean=mean, components=components, eigenvalues=eigenvalues)


def transform(model: PcaModel, X: np.ndarray, k: int) -> np.ndarray:
    """Project rows of X onto the first k principal axes."""
    if not (1 <= k <= model.k_max):
        raise BadK(f"k must be in [1, {model.k_max}], got {k}")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.mean.shape[0]:
        raise ShapeMismatch(
            f"X must be (N, {model.mean.shape[0]}), got {X.shape}"
        )
    return (X - model.mean) @ model.components[:k].T


def inverse_transform(model: PcaModel, Y: np.ndarray) -> np.ndarray:
    """Map k-dimensional scores back to the original feature space."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or not (1 <= Y.shape[1] <= model.k_max):
        raise BadK(f"scores must be (N, k) with 1 <= k <= {model.k_max}, got {Y.shape}")
    return Y @ model.components[:Y.shape[1]] + model.mean


def explained_variance_ratio(model: PcaModel) -> np.ndarray:
    """eigenvalue_i / sum(eigenvalues), nonincreasing and summing to <= 1."""
    if model is None or model.eigenvalues.size == 0:
        raise NotFitted("PCA model has no eigenvalues")
    return model.eigenvalues / np.sum(model.eigenvalues)
