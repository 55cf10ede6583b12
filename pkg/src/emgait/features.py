"""Windowing of standardized EMG and the four per-window features.

Windows are 40 samples long (80 ms at 500 Hz) with a stride of 16 samples
(32 ms), so consecutive windows share 24 samples.  A window is emitted only
when all of its samples are valid; the window grid restarts at the first
sample of each maximal valid run, which makes the count per run
floor((run_len - 40)/16) + 1.

Features per channel, in fixed column order ZC, MAV, SD, MAD:

    ZC   thresholded sign-change count over the 39 adjacent pairs
    MAV  mean absolute value
    SD   population standard deviation
    MAD  mean absolute deviation about the window mean

with the ZC threshold theta set per channel to 3% of the mean rectified
standardized signal.  Five channels x four features = 20 columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset_io import CHANNEL_NAMES
from .errors import EmptyInput, NotFitted, ShapeMismatch, SignalTooShort
from .labeling import LabelStream

WINDOW_LEN = 40
WINDOW_STRIDE = 16
FEATURE_SHORT_NAMES = ("ZC", "MAV", "SD", "MAD")
FEATURE_NAMES = tuple(f"{ch}_{feat}"
                      for ch in CHANNEL_NAMES
                      for feat in FEATURE_SHORT_NAMES)


@dataclass(frozen=True)
class WindowTensor:
    """Stacked windows: data (N, 40, 5), one label and subject id per window."""

    data: np.ndarray
    labels: np.ndarray
    subject_ids: np.ndarray
    window_len_samples: int = WINDOW_LEN
    stride_samples: int = WINDOW_STRIDE

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int8)
        subject_ids = np.asarray(self.subject_ids, dtype=str)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "subject_ids", subject_ids)
        if data.ndim != 3 or data.shape[1] != self.window_len_samples \
                or data.shape[2] != len(CHANNEL_NAMES):
            raise ShapeMismatch(
                f"data must be (N, {self.window_len_samples}, "
                f"{len(CHANNEL_NAMES)}), got {data.shape}"
            )
        if labels.shape != (data.shape[0],) or subject_ids.shape != (data.shape[0],):
            raise ShapeMismatch("labels and subject_ids must have one entry per window")

    def __len__(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class FeatureMatrix:
    """Feature rows: X (N, 20) in FEATURE_NAMES column order."""

    X: np.ndarray
    labels: np.ndarray
    subject_ids: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int8)
        subject_ids = np.asarray(self.subject_ids, dtype=str)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "subject_ids", subject_ids)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ShapeMismatch(
                f"X must be (N, {len(self.feature_names)}), got {X.shape}"
            )
        if labels.shape != (X.shape[0],) or subject_ids.shape != (X.shape[0],):
            raise ShapeMismatch("labels and subject_ids must have one entry per row")

    def __len__(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class ZcThresholds:
    """Per-channel zero-crossing thresholds, all nonnegative."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        object.__setattr__(self, "theta", theta)
        if theta.shape != (len(CHANNEL_NAMES),):
            raise ShapeMismatch(f"theta must have shape (5,), got {theta.shape}")
        if np.any(theta < 0):
            raise ValueError("thresholds must be nonnegative")


def _valid_runs(mask: np.ndarray):
    """Yield (start, stop) of maximal True runs, stop exclusive."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return []
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    return list(zip(starts, stops))


def make_windows(samples: np.ndarray, stream: LabelStream, subject_id: str,
                 win: int = WINDOW_LEN, stride: int = WINDOW_STRIDE,
                 label_mode: str = "center") -> WindowTensor:
    """Slice an (L, 5) standardized signal into labeled windows.

    Emits windows only where all ``win`` samples are valid; the grid is
    anchored at the start of each maximal valid run.  ``label_mode``
    "center" takes the label at window start + win//2, "majority" takes
    the most common label in the window (ties to the lower label).
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != len(CHANNEL_NAMES):
        raise ShapeMismatch(f"samples must be (L, 5), got {samples.shape}")
    if len(stream) != samples.shape[0]:
        raise ShapeMismatch(
            f"label stream length {len(stream)} != signal length {samples.shape[0]}"
        )
    if samples.shape[0] < win:
        raise SignalTooShort(
            f"need at least {win} samples, got {samples.shape[0]}"
        )
    if label_mode not in ("center", "majority"):
        raise ValueError(f"label_mode must be 'center' or 'majority', got {label_mode!r}")

    starts = []
    for run_start, run_stop in _valid_runs(stream.valid_mask):
        if run_stop - run_start >= win:
            starts.append(np.arange(run_start, run_stop - win + 1, stride))
    if starts:
        starts = np.concatenate(starts)
    else:
        starts = np.zeros(0, dtype=np.int64)

    gather = starts[:, None] + np.arange(win)[None, :]
    data = samples[gather, :]
    if label_mode == "center":
        labels = stream.labels[starts + win // 2]
    else:
        window_labels = stream.labels[gather]
        labels = (np.sum(window_labels == 1, axis=1) * 2 > win).astype(np.int8)
    subject_ids = np.full(len(starts), subject_id, dtype=object)
    return WindowTensor(data=data, labels=labels, subject_ids=subject_ids,
                        window_len_samples=win, stride_samples=stride)


def concat_windows(parts: list[WindowTensor]) -> WindowTensor:
    if not parts:
        raise EmptyInput("no window tensors to concatenate")
    win = parts[0].window_len_samples
    stride = parts[0].stride_samples
    if any(p.window_len_samples != win or p.stride_samples != stride for p in parts):
        raise ShapeMismatch("window tensors disagree on window length or stride")
    return WindowTensor(
        data=np.concatenate([p.data for p in parts], axis=0),
        labels=np.concatenate([p.labels for p in parts]),
        subject_ids=np.concatenate([p.subject_ids for p in parts]),
        window_len_samples=win,
        stride_samples=stride,
    )


def concat_features(parts: list[FeatureMatrix]) -> FeatureMatrix:
    if not parts:
        raise EmptyInput("no feature matrices to concatenate")
    names = parts[0].feature_names
    if any(p.feature_names != names for p in parts):
        raise ShapeMismatch("feature matrices disagree on column names")
    return FeatureMatrix(
        X=np.concatenate([p.X for p in parts], axis=0),
        labels=np.concatenate([p.labels for p in parts]),
        subject_ids=np.concatenate([p.subject_ids for p in parts]),
        feature_names=names,
    )


def zc(w: np.ndarray, theta: float, literal: bool = False):
    """Thresholded zero crossings of one window.

    Default counts adjacent pairs with a strict sign change whose jump is
    at least theta.  ``literal=True`` instead evaluates
    0.5 * sum(sgn(x_i * x_{i+1}) * step(|x_i - x_{i+1}| - theta)), which
    sums +/-1 terms and may be negative; kept only for auditing.
    """
    w = np.asarray(w, dtype=np.float64)
    if theta < 0:
        raise ValueError(f"theta must be >= 0, got {theta}")
    prod = w[:-1] * w[1:]
    big_jump = np.abs(w[:-1] - w[1:]) >= theta
    if literal:
        return 0.5 * float(np.sum(np.sign(prod) * big_jump))
    return int(np.sum((prod < 0) & big_jump))


def mav(w: np.ndarray) -> float:
    """Mean absolute value of one window."""
    w = np.asarray(w, dtype=np.float64)
    return float(np.mean(np.abs(w)))


def std_dev(w: np.ndarray) -> float:
    """Population standard deviation (divide by n) of one window."""
    w = np.asarray(w, dtype=np.float64)
    return float(np.std(w))


def mad(w: np.ndarray) -> float:
    """Mean absolute deviation about the window mean."""
    w = np.asarray(w, dtype=np.float64)
    return float(np.mean(np.abs(w - np.mean(w))))


def compute_thresholds(samples: np.ndarray,
                       valid_mask: np.ndarray | None = None) -> ZcThresholds:
    """theta[c] = 3% of mean(|channel c|), over valid samples if a mask is
    given.  An empty selection yields all-zero thresholds."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != len(CHANNEL_NAMES):
        raise ShapeMismatch(f"samples must be (L, 5), got {samples.shape}")
    if valid_mask is not None:
        samples = samples[np.asarray(valid_mask, dtype=bool)]
    if samples.shape[0] == 0:
        return ZcThresholds(theta=np.zeros(len(CHANNEL_NAMES)))
    return ZcThresholds(theta=0.03 * np.mean(np.abs(samples), axis=0))


def extract_features(tensor: WindowTensor, thresholds: ZcThresholds,
                     zc_literal: bool = False) -> FeatureMatrix:
    """Compute the (N, 20) feature matrix for one window tensor.

    Row i holds window i's features; columns follow FEATURE_NAMES order
    (channel-major, ZC/MAV/SD/MAD within each channel).
    """
    if len(tensor) == 0:
        raise EmptyInput("window tensor is empty")
    n = len(tensor)
    X = np.empty((n, len(FEATURE_NAMES)), dtype=np.float64)
    for c in range(len(CHANNEL_NAMES)):
        w = tensor.data[:, :, c]
        prod = w[:, :-1] * w[:, 1:]
        big_jump = np.abs(w[:, :-1] - w[:, 1:]) >= thresholds.theta[c]
        if zc_literal:
            zc_col = 0.5 * np.sum(np.sign(prod) * big_jump, axis=1)
        else:
            zc_col = np.sum((prod < 0) & big_jump, axis=1)
        mean = np.mean(w, axis=1)
        X[:, 4 * c + 0] = zc_col
        X[:, 4 * c + 1] = np.mean(np.abs(w), axis=1)
        X[:, 4 * c + 2] = np.std(w, axis=1)
        X[:, 4 * c + 3] = np.mean(np.abs(w - mean[:, None]), axis=1)
    return FeatureMatrix(X=X, labels=tensor.labels, subject_ids=tensor.subject_ids)


class FeatureScaler:
    """Columnwise zero-mean unit-variance scaler; zero-variance columns map to 0."""

    def __init__(self):
        self.means = None
        self.stds = None

    @property
    def fitted(self) -> bool:
        return self.means is not None

    def fit(self, X: np.ndarray) -> "FeatureScaler":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise EmptyInput(f"cannot fit scaler on array of shape {X.shape}")
        self.means = np.mean(X, axis=0)
        self.stds = np.std(X, axis=0)
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        if not self.fitted:
            raise NotFitted("scaler used before fit")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.means.shape[0]:
            raise ShapeMismatch(
                f"expected {self.means.shape[0]} columns, got {X.shape}"
            )
        safe = np.where(self.stds == 0.0, 1.0, self.stds)
        out = (X - self.means) / safe
        out[:, self.stds == 0.0] = 0.0
        return out

    def fit_transform(self, X: np.ndarray) -> np.ndarray:
        return self.fit(X).transform(X)

    def to_dict(self) -> dict:
        if not self.fitted:
            raise NotFitted("cannot serialize an unfitted scaler")
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "FeatureScaler":
        scaler = cls()
        scaler.means = np.asarray(payload["means"], dtype=np.float64)
        scaler.stds = np.asarray(payload["stds"], dtype=np.float64)
        return scaler
