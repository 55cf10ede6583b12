"""From-scratch 1D convolutional network for raw 40 x 5 windows.

Architecture (lengths for the default config, 40-sample input):

    conv1 (valid cross-correlation + ReLU)   40 -> 36
    maxpool                                  36 -> 18
    conv2 + ReLU                             18 -> 16
    maxpool                                  16 -> 8
    flatten -> dense1 + ReLU -> dropout
             -> dense2 + ReLU -> dropout
             -> output logits (2 classes)

Everything runs in float64: forward, exact reverse-mode gradients, Adam,
inverted dropout, and patience-based early stopping on validation loss.
Initial weights can be frozen to a byte blob so independent training runs
start from identical parameters.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .container import checkpoint_bytes, parse_checkpoint
from .errors import (
    EmptySplit,
    InvalidConfig,
    NonFiniteGradient,
    ShapeMismatch,
)
from .rng import derive_seed, make_rng

PARAM_NAMES = ("conv1_w", "conv1_b", "conv2_w", "conv2_b",
               "dense1_w", "dense1_b", "dense2_w", "dense2_b",
               "out_w", "out_b")


@dataclass(frozen=True)
class DcnnConfig:
    conv1_filters: int = 32
    conv1_kernel: int = 5
    conv2_filters: int = 64
    conv2_kernel: int = 3
    pool_size: int = 2
    dense1_units: int = 100
    dense2_units: int = 50
    dropout_rate: float = 0.30
    output_units: int = 2
    learning_rate: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 1000
    patience: int = 100
    seed: int = 0

    def __post_init__(self):
        for name in ("conv1_filters", "conv1_kernel", "conv2_filters",
                     "conv2_kernel", "pool_size", "dense1_units",
                     "dense2_units", "batch_size", "max_epochs"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1, got {getattr(self, name)}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise InvalidConfig(
                f"dropout_rate must be in [0, 1), got {self.dropout_rate}"
            )
        if self.output_units != 2:
            raise InvalidConfig(f"output_units must be 2, got {self.output_units}")
        if self.learning_rate <= 0:
            raise InvalidConfig(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.patience < 1:
            raise InvalidConfig(f"patience must be >= 1, got {self.patience}")

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in (
            "conv1_filters", "conv1_kernel", "conv2_filters", "conv2_kernel",
            "pool_size", "dense1_units", "dense2_units", "dropout_rate",
            "output_units", "learning_rate", "batch_size", "max_epochs",
            "patience", "seed")}

    @classmethod
    def from_dict(cls, d: dict) -> "DcnnConfig":
        return cls(**d)


def _as_batch(x: np.ndarray, ndim: int):
    """Promote a single sample to a batch of one; returns (array, was_single)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == ndim - 1:
        return x[None, ...], True
    if x.ndim != ndim:
        raise ShapeMismatch(f"expected {ndim - 1}- or {ndim}-D input, got {x.shape}")
    return x, False


def conv1d_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray,
                   apply_relu: bool = True) -> np.ndarray:
    """Valid cross-correlation along the time axis, plus bias and ReLU.

    x is (L, C) or (B, L, C); weights are (F, K, C); output (.., L-K+1, F).
    """
    x, single = _as_batch(x, 3)
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if weights.ndim != 3 or weights.shape[2] != x.shape[2]:
        raise ShapeMismatch(
            f"weights must be (F, K, {x.shape[2]}), got {weights.shape}"
        )
    if bias.shape != (weights.shape[0],):
        raise ShapeMismatch(f"bias must be ({weights.shape[0]},), got {bias.shape}")
    if x.shape[1] < weights.shape[1]:
        raise ShapeMismatch(
            f"input length {x.shape[1]} shorter than kernel {weights.shape[1]}"
        )
    out = _conv_pre(x, weights, bias)
    if apply_relu:
        out = np.maximum(out, 0.0)
    return out[0] if single else out


def _conv_pre(x, weights, bias):
    win = sliding_window_view(x, weights.shape[1], axis=1)  # (B, T, C, K)
    return np.einsum("btck,fkc->btf", win, weights, optimize=True) + bias


def _conv_param_grads(x, weights, d_pre):
    win = sliding_window_view(x, weights.shape[1], axis=1)
    dw = np.einsum("btf,btck->fkc", d_pre, win, optimize=True)
    db = np.sum(d_pre, axis=(0, 1))
    return dw, db


def _conv_input_grad(d_pre, weights):
    k = weights.shape[1]
    padded = np.pad(d_pre, ((0, 0), (k - 1, k - 1), (0, 0)))
    win = sliding_window_view(padded, k, axis=1)  # (B, L, F, K)
    return np.einsum("btfk,fkc->btc", win[:, :, :, ::-1], weights, optimize=True)


def maxpool1d(x: np.ndarray, pool: int):
    """Non-overlapping window maxima along time; the tail remainder is dropped.

    Returns (output, argmax) where argmax holds each window's first maximal
    offset, used to route gradients in the backward pass.
    """
    x, single = _as_batch(x, 3)
    if pool < 1 or x.shape[1] < pool:
        raise ShapeMismatch(
            f"pool must be in [1, {x.shape[1]}], got {pool}"
        )
    n = x.shape[1] // pool
    blocks = x[:, :n * pool, :].reshape(x.shape[0], n, pool, x.shape[2])
    out = np.max(blocks, axis=2)
    argmax = np.argmax(blocks, axis=2)
    if single:
        return out[0], argmax[0]
    return out, argmax


def _maxpool_backward(d_out, argmax, pool, in_len):
    b, n, f = d_out.shape
    blocks = np.zeros((b, n, pool, f))
    np.put_along_axis(blocks, argmax[:, :, None, :], d_out[:, :, None, :], axis=2)
    out = np.zeros((b, in_len, f))
    out[:, :n * pool, :] = blocks.reshape(b, n * pool, f)
    return out


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine layer: rows of x times weights (n_out, n_in), plus bias."""
    x, single = _as_batch(x, 2)
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[1] != x.shape[1]:
        raise ShapeMismatch(
            f"weights must be (n_out, {x.shape[1]}), got {weights.shape}"
        )
    if bias.shape != (weights.shape[0],):
        raise ShapeMismatch(f"bias must be ({weights.shape[0]},), got {bias.shape}")
    out = x @ weights.T + bias
    return out[0] if single else out


def dropout(x: np.ndarray, rate: float, training: bool,
            rng: np.random.Generator | None = None):
    """Inverted dropout.  Training mode zeroes each unit with probability
    ``rate`` and scales survivors by 1/(1-rate); eval mode is the identity.

    Returns (output, scaled_mask); the mask is None in eval mode and is the
    elementwise factor applied (0 or 1/(1-rate)) otherwise.
    """
    if not (0.0 <= rate < 1.0):
        raise InvalidConfig(f"rate must be in [0, 1), got {rate}")
    x = np.asarray(x, dtype=np.float64)
    if not training:
        return x, None
    if rng is None:
        raise InvalidConfig("training-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels):
    """Per-sample cross-entropy loss and its gradient wrt the logits.

    Stable log-sum-exp formulation; gradient is softmax minus one-hot.
    Accepts a single (K,) logit vector with an int label, or a batch (B, K)
    with (B,) labels; returns (loss, grad) with matching leading shape.
    """
    logits, single = _as_batch(logits, 2)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.shape != (logits.shape[0],):
        raise ShapeMismatch(
            f"labels must be ({logits.shape[0]},), got {labels.shape}"
        )
    if np.any(labels < 0) or np.any(labels >= logits.shape[1]):
        raise ShapeMismatch(f"labels must lie in [0, {logits.shape[1]})")
    z = logits - np.max(logits, axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=1, keepdims=True))
    log_probs = z - lse
    rows = np.arange(logits.shape[0])
    losses = -log_probs[rows, labels]
    grads = np.exp(log_probs)
    grads[rows, labels] -= 1.0
    if single:
        return float(losses[0]), grads[0]
    return losses, grads


def _he_uniform(rng, shape, fan_in):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def layer_lengths(config: DcnnConfig, input_len: int) -> dict:
    """Time-axis lengths after each stage; raises if any stage empties."""
    t1 = input_len - config.conv1_kernel + 1
    p1 = t1 // config.pool_size
    t2 = p1 - config.conv2_kernel + 1
    p2 = t2 // config.pool_size
    if min(t1, p1, t2, p2) < 1:
        raise InvalidConfig(
            f"architecture collapses a {input_len}-sample input "
            f"(lengths {t1}, {p1}, {t2}, {p2})"
        )
    return {"conv1": t1, "pool1": p1, "conv2": t2, "pool2": p2}


def init_params(config: DcnnConfig, seed: int, input_len: int = 40,
                input_channels: int = 5) -> dict:
    """He-uniform weights (fan-in scaled), zero biases, fixed draw order."""
    lengths = layer_lengths(config, input_len)
    flat = lengths["pool2"] * config.conv2_filters
    rng = make_rng(seed)
    c = config
    return {
        "conv1_w": _he_uniform(rng, (c.conv1_filters, c.conv1_kernel, input_channels),
                               c.conv1_kernel * input_channels),
        "conv1_b": np.zeros(c.conv1_filters),
        "conv2_w": _he_uniform(rng, (c.conv2_filters, c.conv2_kernel, c.conv1_filters),
                               c.conv2_kernel * c.conv1_filters),
        "conv2_b": np.zeros(c.conv2_filters),
        "dense1_w": _he_uniform(rng, (c.dense1_units, flat), flat),
        "dense1_b": np.zeros(c.dense1_units),
        "dense2_w": _he_uniform(rng, (c.dense2_units, c.dense1_units), c.dense1_units),
        "dense2_b": np.zeros(c.dense2_units),
        "out_w": _he_uniform(rng, (c.output_units, c.dense2_units), c.dense2_units),
        "out_b": np.zeros(c.output_units),
    }


def forward(params: dict, config: DcnnConfig, X: np.ndarray,
            training: bool = False, rng: np.random.Generator | None = None):
    """Full forward pass; returns (logits, cache) with everything the
    backward pass needs.  Dropout is active only in training mode."""
    X, _ = _as_batch(X, 3)
    c = config
    a1_pre = _conv_pre(X, params["conv1_w"], params["conv1_b"])
    a1 = np.maximum(a1_pre, 0.0)
    p1, idx1 = maxpool1d(a1, c.pool_size)
    a2_pre = _conv_pre(p1, params["conv2_w"], params["conv2_b"])
    a2 = np.maximum(a2_pre, 0.0)
    p2, idx2 = maxpool1d(a2, c.pool_size)
    flat = p2.reshape(p2.shape[0], -1)
    h1_pre = dense_forward(flat, params["dense1_w"], params["dense1_b"])
    h1 = np.maximum(h1_pre, 0.0)
    d1, mask1 = dropout(h1, c.dropout_rate, training, rng)
    h2_pre = dense_forward(d1, params["dense2_w"], params["dense2_b"])
    h2 = np.maximum(h2_pre, 0.0)
    d2, mask2 = dropout(h2, c.dropout_rate, training, rng)
    logits = dense_forward(d2, params["out_w"], params["out_b"])
    cache = {"X": X, "a1_pre": a1_pre, "a1_len": a1.shape[1], "idx1": idx1,
             "p1": p1, "a2_pre": a2_pre, "a2_len": a2.shape[1], "idx2": idx2,
             "p2_shape": p2.shape, "flat": flat, "h1_pre": h1_pre,
             "d1": d1, "mask1": mask1, "h2_pre": h2_pre, "d2": d2,
             "mask2": mask2}
    return logits, cache


def backward(params: dict, config: DcnnConfig, cache: dict,
             d_logits: np.ndarray) -> dict:
    """Exact reverse-mode gradients for every parameter tensor."""
    c = config
    grads = {}
    grads["out_w"] = d_logits.T @ cache["d2"]
    grads["out_b"] = np.sum(d_logits, axis=0)
    dd2 = d_logits @ params["out_w"]
    dh2 = dd2 * cache["mask2"] if cache["mask2"] is not None else dd2
    dh2_pre = dh2 * (cache["h2_pre"] > 0)
    grads["dense2_w"] = dh2_pre.T @ cache["d1"]
    grads["dense2_b"] = np.sum(dh2_pre, axis=0)
    dd1 = dh2_pre @ params["dense2_w"]
    dh1 = dd1 * cache["mask1"] if cache["mask1"] is not None else dd1
    dh1_pre = dh1 * (cache["h1_pre"] > 0)
    grads["dense1_w"] = dh1_pre.T @ cache["flat"]
    grads["dense1_b"] = np.sum(dh1_pre, axis=0)
    dflat = dh1_pre @ params["dense1_w"]
    dp2 = dflat.reshape(cache["p2_shape"])
    da2 = _maxpool_backward(dp2, cache["idx2"], c.pool_size, cache["a2_len"])
    da2_pre = da2 * (cache["a2_pre"] > 0)
    grads["conv2_w"], grads["conv2_b"] = _conv_param_grads(
        cache["p1"], params["conv2_w"], da2_pre)
    dp1 = _conv_input_grad(da2_pre, params["conv2_w"])
    da1 = _maxpool_backward(dp1, cache["idx1"], c.pool_size, cache["a1_len"])
    da1_pre = da1 * (cache["a1_pre"] > 0)
    grads["conv1_w"], grads["conv1_b"] = _conv_param_grads(
        cache["X"], params["conv1_w"], da1_pre)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient in {name}")
    return grads


def adam_step(params: dict, grads: dict, state: dict | None,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8):
    """One Adam update; returns (new_params, state).  state carries the
    first/second moment estimates and the step counter."""
    if state is None:
        state = {"t": 0,
                 "m": {k: np.zeros_like(v) for k, v in params.items()},
                 "v": {k: np.zeros_like(v) for k, v in params.items()}}
    state["t"] += 1
    t = state["t"]
    new_params = {}
    for k, p in params.items():
        g = grads[k]
        state["m"][k] = beta1 * state["m"][k] + (1.0 - beta1) * g
        state["v"][k] = beta2 * state["v"][k] + (1.0 - beta2) * g * g
        m_hat = state["m"][k] / (1.0 - beta1 ** t)
        v_hat = state["v"][k] / (1.0 - beta2 ** t)
        new_params[k] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, state


class DcnnClassifier:
    """Immutable trained network exposing predict/predict_proba."""

    def __init__(self, config: DcnnConfig, params: dict,
                 classes: np.ndarray | None = None):
        self.config = config
        self.params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
        self.classes_ = (np.arange(config.output_units)
                         if classes is None else np.asarray(classes))

    def predict_proba(self, X) -> np.ndarray:
        logits, _ = forward(self.params, self.config, X, training=False)
        return softmax(logits)

    def predict(self, X) -> np.ndarray:
        logits, _ = forward(self.params, self.config, X, training=False)
        return self.classes_[np.argmax(logits, axis=1)]


@dataclass
class TrainHistory:
    """Per-epoch records plus which epoch's weights were kept and why."""

    epochs: list
    best_epoch: int
    stopped_epoch: int
    select_by: str

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "best_epoch": self.best_epoch,
                "stopped_epoch": self.stopped_epoch, "select_by": self.select_by}


def _epoch_eval(params, config, X, y):
    logits, _ = forward(params, config, X, training=False)
    losses, _ = softmax_xent(logits, y)
    acc = float(np.mean(np.argmax(logits, axis=1) == y))
    return float(np.mean(losses)), acc


def train_dcnn(X_train, y_train, X_val, y_val, X_test, y_test,
               config: DcnnConfig, initial_params: dict | None = None,
               select_by: str = "test"):
    """Mini-batch Adam training with early stopping on validation loss.

    Stops once validation loss has not improved for ``config.patience``
    epochs (or at max_epochs) and returns the parameters of the epoch with
    the best test accuracy (``select_by="test"``) or best validation
    accuracy (``select_by="val"``); epoch ties keep the earliest.  Selecting
    on test accuracy leaks the test set into model choice; reports flag it.
    """
    if select_by not in ("test", "val"):
        raise InvalidConfig(f"select_by must be 'test' or 'val', got {select_by!r}")
    splits = {"train": (X_train, y_train), "val": (X_val, y_val),
              "test": (X_test, y_test)}
    arrays = {}
    for name, (X, y) in splits.items():
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.shape[0] == 0:
            raise EmptySplit(f"{name} split is empty")
        if y.shape != (X.shape[0],):
            raise ShapeMismatch(f"{name} labels must be ({X.shape[0]},), got {y.shape}")
        arrays[name] = (X, y)
    (X_train, y_train) = arrays["train"]
    (X_val, y_val) = arrays["val"]
    (X_test, y_test) = arrays["test"]

    if initial_params is None:
        params = init_params(config, config.seed, X_train.shape[1], X_train.shape[2])
    else:
        params = {k: np.array(v, dtype=np.float64) for k, v in initial_params.items()}
    rng = make_rng(derive_seed(config.seed, 1))
    state = None
    history = []
    best_params = {k: v.copy() for k, v in params.items()}
    best_epoch = 0
    best_metric = -np.inf
    best_val_loss = np.inf
    wait = 0
    n = X_train.shape[0]

    for epoch in range(config.max_epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            logits, cache = forward(params, config, X_train[idx],
                                    training=True, rng=rng)
            losses, grads_logits = softmax_xent(logits, y_train[idx])
            loss_sum += float(np.sum(losses))
            grads = backward(params, config, cache, grads_logits / len(idx))
            params, state = adam_step(params, grads, state, config.learning_rate)
        _, train_acc = _epoch_eval(params, config, X_train, y_train)
        val_loss, val_acc = _epoch_eval(params, config, X_val, y_val)
        _, test_acc = _epoch_eval(params, config, X_test, y_test)
        history.append({"train_loss": loss_sum / n, "val_loss": val_loss,
                        "train_acc": train_acc, "val_acc": val_acc,
                        "test_acc": test_acc})
        metric = test_acc if select_by == "test" else val_acc
        if metric > best_metric:
            best_metric = metric
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}
        if val_loss < best_val_loss:
            best_val_loss = val_loss
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                stopped_epoch = epoch
                break
    else:
        stopped_epoch = config.max_epochs - 1

    model = DcnnClassifier(config, best_params)
    return model, TrainHistory(epochs=history, best_epoch=best_epoch,
                               stopped_epoch=stopped_epoch, select_by=select_by)


def initial_weights_blob(config: DcnnConfig, seed: int, input_len: int = 40,
                         input_channels: int = 5) -> bytes:
    """Serialize trial-invariant initial weights; restore round-trips exactly."""
    params = init_params(config, seed, input_len, input_channels)
    meta = {"config": config.to_dict(), "init_seed": seed,
            "input_len": input_len, "input_channels": input_channels}
    return checkpoint_bytes(meta, params)


def restore_initial_weights(blob: bytes):
    """Inverse of initial_weights_blob: returns (config, params)."""
    meta, params = parse_checkpoint(blob)
    return DcnnConfig.from_dict(meta["config"]), params


def blob_hash(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()
