"""Trial protocol: subject-wise splits, shared weights, repeated evaluation.

Each trial draws one subject-level 90/10 split and evaluates every
requested model on identical train/test windows.  Classical models are
tuned per trial by random search on the training subjects and refitted on
the full training set; the network restores the same initial weight blob
every trial and trains with a trial-specific shuffle seed.  Seeds for every
random decision derive from the trial seed through fixed offsets, so a
report is a pure function of (data, base_seed, config).
"""

from __future__ import annotations

import platform
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from . import classical, neural, pca as pca_mod
from .classical import MODEL_KINDS, SearchSpace, accuracy
from .errors import InvalidConfig, TooFewSubjects
from .features import FeatureScaler
from .neural import DcnnConfig
from .pipeline import PreparedData
from .rng import derive_seed, make_rng

INPUT_KINDS = ("features", "pca1", "pca2", "pca3", "pca5")
CLASSICAL_KINDS = MODEL_KINDS  # ("nb", "dt", "rf", "lda")
ALL_MODELS = CLASSICAL_KINDS + ("dcnn",)

# seed-derivation offsets within a trial; classical combos start above these
_DCNN_VAL_OFFSET = 0
_DCNN_TRAIN_OFFSET = 1
_COMBO_BASE = 2


@dataclass(frozen=True)
class SubjectSplit:
    train_subjects: tuple[str, ...]
    test_subjects: tuple[str, ...]
    seed: int

    def __post_init__(self):
        if set(self.train_subjects) & set(self.test_subjects):
            raise InvalidConfig("train and test subjects overlap")
        if not self.train_subjects or not self.test_subjects:
            raise InvalidConfig("both sides of the split must be nonempty")

    def to_dict(self) -> dict:
        return {"train_subjects": list(self.train_subjects),
                "test_subjects": list(self.test_subjects),
                "seed": self.seed}


def subject_split(subjects, test_fraction: float = 0.1,
                  seed: int = 0) -> SubjectSplit:
    """Random subject partition; n_test = round(n * fraction), clamped to
    [1, n-1].  Both legs of a subject always land on the same side because
    splitting happens at subject granularity."""
    subjects = sorted({str(s) for s in subjects})
    if len(subjects) < 2:
        raise TooFewSubjects(f"need at least 2 subjects, got {len(subjects)}")
    if not (0.0 < test_fraction < 1.0):
        raise InvalidConfig(f"test_fraction must be in (0, 1), got {test_fraction}")
    n_test = int(np.floor(len(subjects) * test_fraction + 0.5))
    n_test = min(max(n_test, 1), len(subjects) - 1)
    rng = make_rng(seed)
    test = set(rng.choice(subjects, size=n_test, replace=False).tolist())
    return SubjectSplit(
        train_subjects=tuple(s for s in subjects if s not in test),
        test_subjects=tuple(sorted(test)),
        seed=seed,
    )


@dataclass(frozen=True)
class ExperimentConfig:
    n_trials: int = 50
    base_seed: int = 0
    test_fraction: float = 0.1
    models: tuple[str, ...] = ALL_MODELS
    inputs: tuple[str, ...] = INPUT_KINDS
    search_space: SearchSpace = field(default_factory=SearchSpace)
    dcnn: DcnnConfig = field(default_factory=DcnnConfig)
    dcnn_select_by: str = "test"
    dcnn_val_fraction: float = 0.1
    measure_latency: bool = True
    latency_repeats: int = 5

    def __post_init__(self):
        if self.n_trials < 1:
            raise InvalidConfig(f"n_trials must be >= 1, got {self.n_trials}")
        for m in self.models:
            if m not in ALL_MODELS:
                raise InvalidConfig(f"unknown model {m!r}; choose from {ALL_MODELS}")
        for kind in self.inputs:
            if kind not in INPUT_KINDS:
                raise InvalidConfig(
                    f"unknown input kind {kind!r}; choose from {INPUT_KINDS}"
                )
        if not (0.0 < self.dcnn_val_fraction < 1.0):
            raise InvalidConfig(
                f"dcnn_val_fraction must be in (0, 1), got {self.dcnn_val_fraction}"
            )
        if self.dcnn_select_by not in ("test", "val"):
            raise InvalidConfig(
                f"dcnn_select_by must be 'test' or 'val', got {self.dcnn_select_by!r}"
            )

    def to_dict(self) -> dict:
        return {
            "n_trials": self.n_trials,
            "base_seed": self.base_seed,
            "test_fraction": self.test_fraction,
            "models": list(self.models),
            "inputs": list(self.inputs),
            "search_space": self.search_space.to_dict(),
            "dcnn": self.dcnn.to_dict(),
            "dcnn_select_by": self.dcnn_select_by,
            "dcnn_val_fraction": self.dcnn_val_fraction,
            "measure_latency": self.measure_latency,
            "latency_repeats": self.latency_repeats,
        }


@dataclass(frozen=True)
class ModelEval:
    model: str
    input_kind: str
    test_accuracy: float
    train_accuracy: float
    hyperparams: dict
    latency: dict | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"model": self.model, "input_kind": self.input_kind,
                "test_accuracy": self.test_accuracy,
                "train_accuracy": self.train_accuracy,
                "hyperparams": self.hyperparams,
                "latency": self.latency, "extra": self.extra}


@dataclass(frozen=True)
class TrialResult:
    trial_index: int
    seed: int
    split: SubjectSplit
    evals: tuple[ModelEval, ...]

    def to_dict(self) -> dict:
        return {"trial_index": self.trial_index, "seed": self.seed,
                "split": self.split.to_dict(),
                "evals": [e.to_dict() for e in self.evals]}


def _project(input_kind: str, scaled: np.ndarray, model) -> np.ndarray:
    if input_kind == "features":
        return scaled
    k = int(input_kind[3:])
    return pca_mod.transform(model, scaled, k)


def _latency(model, X, cfg: ExperimentConfig) -> dict | None:
    if not cfg.measure_latency:
        return None
    timing = classical.measure_predict_latency(model, X, cfg.latency_repeats)
    timing["per_window_us"] = timing["mean_ms"] * 1e3 / X.shape[0]
    return timing


def run_trial(prepared: PreparedData, cfg: ExperimentConfig, trial_index: int,
              trial_seed: int, initial_blob: bytes | None = None) -> TrialResult:
    """One split, every requested model, identical train/test windows."""
    split = subject_split(prepared.subjects, cfg.test_fraction, trial_seed)
    subj = prepared.features.subject_ids
    test_mask = np.isin(subj, split.test_subjects)
    train_mask = ~test_mask
    y = prepared.features.labels.astype(np.int64)
    y_train, y_test = y[train_mask], y[test_mask]

    evals = []
    classical_models = [m for m in cfg.models if m != "dcnn"]
    if classical_models:
        scaler = FeatureScaler().fit(prepared.features.X[train_mask])
        Xtr_scaled = scaler.transform(prepared.features.X[train_mask])
        Xte_scaled = scaler.transform(prepared.features.X[test_mask])
        pca_model = pca_mod.fit_pca(Xtr_scaled)
        subj_train = subj[train_mask]
        for model_kind in classical_models:
            mi = CLASSICAL_KINDS.index(model_kind)
            for input_kind in cfg.inputs:
                ii = INPUT_KINDS.index(input_kind)
                Xtr = _project(input_kind, Xtr_scaled, pca_model)
                Xte = _project(input_kind, Xte_scaled, pca_model)
                combo_seed = derive_seed(
                    trial_seed, _COMBO_BASE + mi * len(INPUT_KINDS) + ii)
                best, _history = classical.random_search(
                    model_kind, cfg.search_space, Xtr, y_train,
                    subj_train, combo_seed)
                model = classical.train_model(
                    model_kind, best, Xtr, y_train,
                    seed=derive_seed(combo_seed, cfg.search_space.n_iter + 2))
                evals.append(ModelEval(
                    model=model_kind, input_kind=input_kind,
                    test_accuracy=accuracy(y_test, model.predict(Xte)),
                    train_accuracy=accuracy(y_train, model.predict(Xtr)),
                    hyperparams=dict(best),
                    latency=_latency(model, Xte, cfg),
                ))

    if "dcnn" in cfg.models:
        evals.append(_run_dcnn(prepared, cfg, trial_seed, split,
                               train_mask, test_mask, initial_blob))
    return TrialResult(trial_index=trial_index, seed=trial_seed,
                       split=split, evals=tuple(evals))


def _run_dcnn(prepared, cfg, trial_seed, split, train_mask, test_mask,
              initial_blob):
    if initial_blob is None:
        initial_blob = neural.initial_weights_blob(
            cfg.dcnn, cfg.dcnn.seed,
            prepared.windows.window_len_samples,
            prepared.windows.data.shape[2])
    blob_config, params0 = neural.restore_initial_weights(initial_blob)

    # hold out a fraction of the TRAINING subjects for early stopping
    rng = make_rng(derive_seed(trial_seed, _DCNN_VAL_OFFSET))
    train_subjects = list(split.train_subjects)
    n_val = int(np.floor(len(train_subjects) * cfg.dcnn_val_fraction + 0.5))
    n_val = min(max(n_val, 1), len(train_subjects) - 1)
    val_subjects = set(rng.choice(train_subjects, size=n_val,
                                  replace=False).tolist())
    subj = prepared.windows.subject_ids
    val_mask = np.isin(subj, sorted(val_subjects))
    fit_mask = train_mask & ~val_mask
    val_mask = train_mask & val_mask

    X = prepared.windows.data
    y = prepared.windows.labels.astype(np.int64)
    config = replace(blob_config, seed=derive_seed(trial_seed, _DCNN_TRAIN_OFFSET))
    model, history = neural.train_dcnn(
        X[fit_mask], y[fit_mask], X[val_mask], y[val_mask],
        X[test_mask], y[test_mask], config,
        initial_params=params0, select_by=cfg.dcnn_select_by)
    return ModelEval(
        model="dcnn", input_kind="raw",
        test_accuracy=accuracy(y[test_mask], model.predict(X[test_mask])),
        train_accuracy=accuracy(y[fit_mask], model.predict(X[fit_mask])),
        hyperparams=config.to_dict(),
        latency=_latency(model, X[test_mask], cfg),
        extra={"initial_weights_sha256": neural.blob_hash(initial_blob),
               "best_epoch": history.best_epoch,
               "stopped_epoch": history.stopped_epoch,
               "select_by": history.select_by,
               "n_epochs_run": len(history.epochs)},
    )


@dataclass(frozen=True)
class ExperimentReport:
    schema_version: int
    config: dict
    aggregates: dict
    trials: tuple[TrialResult, ...]
    environment: dict

    def to_dict(self) -> dict:
        return {"schema_version": self.schema_version,
                "config": self.config,
                "aggregates": self.aggregates,
                "trials": [t.to_dict() for t in self.trials],
                "environment": self.environment}


def environment_metadata() -> dict:
    """Stable on one machine; deliberately no timestamps so that identical
    runs produce byte-identical reports."""
    return {"python": sys.version.split()[0],
            "numpy": np.__version__,
            "platform": platform.platform(),
            "machine": platform.machine()}


def aggregate_trials(trials) -> dict:
    """Per (model, input_kind): accuracy stats, latency, test/train ratio."""
    by_combo = {}
    for trial in trials:
        for ev in trial.evals:
            by_combo.setdefault((ev.model, ev.input_kind), []).append(ev)
    aggregates = {}
    for (model, input_kind), evs in sorted(by_combo.items()):
        accs = np.array([e.test_accuracy for e in evs])
        trains = np.array([e.train_accuracy for e in evs])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(trains > 0, accs / trains, np.nan)
        latencies = [e.latency["mean_ms"] for e in evs if e.latency is not None]
        aggregates[f"{model}:{input_kind}"] = {
            "model": model,
            "input_kind": input_kind,
            "n": len(evs),
            "mean_accuracy": float(np.mean(accs)),
            "std_accuracy": float(np.std(accs)),
            "min_accuracy": float(np.min(accs)),
            "max_accuracy": float(np.max(accs)),
            "mean_train_accuracy": float(np.mean(trains)),
            "mean_test_train_ratio": float(np.nanmean(ratios)),
            "mean_latency_ms": (float(np.mean(latencies)) if latencies else None),
        }
    return aggregates


def run_experiment(prepared: PreparedData,
                   cfg: ExperimentConfig = ExperimentConfig()) -> ExperimentReport:
    """The full protocol: n_trials independent splits, aggregated."""
    initial_blob = None
    if "dcnn" in cfg.models:
        initial_blob = neural.initial_weights_blob(
            cfg.dcnn, cfg.dcnn.seed,
            prepared.windows.window_len_samples,
            prepared.windows.data.shape[2])
    trials = []
    for i in range(cfg.n_trials):
        trial_seed = derive_seed(cfg.base_seed, i)
        trials.append(run_trial(prepared, cfg, i, trial_seed, initial_blob))
    return ExperimentReport(
        schema_version=1,
        config=cfg.to_dict(),
        aggregates=aggregate_trials(trials),
        trials=tuple(trials),
        environment=environment_metadata(),
    )
