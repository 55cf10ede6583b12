"""Trial protocol: split rules, seed wiring, reproducibility, aggregation."""

import json

import numpy as np
import pytest

from emgait.classical import SearchSpace
from emgait.dataset_io import SyntheticConfig, generate_synthetic
from emgait.errors import InvalidConfig, TooFewSubjects
from emgait.experiment import (
    ALL_MODELS,
    ExperimentConfig,
    SubjectSplit,
    aggregate_trials,
    run_experiment,
    run_trial,
    subject_split,
)
from emgait.neural import DcnnConfig
from emgait.pipeline import prepare_dataset
from emgait.rng import derive_seed


class TestSubjectSplit:
    def test_ten_subjects_give_one_test(self):
        subjects = [f"s{i:03d}" for i in range(10)]
        split = subject_split(subjects, 0.1, seed=3)
        assert len(split.test_subjects) == 1
        assert len(split.train_subjects) == 9

    def test_fiftynine_subjects_give_six_test(self):
        subjects = [f"s{i:03d}" for i in range(59)]
        split = subject_split(subjects, 0.1, seed=3)
        assert len(split.test_subjects) == 6
        assert len(split.train_subjects) == 53

    def test_disjoint_and_covering(self):
        subjects = [f"s{i:03d}" for i in range(12)]
        for seed in range(20):
            split = subject_split(subjects, 0.25, seed=seed)
            train, test = set(split.train_subjects), set(split.test_subjects)
            assert not train & test
            assert train | test == set(subjects)

    def test_deterministic_in_seed(self):
        subjects = [f"s{i:03d}" for i in range(20)]
        a = subject_split(subjects, 0.1, seed=7)
        b = subject_split(subjects, 0.1, seed=7)
        assert a == b
        others = {subject_split(subjects, 0.1, seed=s).test_subjects
                  for s in range(30)}
        assert len(others) > 1

    def test_clamping_keeps_both_sides_nonempty(self):
        split = subject_split(["a", "b"], 0.01, seed=0)
        assert len(split.test_subjects) == 1
        split = subject_split(["a", "b", "c"], 0.99, seed=0)
        assert len(split.train_subjects) >= 1

    def test_validation(self):
        with pytest.raises(TooFewSubjects):
            subject_split(["only"], 0.1, seed=0)
        with pytest.raises(InvalidConfig):
            subject_split(["a", "b"], 0.0, seed=0)
        with pytest.raises(InvalidConfig):
            SubjectSplit(("a", "b"), ("b",), seed=0)
        with pytest.raises(InvalidConfig):
            SubjectSplit((), ("b",), seed=0)


def _prepared(n_subjects=5, seed=11):
    recs = generate_synthetic(SyntheticConfig(
        n_subjects=n_subjects, cycles_per_subject=8, both_legs=False), seed=seed)
    return prepare_dataset(recs)


def _tiny_dcnn(**kw):
    defaults = dict(conv1_filters=4, conv1_kernel=5, conv2_filters=4,
                    conv2_kernel=3, pool_size=2, dense1_units=12,
                    dense2_units=8, dropout_rate=0.1, learning_rate=1e-3,
                    batch_size=128, max_epochs=2, patience=2, seed=0)
    defaults.update(kw)
    return DcnnConfig(**defaults)


def _tiny_config(**kw):
    defaults = dict(
        n_trials=2, base_seed=5, models=("nb", "lda"), inputs=("features", "pca2"),
        search_space=SearchSpace(n_iter=2), dcnn=_tiny_dcnn(),
        measure_latency=False)
    defaults.update(kw)
    return ExperimentConfig(**defaults)


class TestRunTrial:
    def test_every_model_sees_the_same_split(self):
        prepared = _prepared()
        seed = derive_seed(5, 0)
        splits = []
        for models in (("nb",), ("lda",), ("dt", "rf")):
            cfg = _tiny_config(models=models, inputs=("features",))
            trial = run_trial(prepared, cfg, 0, seed)
            splits.append(trial.split)
        assert splits[0] == splits[1] == splits[2]

    def test_eval_grid_is_models_times_inputs(self):
        prepared = _prepared()
        cfg = _tiny_config()
        trial = run_trial(prepared, cfg, 0, derive_seed(5, 0))
        combos = [(e.model, e.input_kind) for e in trial.evals]
        assert combos == [("nb", "features"), ("nb", "pca2"),
                          ("lda", "features"), ("lda", "pca2")]
        for ev in trial.evals:
            assert 0.0 <= ev.test_accuracy <= 1.0
            assert 0.0 <= ev.train_accuracy <= 1.0
            assert ev.latency is None

    def test_dcnn_eval_reports_blob_hash(self):
        prepared = _prepared()
        cfg = _tiny_config(models=("dcnn",), inputs=("features",))
        trial = run_trial(prepared, cfg, 0, derive_seed(5, 0))
        (ev,) = trial.evals
        assert ev.model == "dcnn" and ev.input_kind == "raw"
        assert len(ev.extra["initial_weights_sha256"]) == 64
        assert ev.extra["n_epochs_run"] <= cfg.dcnn.max_epochs

    def test_latency_fields_when_enabled(self):
        prepared = _prepared(n_subjects=3)
        cfg = _tiny_config(models=("nb",), inputs=("features",),
                           measure_latency=True, latency_repeats=3)
        trial = run_trial(prepared, cfg, 0, derive_seed(5, 0))
        timing = trial.evals[0].latency
        assert timing["mean_ms"] > 0
        assert timing["per_window_us"] > 0


class TestRunExperiment:
    def test_trial_seeds_derive_from_base(self):
        prepared = _prepared()
        cfg = _tiny_config()
        report = run_experiment(prepared, cfg)
        assert len(report.trials) == cfg.n_trials
        for i, trial in enumerate(report.trials):
            assert trial.trial_index == i
            assert trial.seed == derive_seed(cfg.base_seed, i)
            assert trial.split.seed == trial.seed

    def test_distinct_trials_draw_distinct_splits(self):
        prepared = _prepared(n_subjects=8)
        cfg = _tiny_config(n_trials=6, models=("nb",), inputs=("features",))
        report = run_experiment(prepared, cfg)
        seen = {t.split.test_subjects for t in report.trials}
        assert len(seen) > 1

    def test_report_json_bit_identical_without_latency(self):
        prepared = _prepared()
        cfg = _tiny_config()
        a = run_experiment(prepared, cfg)
        b = run_experiment(prepared, cfg)
        ja = json.dumps(a.to_dict(), sort_keys=True)
        jb = json.dumps(b.to_dict(), sort_keys=True)
        assert ja == jb

    def test_blob_hash_constant_across_trials(self):
        prepared = _prepared()
        cfg = _tiny_config(n_trials=3, models=("dcnn",), inputs=("features",))
        report = run_experiment(prepared, cfg)
        hashes = {t.evals[0].extra["initial_weights_sha256"]
                  for t in report.trials}
        assert len(hashes) == 1

    def test_aggregates_recompute_from_trials(self):
        prepared = _prepared()
        cfg = _tiny_config()
        report = run_experiment(prepared, cfg)
        recomputed = aggregate_trials(report.trials)
        assert set(recomputed) == set(report.aggregates)
        for key, agg in report.aggregates.items():
            accs = [ev.test_accuracy for t in report.trials for ev in t.evals
                    if f"{ev.model}:{ev.input_kind}" == key]
            assert agg["n"] == len(accs) == cfg.n_trials
            assert abs(agg["mean_accuracy"] - np.mean(accs)) < 1e-12
            assert abs(agg["std_accuracy"] - np.std(accs)) < 1e-12
            assert agg["min_accuracy"] == min(accs)
            assert agg["max_accuracy"] == max(accs)
            assert recomputed[key] == agg

    def test_schema_and_environment(self):
        prepared = _prepared(n_subjects=3)
        cfg = _tiny_config(n_trials=1, models=("nb",), inputs=("features",))
        report = run_experiment(prepared, cfg)
        assert report.schema_version == 1
        assert report.config == cfg.to_dict()
        assert set(report.environment) == {"python", "numpy", "platform",
                                           "machine"}
        d = report.to_dict()
        assert json.loads(json.dumps(d)) == d


class TestExperimentConfig:
    def test_defaults_cover_full_grid(self):
        cfg = ExperimentConfig()
        assert cfg.n_trials == 50
        assert cfg.test_fraction == 0.1
        assert cfg.models == ALL_MODELS
        assert cfg.inputs == ("features", "pca1", "pca2", "pca3", "pca5")

    def test_validation(self):
        with pytest.raises(InvalidConfig):
            ExperimentConfig(n_trials=0)
        with pytest.raises(InvalidConfig):
            ExperimentConfig(models=("svm",))
        with pytest.raises(InvalidConfig):
            ExperimentConfig(inputs=("pca4",))
        with pytest.raises(InvalidConfig):
            ExperimentConfig(dcnn_select_by="train")
        with pytest.raises(InvalidConfig):
            ExperimentConfig(dcnn_val_fraction=1.0)
