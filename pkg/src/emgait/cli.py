"""Command line interface.

Subcommands walk the pipeline stages:

    synth       write a synthetic dataset directory
    preprocess  recordings -> windows.bin (labeled window tensor)
    features    windows.bin -> feats.bin (20-column feature matrix)
    pca         feats.bin -> pca.json (+ printed variance ratios)
    train       fit one model on one subject-wise split
    evaluate    score a saved model on a data file
    report      run the multi-trial experiment and emit report files

Exit status is 0 on success and 2 on any validation failure (bad flags,
malformed files, impossible configurations).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import classical, container, dataset_io, neural, pca as pca_mod, report as report_mod
from .classical import SearchSpace
from .errors import EmgaitError, InvalidConfig
from .experiment import (
    ALL_MODELS,
    INPUT_KINDS,
    ExperimentConfig,
    run_experiment,
    subject_split,
)
from .features import FeatureScaler
from .neural import DcnnConfig
from .pipeline import PipelineConfig, PreparedData, features_from_windows, prepare_dataset


def _parse_band(text: str) -> tuple[float, float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise InvalidConfig(f"band must look like LOW:HIGH, got {text!r}")
    try:
        low, high = float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise InvalidConfig(f"band must be numeric, got {text!r}") from exc
    return low, high


def _parse_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def _synth_config(args) -> dataset_io.SyntheticConfig:
    if args.synth_config:
        return dataset_io.SyntheticConfig.from_json_file(args.synth_config)
    return dataset_io.SyntheticConfig(
        n_subjects=args.subjects,
        cycles_per_subject=args.cycles,
        corrupt_channel_prob=args.corrupt_channel_prob,
        injury_prob=args.injury_prob,
        both_legs=not args.one_leg,
    )


def _add_synth_flags(parser, with_out=True):
    parser.add_argument("--synth-config", metavar="JSON",
                        help="synthetic generator config file; overrides the flags below")
    parser.add_argument("--subjects", type=int, default=12,
                        help="synthetic subject count (default 12)")
    parser.add_argument("--cycles", type=int, default=49,
                        help="gait cycles per synthetic subject (default 49)")
    parser.add_argument("--corrupt-channel-prob", type=float, default=0.0,
                        help="probability a channel carries no gait signal")
    parser.add_argument("--injury-prob", type=float, default=0.0,
                        help="probability a synthetic subject is marked injured")
    parser.add_argument("--one-leg", action="store_true",
                        help="synthesize only the dominant leg")
    if with_out:
        parser.add_argument("--out-dir", required=True, help="output directory")


def _cmd_synth(args) -> int:
    config = _synth_config(args)
    recordings = dataset_io.generate_synthetic(config, args.seed)
    manifest_path = dataset_io.write_dataset(recordings, args.out_dir)
    print(f"wrote {len(recordings)} recordings to {manifest_path}")
    return 0


def _load_recordings(args) -> list:
    if args.synthetic:
        recordings = dataset_io.generate_synthetic(_synth_config(args), args.seed)
    elif args.data_dir:
        recordings = dataset_io.load_dataset(Path(args.data_dir) / "manifest.json")
    else:
        raise InvalidConfig("pass --data-dir or --synthetic")
    if args.exclude_subjects:
        recordings = dataset_io.exclude_subjects(
            recordings, _parse_list(args.exclude_subjects))
    if args.exclude_injured:
        recordings = dataset_io.exclude_injured(recordings)
    return recordings


def _cmd_preprocess(args) -> int:
    recordings = _load_recordings(args)
    low, high = _parse_band(args.band)
    config = PipelineConfig(
        band_low_hz=low, band_high_hz=high, filter_order=args.order,
        target_rate_hz=args.target_rate, anti_alias=args.anti_alias,
        stance_fraction=args.stance_fraction,
        qc_cv_threshold=args.qc_cv_threshold,
    )
    prepared = prepare_dataset(recordings, config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "windows.bin"
    container.save_windows(out_path, prepared.windows, prepared.sidecar_metadata())
    rejected = ", ".join(prepared.rejected_subjects) or "none"
    print(f"wrote {len(prepared.windows)} windows from "
          f"{len(prepared.recordings)} recordings to {out_path}")
    print(f"subjects: {len(prepared.subjects)}  rejected: {rejected}")
    return 0


def _cmd_features(args) -> int:
    windows, metadata = container.load_windows(args.infile)
    matrix = features_from_windows(windows, metadata, zc_literal=args.zc_literal)
    metadata = dict(metadata)
    metadata["zc_literal"] = args.zc_literal
    container.save_features(args.outfile, matrix, metadata)
    print(f"wrote {len(matrix)} x {matrix.X.shape[1]} feature matrix to {args.outfile}")
    return 0


def _cmd_pca(args) -> int:
    matrix, _metadata = container.load_features(args.infile)
    X = FeatureScaler().fit_transform(matrix.X) if args.scale else matrix.X
    model = pca_mod.fit_pca(X)
    model.save(args.outfile)
    ratios = model.explained_variance_ratio
    shown = " ".join(f"{r:.4f}" for r in ratios[:5])
    print(f"wrote PCA model to {args.outfile}")
    print(f"first five variance ratios: {shown}")
    print(f"cumulative(3): {float(np.sum(ratios[:3])):.4f}  "
          f"cumulative(5): {float(np.sum(ratios[:5])):.4f}")
    return 0


def _project_for_input(input_kind, scaler, pca_model, X):
    scaled = scaler.transform(X)
    if input_kind == "features":
        return scaled
    return pca_mod.transform(pca_model, scaled, int(input_kind[3:]))


def _cmd_train(args) -> int:
    if args.model == "dcnn":
        return _train_dcnn(args)
    return _train_classical(args)


def _train_classical(args) -> int:
    if args.input not in INPUT_KINDS:
        raise InvalidConfig(f"--input must be one of {INPUT_KINDS}, got {args.input!r}")
    matrix, _metadata = container.load_features(args.infile)
    split = subject_split(set(matrix.subject_ids.tolist()),
                          args.test_fraction, args.seed)
    train_mask = np.isin(matrix.subject_ids, split.train_subjects)
    y = matrix.labels.astype(np.int64)
    scaler = FeatureScaler().fit(matrix.X[train_mask])
    pca_model = pca_mod.fit_pca(scaler.transform(matrix.X[train_mask]))
    Xtr = _project_for_input(args.input, scaler, pca_model, matrix.X[train_mask])
    Xte = _project_for_input(args.input, scaler, pca_model, matrix.X[~train_mask])
    space = SearchSpace(n_iter=args.search_iters)
    best, _history = classical.random_search(
        args.model, space, Xtr, y[train_mask],
        matrix.subject_ids[train_mask], args.seed)
    model = classical.train_model(args.model, best, Xtr, y[train_mask],
                                  seed=args.seed)
    train_acc = classical.accuracy(y[train_mask], model.predict(Xtr))
    test_acc = classical.accuracy(y[~train_mask], model.predict(Xte))
    bundle = {"bundle": "classical", "input_kind": args.input,
              "scaler": scaler.to_dict(),
              "pca": json.loads(pca_model.to_json()),
              "model": model.to_dict(),
              "split": split.to_dict(),
              "train_accuracy": train_acc, "test_accuracy": test_acc}
    Path(args.outfile).write_text(json.dumps(bundle, sort_keys=True, indent=2))
    print(f"{args.model} on {args.input}: train {train_acc:.4f}  test {test_acc:.4f}")
    print(f"hyperparams: {json.dumps(best, sort_keys=True)}")
    print(f"wrote model bundle to {args.outfile}")
    return 0


def _train_dcnn(args) -> int:
    windows, _metadata = container.load_windows(args.infile)
    config = DcnnConfig(**json.loads(Path(args.dcnn_config).read_text())) \
        if args.dcnn_config else DcnnConfig()
    config = replace(config, seed=args.seed)
    split = subject_split(set(windows.subject_ids.tolist()),
                          args.test_fraction, args.seed)
    subj = windows.subject_ids
    test_mask = np.isin(subj, split.test_subjects)
    train_subjects = np.sort(np.unique(subj[~test_mask]))
    n_val = max(1, int(np.floor(len(train_subjects) * 0.1 + 0.5)))
    val_subjects = train_subjects[:n_val]  # deterministic: lowest subject ids
    val_mask = np.isin(subj, val_subjects) & ~test_mask
    fit_mask = ~test_mask & ~val_mask
    X = windows.data
    y = windows.labels.astype(np.int64)
    model, history = neural.train_dcnn(
        X[fit_mask], y[fit_mask], X[val_mask], y[val_mask],
        X[test_mask], y[test_mask], config, select_by=args.select_by)
    test_acc = classical.accuracy(y[test_mask], model.predict(X[test_mask]))
    container.save_checkpoint(args.outfile,
                              {"bundle": "dcnn", "config": config.to_dict(),
                               "classes": [0, 1],
                               "best_epoch": history.best_epoch,
                               "stopped_epoch": history.stopped_epoch},
                              model.params)
    print(f"dcnn: test {test_acc:.4f} after {len(history.epochs)} epochs "
          f"(best epoch {history.best_epoch}, select_by={history.select_by})")
    print(f"wrote checkpoint to {args.outfile}")
    return 0


def _cmd_evaluate(args) -> int:
    model_path = Path(args.model_file)
    head = model_path.open("rb").read(4)
    if head == container.CHECKPOINT_MAGIC:
        meta, params = container.load_checkpoint(model_path)
        config = DcnnConfig(**meta["config"])
        model = neural.DcnnClassifier(config, params,
                                      classes=np.asarray(meta["classes"]))
        windows, _ = container.load_windows(args.infile)
        X, y, subj = windows.data, windows.labels, windows.subject_ids
    else:
        bundle = json.loads(model_path.read_text())
        matrix, _ = container.load_features(args.infile)
        scaler = FeatureScaler.from_dict(bundle["scaler"])
        pca_model = pca_mod.PcaModel.from_json(json.dumps(bundle["pca"]))
        X = _project_for_input(bundle["input_kind"], scaler, pca_model, matrix.X)
        y, subj = matrix.labels, matrix.subject_ids
        registry = {"nb": classical.GaussianNaiveBayes,
                    "dt": classical.DecisionTree,
                    "rf": classical.RandomForest,
                    "lda": classical.LinearDiscriminant}
        model = registry[bundle["model"]["kind"]].from_dict(bundle["model"])
    if args.subjects:
        keep = np.isin(subj, _parse_list(args.subjects))
        X, y = X[keep], y[keep]
    acc = classical.accuracy(y.astype(np.int64), model.predict(X))
    print(f"accuracy: {acc:.4f} over {len(y)} windows")
    return 0


def _cmd_report(args) -> int:
    models = tuple(_parse_list(args.models))
    inputs = tuple(_parse_list(args.inputs))
    if not args.windows:
        raise InvalidConfig("report needs --windows WINDOWS.bin")
    windows, win_meta = container.load_windows(args.windows)
    if args.features:
        features, _ = container.load_features(args.features)
    else:
        features = features_from_windows(windows, win_meta)
    if len(windows) != len(features) or \
            not np.array_equal(windows.subject_ids, features.subject_ids):
        raise InvalidConfig("windows and features files disagree on rows")
    subjects = tuple(sorted(set(features.subject_ids.tolist())))
    prepared = PreparedData(windows=windows, features=features, subjects=subjects)

    space = SearchSpace(n_iter=args.search_iters,
                        inner_val_fraction=args.inner_val_fraction)
    dcnn = DcnnConfig(**json.loads(Path(args.dcnn_config).read_text())) \
        if args.dcnn_config else DcnnConfig()
    cfg = ExperimentConfig(
        n_trials=args.trials, base_seed=args.seed,
        test_fraction=args.test_fraction, models=models, inputs=inputs,
        search_space=space, dcnn=dcnn, dcnn_select_by=args.dcnn_select_by,
        measure_latency=not args.no_latency,
    )
    rep = run_experiment(prepared, cfg)
    paths = report_mod.write_report(rep, args.out_dir, figures=not args.no_figures)
    print(f"wrote {paths['json']} and {paths['csv']}")
    if paths["figures"]:
        print(f"figures: {', '.join(p.name for p in paths['figures'])}")
    for key in sorted(rep.aggregates):
        agg = rep.aggregates[key]
        print(f"{key}: mean {agg['mean_accuracy']:.4f} "
              f"std {agg['std_accuracy']:.4f} "
              f"min {agg['min_accuracy']:.4f} max {agg['max_accuracy']:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emgait",
        description="EMG gait-phase pipeline: preprocessing, features, "
                    "classifiers, and the repeated-trial experiment")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset directory")
    _add_synth_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("preprocess", help="recordings -> windows.bin")
    p.add_argument("--data-dir", help="dataset directory with manifest.json")
    p.add_argument("--synthetic", action="store_true",
                   help="generate a synthetic dataset instead of reading one")
    _add_synth_flags(p, with_out=False)
    p.add_argument("--seed", type=int, default=0,
                   help="seed for the synthetic generator")
    p.add_argument("--exclude-subjects", metavar="IDS",
                   help="comma-separated subject ids to drop")
    p.add_argument("--exclude-injured", action="store_true",
                   help="drop subjects flagged with an injury history")
    p.add_argument("--band", default="20:300", metavar="LOW:HIGH",
                   help="band-pass corner frequencies in Hz (default 20:300)")
    p.add_argument("--order", type=int, default=4,
                   help="Butterworth order (default 4)")
    p.add_argument("--target-rate", type=float, default=500.0,
                   help="output sample rate in Hz (default 500)")
    p.add_argument("--anti-alias", action="store_true",
                   help="low-pass before decimation")
    p.add_argument("--stance-fraction", type=float, default=0.60,
                   help="gait-percent boundary between stance and swing")
    p.add_argument("--qc-cv-threshold", type=float, default=0.20,
                   help="max allowed cycle-duration coefficient of variation")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("features", help="windows.bin -> feats.bin")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--zc-literal", action="store_true",
                   help="use the signed half-sum form of the ZC feature")
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("pca", help="fit PCA on a feature file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--no-scale", dest="scale", action="store_false",
                   help="skip feature standardization before the fit")
    p.set_defaults(func=_cmd_pca)

    p = sub.add_parser("train", help="fit one model on one subject split")
    p.add_argument("--model", required=True, choices=ALL_MODELS)
    p.add_argument("--in", dest="infile", required=True,
                   help="feats.bin for classical models, windows.bin for dcnn")
    p.add_argument("--input", default="features",
                   help="classical input kind: features or pca1/pca2/pca3/pca5")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--search-iters", type=int, default=20,
                   help="random-search draws for classical models")
    p.add_argument("--dcnn-config", metavar="JSON",
                   help="network config file for --model dcnn")
    p.add_argument("--select-by", default="test", choices=("test", "val"),
                   help="dcnn epoch selection metric")
    p.add_argument("--out", dest="outfile", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="score a saved model on a data file")
    p.add_argument("--model-file", required=True)
    p.add_argument("--in", dest="infile", required=True,
                   help="feats.bin or windows.bin matching the model")
    p.add_argument("--subjects", help="restrict scoring to these subject ids")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="run the multi-trial experiment")
    p.add_argument("--windows", required=True,
                   help="windows.bin from the preprocess step")
    p.add_argument("--features",
                   help="feats.bin; recomputed from the windows file if omitted")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--models", default=",".join(ALL_MODELS),
                   help=f"comma list from {ALL_MODELS}")
    p.add_argument("--inputs", default=",".join(INPUT_KINDS),
                   help=f"comma list from {INPUT_KINDS}")
    p.add_argument("--search-iters", type=int, default=20)
    p.add_argument("--inner-val-fraction", type=float, default=0.2)
    p.add_argument("--dcnn-config", metavar="JSON")
    p.add_argument("--dcnn-select-by", default="test", choices=("test", "val"))
    p.add_argument("--no-latency", action="store_true",
                   help="skip latency timing (makes reports bit-reproducible)")
    p.add_argument("--no-figures", action="store_true",
                   help="skip figure rendering")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EmgaitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())
