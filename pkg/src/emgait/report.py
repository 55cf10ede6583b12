"""Report emission: canonical JSON, per-trial CSV, and summary figures.

The JSON layout is versioned (schema_version 1) and written with sorted
keys so identical experiments produce byte-identical files.  The CSV holds
one row per (trial, model, input) with the test/train accuracy ratio.
Figures summarize accuracy, its spread over trials, prediction latency,
and the per-trial test/train ratio; they are rendered with the Agg backend
so report generation works on headless machines.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .errors import IoError
from .experiment import ExperimentReport, ModelEval, SubjectSplit, TrialResult

CSV_COLUMNS = ("trial", "model", "input_kind", "test_accuracy",
               "train_accuracy", "test_train_ratio", "latency_mean_ms",
               "latency_std_ms")


def report_to_json(report: ExperimentReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


def report_from_dict(d: dict) -> ExperimentReport:
    trials = tuple(
        TrialResult(
            trial_index=t["trial_index"],
            seed=t["seed"],
            split=SubjectSplit(
                train_subjects=tuple(t["split"]["train_subjects"]),
                test_subjects=tuple(t["split"]["test_subjects"]),
                seed=t["split"]["seed"],
            ),
            evals=tuple(
                ModelEval(model=e["model"], input_kind=e["input_kind"],
                          test_accuracy=e["test_accuracy"],
                          train_accuracy=e["train_accuracy"],
                          hyperparams=e["hyperparams"],
                          latency=e["latency"], extra=e["extra"])
                for e in t["evals"]
            ),
        )
        for t in d["trials"]
    )
    return ExperimentReport(schema_version=d["schema_version"],
                            config=d["config"], aggregates=d["aggregates"],
                            trials=trials, environment=d["environment"])


def load_report(path: str | Path) -> ExperimentReport:
    with open(path) as f:
        return report_from_dict(json.load(f))


def _ratio(ev: ModelEval) -> float:
    return ev.test_accuracy / ev.train_accuracy if ev.train_accuracy > 0 else float("nan")


def trials_csv(report: ExperimentReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(CSV_COLUMNS)
    for trial in report.trials:
        for ev in trial.evals:
            writer.writerow([
                trial.trial_index, ev.model, ev.input_kind,
                repr(ev.test_accuracy), repr(ev.train_accuracy),
                repr(_ratio(ev)),
                "" if ev.latency is None else repr(ev.latency["mean_ms"]),
                "" if ev.latency is None else repr(ev.latency["std_ms"]),
            ])
    return out.getvalue()


def _combo_key(aggregate: dict) -> str:
    return f"{aggregate['model']}:{aggregate['input_kind']}"


def render_figures(report: ExperimentReport, fig_dir: str | Path) -> list[Path]:
    """Render summary PNGs into fig_dir; returns the paths written."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig_dir = Path(fig_dir)
    fig_dir.mkdir(parents=True, exist_ok=True)
    aggs = [report.aggregates[k] for k in sorted(report.aggregates)]
    labels = [_combo_key(a) for a in aggs]
    written = []

    def save(fig, name):
        path = fig_dir / name
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    # mean accuracy with std bars per model/input combination
    fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(labels) + 2), 4))
    x = np.arange(len(aggs))
    ax.bar(x, [a["mean_accuracy"] for a in aggs],
           yerr=[a["std_accuracy"] for a in aggs], capsize=3, color="#4878d0")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=45, ha="right")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.set_title(f"mean test accuracy over {len(report.trials)} trials")
    fig.tight_layout()
    save(fig, "accuracy_mean.png")

    # accuracy trajectory across trials
    fig, ax = plt.subplots(figsize=(7, 4))
    for key in sorted(report.aggregates):
        model, input_kind = key.split(":")
        ys = [ev.test_accuracy for t in report.trials for ev in t.evals
              if ev.model == model and ev.input_kind == input_kind]
        ax.plot(range(len(ys)), ys, marker=".", label=key)
    ax.set_xlabel("trial")
    ax.set_ylabel("test accuracy")
    ax.set_title("test accuracy per trial")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    save(fig, "accuracy_trials.png")

    # test/train ratio per trial
    fig, ax = plt.subplots(figsize=(7, 4))
    for key in sorted(report.aggregates):
        model, input_kind = key.split(":")
        ys = [_ratio(ev) for t in report.trials for ev in t.evals
              if ev.model == model and ev.input_kind == input_kind]
        ax.plot(range(len(ys)), ys, marker=".", label=key)
    ax.axhline(1.0, color="gray", linewidth=0.8, linestyle="--")
    ax.set_xlabel("trial")
    ax.set_ylabel("test/train accuracy ratio")
    ax.set_title("generalization ratio per trial")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    save(fig, "test_train_ratio.png")

    # latency, when measured
    with_latency = [a for a in aggs if a["mean_latency_ms"] is not None]
    if with_latency:
        fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(with_latency) + 2), 4))
        x = np.arange(len(with_latency))
        ax.bar(x, [a["mean_latency_ms"] for a in with_latency], color="#d65f5f")
        ax.set_xticks(x)
        ax.set_xticklabels([_combo_key(a) for a in with_latency],
                           rotation=45, ha="right")
        ax.set_ylabel("mean predict latency (ms)")
        ax.set_title("full-test-set prediction latency")
        fig.tight_layout()
        save(fig, "latency.png")
    return written


def write_report(report: ExperimentReport, out_dir: str | Path,
                 figures: bool = True) -> dict:
    """Write report.json + trials.csv (+ figures/) under out_dir."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        json_path = out_dir / "report.json"
        json_path.write_text(report_to_json(report))
        csv_path = out_dir / "trials.csv"
        csv_path.write_text(trials_csv(report))
        paths = {"json": json_path, "csv": csv_path, "figures": []}
        if figures:
            paths["figures"] = render_figures(report, out_dir / "figures")
        return paths
    except OSError as exc:
        raise IoError(f"cannot write report under {out_dir}: {exc}") from exc
