"""EMG gait-phase detection pipeline.

Surface-EMG stance/swing classification: dataset handling with a synthetic
generator, zero-phase band-pass preprocessing, sliding-window feature
extraction, PCA, four classical classifiers plus a 1D convolutional
network written from scratch, and a repeated subject-wise trial harness.
"""

from .dataset_io import (
    CHANNEL_NAMES,
    DatasetManifest,
    Recording,
    SyntheticConfig,
    generate_synthetic,
    load_dataset,
    write_dataset,
)
from .errors import EmgaitError
from .experiment import (
    ExperimentConfig,
    ExperimentReport,
    run_experiment,
    subject_split,
)
from .pipeline import PipelineConfig, PreparedData, prepare_dataset

__version__ = "0.1.0"

__all__ = [
    "CHANNEL_NAMES",
    "DatasetManifest",
    "EmgaitError",
    "ExperimentConfig",
    "ExperimentReport",
    "PipelineConfig",
    "PreparedData",
    "Recording",
    "SyntheticConfig",
    "__version__",
    "generate_synthetic",
    "load_dataset",
    "prepare_dataset",
    "run_experiment",
    "subject_split",
    "write_dataset",
]
