"""End-to-end preprocessing: recordings in, window tensor and features out.

Per recording, in order:

    1. band-pass filter each channel (zero-phase, two passes)
    2. optionally low-pass at 0.45x the target rate, then decimate
    3. standardize each channel to zero mean, unit variance
    4. detect gait cycles from heel strikes, drop first/last, run the
       cycle-duration quality check
    5. label every decimated sample stance/swing (invalid outside cycles)
    6. slice valid runs into 40-sample windows, stride 16
    7. compute per-channel ZC thresholds on the valid standardized signal

A recording that fails the quality check rejects its whole subject (both
legs), mirroring how unreliable participants are excluded rather than
patched.  Features are extracted per recording with that recording's
thresholds, then concatenated in manifest order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import dsp, features as feat, labeling
from .dataset_io import Recording
from .errors import DegenerateInput, InvalidConfig
from .features import FeatureMatrix, WindowTensor, ZcThresholds

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    band_low_hz: float = 20.0
    band_high_hz: float = 300.0
    filter_order: int = 4
    target_rate_hz: float = 500.0
    anti_alias: bool = False
    stance_fraction: float = 0.60
    qc_cv_threshold: float = 0.20
    window_len: int = feat.WINDOW_LEN
    window_stride: int = feat.WINDOW_STRIDE
    label_mode: str = "center"
    zc_literal: bool = False

    def to_dict(self) -> dict:
        return {
            "band_low_hz": self.band_low_hz,
            "band_high_hz": self.band_high_hz,
            "filter_order": self.filter_order,
            "target_rate_hz": self.target_rate_hz,
            "anti_alias": self.anti_alias,
            "stance_fraction": self.stance_fraction,
            "qc_cv_threshold": self.qc_cv_threshold,
            "window_len": self.window_len,
            "window_stride": self.window_stride,
            "label_mode": self.label_mode,
            "zc_literal": self.zc_literal,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return cls(**d)


@dataclass(frozen=True)
class RecordingResult:
    subject_id: str
    leg: str
    windows: WindowTensor
    thresholds: ZcThresholds
    n_cycles_kept: int


@dataclass(frozen=True)
class PreparedData:
    """Pipeline output: one combined tensor/feature matrix plus bookkeeping.

    The bookkeeping fields have defaults so that a PreparedData can also be
    rebuilt from windows/features files that were written earlier.
    """

    windows: WindowTensor
    features: FeatureMatrix
    subjects: tuple[str, ...]
    recordings: tuple[RecordingResult, ...] = ()
    rejected_subjects: tuple[str, ...] = ()
    config: PipelineConfig = PipelineConfig()

    def sidecar_metadata(self) -> dict:
        """Per-recording spans and thresholds, for the on-disk sidecar."""
        spans = []
        start = 0
        for rec in self.recordings:
            stop = start + len(rec.windows)
            spans.append({"subject_id": rec.subject_id, "leg": rec.leg,
                          "start": start, "stop": stop,
                          "theta": rec.thresholds.theta.tolist(),
                          "n_cycles_kept": rec.n_cycles_kept})
            start = stop
        return {"recordings": spans,
                "rejected_subjects": list(self.rejected_subjects),
                "pipeline": self.config.to_dict()}


def preprocess_signals(recording: Recording, config: PipelineConfig) -> np.ndarray:
    """Filter, decimate, and standardize one recording's channels.

    Returns an (n_out, 5) array at the target rate; each column has zero
    mean and unit variance (flat channels come out all-zero).
    """
    ratio = recording.sample_rate_hz / config.target_rate_hz
    factor = int(round(ratio))
    if abs(ratio - factor) > 1e-9 or factor < 1:
        raise InvalidConfig(
            f"sample rate {recording.sample_rate_hz} is not an integer "
            f"multiple of target rate {config.target_rate_hz}"
        )
    bandpass = dsp.design_butterworth_bandpass(
        config.filter_order, config.band_low_hz, config.band_high_hz,
        recording.sample_rate_hz)
    lowpass = None
    if config.anti_alias and factor > 1:
        lowpass = dsp.design_butterworth_lowpass(
            config.filter_order, 0.45 * config.target_rate_hz,
            recording.sample_rate_hz)
    columns = []
    for c in range(recording.channels.shape[1]):
        x = dsp.filtfilt(bandpass, recording.channels[:, c])
        if lowpass is not None:
            x = dsp.filtfilt(lowpass, x)
        x = dsp.decimate(x, factor)
        columns.append(dsp.standardize(x).samples)
    return np.column_stack(columns)


def label_recording(recording: Recording,
                    config: PipelineConfig) -> tuple[labeling.LabelStream, int, bool]:
    """Cycle detection + QC + sample labeling on the decimated grid.

    Returns (stream, n_cycles_kept, rejected); a rejected recording's
    stream is still returned for inspection.
    """
    cycles = labeling.detect_cycles(recording.heel_strikes_s)
    kept, rejected = labeling.qc_filter(cycles, config.qc_cv_threshold)
    stream = labeling.label_samples(
        recording.n_samples, recording.sample_rate_hz, kept,
        stance_fraction=config.stance_fraction,
        out_rate_hz=config.target_rate_hz)
    return stream, len(kept), rejected


def prepare_recording(recording: Recording,
                      config: PipelineConfig) -> RecordingResult | None:
    """Full single-recording pipeline; None when QC rejects the recording."""
    stream, n_kept, rejected = label_recording(recording, config)
    if rejected:
        return None
    samples = preprocess_signals(recording, config)
    windows = feat.make_windows(samples, stream, recording.subject_id,
                                win=config.window_len,
                                stride=config.window_stride,
                                label_mode=config.label_mode)
    thresholds = feat.compute_thresholds(samples, stream.valid_mask)
    return RecordingResult(subject_id=recording.subject_id, leg=recording.leg,
                           windows=windows, thresholds=thresholds,
                           n_cycles_kept=n_kept)


def prepare_dataset(recordings: list[Recording],
                    config: PipelineConfig = PipelineConfig()) -> PreparedData:
    """Run the pipeline over a dataset and concatenate the survivors.

    Subjects with any QC-rejected recording are dropped entirely so that a
    subject's legs never half-survive.
    """
    if not recordings:
        raise DegenerateInput("no recordings to prepare")
    rejected = set()
    for rec in recordings:
        _stream, _n, bad = label_recording(rec, config)
        if bad:
            rejected.add(rec.subject_id)
            log.info("quality check rejected subject %s (%s leg)",
                     rec.subject_id, rec.leg)
    results = []
    for rec in recordings:
        if rec.subject_id in rejected:
            continue
        result = prepare_recording(rec, config)
        if result is not None and len(result.windows) > 0:
            results.append(result)
    if not results:
        raise DegenerateInput("quality checks rejected every recording")
    windows = feat.concat_windows([r.windows for r in results])
    matrices = [feat.extract_features(r.windows, r.thresholds,
                                      zc_literal=config.zc_literal)
                for r in results]
    matrix = feat.concat_features(matrices)
    subjects = tuple(sorted({r.subject_id for r in results}))
    return PreparedData(windows=windows, features=matrix, subjects=subjects,
                        recordings=tuple(results),
                        rejected_subjects=tuple(sorted(rejected)),
                        config=config)


def features_from_windows(windows: WindowTensor, metadata: dict,
                          zc_literal: bool = False) -> FeatureMatrix:
    """Recompute features for a tensor loaded from disk, applying each
    recording span's own thresholds from the sidecar metadata."""
    spans = metadata.get("recordings")
    if not spans:
        raise InvalidConfig("sidecar metadata lacks recording spans")
    parts = []
    for span in spans:
        piece = WindowTensor(
            data=windows.data[span["start"]:span["stop"]],
            labels=windows.labels[span["start"]:span["stop"]],
            subject_ids=windows.subject_ids[span["start"]:span["stop"]],
            window_len_samples=windows.window_len_samples,
            stride_samples=windows.stride_samples,
        )
        thresholds = ZcThresholds(theta=np.asarray(span["theta"]))
        parts.append(feat.extract_features(piece, thresholds, zc_literal=zc_literal))
    return feat.concat_features(parts)
