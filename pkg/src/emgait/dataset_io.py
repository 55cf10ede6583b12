"""Recording format, dataset manifest, and the synthetic gait-EMG generator.

On-disk layout (one directory per dataset):

    manifest.json                     dataset index, see DatasetManifest
    <subject>_<leg>.csv               signal file, header  t_s,VL,BF,MH,GL,GM
    <subject>_<leg>.events.csv        heel strikes, header t_s,leg
                                      (leg column is "self" or "opposite")

Channel order is fixed to (VL, BF, MH, GL, GM): vastus lateralis, biceps
femoris, medial hamstrings, gastrocnemius lateralis, gastrocnemius
medialis.  Floats are written with Python's shortest round-trip repr, so
write -> load is bit-identical.

The synthetic generator produces amplitude-modulated band-limited noise:
each muscle carries a 20-300 Hz noise carrier gated by per-muscle burst
windows expressed in gait percent, plus white measurement noise.  With the
default bursts, stance and swing windows have clearly different per-channel
power, which makes the full pipeline learnable at desk scale.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dsp
from .errors import (
    EmptyChannel,
    InvalidConfig,
    MalformedFile,
    NonMonotonicEvents,
)
from .rng import derive_seed, make_rng

log = logging.getLogger(__name__)

CHANNEL_NAMES = ("VL", "BF", "MH", "GL", "GM")
LEGS = ("dominant", "nondominant")
SIGNAL_HEADER = ("t_s",) + CHANNEL_NAMES
EVENTS_HEADER = ("t_s", "leg")


@dataclass(frozen=True)
class Recording:
    """One subject/leg EMG stream with heel-strike events.

    ``channels`` is an (n, 5) float64 array in CHANNEL_NAMES order.  Event
    times are seconds from the first sample; ``opposite_heel_strikes_s``
    are the other leg's strikes on the same clock.
    """

    subject_id: str
    leg: str
    sample_rate_hz: float
    channels: np.ndarray
    heel_strikes_s: np.ndarray
    opposite_heel_strikes_s: np.ndarray
    injury_history: bool = False

    def __post_init__(self):
        channels = np.asarray(self.channels, dtype=np.float64)
        strikes = np.asarray(self.heel_strikes_s, dtype=np.float64)
        opposite = np.asarray(self.opposite_heel_strikes_s, dtype=np.float64)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "heel_strikes_s", strikes)
        object.__setattr__(self, "opposite_heel_strikes_s", opposite)
        if self.leg not in LEGS:
            raise ValueError(f"leg must be one of {LEGS}, got {self.leg!r}")
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if channels.ndim != 2 or channels.shape[1] != len(CHANNEL_NAMES):
            raise ValueError(f"channels must be (n, 5), got {channels.shape}")
        if channels.shape[0] < 2:
            raise EmptyChannel(f"need at least 2 samples, got {channels.shape[0]}")
        for name, events in (("heel_strikes_s", strikes),
                             ("opposite_heel_strikes_s", opposite)):
            if len(events) and np.any(np.diff(events) <= 0):
                raise NonMonotonicEvents(f"{name} must be strictly ascending")
            if len(events) and (events[0] < 0 or events[-1] > self.duration_s):
                raise NonMonotonicEvents(
                    f"{name} must lie within [0, {self.duration_s}]"
                )
        channels.setflags(write=False)
        strikes.setflags(write=False)
        opposite.setflags(write=False)

    @property
    def n_samples(self) -> int:
        return self.channels.shape[0]

    @property
    def duration_s(self) -> float:
        return (self.n_samples - 1) / self.sample_rate_hz

    def channel(self, name: str) -> np.ndarray:
        return self.channels[:, CHANNEL_NAMES.index(name)]


@dataclass(frozen=True)
class ManifestEntry:
    subject_id: str
    leg: str
    file_path: str
    injury_history: bool = False


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    sample_rate_hz: float
    channel_names: tuple[str, ...] = CHANNEL_NAMES

    def __post_init__(self):
        if len(self.channel_names) != 5:
            raise InvalidConfig(f"expected 5 channel names, got {self.channel_names}")
        keys = [(e.subject_id, e.leg) for e in self.entries]
        if len(set(keys)) != len(keys):
            raise InvalidConfig("duplicate (subject_id, leg) pairs in manifest")

    def to_dict(self) -> dict:
        return {
            "entries": [
                {"subject_id": e.subject_id, "leg": e.leg,
                 "file_path": e.file_path, "injury_history": e.injury_history}
                for e in self.entries
            ],
            "sample_rate_hz": self.sample_rate_hz,
            "channel_names": list(self.channel_names),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DatasetManifest":
        entries = tuple(
            ManifestEntry(
                subject_id=str(e["subject_id"]),
                leg=e["leg"],
                file_path=e["file_path"],
                injury_history=bool(e.get("injury_history", False)),
            )
            for e in payload["entries"]
        )
        return cls(entries=entries,
                   sample_rate_hz=float(payload["sample_rate_hz"]),
                   channel_names=tuple(payload["channel_names"]))


def _events_path(signal_path: Path) -> Path:
    return signal_path.with_suffix(".events.csv")


def write_recording(recording: Recording, signal_path: str | Path) -> None:
    """Write the signal CSV and its companion events CSV."""
    signal_path = Path(signal_path)
    t = np.arange(recording.n_samples) / recording.sample_rate_hz
    with open(signal_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SIGNAL_HEADER)
        for i in range(recording.n_samples):
            writer.writerow([repr(float(t[i]))] +
                            [repr(float(v)) for v in recording.channels[i]])
    with open(_events_path(signal_path), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(EVENTS_HEADER)
        for v in recording.heel_strikes_s:
            writer.writerow([repr(float(v)), "self"])
        for v in recording.opposite_heel_strikes_s:
            writer.writerow([repr(float(v)), "opposite"])


def load_recording(manifest: DatasetManifest, entry: ManifestEntry,
                   base_dir: str | Path = ".") -> Recording:
    """Load one manifest entry; raises MalformedFile / NonMonotonicEvents /
    EmptyChannel when the files violate the documented schema."""
    signal_path = Path(base_dir) / entry.file_path
    if not signal_path.exists():
        raise MalformedFile(f"missing signal file {signal_path}")
    events_path = _events_path(signal_path)
    if not events_path.exists():
        raise MalformedFile(f"missing events file {events_path}")

    rows = []
    with open(signal_path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != SIGNAL_HEADER:
            raise MalformedFile(
                f"{signal_path}: expected header {','.join(SIGNAL_HEADER)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(SIGNAL_HEADER):
                raise MalformedFile(
                    f"{signal_path}:{lineno}: expected {len(SIGNAL_HEADER)} columns, "
                    f"got {len(row)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise MalformedFile(f"{signal_path}:{lineno}: {exc}") from exc
    if len(rows) < 2:
        raise EmptyChannel(f"{signal_path}: need at least 2 data rows, got {len(rows)}")
    data = np.asarray(rows, dtype=np.float64)

    self_events, opposite_events = [], []
    with open(events_path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != EVENTS_HEADER:
            raise MalformedFile(
                f"{events_path}: expected header {','.join(EVENTS_HEADER)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise MalformedFile(
                    f"{events_path}:{lineno}: expected 2 columns, got {len(row)}"
                )
            try:
                t = float(row[0])
            except ValueError as exc:
                raise MalformedFile(f"{events_path}:{lineno}: {exc}") from exc
            if row[1] == "self":
                self_events.append(t)
            elif row[1] == "opposite":
                opposite_events.append(t)
            else:
                raise MalformedFile(
                    f"{events_path}:{lineno}: leg must be 'self' or 'opposite', "
                    f"got {row[1]!r}"
                )

    return Recording(
        subject_id=entry.subject_id,
        leg=entry.leg,
        sample_rate_hz=manifest.sample_rate_hz,
        channels=data[:, 1:],
        heel_strikes_s=np.asarray(self_events, dtype=np.float64),
        opposite_heel_strikes_s=np.asarray(opposite_events, dtype=np.float64),
        injury_history=entry.injury_history,
    )


def write_dataset(recordings: list[Recording], out_dir: str | Path) -> Path:
    """Write all recordings plus manifest.json; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    rates = {r.sample_rate_hz for r in recordings}
    if len(rates) > 1:
        raise InvalidConfig(f"recordings disagree on sample rate: {sorted(rates)}")
    for rec in recordings:
        fname = f"{rec.subject_id}_{rec.leg}.csv"
        write_recording(rec, out_dir / fname)
        entries.append(ManifestEntry(subject_id=rec.subject_id, leg=rec.leg,
                                     file_path=fname,
                                     injury_history=rec.injury_history))
    manifest = DatasetManifest(entries=tuple(entries),
                               sample_rate_hz=recordings[0].sample_rate_hz)
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w") as f:
        json.dump(manifest.to_dict(), f, indent=2)
    return manifest_path


def load_dataset(manifest_path: str | Path) -> list[Recording]:
    manifest_path = Path(manifest_path)
    with open(manifest_path) as f:
        manifest = DatasetManifest.from_dict(json.load(f))
    return [load_recording(manifest, e, manifest_path.parent)
            for e in manifest.entries]


def exclude_subjects(dataset: list[Recording], ids) -> list[Recording]:
    """Drop every recording whose subject_id is in ``ids``; order preserved."""
    ids = {str(i) for i in ids}
    present = {r.subject_id for r in dataset}
    unknown = ids - present
    if unknown:
        log.info("exclude_subjects: ids not present in dataset: %s",
                 ", ".join(sorted(unknown)))
    return [r for r in dataset if r.subject_id not in ids]


def exclude_injured(dataset: list[Recording]) -> list[Recording]:
    return [r for r in dataset if not r.injury_history]


# burst windows in gait percent (onset, offset, gain) per channel;
# quadriceps and calf fire during stance, hamstrings during late swing
DEFAULT_BURSTS: tuple[tuple[tuple[float, float, float], ...], ...] = (
    ((0.0, 25.0, 1.0),),    # VL
    ((80.0, 100.0, 1.0),),  # BF
    ((75.0, 100.0, 0.9),),  # MH
    ((28.0, 58.0, 1.0),),   # GL
    ((32.0, 60.0, 1.0),),   # GM
)


@dataclass(frozen=True)
class SyntheticConfig:
    n_subjects: int
    cycles_per_subject: int = 49
    mean_cycle_s: float = 1.1
    cycle_jitter_frac: float = 0.05
    stance_fraction: float = 0.60
    bursts: tuple = DEFAULT_BURSTS
    noise_std: float = 0.05
    corrupt_channel_prob: float = 0.0
    injury_prob: float = 0.0
    both_legs: bool = True
    sample_rate_hz: float = 1500.0

    def __post_init__(self):
        if self.n_subjects < 1:
            raise InvalidConfig(f"n_subjects must be >= 1, got {self.n_subjects}")
        if self.cycles_per_subject < 3:
            raise InvalidConfig(
                f"cycles_per_subject must be >= 3, got {self.cycles_per_subject}"
            )
        if self.mean_cycle_s <= 0:
            raise InvalidConfig(f"mean_cycle_s must be positive, got {self.mean_cycle_s}")
        if not (0.0 <= self.cycle_jitter_frac < 0.5):
            raise InvalidConfig(
                f"cycle_jitter_frac must be in [0, 0.5), got {self.cycle_jitter_frac}"
            )
        if not (0.0 < self.stance_fraction < 1.0):
            raise InvalidConfig(
                f"stance_fraction must be in (0, 1), got {self.stance_fraction}"
            )
        if len(self.bursts) != len(CHANNEL_NAMES):
            raise InvalidConfig(f"bursts must list {len(CHANNEL_NAMES)} channels")
        for chan_bursts in self.bursts:
            for onset, offset, _gain in chan_bursts:
                if not (0.0 <= onset < offset <= 100.0):
                    raise InvalidConfig(
                        f"burst window must satisfy 0 <= onset < offset <= 100, "
                        f"got ({onset}, {offset})"
                    )
        if self.noise_std < 0:
            raise InvalidConfig(f"noise_std must be >= 0, got {self.noise_std}")
        if not (0.0 <= self.corrupt_channel_prob <= 1.0):
            raise InvalidConfig(
                f"corrupt_channel_prob must be in [0, 1], got {self.corrupt_channel_prob}"
            )
        if not (0.0 <= self.injury_prob <= 1.0):
            raise InvalidConfig(f"injury_prob must be in [0, 1], got {self.injury_prob}")
        if self.sample_rate_hz <= 0:
            raise InvalidConfig(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")

    def to_dict(self) -> dict:
        return {
            "n_subjects": self.n_subjects,
            "cycles_per_subject": self.cycles_per_subject,
            "mean_cycle_s": self.mean_cycle_s,
            "cycle_jitter_frac": self.cycle_jitter_frac,
            "stance_fraction": self.stance_fraction,
            "bursts": [[list(b) for b in chan] for chan in self.bursts],
            "noise_std": self.noise_std,
            "corrupt_channel_prob": self.corrupt_channel_prob,
            "injury_prob": self.injury_prob,
            "both_legs": self.both_legs,
            "sample_rate_hz": self.sample_rate_hz,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SyntheticConfig":
        payload = dict(payload)
        if "bursts" in payload:
            payload["bursts"] = tuple(
                tuple(tuple(float(v) for v in b) for b in chan)
                for chan in payload["bursts"]
            )
        return cls(**payload)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "SyntheticConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _burst_envelope(percent: np.ndarray, in_cycle: np.ndarray,
                    chan_bursts) -> np.ndarray:
    env = np.zeros_like(percent)
    for onset, offset, gain in chan_bursts:
        env += np.where(in_cycle & (percent >= onset) & (percent < offset), gain, 0.0)
    return env


def _synth_leg(config: SyntheticConfig, rng: np.random.Generator,
               carrier_filter: dsp.BiquadCascade,
               subject_id: str, leg: str, injured: bool) -> Recording:
    fs = config.sample_rate_hz
    jitter = config.cycle_jitter_frac
    durations = config.mean_cycle_s * (
        1.0 + jitter * rng.uniform(-1.0, 1.0, size=config.cycles_per_subject)
    )
    strikes = np.concatenate([[0.0], np.cumsum(durations)])
    n = int(math.ceil(strikes[-1] * fs)) + 1
    grid_end = (n - 1) / fs
    strikes = np.minimum(strikes, grid_end)  # guard float dust past the last sample
    t = np.arange(n, dtype=np.float64) / fs

    # gait percent of every sample; samples at/after the final strike sit in no cycle
    idx = np.clip(np.searchsorted(strikes, t, side="right") - 1, 0,
                  len(durations) - 1)
    in_cycle = (t >= strikes[idx]) & (t < strikes[idx + 1])
    percent = np.where(in_cycle, 100.0 * (t - strikes[idx]) / durations[idx], 0.0)

    corrupted = rng.random(len(CHANNEL_NAMES)) < config.corrupt_channel_prob
    channels = np.empty((n, len(CHANNEL_NAMES)), dtype=np.float64)
    for c, chan_bursts in enumerate(config.bursts):
        carrier = dsp.filtfilt(carrier_filter, rng.standard_normal(n))
        env = _burst_envelope(percent, in_cycle, chan_bursts)
        if corrupted[c]:
            env = np.zeros_like(env)
        channels[:, c] = env * carrier + config.noise_std * rng.standard_normal(n)

    opposite = strikes[:-1] + 0.5 * durations
    return Recording(
        subject_id=subject_id,
        leg=leg,
        sample_rate_hz=fs,
        channels=channels,
        heel_strikes_s=strikes,
        opposite_heel_strikes_s=opposite,
        injury_history=injured,
    )


def generate_synthetic(config: SyntheticConfig, seed: int) -> list[Recording]:
    """Deterministic synthetic dataset: same (config, seed) -> same recordings.

    Each subject gets an independent RNG stream; legs are synthesized
    independently with their own cycle clocks starting at t=0, and the
    opposite leg's strikes are placed at 50% of each cycle.
    """
    carrier_filter = dsp.design_butterworth_bandpass(4, 20.0, 300.0,
                                                     config.sample_rate_hz)
    recordings = []
    legs = LEGS if config.both_legs else LEGS[:1]
    for s in range(config.n_subjects):
        rng = make_rng(derive_seed(seed, s))
        injured = bool(rng.random() < config.injury_prob)
        subject_id = f"s{s:03d}"
        for leg in legs:
            recordings.append(
                _synth_leg(config, rng, carrier_filter, subject_id, leg, injured)
            )
    return recordings
