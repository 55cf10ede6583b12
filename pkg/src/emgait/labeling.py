"""Gait cycles, cycle quality control, and binary stance/swing labels.

A cycle runs from one heel strike to the next strike of the same leg.
Within a cycle, gait percent is the linear map of time onto [0, 100); the
first ``100 * stance_fraction`` percent is labeled stance (0) and the rest
swing (1).  The stance threshold is a parameter (default 0.60) since the
binary split point is a convention, not something recoverable from heel
strikes alone.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import OutOfCycle, TooFewEvents


class PhaseLabel(enum.IntEnum):
    STANCE = 0
    SWING = 1


@dataclass(frozen=True)
class GaitCycle:
    start_s: float
    end_s: float

    def __post_init__(self):
        if not self.end_s > self.start_s:
            raise ValueError(f"cycle end {self.end_s} must exceed start {self.start_s}")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class LabelStream:
    """Per-sample labels on a uniform time base.

    ``valid_mask`` is False outside the retained cycles; ``labels`` and
    ``gait_percent`` hold filler zeros there.
    """

    labels: np.ndarray        # int8, 0 stance / 1 swing
    gait_percent: np.ndarray  # float64 in [0, 100)
    valid_mask: np.ndarray    # bool
    rate_hz: float

    def __post_init__(self):
        n = len(self.labels)
        if len(self.gait_percent) != n or len(self.valid_mask) != n:
            raise ValueError("label stream arrays must have equal length")

    def __len__(self) -> int:
        return len(self.labels)


def detect_cycles(heel_strikes_s) -> list[GaitCycle]:
    """k strikes -> k-1 consecutive, non-overlapping cycles."""
    strikes = np.asarray(heel_strikes_s, dtype=np.float64)
    if len(strikes) < 2:
        raise TooFewEvents(f"need at least 2 heel strikes, got {len(strikes)}")
    if np.any(np.diff(strikes) <= 0):
        raise TooFewEvents("heel strikes must be strictly ascending")
    return [GaitCycle(float(a), float(b)) for a, b in zip(strikes[:-1], strikes[1:])]


def qc_filter(
    cycles: list[GaitCycle],
    cv_threshold: float = 0.20,
    compare_first_two: bool = False,
) -> tuple[list[GaitCycle], bool]:
    """Drop the first and last cycle, then flag the subject if duration spread
    exceeds ``cv_threshold`` of the mean (population std over the kept cycles).

    ``compare_first_two`` additionally rejects when the first two original
    cycles differ by more than the same fraction of the mean; off by default
    since the population CV check already catches irregular starts.
    """
    if len(cycles) < 3:
        raise TooFewEvents(f"need at least 3 cycles for QC, got {len(cycles)}")
    kept = list(cycles[1:-1])
    durations = np.array([c.duration_s for c in kept], dtype=np.float64)
    mean = float(np.mean(durations))
    std = float(np.std(durations))
    rejected = std > cv_threshold * mean
    if compare_first_two:
        first_second_gap = abs(cycles[0].duration_s - cycles[1].duration_s)
        rejected = rejected or first_second_gap > cv_threshold * mean
    return kept, bool(rejected)


def gait_percent_at(t_s: float, cycle: GaitCycle) -> float:
    if not (cycle.start_s <= t_s < cycle.end_s):
        raise OutOfCycle(f"t={t_s} outside cycle [{cycle.start_s}, {cycle.end_s})")
    return 100.0 * (t_s - cycle.start_s) / cycle.duration_s


def phase_of_percent(p: float, stance_fraction: float) -> PhaseLabel:
    if not (0.0 <= p < 100.0):
        raise ValueError(f"gait percent must be in [0, 100), got {p}")
    if not (0.0 < stance_fraction < 1.0):
        raise ValueError(f"stance_fraction must be in (0, 1), got {stance_fraction}")
    return PhaseLabel.STANCE if p < 100.0 * stance_fraction else PhaseLabel.SWING


def label_samples(
    n_input_samples: int,
    input_rate_hz: float,
    kept_cycles: list[GaitCycle],
    stance_fraction: float = 0.60,
    out_rate_hz: float = 500.0,
) -> LabelStream:
    """Per-sample phase labels on the ``out_rate_hz`` time base.

    The output grid holds the samples that integer decimation of the input
    grid would keep, so labels line up one-to-one with a decimated channel.
    """
    if out_rate_hz <= 0:
        raise ValueError("out_rate_hz must be positive")
    factor = input_rate_hz / out_rate_hz
    if abs(factor - round(factor)) > 1e-9 or round(factor) < 1:
        raise ValueError(
            f"input rate {input_rate_hz} must be an integer multiple of {out_rate_hz}"
        )
    n_out = -(-n_input_samples // int(round(factor)))  # ceil
    t = np.arange(n_out, dtype=np.float64) / out_rate_hz

    labels = np.zeros(n_out, dtype=np.int8)
    percent = np.zeros(n_out, dtype=np.float64)
    valid = np.zeros(n_out, dtype=bool)
    if kept_cycles:
        starts = np.array([c.start_s for c in kept_cycles])
        ends = np.array([c.end_s for c in kept_cycles])
        idx = np.searchsorted(starts, t, side="right") - 1
        idx_clip = np.clip(idx, 0, len(kept_cycles) - 1)
        inside = (idx >= 0) & (t >= starts[idx_clip]) & (t < ends[idx_clip])
        pct = np.where(
            inside,
            100.0 * (t - starts[idx_clip]) / (ends[idx_clip] - starts[idx_clip]),
            0.0,
        )
        labels = np.where(inside & (pct >= 100.0 * stance_fraction), 1, 0).astype(np.int8)
        percent = pct
        valid = inside
    return LabelStream(labels=labels, gait_percent=percent, valid_mask=valid,
                       rate_hz=out_rate_hz)
