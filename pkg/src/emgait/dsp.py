"""Signal conditioning: Butterworth bandpass, zero-phase filtering,
decimation, and per-channel standardization.

The filter is stored as a cascade of normalized biquad sections so the
coefficients can be dumped to JSON and compared across implementations.
Zero-phase application uses odd-reflection padding of length
``3 * (2 * n_sections)`` at both ends, a forward pass, a time reversal,
a second forward pass, and a final reversal; the pad is then trimmed.
That padding rule is part of the contract: given identical coefficients
the output is bit-reproducible.

Decimation is plain sample picking.  The default 20-300 Hz band combined
with a 500 Hz target rate leaves energy above the post-decimation Nyquist
(250 Hz); an optional 225 Hz low-pass can be inserted first (see
``design_butterworth_lowpass``), but the default keeps the literal
band/rate combination.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import signal as _signal

from .errors import InvalidBand, InvalidFactor, SignalTooShort


@dataclass(frozen=True)
class BiquadSection:
    """One second-order section with a0 normalized to 1."""

    b0: float
    b1: float
    b2: float
    a1: float
    a2: float

    def is_stable(self) -> bool:
        poles = np.roots([1.0, self.a1, self.a2])
        return bool(np.all(np.abs(poles) < 1.0))


@dataclass(frozen=True)
class BiquadCascade:
    sections: tuple[BiquadSection, ...]
    design: dict

    @property
    def n_sections(self) -> int:
        return len(self.sections)

    def as_sos(self) -> np.ndarray:
        rows = [[s.b0, s.b1, s.b2, 1.0, s.a1, s.a2] for s in self.sections]
        return np.asarray(rows, dtype=np.float64)

    def is_stable(self) -> bool:
        return all(s.is_stable() for s in self.sections)

    def frequency_response(self, freqs_hz, fs_hz: float | None = None) -> np.ndarray:
        """Complex single-pass response H(e^{j 2 pi f / fs}) at the given frequencies."""
        fs = float(fs_hz if fs_hz is not None else self.design["fs_hz"])
        w = 2.0 * np.pi * np.asarray(freqs_hz, dtype=np.float64) / fs
        z1 = np.exp(-1j * w)
        z2 = z1 * z1
        h = np.ones_like(z1, dtype=np.complex128)
        for s in self.sections:
            h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2)
        return h

    def to_json(self) -> str:
        payload = {
            "design": self.design,
            "sections": [
                {"b0": s.b0, "b1": s.b1, "b2": s.b2, "a1": s.a1, "a2": s.a2}
                for s in self.sections
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BiquadCascade":
        payload = json.loads(text)
        sections = tuple(
            BiquadSection(s["b0"], s["b1"], s["b2"], s["a1"], s["a2"])
            for s in payload["sections"]
        )
        return cls(sections=sections, design=payload["design"])


def _sos_to_cascade(sos: np.ndarray, design: dict) -> BiquadCascade:
    sections = []
    for row in sos:
        b0, b1, b2, a0, a1, a2 = (float(v) for v in row)
        if abs(a0 - 1.0) > 1e-12:
            b0, b1, b2, a1, a2 = b0 / a0, b1 / a0, b2 / a0, a1 / a0, a2 / a0
        sections.append(BiquadSection(b0, b1, b2, a1, a2))
    cascade = BiquadCascade(sections=tuple(sections), design=design)
    if not cascade.is_stable():
        raise InvalidBand(f"unstable filter for design {design}")
    return cascade


def design_butterworth_bandpass(
    order: int = 4,
    low_hz: float = 20.0,
    high_hz: float = 300.0,
    fs_hz: float = 1500.0,
) -> BiquadCascade:
    """Butterworth bandpass of the given total order (order/2 biquad sections).

    ``order`` counts poles of the bandpass itself, so the default 4 yields
    two sections and -3.01 dB single-pass gain at both cutoffs.
    """
    if order < 2 or order % 2 != 0:
        raise InvalidBand(f"bandpass order must be a positive even integer, got {order}")
    if not (0.0 < low_hz < high_hz < fs_hz / 2.0):
        raise InvalidBand(
            f"need 0 < low < high < fs/2, got low={low_hz}, high={high_hz}, fs={fs_hz}"
        )
    sos = _signal.butter(order // 2, [low_hz, high_hz], btype="bandpass",
                         output="sos", fs=fs_hz)
    design = {"kind": "bandpass", "order": order, "low_hz": low_hz,
              "high_hz": high_hz, "fs_hz": fs_hz}
    return _sos_to_cascade(sos, design)


def design_butterworth_lowpass(order: int, cutoff_hz: float, fs_hz: float) -> BiquadCascade:
    """Low-pass companion used by the optional anti-alias stage."""
    if order < 1:
        raise InvalidBand(f"order must be >= 1, got {order}")
    if not (0.0 < cutoff_hz < fs_hz / 2.0):
        raise InvalidBand(f"need 0 < cutoff < fs/2, got cutoff={cutoff_hz}, fs={fs_hz}")
    sos = _signal.butter(order, cutoff_hz, btype="lowpass", output="sos", fs=fs_hz)
    design = {"kind": "lowpass", "order": order, "cutoff_hz": cutoff_hz, "fs_hz": fs_hz}
    return _sos_to_cascade(sos, design)


def pad_length(filt: BiquadCascade) -> int:
    # 3x the cascade state length (2 per section)
    return 3 * (2 * filt.n_sections)


def filtfilt(filt: BiquadCascade, x) -> np.ndarray:
    """Zero-phase application of the cascade (forward, reverse, forward, reverse).

    Effective magnitude is |H|^2 and net group delay is zero.  The input is
    extended by odd reflection at both ends before filtering and trimmed
    after, so output length equals input length.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise SignalTooShort("filtfilt expects a 1-D series")
    pad = pad_length(filt)
    if len(x) <= pad:
        raise SignalTooShort(f"need more than {pad} samples, got {len(x)}")
    left = 2.0 * x[0] - x[pad:0:-1]
    right = 2.0 * x[-1] - x[-2:-pad - 2:-1]
    ext = np.concatenate([left, x, right])
    sos = filt.as_sos()
    y = _signal.sosfilt(sos, ext)
    y = _signal.sosfilt(sos, y[::-1])[::-1]
    return np.ascontiguousarray(y[pad:pad + len(x)])


def decimate(x, factor: int) -> np.ndarray:
    """Keep every ``factor``-th sample starting at index 0 (no extra filtering)."""
    if not isinstance(factor, (int, np.integer)) or factor <= 0:
        raise InvalidFactor(f"factor must be a positive integer, got {factor!r}")
    x = np.asarray(x, dtype=np.float64)
    return np.ascontiguousarray(x[::factor])


@dataclass(frozen=True)
class StandardizedSignal:
    samples: np.ndarray
    applied_mean: float
    applied_std: float


def standardize(x) -> StandardizedSignal:
    """Map to zero mean, unit population std; constant input maps to all zeros."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) < 2:
        raise SignalTooShort(f"need at least 2 samples, got {len(x)}")
    mean = float(np.mean(x))
    std = float(np.std(x))
    if std == 0.0:
        return StandardizedSignal(samples=np.zeros_like(x), applied_mean=mean, applied_std=0.0)
    return StandardizedSignal(samples=(x - mean) / std, applied_mean=mean, applied_std=std)
