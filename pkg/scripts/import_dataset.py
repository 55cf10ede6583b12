#!/usr/bin/env python3
"""One-shot converter from a raw EMG export into the dataset-directory format.

Expected raw layout, one directory per subject:

    RAW_DIR/
      <subject>/
        dominant_emg.csv          wide CSV with a header row
        dominant_strikes.csv      one heel-strike time (seconds) per line
        nondominant_emg.csv
        nondominant_strikes.csv

The EMG header must contain the five muscle columns named by --columns
(mapped onto VL, BF, MH, GL, GM in that order); extra columns such as a
time axis are ignored.  Each leg's "opposite" events are taken from the
other leg's strike file on the shared recording clock.

Writes <out_dir>/manifest.json plus per-recording CSVs readable by
`emgait preprocess --data-dir <out_dir>`.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from emgait.dataset_io import CHANNEL_NAMES, LEGS, Recording, write_dataset


def _read_emg(path: Path, columns: list[str]) -> np.ndarray:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        try:
            picks = [header.index(name) for name in columns]
        except ValueError as exc:
            raise SystemExit(
                f"error: {path}: missing column {exc}; header is {header}")
        rows = [[float(row[i]) for i in picks] for row in reader]
    if len(rows) < 2:
        raise SystemExit(f"error: {path}: fewer than 2 samples")
    return np.asarray(rows, dtype=np.float64)


def _read_strikes(path: Path) -> np.ndarray:
    values = [float(line) for line in path.read_text().split() if line.strip()]
    return np.asarray(values, dtype=np.float64)


def convert(raw_dir: Path, out_dir: Path, rate_hz: float,
            columns: list[str], injured: set[str]) -> Path:
    recordings = []
    subject_dirs = sorted(p for p in raw_dir.iterdir() if p.is_dir())
    if not subject_dirs:
        raise SystemExit(f"error: no subject directories under {raw_dir}")
    for subject_dir in subject_dirs:
        subject = subject_dir.name
        strikes = {}
        for leg in LEGS:
            strike_path = subject_dir / f"{leg}_strikes.csv"
            if strike_path.exists():
                strikes[leg] = _read_strikes(strike_path)
        for leg in LEGS:
            emg_path = subject_dir / f"{leg}_emg.csv"
            if not emg_path.exists():
                continue
            if leg not in strikes:
                raise SystemExit(f"error: {emg_path} has no strike file")
            other = LEGS[1] if leg == LEGS[0] else LEGS[0]
            recordings.append(Recording(
                subject_id=subject,
                leg=leg,
                sample_rate_hz=rate_hz,
                channels=_read_emg(emg_path, columns),
                heel_strikes_s=strikes[leg],
                opposite_heel_strikes_s=strikes.get(other, np.empty(0)),
                injury_history=subject in injured,
            ))
    if not recordings:
        raise SystemExit(f"error: no recordings found under {raw_dir}")
    return write_dataset(recordings, out_dir)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("raw_dir", type=Path)
    parser.add_argument("out_dir", type=Path)
    parser.add_argument("--rate", type=float, default=1500.0,
                        help="EMG sample rate in Hz (default 1500)")
    parser.add_argument("--columns", default=",".join(CHANNEL_NAMES),
                        help="comma list of raw header names mapped onto "
                             f"{','.join(CHANNEL_NAMES)} in order")
    parser.add_argument("--injured", default="",
                        help="comma list of subject ids with injury history")
    args = parser.parse_args(argv)
    columns = [c.strip() for c in args.columns.split(",") if c.strip()]
    if len(columns) != len(CHANNEL_NAMES):
        parser.error(f"--columns needs {len(CHANNEL_NAMES)} names")
    if not args.raw_dir.is_dir():
        parser.error(f"{args.raw_dir} is not a directory")
    injured = {s.strip() for s in args.injured.split(",") if s.strip()}
    manifest = convert(args.raw_dir, args.out_dir, args.rate, columns, injured)
    print(f"wrote {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
