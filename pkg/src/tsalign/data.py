"""Dataset ingestion, windowing, chronological splits, few-shot sampling.

CSV contract: header row, first column `date` (ISO-like datetime), remaining
columns numeric. Every variable is treated as an independent univariate
channel downstream; this module only slices time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timedelta
from math import ceil, floor
from pathlib import Path

import numpy as np


@dataclass
class RawDataset:
    name: str
    timestamps: list[str]
    values: np.ndarray  # [T_total, N]
    channel_names: list[str]

    @property
    def T_total(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]


@dataclass
class WindowPair:
    history: np.ndarray  # [N, L]
    target: np.ndarray  # [N, H]
    start_index: int


@dataclass
class SplitSpec:
    train_fraction: float = 0.7
    val_fraction: float = 0.1
    test_fraction: float = 0.2
    few_shot_ratio: float | None = None

    def validate(self) -> None:
        fracs = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(f <= 0 for f in fracs):
            raise ValueError(f"split fractions must be positive, got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions {fracs} sum to {sum(fracs):g}, expected 1")
        if self.few_shot_ratio is not None and not 0 < self.few_shot_ratio <= 1:
            raise ValueError(f"few-shot ratio {self.few_shot_ratio} outside (0, 1]")


def _parse_timestamps(stamps: list[str]):
    try:
        return [datetime.fromisoformat(s) for s in stamps]
    except ValueError:
        # unparseable datetimes fall back to lexicographic ordering
        return stamps


def load_csv(path, name: str | None = None) -> RawDataset:
    """Read an ETT-style CSV; errors cite 1-based file rows (header is row 1)."""
    path = Path(path)
    if not path.is_file():
        raise ValueError(f"dataset file not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if len(header) < 2:
            raise ValueError(f"{path}: need a date column plus at least one channel")
        if header[0].strip().lower() != "date":
            raise ValueError(f"{path}: first column is {header[0]!r}, expected 'date'")
        channel_names = [h.strip() for h in header[1:]]

        timestamps: list[str] = []
        rows: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: row {line_no} has {len(row)} cells, expected {len(header)}")
            timestamps.append(row[0].strip())
            parsed = []
            for col_no, cell in enumerate(row[1:], start=2):
                text = cell.strip()
                if not text:
                    raise ValueError(f"{path}: blank cell at row {line_no}, column {col_no}")
                try:
                    parsed.append(float(text))
                except ValueError:
                    raise ValueError(
                        f"{path}: non-numeric cell {text!r} at row {line_no}, column {col_no}"
                    ) from None
            rows.append(parsed)

    if not rows:
        raise ValueError(f"{path}: no data rows")
    keys = _parse_timestamps(timestamps)
    for i in range(1, len(keys)):
        if keys[i] <= keys[i - 1]:
            raise ValueError(
                f"{path}: timestamps not strictly increasing at row {i + 2} ({timestamps[i]!r})"
            )
    values = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        r, c = np.argwhere(~np.isfinite(values))[0]
        raise ValueError(f"{path}: non-finite value at row {int(r) + 2}, column {int(c) + 2}")
    return RawDataset(
        name=name or path.stem,
        timestamps=timestamps,
        values=values,
        channel_names=channel_names,
    )


def make_windows(ds: RawDataset, L: int, H: int, stride: int = 1) -> list[WindowPair]:
    """Sliding (history, target) pairs; count = floor((T - L - H)/stride) + 1."""
    if L < 1 or H < 1 or stride < 1:
        raise ValueError(f"L={L}, H={H}, stride={stride} must all be >= 1")
    T = ds.T_total
    if T < L + H:
        raise ValueError(f"insufficient length: {T} rows < L+H = {L + H}")
    count = (T - L - H) // stride + 1
    windows = []
    for i in range(count):
        start = i * stride
        windows.append(
            WindowPair(
                history=ds.values[start : start + L].T.copy(),
                target=ds.values[start + L : start + L + H].T.copy(),
                start_index=start,
            )
        )
    return windows


def safe_windows(ds: RawDataset, L: int, H: int, stride: int = 1):
    """make_windows, but a too-short segment yields ([], warning) instead of raising."""
    try:
        return make_windows(ds, L, H, stride), None
    except ValueError as e:
        if "insufficient length" in str(e):
            return [], f"segment {ds.name}: {e}"
        raise


def split_dataset(ds: RawDataset, spec: SplitSpec):
    """Chronological train/val/test cut; floor the first two, rest to test."""
    spec.validate()
    T = ds.T_total
    n_train = floor(spec.train_fraction * T)
    n_val = floor(spec.val_fraction * T)
    n_test = T - n_train - n_val

    def segment(suffix: str, lo: int, hi: int) -> RawDataset:
        return RawDataset(
            name=f"{ds.name}/{suffix}",
            timestamps=ds.timestamps[lo:hi],
            values=ds.values[lo:hi],
            channel_names=ds.channel_names,
        )

    return (
        segment("train", 0, n_train),
        segment("val", n_train, n_train + n_val),
        segment("test", n_train + n_val, n_train + n_val + n_test),
    )


def subsample_fewshot(windows: list[WindowPair], ratio: float) -> list[WindowPair]:
    """Keep the chronologically first ceil(ratio * n) windows."""
    if not 0 < ratio <= 1:
        raise ValueError(f"few-shot ratio {ratio} outside (0, 1]")
    if not windows:
        return []
    return windows[: ceil(ratio * len(windows))]


def windows_to_arrays(windows: list[WindowPair]):
    """Stack pairs into (histories [W, N, L], targets [W, N, H])."""
    if not windows:
        raise ValueError("no windows to stack")
    X = np.stack([w.history for w in windows])
    Y = np.stack([w.target for w in windows])
    return X, Y


def save_csv(ds: RawDataset, path) -> None:
    """Write a dataset in the same date-first layout load_csv reads."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + list(ds.channel_names))
        for i in range(ds.T_total):
            writer.writerow([ds.timestamps[i]] + [f"{v:.17g}" for v in ds.values[i]])


def synthetic_dataset(
    T: int,
    N: int = 1,
    seed: int = 0,
    slope: float = 0.01,
    amplitude: float = 1.0,
    period: int = 24,
    phase: float = 0.0,
    noise_std: float = 0.05,
    name: str = "synthetic",
) -> RawDataset:
    """Line + sine + Gaussian noise, per channel, with hourly timestamps.

    Channels get staggered phases so they are distinct but share structure.
    """
    if T < 1 or N < 1:
        raise ValueError(f"T={T}, N={N} must be positive")
    rng = np.random.default_rng(seed)
    t = np.arange(T, dtype=np.float64)
    values = np.empty((T, N))
    for ch in range(N):
        ch_phase = phase + ch * (np.pi / max(N, 2))
        values[:, ch] = (
            slope * t
            + amplitude * np.sin(2 * np.pi * t / period + ch_phase)
            + rng.normal(0.0, noise_std, size=T)
        )
    start = datetime(2020, 1, 1)
    stamps = [(start + timedelta(hours=int(i))).isoformat(sep=" ") for i in range(T)]
    return RawDataset(
        name=name,
        timestamps=stamps,
        values=values,
        channel_names=[f"ch{ch}" for ch in range(N)],
    )
