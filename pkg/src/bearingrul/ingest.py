"""Reading PHM2012-style run-to-failure archives.

Each acquisition file holds 2560 rows of ``hour, minute, second, microsecond,
horizontal_g, vertical_g`` separated by commas or semicolons.  A bearing is a
directory of such files whose names end in a zero-padded counter.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

SAMPLES_PER_RECORD = 2560
RECORD_PERIOD_S = 10
SAMPLE_RATE_HZ = 25600

_SUFFIX = re.compile(r"(\d+)$")


class MalformedRecordError(ValueError):
    pass


class RecordParseError(ValueError):
    pass


class NoDataError(ValueError):
    pass


class DegenerateDataError(ValueError):
    pass


@dataclass(frozen=True)
class VibrationRecord:
    hour: int
    minute: int
    second: int
    microsecond: int
    horizontal: np.ndarray
    vertical: np.ndarray

    def __post_init__(self):
        for name in ("horizontal", "vertical"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (SAMPLES_PER_RECORD,):
                raise MalformedRecordError(f"{name} has shape {arr.shape}, need ({SAMPLES_PER_RECORD},)")
            if not np.all(np.isfinite(arr)):
                raise MalformedRecordError(f"{name} contains non-finite samples")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def timestamp_s(self) -> float:
        return self.hour * 3600 + self.minute * 60 + self.second + self.microsecond * 1e-6

    def stacked(self) -> np.ndarray:
        """``(2, 2560)`` array, horizontal first."""
        return np.stack([self.horizontal, self.vertical])


@dataclass(frozen=True)
class BearingRun:
    condition: int
    bearing_index: int
    records: tuple

    record_period: int = RECORD_PERIOD_S

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    @property
    def name(self) -> str:
        return f"Bearing{self.condition}_{self.bearing_index}"

    @property
    def actual_life(self) -> int:
        return self.record_period * len(self.records)

    def __len__(self):
        return len(self.records)

    def signals(self) -> np.ndarray:
        """``(n_records, 2, 2560)`` array of both channels."""
        return np.stack([r.stacked() for r in self.records])


@dataclass(frozen=True)
class NormStats:
    mean: tuple[float, float]
    std: tuple[float, float]

    def __post_init__(self):
        if min(self.std) <= 0:
            raise DegenerateDataError("normalization std must be positive")


def _detect_delimiter(line: str) -> str:
    return ";" if ";" in line else ","


def parse_record(text: str) -> VibrationRecord:
    rows = [ln for ln in text.splitlines() if ln.strip()]
    if len(rows) != SAMPLES_PER_RECORD:
        raise MalformedRecordError(f"expected {SAMPLES_PER_RECORD} rows, found {len(rows)}")
    delim = _detect_delimiter(rows[0])
    values = np.empty((SAMPLES_PER_RECORD, 6))
    for i, row in enumerate(rows):
        fields = row.split(delim)
        if len(fields) < 6:
            raise MalformedRecordError(f"row {i} has {len(fields)} fields, need 6")
        try:
            values[i] = [float(f) for f in fields[:6]]
        except ValueError as exc:
            raise RecordParseError(f"row {i}: {exc}") from None
    h, m, s, us = (int(v) for v in values[0, :4])
    return VibrationRecord(h, m, s, us, values[:, 4].copy(), values[:, 5].copy())


def serialize_record(record: VibrationRecord, delimiter: str = ",") -> str:
    head = delimiter.join(str(v) for v in (record.hour, record.minute, record.second, record.microsecond))
    lines = [
        f"{head}{delimiter}{h!r}{delimiter}{v!r}" for h, v in zip(record.horizontal.tolist(), record.vertical.tolist())
    ]
    return "\n".join(lines) + "\n"


def _acc_files(directory: Path):
    files = []
    for p in directory.iterdir():
        if not p.is_file() or p.name.startswith("temp"):
            continue
        m = _SUFFIX.search(p.stem)
        if m:
            files.append((int(m.group(1)), p))
    return [p for _, p in sorted(files)]


def load_bearing(directory, condition: int, bearing_index: int, workers: int = 1) -> BearingRun:
    directory = Path(directory)
    files = _acc_files(directory)
    if not files:
        raise NoDataError(f"no acceleration files in {directory}")

    def read(path):
        try:
            return parse_record(path.read_text())
        except (MalformedRecordError, RecordParseError) as exc:
            raise type(exc)(f"{path.name}: {exc}") from None

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            records = list(pool.map(read, files))
    else:
        records = [read(p) for p in files]
    return BearingRun(condition, bearing_index, records)


def fit_norm_stats(training_runs) -> NormStats:
    """Per-channel mean and population std pooled over every training sample."""
    total = np.zeros(2)
    count = 0
    for run in training_runs:
        for r in run.records:
            total += (r.horizontal.sum(), r.vertical.sum())
            count += SAMPLES_PER_RECORD
    if count == 0:
        raise NoDataError("no records to fit normalization statistics")
    mean = total / count
    sq = np.zeros(2)
    for run in training_runs:
        for r in run.records:
            sq += (((r.horizontal - mean[0]) ** 2).sum(), ((r.vertical - mean[1]) ** 2).sum())
    std = np.sqrt(sq / count)
    if np.any(std == 0):
        raise DegenerateDataError("a channel is constant over the training data")
    return NormStats(tuple(mean.tolist()), tuple(std.tolist()))


def _map_channels(run: BearingRun, fn) -> BearingRun:
    recs = [
        replace(r, horizontal=fn(r.horizontal, 0), vertical=fn(r.vertical, 1)) for r in run.records
    ]
    return BearingRun(run.condition, run.bearing_index, recs, run.record_period)


def normalize(run: BearingRun, stats: NormStats) -> BearingRun:
    return _map_channels(run, lambda x, c: (x - stats.mean[c]) / stats.std[c])


def denormalize(run: BearingRun, stats: NormStats) -> BearingRun:
    return _map_channels(run, lambda x, c: stats.mean[c] + stats.std[c] * x)


_BEARING_DIR = re.compile(r"Bearing(\d+)[_-](\d+)$", re.IGNORECASE)


def discover_bearings(root) -> dict[tuple[int, int], Path]:
    """Map ``(condition, index)`` to bearing directories found anywhere under ``root``.

    When the same bearing appears twice (e.g. truncated and full test sets),
    the directory with more files wins.
    """
    found: dict[tuple[int, int], Path] = {}
    for p in sorted(Path(root).rglob("*")):
        if not p.is_dir():
            continue
        m = _BEARING_DIR.search(p.name)
        if not m:
            continue
        key = (int(m.group(1)), int(m.group(2)))
        if key not in found or len(_acc_files(p)) > len(_acc_files(found[key])):
            found[key] = p
    return found
