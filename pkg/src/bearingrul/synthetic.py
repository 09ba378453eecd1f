"""Synthetic run-to-failure corpora with amplitude-growth degradation.

Each record mixes a shaft harmonic, broadband noise and a train of decaying
fault impulses.  Overall amplitude and impulse strength grow with life
fraction, slowly at first and exponentially after an onset point.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .ingest import SAMPLE_RATE_HZ, SAMPLES_PER_RECORD, BearingRun, VibrationRecord, serialize_record


def degradation_profile(n_records, onset=0.5, growth=3.0, drift=5.0):
    u = np.linspace(0.0, 1.0, n_records)
    late = np.clip(u - onset, 0.0, None) / max(1.0 - onset, 1e-9)
    return 1.0 + drift * u + (np.expm1(growth * late) / np.expm1(growth)) * 4.0


def synthetic_run(
    condition=1,
    bearing_index=1,
    n_records=200,
    seed=0,
    onset=None,
    growth=3.0,
    drift=5.0,
    noise=0.3,
    shaft_hz=30.0,
    fault_hz=107.0,
    resonance_hz=3000.0,
) -> BearingRun:
    rng = np.random.default_rng([seed, condition, bearing_index])
    if onset is None:
        onset = rng.uniform(0.35, 0.65)
    amp = degradation_profile(n_records, onset, growth, drift)
    t = np.arange(SAMPLES_PER_RECORD) / SAMPLE_RATE_HZ
    ring = np.exp(-t[:200] * 800.0) * np.sin(2 * np.pi * resonance_hz * t[:200])
    period = int(SAMPLE_RATE_HZ / fault_hz)
    records = []
    for i, a in enumerate(amp):
        chans = []
        for c, gain in enumerate((1.0, 0.7)):
            phase = rng.uniform(0, 2 * np.pi)
            base = 0.5 * np.sin(2 * np.pi * shaft_hz * t + phase)
            pulses = np.zeros(SAMPLES_PER_RECORD)
            pulses[rng.integers(0, period) :: period] = 1.0
            fault = np.convolve(pulses, ring)[:SAMPLES_PER_RECORD] * (a - 1.0)
            chans.append(gain * (a * (base + noise * rng.standard_normal(SAMPLES_PER_RECORD)) + fault))
        secs = i * 10
        records.append(VibrationRecord(secs // 3600, secs // 60 % 60, secs % 60, 0, chans[0], chans[1]))
    return BearingRun(condition, bearing_index, records)


def synthetic_corpus(n_bearings=7, n_records=200, condition=1, seed=0, vary_length=False):
    """List of runs; with ``vary_length`` each bearing gets between 60% and 100% of ``n_records``."""
    rng = np.random.default_rng([seed, condition])
    runs = []
    for b in range(1, n_bearings + 1):
        n = int(n_records * rng.uniform(0.6, 1.0)) if vary_length else n_records
        runs.append(synthetic_run(condition, b, n, seed=seed))
    return runs


def write_run(run: BearingRun, root, delimiter=",") -> Path:
    """Write a run in the archive layout ``root/Bearing<c>_<i>/acc_<nnnnn>.csv``."""
    d = Path(root) / run.name
    d.mkdir(parents=True, exist_ok=True)
    for i, rec in enumerate(run.records, start=1):
        (d / f"acc_{i:05d}.csv").write_text(serialize_record(rec, delimiter))
    return d
