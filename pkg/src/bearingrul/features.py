"""Handcrafted vibration features and Savitzky-Golay smoothing.

The 38-value feature vector is, per axis (horizontal then vertical):
9 time-domain statistics, 2 spectral statistics and 8 wavelet-packet
sub-band energies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pywt
from scipy.signal import savgol_filter

from .ingest import SAMPLE_RATE_HZ, VibrationRecord

FEATURE_WINDOW = 1024
WAVELET = "db4"
WPD_LEVEL = 3

TIME_FEATURES = (
    "rms",
    "variance",
    "peak",
    "peak_to_peak",
    "skewness",
    "kurtosis",
    "crest_factor",
    "margin_index",
    "waveform_index",
)
FREQ_FEATURES = ("fcg", "rmsf")
WPD_FEATURES = tuple(f"wpd_{i}" for i in range(2**WPD_LEVEL))
FEATURE_NAMES = tuple(
    f"{axis}_{name}" for axis in ("h", "v") for name in TIME_FEATURES + FREQ_FEATURES + WPD_FEATURES
)


class DegenerateSignalError(ValueError):
    pass


@dataclass(frozen=True)
class SmootherConfig:
    window: int = 21
    polynomial_order: int = 3
    # "interp" fits the edge windows directly; "mirror" reflects the series
    mode: str = "interp"

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("window must be odd and >= 3")
        if not 0 <= self.polynomial_order < self.window:
            raise ValueError("polynomial_order must lie in [0, window)")
        if self.mode not in ("interp", "mirror"):
            raise ValueError("mode must be 'interp' or 'mirror'")


def time_features(signal) -> np.ndarray:
    x = np.asarray(signal, dtype=np.float64)
    if x.size < 2:
        raise ValueError("need at least two samples")
    rms = np.sqrt(np.mean(x**2))
    if rms == 0:
        raise DegenerateSignalError("all-zero signal")
    mu = x.mean()
    var = np.mean((x - mu) ** 2)
    if var == 0:
        raise DegenerateSignalError("constant signal has no standardized moments")
    sd = np.sqrt(var)
    peak = np.max(np.abs(x))
    skew = np.mean((x - mu) ** 3) / sd**3
    kurt = np.mean((x - mu) ** 4) / var**2
    margin = peak / np.mean(np.sqrt(np.abs(x))) ** 2
    waveform = rms / np.mean(np.abs(x))
    return np.array([rms, var, peak, x.max() - x.min(), skew, kurt, peak / rms, margin, waveform])


def freq_features(signal, sample_rate: float = SAMPLE_RATE_HZ) -> np.ndarray:
    """Frequency centre of gravity and RMS frequency of the one-sided power spectrum."""
    x = np.asarray(signal, dtype=np.float64)
    n = x.size
    if n < 2 or n & (n - 1):
        raise ValueError(f"signal length must be a power of two, got {n}")
    if sample_rate <= 0:
        raise ValueError("sample_rate must be positive")
    power = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    total = power.sum()
    if total == 0:
        raise DegenerateSignalError("zero spectral power")
    fcg = (freqs * power).sum() / total
    rmsf = np.sqrt((freqs**2 * power).sum() / total)
    return np.array([fcg, rmsf])


def wavelet_packet_energies(signal, wavelet: str = WAVELET, level: int = WPD_LEVEL) -> np.ndarray:
    """Energies of the terminal nodes of a full wavelet-packet tree, low band first.

    Periodized transform, so the energies sum to ``sum(x**2)`` for an orthogonal wavelet.
    """
    # pywt needs a writable buffer; record arrays are read-only
    x = np.array(signal, dtype=np.float64)
    if x.size % (2**level):
        raise ValueError(f"signal length {x.size} not divisible by {2**level}")
    wp = pywt.WaveletPacket(x, wavelet, mode="periodization", maxlevel=level)
    return np.array([np.sum(node.data**2) for node in wp.get_level(level, order="freq")])


def axis_features(signal, sample_rate=SAMPLE_RATE_HZ, wavelet=WAVELET, window=FEATURE_WINDOW) -> np.ndarray:
    x = np.asarray(signal, dtype=np.float64)[:window]
    return np.concatenate([time_features(x), freq_features(x, sample_rate), wavelet_packet_energies(x, wavelet)])


def feature_vector(record: VibrationRecord, sample_rate=SAMPLE_RATE_HZ, wavelet=WAVELET, window=FEATURE_WINDOW):
    return np.concatenate(
        [
            axis_features(record.horizontal, sample_rate, wavelet, window),
            axis_features(record.vertical, sample_rate, wavelet, window),
        ]
    )


def feature_matrix(run, **kw) -> np.ndarray:
    """``(n_records, 38)`` features for a :class:`BearingRun`."""
    return np.stack([feature_vector(r, **kw) for r in run.records])


def save_feature_csv(matrix, path):
    np.savetxt(path, np.asarray(matrix), delimiter=",", fmt="%.17g")


def savitzky_golay(series, cfg: SmootherConfig = SmootherConfig()) -> np.ndarray:
    y = np.asarray(series, dtype=np.float64)
    if y.size < cfg.window:
        raise ValueError(f"series of length {y.size} is shorter than the window {cfg.window}")
    return savgol_filter(y, cfg.window, cfg.polynomial_order, mode=cfg.mode)
