"""Mel-spectrogram extraction and the per-utterance feature cache.

Framing is strictly interior (no padding): T = 1 + floor((N - w) / h).
Each frame is ln(max(mel_filterbank(|STFT|^2), floor)).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from ..errors import ValidationError
from .types import MelSpectrogram

_CACHE_MAGIC = b"LMEL"
_CACHE_HEADER = struct.Struct("<4sIIdI")  # magic, T, B, hop_s, rate


@dataclass(frozen=True)
class MelConfig:
    """Feature-extraction parameters; conventional defaults, all overridable."""

    sample_rate: int = 22050
    n_bins: int = 80
    win_length: int = 1024
    hop_length: int = 256
    fmin: float = 0.0
    fmax: float = 8000.0
    floor: float = 1e-5

    @property
    def frame_hop_s(self) -> float:
        return self.hop_length / self.sample_rate

    @property
    def log_floor(self) -> float:
        return float(np.log(self.floor))

    def to_dict(self) -> dict:
        return asdict(self)


def hann_window(length: int) -> np.ndarray:
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(config: MelConfig) -> np.ndarray:
    """(B, F) triangular filters with unit peaks over rfft bins."""
    n_fft = config.win_length
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / config.sample_rate)
    points = mel_to_hz(np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax),
                                   config.n_bins + 2))
    fb = np.zeros((config.n_bins, freqs.size))
    for b in range(config.n_bins):
        lo, center, hi = points[b], points[b + 1], points[b + 2]
        rising = (freqs - lo) / max(center - lo, 1e-12)
        falling = (hi - freqs) / max(hi - center, 1e-12)
        fb[b] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


def mel_center_frequencies(config: MelConfig) -> np.ndarray:
    """Center frequency (Hz) of each mel filter."""
    points = mel_to_hz(np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax),
                                   config.n_bins + 2))
    return points[1:-1]


def frame_signal(waveform: np.ndarray, win_length: int, hop_length: int) -> np.ndarray:
    """(T, w) interior frames; raises if the signal is shorter than one window."""
    x = np.asarray(waveform, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError("waveform must be 1-D")
    n = x.size
    if n < win_length:
        raise ValidationError(
            f"waveform of {n} samples is shorter than one window ({win_length})")
    t = 1 + (n - win_length) // hop_length
    idx = np.arange(t)[:, None] * hop_length + np.arange(win_length)[None, :]
    return x[idx]


def stft_magnitude(waveform: np.ndarray, config: MelConfig) -> np.ndarray:
    """(T, F) magnitude spectrogram with a Hann window."""
    frames = frame_signal(waveform, config.win_length, config.hop_length)
    return np.abs(np.fft.rfft(frames * hann_window(config.win_length), axis=1))


def extract_mel(waveform: np.ndarray, sample_rate: int, config: MelConfig) -> MelSpectrogram:
    """Extract log-mel features; resamples by simple integer factors only.

    Raises:
        ValidationError: waveform shorter than one window, or a non-integer
            resampling factor is required.
    """
    x = np.asarray(waveform, dtype=np.float64)
    if sample_rate != config.sample_rate:
        hi, lo = config.sample_rate, sample_rate
        if hi % lo == 0:
            x = resample_poly(x, hi // lo, 1)
        elif lo % hi == 0:
            x = resample_poly(x, 1, lo // hi)
        else:
            raise ValidationError(
                f"cannot resample {sample_rate} Hz to {config.sample_rate} Hz "
                "(non-integer factor)")
    power = stft_magnitude(x, config) ** 2
    mel = power @ mel_filterbank(config).T
    data = np.log(np.maximum(mel, config.floor))
    return MelSpectrogram(data, frame_hop_s=config.frame_hop_s,
                          sample_rate=config.sample_rate,
                          log_floor=config.log_floor)


def write_mel_cache(path, mel: MelSpectrogram) -> None:
    """Binary cache: header {T, B, hop, rate} + row-major float32 frames."""
    header = _CACHE_HEADER.pack(_CACHE_MAGIC, mel.n_frames, mel.n_bins,
                                mel.frame_hop_s, mel.sample_rate)
    body = np.ascontiguousarray(mel.data, dtype=np.float32).tobytes()
    Path(path).write_bytes(header + body)


def read_mel_cache(path) -> MelSpectrogram:
    raw = Path(path).read_bytes()
    if len(raw) < _CACHE_HEADER.size:
        raise ValidationError(f"{path}: truncated mel cache")
    magic, t, b, hop, rate = _CACHE_HEADER.unpack_from(raw)
    if magic != _CACHE_MAGIC:
        raise ValidationError(f"{path}: not a mel cache file")
    expected = _CACHE_HEADER.size + 4 * t * b
    if len(raw) != expected:
        raise ValidationError(f"{path}: cache size {len(raw)} != expected {expected}")
    data = np.frombuffer(raw, dtype="<f4", offset=_CACHE_HEADER.size).reshape(t, b)
    return MelSpectrogram(np.asarray(data, dtype=np.float64), frame_hop_s=hop,
                          sample_rate=rate, log_floor=-np.inf)
