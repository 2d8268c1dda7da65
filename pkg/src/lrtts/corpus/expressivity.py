"""Per-speaker expressivity statistics: log-f0, frame energy, phoneme duration.

f0 comes from frame-wise autocorrelation peak-picking inside a 60-400 Hz
search band, gated by relative frame energy; frame energy (log scale) stands
in for the 0th-order power coefficient.  Statistics pool all of one
speaker's records; deltas are first-order differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .features import MelConfig, frame_signal
from .types import ExpressivityProfile, FeatureStats, UtteranceRecord


@dataclass(frozen=True)
class F0Config:
    fmin_hz: float = 60.0
    fmax_hz: float = 400.0
    energy_gate: float = 0.05   # fraction of the utterance's peak frame energy
    min_autocorr: float = 0.3   # normalized peak height required for voicing


def estimate_f0(waveform: np.ndarray, sample_rate: int, mel_config: MelConfig,
                f0_config: F0Config = F0Config()) -> tuple[np.ndarray, np.ndarray]:
    """Frame-wise (f0_hz, voiced) using autocorrelation peak-picking.

    Unvoiced frames carry f0 = 0.  Framing matches mel extraction so frame
    indices line up across features.
    """
    frames = frame_signal(waveform, mel_config.win_length, mel_config.hop_length)
    frames = frames - frames.mean(axis=1, keepdims=True)
    energy = np.mean(frames ** 2, axis=1)
    gate = f0_config.energy_gate * max(energy.max(), 1e-12)

    lag_min = max(1, int(np.floor(sample_rate / f0_config.fmax_hz)))
    lag_max = min(frames.shape[1] - 1, int(np.ceil(sample_rate / f0_config.fmin_hz)))
    if lag_min >= lag_max:
        raise ValidationError("window too short for the f0 search band")

    n_fft = 2 * frames.shape[1]
    spectrum = np.abs(np.fft.rfft(frames, n=n_fft, axis=1)) ** 2
    autocorr = np.fft.irfft(spectrum, n=n_fft, axis=1)[:, :frames.shape[1]]

    f0 = np.zeros(frames.shape[0])
    voiced = np.zeros(frames.shape[0], dtype=bool)
    for t in range(frames.shape[0]):
        if energy[t] <= gate:
            continue
        r0 = autocorr[t, 0]
        if r0 <= 0:
            continue
        band = autocorr[t, lag_min:lag_max + 1] / r0
        peak = int(np.argmax(band))
        if band[peak] < f0_config.min_autocorr:
            continue
        voiced[t] = True
        f0[t] = sample_rate / (lag_min + peak)
    return f0, voiced


def _stats(values: np.ndarray) -> FeatureStats:
    return FeatureStats(mean=float(np.mean(values)), var=float(np.var(values)))


def expressivity_profile(records: list[UtteranceRecord],
                         waveforms: dict[str, np.ndarray],
                         mel_config: MelConfig,
                         f0_config: F0Config = F0Config()) -> ExpressivityProfile:
    """Profile one speaker's records; every record needs its waveform.

    Raises:
        ValidationError: empty input, mixed speakers, or a missing waveform.
    """
    if not records:
        raise ValidationError("expressivity profile needs at least one record")
    speakers = {r.speaker_id for r in records}
    if len(speakers) != 1:
        raise ValidationError(f"records span multiple speakers: {sorted(speakers)}")
    speaker = next(iter(speakers))

    log_f0_all: list[np.ndarray] = []
    dlog_f0_all: list[np.ndarray] = []
    energy_all: list[np.ndarray] = []
    denergy_all: list[np.ndarray] = []
    dur_all: list[np.ndarray] = []
    ddur_all: list[np.ndarray] = []
    voiced_count = 0

    for rec in records:
        if rec.id not in waveforms:
            raise ValidationError(f"no waveform for record '{rec.id}'")
        wav = np.asarray(waveforms[rec.id], dtype=np.float64)
        frames = frame_signal(wav, mel_config.win_length, mel_config.hop_length)
        energy = np.log(np.mean(frames ** 2, axis=1) + 1e-10)
        energy_all.append(energy)
        if energy.size > 1:
            denergy_all.append(np.diff(energy))

        f0, voiced = estimate_f0(wav, rec.mel.sample_rate, mel_config, f0_config)
        voiced_count += int(voiced.sum())
        if voiced.any():
            log_f0 = np.log(f0[voiced])
            log_f0_all.append(log_f0)
            # deltas only across adjacent voiced frames
            adj = voiced[:-1] & voiced[1:]
            if adj.any():
                full_log = np.where(voiced, np.log(np.maximum(f0, 1e-12)), 0.0)
                dlog_f0_all.append(full_log[1:][adj] - full_log[:-1][adj])

        dur = rec.durations.frames.astype(np.float64)
        dur_all.append(dur)
        if dur.size > 1:
            ddur_all.append(np.diff(dur))

    def pooled(parts: list[np.ndarray]) -> FeatureStats:
        if not parts:
            return FeatureStats(0.0, 0.0)
        return _stats(np.concatenate(parts))

    has_f0 = bool(log_f0_all)
    return ExpressivityProfile(
        speaker_id=speaker,
        n_records=len(records),
        log_f0=pooled(log_f0_all) if has_f0 else None,
        delta_log_f0=(pooled(dlog_f0_all) if dlog_f0_all else FeatureStats(0.0, 0.0)) if has_f0 else None,
        energy=pooled(energy_all),
        delta_energy=pooled(denergy_all),
        duration=pooled(dur_all),
        delta_duration=pooled(ddur_all),
        voiced_frame_count=voiced_count,
    )
