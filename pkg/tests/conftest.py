"""Shared fixture builders: tiny records, mels, and tones."""

import numpy as np
import pytest

from lrtts.corpus import (DurationSequence, MelConfig, MelSpectrogram,
                          PhonemeSequence, SpeakerEmbedding, UtteranceRecord)


def make_mel(t, bins=8, rng=None, hop_s=256 / 22050, rate=22050):
    rng = rng or np.random.default_rng(0)
    floor = float(np.log(1e-5))
    data = rng.uniform(floor + 1.0, 0.0, size=(t, bins))
    return MelSpectrogram(data, frame_hop_s=hop_s, sample_rate=rate)


def make_record(rec_id="u0", speaker="spk", durations=(3, 2, 4), bins=8,
                synthetic=False, rng=None, phoneme_ids=None, t=None):
    durations = np.asarray(durations, dtype=np.int64)
    if phoneme_ids is None:
        phoneme_ids = np.arange(len(durations)) % 5
    t = int(durations.sum()) if t is None else t
    return UtteranceRecord(
        id=rec_id,
        speaker_id=speaker,
        phonemes=PhonemeSequence(np.asarray(phoneme_ids)),
        mel=make_mel(t, bins=bins, rng=rng),
        durations=DurationSequence(durations),
        synthetic=synthetic,
    )


def sine(freq_hz, seconds, rate=22050, amplitude=0.5):
    t = np.arange(int(seconds * rate)) / rate
    return amplitude * np.sin(2 * np.pi * freq_hz * t)


@pytest.fixture
def mel_config():
    return MelConfig()


@pytest.fixture
def small_mel_config():
    return MelConfig(sample_rate=22050, n_bins=16, win_length=512, hop_length=128)


@pytest.fixture
def speaker_embedding():
    rng = np.random.default_rng(42)
    return SpeakerEmbedding("spk", rng.standard_normal(16))
