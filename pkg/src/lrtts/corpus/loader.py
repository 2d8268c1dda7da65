"""End-to-end corpus assembly: manifest -> validated utterance records."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from ..errors import ValidationError
from .features import MelConfig, extract_mel, read_mel_cache
from .manifest import ManifestEntry, load_alignment, load_manifest
from .types import MelSpectrogram, UtteranceRecord, Vocabulary
from .validate import validate_record


@dataclass
class Corpus:
    records: list[UtteranceRecord]
    vocabulary: Vocabulary
    mel_config: MelConfig

    def speakers(self) -> list[str]:
        return sorted({r.speaker_id for r in self.records})

    def by_speaker(self, speaker_id: str) -> list[UtteranceRecord]:
        return [r for r in self.records if r.speaker_id == speaker_id]


def read_waveform(path) -> tuple[np.ndarray, int]:
    """Read a WAV file to float64 in [-1, 1]."""
    rate, data = wavfile.read(path)
    if data.ndim > 1:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        data = data / 32768.0
    elif data.dtype == np.int32:
        data = data / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(np.float64) - 128.0) / 128.0
    return np.asarray(data, dtype=np.float64), int(rate)


def _mel_for_entry(entry: ManifestEntry, base: Path, config: MelConfig) -> MelSpectrogram:
    audio_path = base / entry.audio
    if audio_path.suffix == ".mel":
        return read_mel_cache(audio_path)
    wav, rate = read_waveform(audio_path)
    return extract_mel(wav, rate, config)


def load_corpus(manifest_path, mel_config: MelConfig | None = None,
                vocabulary: Vocabulary | None = None) -> Corpus:
    """Load, featurize, and validate every manifest entry.

    Paths inside the manifest are resolved relative to the manifest file.
    The ``audio`` field may point at a WAV file or a ``.mel`` feature-cache
    file.  A vocabulary is built from the manifest (sorted symbols) unless
    one is supplied.
    """
    mel_config = mel_config or MelConfig()
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    entries = load_manifest(manifest_path)
    if vocabulary is None:
        symbols: set[str] = set()
        for e in entries:
            symbols.update(e.phonemes)
        vocabulary = Vocabulary.from_symbols(symbols)
    records = []
    for entry in entries:
        mel = _mel_for_entry(entry, base, mel_config)
        durations = load_alignment(base / entry.alignment, entry.phonemes)
        record = UtteranceRecord(
            id=entry.id,
            speaker_id=entry.speaker,
            phonemes=vocabulary.encode(entry.phonemes),
            mel=mel,
            durations=durations,
            synthetic=entry.synthetic,
        )
        records.append(validate_record(record, vocab_size=len(vocabulary)))
    if not records:
        raise ValidationError(f"{manifest_path}: empty corpus")
    return Corpus(records=records, vocabulary=vocabulary, mel_config=mel_config)
