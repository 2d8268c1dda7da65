"""Core data types shared by every stage of the pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError

LOG_FLOOR_DEFAULT = float(np.log(1e-5))


class Vocabulary:
    """Fixed phoneme inventory mapping symbols to integer ids."""

    def __init__(self, symbols):
        self.symbols = tuple(symbols)
        if len(set(self.symbols)) != len(self.symbols):
            raise ValidationError("vocabulary contains duplicate symbols")
        self._index = {s: i for i, s in enumerate(self.symbols)}

    @classmethod
    def from_symbols(cls, symbols) -> "Vocabulary":
        """Deterministic vocabulary: sorted unique symbols."""
        return cls(sorted(set(symbols)))

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def encode(self, symbols) -> "PhonemeSequence":
        try:
            ids = np.array([self._index[s] for s in symbols], dtype=np.int64)
        except KeyError as exc:
            raise ValidationError(f"symbol {exc.args[0]!r} not in vocabulary") from None
        return PhonemeSequence(ids)

    def decode(self, seq: "PhonemeSequence") -> list[str]:
        return [self.symbols[i] for i in seq.ids]


@dataclass
class PhonemeSequence:
    """Ordered phoneme ids (including word-boundary and silence symbols)."""

    ids: np.ndarray

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.ids.ndim != 1 or self.ids.size == 0:
            raise ValidationError("phoneme sequence must be a non-empty 1-D id array")
        if np.any(self.ids < 0):
            raise ValidationError("phoneme ids must be non-negative")

    def __len__(self) -> int:
        return int(self.ids.size)


@dataclass
class MelSpectrogram:
    """T x B log-amplitude mel energies plus the framing metadata."""

    data: np.ndarray
    frame_hop_s: float
    sample_rate: int
    log_floor: float = LOG_FLOOR_DEFAULT

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValidationError(f"mel must be (T>=1, B>=1), got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValidationError("mel contains non-finite values")
        if np.any(self.data < self.log_floor - 1e-9):
            raise ValidationError("mel contains values below the log floor")

    @property
    def n_frames(self) -> int:
        return int(self.data.shape[0])

    @property
    def n_bins(self) -> int:
        return int(self.data.shape[1])

    @property
    def duration_s(self) -> float:
        return self.n_frames * self.frame_hop_s


@dataclass
class DurationSequence:
    """Integer mel-frame counts per phoneme; zeros mark elided phonemes."""

    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.int64)
        if self.frames.ndim != 1:
            raise ValidationError("durations must be a 1-D integer array")
        if np.any(self.frames < 0):
            raise ValidationError("durations must be non-negative")

    def __len__(self) -> int:
        return int(self.frames.size)

    @property
    def total(self) -> int:
        return int(self.frames.sum())


@dataclass
class SpeakerEmbedding:
    """Fixed identity vector for one speaker, ingested from a sidecar file."""

    speaker_id: str
    vector: np.ndarray

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)
        if self.vector.ndim != 1 or self.vector.size == 0:
            raise ValidationError("speaker embedding must be a non-empty vector")

    @property
    def dim(self) -> int:
        return int(self.vector.size)


@dataclass
class UtteranceRecord:
    """One utterance: phonemes, mel, per-phoneme durations, provenance.

    Construction checks that durations and phonemes agree in count; the
    frame-sum invariant (sum(durations) == mel frames) is established by
    ``validate_record``.
    """

    id: str
    speaker_id: str
    phonemes: PhonemeSequence
    mel: MelSpectrogram
    durations: DurationSequence
    synthetic: bool = False

    def __post_init__(self):
        if len(self.durations) != len(self.phonemes):
            raise ValidationError(
                f"record '{self.id}': {len(self.durations)} durations for "
                f"{len(self.phonemes)} phonemes")

    @property
    def duration_s(self) -> float:
        return self.mel.duration_s


@dataclass(frozen=True)
class FeatureStats:
    mean: float
    var: float


@dataclass
class ExpressivityProfile:
    """Per-speaker mean/variance of log-f0, log energy, phoneme duration, and deltas.

    f0 statistics are None when no voiced frame exists in any record.
    """

    speaker_id: str
    n_records: int
    log_f0: FeatureStats | None
    delta_log_f0: FeatureStats | None
    energy: FeatureStats
    delta_energy: FeatureStats
    duration: FeatureStats
    delta_duration: FeatureStats
    voiced_frame_count: int = field(default=0)
