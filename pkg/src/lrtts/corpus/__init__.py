from .types import (LOG_FLOOR_DEFAULT, DurationSequence, ExpressivityProfile,
                    FeatureStats, MelSpectrogram, PhonemeSequence,
                    SpeakerEmbedding, UtteranceRecord, Vocabulary)
from .features import (MelConfig, extract_mel, frame_signal, hann_window,
                       hz_to_mel, mel_center_frequencies, mel_filterbank,
                       mel_to_hz, read_mel_cache, stft_magnitude, write_mel_cache)
from .manifest import (ManifestEntry, load_alignment, load_manifest,
                       load_speaker_embeddings, save_manifest,
                       save_speaker_embeddings)
from .validate import MISMATCH_TOLERANCE, validate_record
from .reduce import reduce_corpus
from .expressivity import F0Config, estimate_f0, expressivity_profile
from .loader import Corpus, load_corpus, read_waveform

__all__ = [
    "LOG_FLOOR_DEFAULT", "DurationSequence", "ExpressivityProfile", "FeatureStats",
    "MelSpectrogram", "PhonemeSequence", "SpeakerEmbedding", "UtteranceRecord",
    "Vocabulary",
    "MelConfig", "extract_mel", "frame_signal", "hann_window", "hz_to_mel",
    "mel_center_frequencies", "mel_filterbank", "mel_to_hz", "read_mel_cache",
    "stft_magnitude", "write_mel_cache",
    "ManifestEntry", "load_alignment", "load_manifest", "load_speaker_embeddings",
    "save_manifest", "save_speaker_embeddings",
    "MISMATCH_TOLERANCE", "validate_record",
    "reduce_corpus",
    "F0Config", "estimate_f0", "expressivity_profile",
    "Corpus", "load_corpus", "read_waveform",
]
