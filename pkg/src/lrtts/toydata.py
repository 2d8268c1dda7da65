"""Deterministic synthetic corpora for demos and desk-scale verification.

Every generator maps phoneme identity (and speaker, and position inside the
phoneme) to spectra through a fixed closed-form rule, so small models can be
trained to near-zero error and every expected quantity is computable by hand.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .corpus import (DurationSequence, MelConfig, MelSpectrogram,
                     PhonemeSequence, SpeakerEmbedding, UtteranceRecord,
                     Vocabulary, extract_mel, write_mel_cache)

TOY_LOG_FLOOR = float(np.log(1e-5))


def make_toy_speakers(speaker_ids, dim: int = 16, seed: int = 0
                      ) -> dict[str, SpeakerEmbedding]:
    rng = np.random.default_rng(seed)
    out = {}
    for sid in speaker_ids:
        vec = rng.standard_normal(dim)
        out[sid] = SpeakerEmbedding(sid, vec / np.linalg.norm(vec))
    return out


def phoneme_spectrum(phoneme_id: int, bins: int, speaker_shift: float = 0.0,
                     progress: float = 1.0) -> np.ndarray:
    """Log-mel column for one phoneme: a band bump whose height tracks the
    fractional position of the frame inside the phoneme."""
    col = np.full(bins, -4.0)
    peak = (phoneme_id * 2 + 1) % bins
    col[peak] = -0.5 - 0.4 * (1.0 - progress)
    col[(peak + 1) % bins] = -1.5 + 0.3 * speaker_shift
    return col + 0.2 * speaker_shift


def render_toy_mel(phoneme_ids: np.ndarray, durations: np.ndarray, bins: int,
                   speaker_shift: float, hop_s: float = 256 / 22050,
                   rate: int = 22050) -> MelSpectrogram:
    rows = []
    for p, d in zip(phoneme_ids, durations):
        for k in range(int(d)):
            rows.append(phoneme_spectrum(int(p), bins, speaker_shift,
                                         progress=(k + 1) / d))
    data = np.maximum(np.stack(rows), TOY_LOG_FLOOR)
    return MelSpectrogram(data, frame_hop_s=hop_s, sample_rate=rate,
                          log_floor=TOY_LOG_FLOOR)


def make_toy_corpus(counts: dict[str, int] | None = None, bins: int = 20,
                    vocab_size: int = 10, seed: int = 0,
                    min_frames: int = 0, speaker_dim: int = 16,
                    min_phonemes: int = 6, max_phonemes: int = 10,
                    min_duration: int = 4, max_duration: int = 9):
    """Mel-level toy corpus.

    Args:
        counts: utterances per speaker, e.g. {"tgt": 8, "sup": 6}.
        min_frames: resample utterances until they reach this many frames
            (needed when 64-frame GAN crops must exist).

    Returns:
        (records, vocabulary, speakers) with validated-by-construction records.
    """
    counts = counts or {"tgt": 8}
    rng = np.random.default_rng(seed)
    vocab = Vocabulary([f"p{i}" for i in range(vocab_size - 1)] + ["sil"])
    speakers = make_toy_speakers(sorted(counts), dim=speaker_dim, seed=seed + 1)
    shifts = {sid: float(i) - (len(counts) - 1) / 2
              for i, sid in enumerate(sorted(counts))}
    records = []
    for sid in sorted(counts):
        for i in range(counts[sid]):
            while True:
                n_ph = int(rng.integers(min_phonemes, max_phonemes + 1))
                ids = rng.integers(0, vocab_size, size=n_ph)
                durs = rng.integers(min_duration, max_duration + 1, size=n_ph)
                if durs.sum() >= min_frames:
                    break
            mel = render_toy_mel(ids, durs, bins, shifts[sid])
            records.append(UtteranceRecord(
                id=f"{sid}_{i:03d}", speaker_id=sid,
                phonemes=PhonemeSequence(ids), mel=mel,
                durations=DurationSequence(durs), synthetic=False))
    return records, vocab, speakers


def write_toy_corpus_files(root, counts: dict[str, int] | None = None,
                           mel_config: MelConfig | None = None, seed: int = 0,
                           speaker_dim: int = 16, use_wav: bool = True,
                           min_phonemes: int = 4, max_phonemes: int = 7,
                           min_duration: int = 4, max_duration: int = 8):
    """Write a toy corpus as external files: manifest, alignments, audio, sidecar.

    With ``use_wav`` each utterance is a per-phoneme tone (phoneme id sets the
    pitch), sized so the aligner frame counts match mel extraction exactly;
    otherwise mels render directly into ``.mel`` cache files.

    Returns (manifest_path, sidecar_path).
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    counts = counts or {"tgt": 4}
    cfg = mel_config or MelConfig(n_bins=20, win_length=512, hop_length=128)
    rng = np.random.default_rng(seed)
    vocab_symbols = [f"p{i}" for i in range(8)]
    speakers = make_toy_speakers(sorted(counts), dim=speaker_dim, seed=seed + 1)
    manifest_lines = []
    for sid in sorted(counts):
        for i in range(counts[sid]):
            uid = f"{sid}_{i:03d}"
            n_ph = int(rng.integers(min_phonemes, max_phonemes + 1))
            ids = rng.integers(0, len(vocab_symbols), size=n_ph)
            durs = rng.integers(min_duration, max_duration + 1, size=n_ph)
            symbols = [vocab_symbols[p] for p in ids]
            alignment = [{"phoneme": s, "frames": int(d)}
                         for s, d in zip(symbols, durs)]
            (root / f"{uid}.json").write_text(json.dumps(alignment))
            if use_wav:
                total = int(durs.sum())
                n_samples = cfg.win_length + (total - 1) * cfg.hop_length
                t = np.arange(n_samples) / cfg.sample_rate
                wav = np.zeros(n_samples)
                # phoneme id picks the tone; boundaries follow the alignment
                edges = np.concatenate([[0], np.cumsum(durs)]) * cfg.hop_length
                for p, lo, hi in zip(ids, edges[:-1], edges[1:]):
                    hi = min(int(hi + cfg.win_length), n_samples) if hi == edges[-1] \
                        else int(hi)
                    f0 = 110.0 * (2.0 ** (p / 4.0))
                    wav[int(lo):hi] = 0.4 * np.sin(2 * np.pi * f0 * t[int(lo):hi])
                wavfile.write(root / f"{uid}.wav", cfg.sample_rate,
                              (wav * 32767).astype(np.int16))
                audio_name = f"{uid}.wav"
            else:
                shift = float(sorted(counts).index(sid)) - (len(counts) - 1) / 2
                mel = render_toy_mel(ids, durs, cfg.n_bins, shift,
                                     hop_s=cfg.frame_hop_s, rate=cfg.sample_rate)
                write_mel_cache(root / f"{uid}.mel", mel)
                audio_name = f"{uid}.mel"
            manifest_lines.append(json.dumps({
                "id": uid, "audio": audio_name, "speaker": sid,
                "phonemes": symbols, "alignment": f"{uid}.json",
                "synthetic": False}))
    manifest_path = root / "manifest.jsonl"
    manifest_path.write_text("\n".join(manifest_lines) + "\n")
    sidecar_path = root / "speakers.json"
    sidecar_path.write_text(json.dumps(
        {sid: emb.vector.tolist() for sid, emb in speakers.items()}, sort_keys=True))
    return manifest_path, sidecar_path


# ---------------------------------------------------------------------------
# matched/mismatched crop task for the conditioning-value experiment

def crop_task_batch(rng: np.random.Generator, n: int, bins: int = 16,
                    n_classes: int = 6, crop: int = 64, latent_dim: int = 4,
                    noise: float = 0.1):
    """Half matched (real), half mismatched (fake) conditioning/mel pairs.

    The mel marginal is identical for both halves, so only a discriminator
    that reads the conditioning can separate them.

    Returns (mel (n, crop, bins), emb (n, crop, n_classes), z (n, latent),
    is_real (n,) bool).
    """
    mel = np.zeros((n, crop, bins))
    emb = np.zeros((n, crop, n_classes))
    z = rng.standard_normal((n, latent_dim)) * 0.1
    is_real = np.arange(n) % 2 == 0
    for i in range(n):
        mel_class = int(rng.integers(0, n_classes))
        if is_real[i]:
            cond_class = mel_class
        else:
            cond_class = int((mel_class + 1 + rng.integers(0, n_classes - 1))
                             % n_classes)
        band = (mel_class * 2 + 1) % bins
        base = np.full((crop, bins), -3.0)
        base[:, band] = -0.5
        mel[i] = base + noise * rng.standard_normal((crop, bins))
        emb[i, :, cond_class] = 1.0
    return mel, emb, z, is_real
