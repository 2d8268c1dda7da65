"""Corpus ingestion walk-through.

Builds a small file-backed corpus (WAV audio + aligner outputs + manifest +
speaker sidecar), loads and validates it, extracts features, and computes
expressivity statistics for each speaker.

Run:  python3 demos/01_corpus_and_features.py
"""

import tempfile
from pathlib import Path

import numpy as np

from lrtts.corpus import (MelConfig, expressivity_profile, load_corpus,
                          read_waveform, reduce_corpus)
from lrtts.toydata import write_toy_corpus_files

workdir = Path(tempfile.mkdtemp(prefix="lrtts_demo1_"))
mel_config = MelConfig(n_bins=20, win_length=512, hop_length=128)

# Each utterance is a sequence of per-phoneme tones; the aligner files carry
# frame counts that match feature extraction exactly.
manifest, sidecar = write_toy_corpus_files(
    workdir, counts={"tgt": 4, "sup": 4}, mel_config=mel_config, seed=0)
print(f"corpus files in {workdir}")

corpus = load_corpus(manifest, mel_config=mel_config)
print(f"loaded {len(corpus.records)} validated records, "
      f"{len(corpus.vocabulary)} phoneme symbols")
for rec in corpus.records[:3]:
    print(f"  {rec.id}: {len(rec.phonemes)} phonemes, {rec.mel.n_frames} frames, "
          f"{rec.duration_s:.2f}s")

# Expressivity: pooled log-f0 / energy / duration statistics per speaker.
for speaker in corpus.speakers():
    records = corpus.by_speaker(speaker)
    waveforms = {r.id: read_waveform(workdir / f"{r.id}.wav")[0] for r in records}
    profile = expressivity_profile(records, waveforms, mel_config)
    f0 = profile.log_f0
    print(f"{speaker}: log-f0 var {f0.var:.4f}, duration var "
          f"{profile.duration.var:.2f}, voiced frames {profile.voiced_frame_count}"
          if f0 else f"{speaker}: unvoiced corpus")

# Data-reduction subsets: keep roughly half of the target speech.
total = sum(r.duration_s for r in corpus.records if r.speaker_id == "tgt")
subset = reduce_corpus(corpus.records, "tgt", budget_seconds=total / 2, seed=7)
kept = sum(r.duration_s for r in subset if r.speaker_id == "tgt")
print(f"reduction: kept {kept:.2f}s of {total:.2f}s target speech "
      f"({sum(r.speaker_id == 'tgt' for r in subset)} utterances)")
