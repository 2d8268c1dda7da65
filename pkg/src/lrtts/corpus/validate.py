"""Record validation: reconcile aligner frame counts with extracted features."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..errors import ValidationError
from .types import DurationSequence, UtteranceRecord

MISMATCH_TOLERANCE = 2  # frames; aligner/feature hop rounding drifts by 1-2


def validate_record(record: UtteranceRecord, vocab_size: int | None = None) -> UtteranceRecord:
    """Return a record satisfying sum(durations) == mel frames.

    A drift of up to two frames is absorbed by adjusting the last nonzero
    duration; anything larger is an error.

    Raises:
        ValidationError: on a mismatch beyond tolerance, an adjustment that
            would drive a duration negative, or an out-of-vocabulary id.
    """
    if vocab_size is not None and np.any(record.phonemes.ids >= vocab_size):
        raise ValidationError(
            f"record '{record.id}': phoneme id >= vocabulary size {vocab_size}")
    total = record.durations.total
    t = record.mel.n_frames
    diff = t - total
    if diff == 0:
        return record
    if abs(diff) > MISMATCH_TOLERANCE:
        raise ValidationError(
            f"record '{record.id}': duration total {total} vs {t} mel frames "
            f"(mismatch {abs(diff)} exceeds tolerance {MISMATCH_TOLERANCE})")
    frames = record.durations.frames.copy()
    nonzero = np.flatnonzero(frames)
    if nonzero.size == 0:
        raise ValidationError(f"record '{record.id}': all durations are zero")
    last = nonzero[-1]
    if frames[last] + diff < 0:
        raise ValidationError(
            f"record '{record.id}': cannot absorb {-diff}-frame drift in the "
            f"last nonzero duration ({frames[last]})")
    frames[last] += diff
    return replace(record, durations=DurationSequence(frames))
