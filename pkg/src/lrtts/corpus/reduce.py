"""Data-reduction subsets for low-resource training scenarios."""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .types import UtteranceRecord


def reduce_corpus(records: list[UtteranceRecord], target_speaker: str,
                  budget_seconds: float, seed: int) -> list[UtteranceRecord]:
    """Keep at most ``budget_seconds`` of target-speaker speech.

    Target utterances are shuffled with ``seed`` and added greedily until the
    next one would exceed the budget; every non-target record passes through.
    Output preserves the original corpus order.

    Raises:
        ValidationError: non-positive budget or absent target speaker.
    """
    if budget_seconds <= 0:
        raise ValidationError("budget must be positive")
    target_idx = [i for i, r in enumerate(records) if r.speaker_id == target_speaker]
    if not target_idx:
        raise ValidationError(f"target speaker '{target_speaker}' not in corpus")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(target_idx))
    selected: set[int] = set()
    total = 0.0
    for j in order:
        idx = target_idx[j]
        length = records[idx].duration_s
        if total + length > budget_seconds:
            break
        selected.add(idx)
        total += length
    return [r for i, r in enumerate(records)
            if r.speaker_id != target_speaker or i in selected]
