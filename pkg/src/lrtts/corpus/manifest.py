"""Manifest, alignment, and speaker-sidecar ingestion.

External formats:
  * Manifest: JSON-lines, one object per utterance with fields
    ``{id, audio, speaker, phonemes, alignment, synthetic}``.
  * Alignment: JSON list of ``{phoneme, frames}`` in utterance order.
  * Speaker sidecar: JSON map ``speaker_id -> [float, ...]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import AlignmentError, ManifestError, ValidationError
from .types import DurationSequence, SpeakerEmbedding

REQUIRED_FIELDS = ("id", "audio", "speaker", "phonemes", "alignment", "synthetic")


@dataclass
class ManifestEntry:
    id: str
    audio: str
    speaker: str
    phonemes: list[str]
    alignment: str
    synthetic: bool
    line: int


def load_manifest(path) -> list[ManifestEntry]:
    """Parse a JSON-lines manifest, preserving file order.

    Raises:
        ManifestError: on a malformed line (with its line number) or a
            duplicate utterance id (named at its second occurrence).
    """
    path = Path(path)
    entries: list[ManifestEntry] = []
    seen: dict[str, int] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise ManifestError(f"{path}:{lineno}: expected a JSON object")
            missing = [f for f in REQUIRED_FIELDS if f not in obj]
            if missing:
                raise ManifestError(f"{path}:{lineno}: missing fields {missing}")
            uid = str(obj["id"])
            if uid in seen:
                raise ManifestError(
                    f"{path}:{lineno}: duplicate id '{uid}' (first seen on line {seen[uid]})")
            seen[uid] = lineno
            if not isinstance(obj["phonemes"], list) or not obj["phonemes"]:
                raise ManifestError(f"{path}:{lineno}: 'phonemes' must be a non-empty list")
            entries.append(ManifestEntry(
                id=uid,
                audio=str(obj["audio"]),
                speaker=str(obj["speaker"]),
                phonemes=[str(p) for p in obj["phonemes"]],
                alignment=str(obj["alignment"]),
                synthetic=bool(obj["synthetic"]),
                line=lineno,
            ))
    return entries


def load_alignment(path, phonemes: list[str] | None = None) -> DurationSequence:
    """Read per-phoneme frame counts produced by an external aligner.

    When ``phonemes`` is given (the manifest's sequence), the alignment's
    labels are cross-checked against it.

    Raises:
        AlignmentError: on length or label mismatch with ``phonemes``.
        ValidationError: on negative frame counts or malformed content.
    """
    path = Path(path)
    try:
        items = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed alignment JSON ({exc.msg})") from None
    if not isinstance(items, list):
        raise ValidationError(f"{path}: alignment must be a JSON list")
    labels: list[str] = []
    frames: list[int] = []
    for i, item in enumerate(items):
        if not isinstance(item, dict) or "phoneme" not in item or "frames" not in item:
            raise ValidationError(f"{path}: entry {i} must have 'phoneme' and 'frames'")
        n = item["frames"]
        if not isinstance(n, int) or isinstance(n, bool) or n < 0:
            raise ValidationError(f"{path}: entry {i} has invalid frames {n!r}")
        labels.append(str(item["phoneme"]))
        frames.append(n)
    if phonemes is not None:
        if len(labels) != len(phonemes):
            raise AlignmentError(
                f"{path}: {len(labels)} aligned phonemes vs {len(phonemes)} in manifest")
        for i, (a, b) in enumerate(zip(labels, phonemes)):
            if a != b:
                raise AlignmentError(
                    f"{path}: phoneme mismatch at position {i}: aligner {a!r} vs manifest {b!r}")
    return DurationSequence(np.array(frames, dtype=np.int64))


def load_speaker_embeddings(path) -> dict[str, SpeakerEmbedding]:
    """Load the speaker-embedding sidecar; all vectors must share one dimension."""
    path = Path(path)
    try:
        table = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed sidecar JSON ({exc.msg})") from None
    if not isinstance(table, dict) or not table:
        raise ValidationError(f"{path}: sidecar must be a non-empty JSON object")
    out: dict[str, SpeakerEmbedding] = {}
    dim = None
    for speaker, vec in table.items():
        emb = SpeakerEmbedding(speaker, np.asarray(vec, dtype=np.float64))
        if dim is None:
            dim = emb.dim
        elif emb.dim != dim:
            raise ValidationError(
                f"{path}: speaker '{speaker}' has dimension {emb.dim}, expected {dim}")
        out[speaker] = emb
    return out


def save_speaker_embeddings(path, embeddings: dict[str, SpeakerEmbedding]) -> None:
    payload = {sid: emb.vector.tolist() for sid, emb in sorted(embeddings.items())}
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1), encoding="utf-8")


def save_manifest(path, entries: list[ManifestEntry]) -> None:
    """Write entries as JSON-lines in order (inverse of ``load_manifest``)."""
    lines = []
    for e in entries:
        lines.append(json.dumps({
            "id": e.id, "audio": e.audio, "speaker": e.speaker,
            "phonemes": e.phonemes, "alignment": e.alignment,
            "synthetic": e.synthetic,
        }, sort_keys=True))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
