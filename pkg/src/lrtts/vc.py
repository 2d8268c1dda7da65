"""Voice-conversion model for synthetic-data augmentation.

Three parts: a phoneme encoder over duration-upsampled phoneme embeddings
with the source speaker vector concatenated per frame, a prosody bottleneck
encoder that strides the reference mel down 4x into a few channels, and a
parallel decoder that rebuilds the mel from phoneme hiddens, upsampled
prosody, and the target speaker vector.  Output length always equals input
length, so durations survive conversion unchanged.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .corpus.types import (DurationSequence, MelSpectrogram, SpeakerEmbedding,
                           UtteranceRecord)
from .errors import ConfigError, ValidationError
from .nn import (Adam, Conv1d, Embedding, Linear, Module, ModuleList, Tensor,
                 concat, gather_frames)
from .acoustic import frame_to_phoneme_map

PROSODY_STRIDE = 4  # two stride-2 blocks


@dataclass(frozen=True)
class VcConfig:
    vocab_size: int
    mel_bins: int = 80
    speaker_dim: int = 256
    embed_dim: int = 64
    hidden: int = 256
    kernel: int = 5
    enc_blocks: int = 3
    dec_blocks: int = 4
    prosody_channels: int = 8
    prosody_hidden: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.prosody_channels >= self.mel_bins:
            raise ConfigError(
                f"prosody bottleneck ({self.prosody_channels}) must be narrower "
                f"than the mel ({self.mel_bins} bins)")

    @classmethod
    def desk(cls, vocab_size: int, mel_bins: int = 20, speaker_dim: int = 16,
             seed: int = 0):
        return cls(vocab_size=vocab_size, mel_bins=mel_bins, speaker_dim=speaker_dim,
                   embed_dim=16, hidden=64, prosody_hidden=16, prosody_channels=4,
                   seed=seed)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ProsodySequence:
    """ceil(T/4) x C bottleneck features extracted from a reference mel."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValidationError("prosody sequence must be 2-D")

    @property
    def n_frames(self) -> int:
        return int(self.data.shape[0])

    @property
    def n_channels(self) -> int:
        return int(self.data.shape[1])


def _length_mask(lengths, t_max):
    if lengths is None:
        return None
    lengths = np.asarray(lengths)
    if np.all(lengths == t_max):
        return None
    return Tensor((np.arange(t_max)[None, :] < lengths[:, None])
                  .astype(np.float64)[:, :, None])


class VcModel(Module):
    def __init__(self, config: VcConfig, rng: np.random.Generator | None = None):
        super().__init__()
        self.config = config
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.rng = rng
        c = config
        self.embedding = Embedding(c.vocab_size, c.embed_dim, rng)
        enc_in = c.embed_dim + c.speaker_dim
        self.enc_convs = ModuleList(
            [Conv1d(enc_in if i == 0 else c.hidden, c.hidden, c.kernel, rng)
             for i in range(c.enc_blocks)])
        self.prosody_conv1 = Conv1d(c.mel_bins, c.prosody_hidden, c.kernel, rng, stride=2)
        self.prosody_conv2 = Conv1d(c.prosody_hidden, c.prosody_channels, c.kernel,
                                    rng, stride=2)
        dec_in = c.hidden + c.prosody_channels + c.speaker_dim
        self.dec_convs = ModuleList(
            [Conv1d(dec_in if i == 0 else c.hidden, c.hidden, c.kernel, rng)
             for i in range(c.dec_blocks)])
        self.dec_out = Linear(c.hidden, c.mel_bins, rng)

    # -- batched internals ----------------------------------------------------

    def assemble_encoder_input(self, ids: np.ndarray, durations: np.ndarray,
                               speakers: np.ndarray):
        """Upsampled phoneme embeddings with the speaker vector per frame.

        Returns (input Tensor (B, T, embed+speaker), frame_lengths, mask).
        """
        B, N = ids.shape
        if durations.shape != (B, N):
            raise ValidationError("duration grid must match phoneme grid")
        frame_lengths = durations.sum(axis=1).astype(np.int64)
        if np.any(frame_lengths < 1):
            raise ValidationError("all durations are zero for some utterance")
        t_max = int(frame_lengths.max())
        fmap = np.zeros((B, t_max), dtype=np.int64)
        for b in range(B):
            fmap[b, :frame_lengths[b]] = frame_to_phoneme_map(durations[b])
        frames = gather_frames(self.embedding(ids), fmap)
        spk = Tensor(np.broadcast_to(speakers[:, None, :],
                                     (B, t_max, speakers.shape[1])))
        x = concat([frames, spk], axis=2)
        mask = _length_mask(frame_lengths, t_max)
        if mask is not None:
            x = x * mask
        return x, frame_lengths, mask

    def encode_batch(self, ids, durations, speakers):
        x, frame_lengths, mask = self.assemble_encoder_input(ids, durations, speakers)
        for conv in self.enc_convs:
            x = conv(x).relu()
            if mask is not None:
                x = x * mask
        return x, frame_lengths, mask

    def prosody_batch(self, mel, frame_lengths=None):
        """(B, T, bins) -> (B, ceil(T/4), C); per-sequence lengths ceil(len/4)."""
        x = Tensor(mel) if not isinstance(mel, Tensor) else mel
        mask = _length_mask(frame_lengths, x.shape[1])
        if mask is not None:
            x = x * mask
        x = self.prosody_conv1(x).relu()
        if frame_lengths is not None:
            half = -(-np.asarray(frame_lengths) // 2)
            m = _length_mask(half, x.shape[1])
            if m is not None:
                x = x * m
        x = self.prosody_conv2(x)
        return x

    def decode_batch(self, frame_hidden: Tensor, prosody: Tensor,
                     target_speakers: np.ndarray, frame_lengths, mask):
        B, t_max, _ = frame_hidden.shape
        upsample_idx = np.minimum(np.arange(t_max) // PROSODY_STRIDE,
                                  prosody.shape[1] - 1)
        prosody_frames = gather_frames(prosody, np.broadcast_to(upsample_idx[None, :],
                                                                (B, t_max)))
        spk = Tensor(np.broadcast_to(target_speakers[:, None, :],
                                     (B, t_max, target_speakers.shape[1])))
        x = concat([frame_hidden, prosody_frames, spk], axis=2)
        if mask is not None:
            x = x * mask
        for conv in self.dec_convs:
            x = conv(x).relu()
            if mask is not None:
                x = x * mask
        return self.dec_out(x)

    def forward_batch(self, ids, durations, source_speakers, mel,
                      target_speakers=None):
        """Reconstruction/conversion forward; returns (pred, frame_lengths, mask)."""
        target_speakers = source_speakers if target_speakers is None else target_speakers
        hidden, frame_lengths, mask = self.encode_batch(ids, durations, source_speakers)
        prosody = self.prosody_batch(mel, frame_lengths)
        pred = self.decode_batch(hidden, prosody, target_speakers, frame_lengths, mask)
        return pred, frame_lengths, mask


# ---------------------------------------------------------------------------
# operations

def _check_speaker_dim(model: VcModel, emb: SpeakerEmbedding) -> None:
    if emb.dim != model.config.speaker_dim:
        raise ValidationError(
            f"speaker embedding dim {emb.dim} != model speaker dim "
            f"{model.config.speaker_dim}")


def vc_encode_phonemes(model: VcModel, record: UtteranceRecord,
                       speaker: SpeakerEmbedding) -> np.ndarray:
    """Frame-level hidden sequence (T, hidden) for one utterance."""
    _check_speaker_dim(model, speaker)
    out, _, _ = model.encode_batch(record.phonemes.ids[None, :],
                                   record.durations.frames[None, :],
                                   speaker.vector[None, :])
    return out.data[0]


def vc_prosody_encode(model: VcModel, mel: MelSpectrogram) -> ProsodySequence:
    """Reference mel -> ceil(T/4) x C bottleneck features."""
    out = model.prosody_batch(mel.data[None, :, :])
    seq = ProsodySequence(out.data[0])
    expected = -(-mel.n_frames // PROSODY_STRIDE)
    assert seq.n_frames == expected, "stride arithmetic violated"
    return seq


def vc_convert(source: UtteranceRecord, target_speaker: SpeakerEmbedding,
               model: VcModel, source_speaker: SpeakerEmbedding) -> MelSpectrogram:
    """Convert a source utterance to the target speaker's identity.

    Content and prosody come from the source; output frame count equals the
    source frame count.
    """
    _check_speaker_dim(model, target_speaker)
    _check_speaker_dim(model, source_speaker)
    pred, _, _ = model.forward_batch(
        source.phonemes.ids[None, :], source.durations.frames[None, :],
        source_speaker.vector[None, :], source.mel.data[None, :, :],
        target_speakers=target_speaker.vector[None, :])
    data = np.maximum(pred.data[0], source.mel.log_floor)
    return MelSpectrogram(data, frame_hop_s=source.mel.frame_hop_s,
                          sample_rate=source.mel.sample_rate,
                          log_floor=source.mel.log_floor)


def augment_corpus(model: VcModel, source_records: list[UtteranceRecord],
                   target_speaker: SpeakerEmbedding,
                   speakers: dict[str, SpeakerEmbedding]) -> list[UtteranceRecord]:
    """One synthetic target-speaker record per source record.

    Raises:
        ValidationError: sources spanning more than one speaker.
    """
    if not source_records:
        return []
    source_ids = {r.speaker_id for r in source_records}
    if len(source_ids) != 1:
        raise ValidationError(
            f"augmentation sources must share one speaker, got {sorted(source_ids)}")
    source_speaker = speakers[next(iter(source_ids))]
    out = []
    for rec in source_records:
        converted = vc_convert(rec, target_speaker, model, source_speaker)
        out.append(UtteranceRecord(
            id=f"{rec.id}__to_{target_speaker.speaker_id}",
            speaker_id=target_speaker.speaker_id,
            phonemes=rec.phonemes,
            mel=converted,
            durations=rec.durations,
            synthetic=True,
        ))
    return out


# ---------------------------------------------------------------------------
# training

@dataclass
class VcTrainSettings:
    """Two-phase schedule: multi-speaker steps, then target-only epochs."""

    multi_steps: int = 500
    target_epochs: int = 32
    batch_size: int = 8
    base_lr: float = 2e-3
    seed: int = 0

    @classmethod
    def paper(cls) -> "VcTrainSettings":
        return cls(multi_steps=50_000, target_epochs=320, batch_size=32)


@dataclass
class VcTrainLog:
    losses: np.ndarray
    phase_speakers: dict[int, set]
    final_loss: float


def _vc_batch(records: list[UtteranceRecord], speakers: dict[str, SpeakerEmbedding]):
    B = len(records)
    n_max = max(len(r.phonemes) for r in records)
    t_max = max(r.mel.n_frames for r in records)
    bins = records[0].mel.n_bins
    ids = np.zeros((B, n_max), dtype=np.int64)
    durs = np.zeros((B, n_max), dtype=np.int64)
    mel = np.zeros((B, t_max, bins))
    spk = np.zeros((B, speakers[records[0].speaker_id].dim))
    for i, r in enumerate(records):
        n = len(r.phonemes)
        ids[i, :n] = r.phonemes.ids
        durs[i, :n] = r.durations.frames
        mel[i, :r.mel.n_frames] = r.mel.data
        spk[i] = speakers[r.speaker_id].vector
    return ids, durs, mel, spk


def _masked_l1(pred: Tensor, mel: np.ndarray, frame_lengths, mask) -> Tensor:
    diff = (pred - Tensor(mel)).abs()
    if mask is None:
        return diff.mean(axis=(1, 2)).mean()
    per_utt = (diff * mask).sum(axis=(1, 2)) * Tensor(
        1.0 / (np.asarray(frame_lengths, dtype=np.float64) * mel.shape[2]))
    return per_utt.mean()


def vc_train(records: list[UtteranceRecord], speakers: dict[str, SpeakerEmbedding],
             target_speaker: str, config: VcConfig,
             settings: VcTrainSettings = VcTrainSettings()) -> tuple[VcModel, VcTrainLog]:
    """L1 mel reconstruction over all speakers, then target-only fine-tuning.

    Raises:
        ValidationError: target speaker missing from the corpus.
    """
    target_records = [r for r in records if r.speaker_id == target_speaker]
    if not target_records:
        raise ValidationError(f"target speaker '{target_speaker}' not in corpus")
    rng = np.random.default_rng(settings.seed)
    model = VcModel(config, rng=np.random.default_rng(settings.seed + 1))
    model.train(True)
    opt = Adam(model.parameters())
    losses = []
    phase_speakers: dict[int, set] = {1: set(), 2: set()}

    def step(batch_records):
        ids, durs, mel, spk = _vc_batch(batch_records, speakers)
        pred, frame_lengths, mask = model.forward_batch(ids, durs, spk, mel)
        loss = _masked_l1(pred, mel, frame_lengths, mask)
        model.zero_grad()
        loss.backward()
        opt.step(lr=settings.base_lr)
        losses.append(float(loss.data))

    for _ in range(settings.multi_steps):
        take = rng.choice(len(records), size=min(settings.batch_size, len(records)),
                          replace=len(records) < settings.batch_size)
        batch = [records[i] for i in take]
        phase_speakers[1].update(r.speaker_id for r in batch)
        step(batch)

    for _ in range(settings.target_epochs):
        order = rng.permutation(len(target_records))
        for lo in range(0, len(order), settings.batch_size):
            batch = [target_records[i] for i in order[lo:lo + settings.batch_size]]
            phase_speakers[2].update(r.speaker_id for r in batch)
            step(batch)

    model.eval()
    return model, VcTrainLog(losses=np.array(losses), phase_speakers=phase_speakers,
                             final_loss=losses[-1] if losses else float("nan"))
