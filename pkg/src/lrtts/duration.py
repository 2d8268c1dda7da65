"""External phoneme-duration model.

Two variants share the regression head (dense projection to one dimension,
then ReLU):

* ``separate`` (low-resource path): its own phoneme encoder at hidden 256
  plus an affine speaker projection; trained on log-domain L2.
* ``joint`` (full-data anchors): a head over the acoustic encoder's phoneme
  embeddings concatenated with the VAE latent; its auxiliary L1 loss joins
  the acoustic objective with weight 0.025.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .corpus.types import (DurationSequence, PhonemeSequence, SpeakerEmbedding,
                           UtteranceRecord)
from .errors import ConfigError, ValidationError
from .nn import (Adam, BiLSTM, Conv1d, Dropout, Embedding, Linear, Module,
                 ModuleList, Tensor, as_tensor, concat)

JOINT_AUX_WEIGHT = 0.025
LOG_PRED_FLOOR = 1e-4


@dataclass(frozen=True)
class DurationConfig:
    vocab_size: int
    mode: str = "separate"
    hidden: int = 256
    kernel: int = 3
    blocks: int = 3
    speaker_dim: int = 256
    speaker_proj: int = 64
    joint_input_dim: int = 0
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("separate", "joint"):
            raise ConfigError(f"unknown duration-model mode {self.mode!r}")
        if self.mode == "joint" and self.joint_input_dim <= 0:
            raise ConfigError("joint mode needs joint_input_dim (enc_hidden + latent)")

    @classmethod
    def paper(cls, vocab_size: int, speaker_dim: int = 256, seed: int = 0):
        return cls(vocab_size=vocab_size, speaker_dim=speaker_dim, seed=seed)

    @classmethod
    def desk(cls, vocab_size: int, speaker_dim: int = 16, seed: int = 0):
        return cls(vocab_size=vocab_size, speaker_dim=speaker_dim, hidden=64,
                   speaker_proj=16, seed=seed)

    @classmethod
    def joint_head(cls, vocab_size: int, enc_hidden: int, latent: int, seed: int = 0):
        return cls(vocab_size=vocab_size, mode="joint",
                   joint_input_dim=enc_hidden + latent, seed=seed)

    def to_dict(self) -> dict:
        return asdict(self)


class DurationModel(Module):
    def __init__(self, config: DurationConfig, rng: np.random.Generator | None = None):
        super().__init__()
        self.config = config
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.rng = rng
        if config.mode == "separate":
            h = config.hidden
            self.embedding = Embedding(config.vocab_size, h, rng)
            self.convs = ModuleList([Conv1d(h, h, config.kernel, rng)
                                     for _ in range(config.blocks)])
            self.drop = Dropout(config.dropout, rng)
            self.lstm = BiLSTM(h, h // 2, rng)
            self.speaker_affine = Linear(config.speaker_dim, config.speaker_proj, rng)
            self.head = Linear(h + config.speaker_proj, 1, rng)
        else:
            self.head = Linear(config.joint_input_dim, 1, rng)

    @property
    def mode(self) -> str:
        return self.config.mode

    def forward_batch(self, ids: np.ndarray, lengths: np.ndarray | None,
                      speakers) -> Tensor:
        """(B, N) ids + (B, S) speaker vectors -> (B, N) non-negative predictions."""
        if self.mode != "separate":
            raise ConfigError("phoneme-sequence prediction needs a separate-mode model")
        speakers = as_tensor(speakers)
        B, N = ids.shape
        mask = None
        if lengths is not None and not np.all(np.asarray(lengths) == N):
            mask = Tensor((np.arange(N)[None, :] < np.asarray(lengths)[:, None])
                          .astype(np.float64)[:, :, None])
        x = self.embedding(ids)
        if mask is not None:
            x = x * mask
        for conv in self.convs:
            x = self.drop(conv(x).relu())
            if mask is not None:
                x = x * mask
        x = self.lstm(x, lengths)
        spk = self.speaker_affine(speakers)
        spk_rows = spk.reshape(B, 1, -1).broadcast_to((B, N, spk.shape[-1]))
        out = self.head(concat([x, spk_rows], axis=2)).relu()
        return out.reshape(B, N)

    def joint_forward(self, x_tilde: Tensor, z: Tensor) -> Tensor:
        """(B, N, H) embeddings + (B, Z) latent -> (B, N) non-negative predictions."""
        if self.mode != "joint":
            raise ConfigError("joint prediction needs a joint-mode model")
        x_tilde = as_tensor(x_tilde)
        z = as_tensor(z)
        B, N, h = x_tilde.shape
        if h + z.shape[-1] != self.config.joint_input_dim:
            raise ValidationError(
                f"joint input width {h + z.shape[-1]} != configured "
                f"{self.config.joint_input_dim}")
        z_rows = z.reshape(B, 1, -1).broadcast_to((B, N, z.shape[-1]))
        return self.head(concat([x_tilde, z_rows], axis=2)).relu().reshape(B, N)


# ---------------------------------------------------------------------------
# operations

def predict_durations(phonemes: PhonemeSequence, speaker: SpeakerEmbedding,
                      model: DurationModel) -> np.ndarray:
    """Real-valued per-phoneme durations, all >= 0 (ReLU output)."""
    out = model.forward_batch(phonemes.ids[None, :], None, speaker.vector[None, :])
    return out.data[0]


def predict_durations_joint(x_tilde: np.ndarray, z: np.ndarray,
                            model: DurationModel) -> np.ndarray:
    """Joint-mode predictions from acoustic embeddings and the latent vector."""
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    out = model.joint_forward(Tensor(x_tilde[None, :, :]), Tensor(z[None, :]))
    return out.data[0]


def duration_loss(pred: np.ndarray, gt: DurationSequence | np.ndarray) -> float:
    """L2 in the log domain; ground truth clamped to >= 1 frame before the log."""
    gt_frames = gt.frames if isinstance(gt, DurationSequence) else np.asarray(gt)
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != gt_frames.shape:
        raise ValidationError(f"length mismatch: {pred.shape} vs {gt_frames.shape}")
    log_pred = np.log(np.maximum(pred, LOG_PRED_FLOOR))
    log_gt = np.log(np.maximum(gt_frames.astype(np.float64), 1.0))
    return float(np.mean((log_pred - log_gt) ** 2))


def joint_aux_loss(pred: np.ndarray, gt: DurationSequence | np.ndarray,
                   weight: float = JOINT_AUX_WEIGHT) -> float:
    """Linear-domain auxiliary L1, scaled by the joint-training weight."""
    gt_frames = gt.frames if isinstance(gt, DurationSequence) else np.asarray(gt)
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != gt_frames.shape:
        raise ValidationError(f"length mismatch: {pred.shape} vs {gt_frames.shape}")
    return float(weight * np.mean(np.abs(pred - gt_frames)))


def quantize_durations(pred: np.ndarray) -> DurationSequence:
    """Round half away from zero, then clamp to >= 1 frame per phoneme."""
    pred = np.asarray(pred, dtype=np.float64)
    if np.any(pred < 0):
        raise ValidationError("durations to quantize must be non-negative")
    rounded = np.floor(pred + 0.5)
    return DurationSequence(np.maximum(rounded, 1.0).astype(np.int64))


def duration_loss_t(pred: Tensor, gt: np.ndarray, mask: np.ndarray | None) -> Tensor:
    """Tensor log-domain L2: per-utterance mean over valid phonemes, then batch mean."""
    log_pred = pred.clip_min(LOG_PRED_FLOOR).log()
    log_gt = np.log(np.maximum(np.asarray(gt, dtype=np.float64), 1.0))
    sq = (log_pred - Tensor(log_gt)).square()
    if mask is None:
        return sq.mean(axis=1).mean()
    m = Tensor(mask.astype(np.float64))
    per_utt = (sq * m).sum(axis=1) * Tensor(1.0 / np.maximum(mask.sum(axis=1), 1))
    return per_utt.mean()


def joint_aux_loss_t(pred: Tensor, gt: np.ndarray, mask: np.ndarray | None,
                     weight: float = JOINT_AUX_WEIGHT) -> Tensor:
    """Tensor auxiliary L1 for the joint acoustic objective."""
    diff = (pred - Tensor(np.asarray(gt, dtype=np.float64))).abs()
    if mask is None:
        return diff.mean(axis=1).mean() * weight
    m = Tensor(mask.astype(np.float64))
    per_utt = (diff * m).sum(axis=1) * Tensor(1.0 / np.maximum(mask.sum(axis=1), 1))
    return per_utt.mean() * weight


# ---------------------------------------------------------------------------
# training

@dataclass
class DurationTrainSettings:
    steps: int = 2_000
    batch_size: int = 32
    base_lr: float = 1e-3
    seed: int = 0


def make_duration_batch(records: list[UtteranceRecord],
                        speakers: dict[str, SpeakerEmbedding]):
    """Pad records into (ids, lengths, speakers, durations, mask) arrays."""
    B = len(records)
    n_max = max(len(r.phonemes) for r in records)
    ids = np.zeros((B, n_max), dtype=np.int64)
    durs = np.zeros((B, n_max), dtype=np.float64)
    spk = np.zeros((B, speakers[records[0].speaker_id].dim))
    lengths = np.zeros(B, dtype=np.int64)
    for i, rec in enumerate(records):
        n = len(rec.phonemes)
        ids[i, :n] = rec.phonemes.ids
        durs[i, :n] = rec.durations.frames
        spk[i] = speakers[rec.speaker_id].vector
        lengths[i] = n
    mask = np.arange(n_max)[None, :] < lengths[:, None]
    return ids, lengths, spk, durs, mask


def train_duration_model(records: list[UtteranceRecord],
                         speakers: dict[str, SpeakerEmbedding],
                         config: DurationConfig,
                         settings: DurationTrainSettings = DurationTrainSettings(),
                         lr_multiplier: Callable[[int], float] | None = None,
                         ) -> tuple[DurationModel, np.ndarray]:
    """Train a separate-mode model on all records (ground truth + synthetic).

    Returns the model and the per-step loss trace.  Deterministic for a
    fixed settings seed.

    Raises:
        ValidationError: empty corpus.
        ConfigError: a joint-mode config (joint heads train with the
            acoustic model, not here).
    """
    if not records:
        raise ValidationError("cannot train a duration model on an empty corpus")
    if config.mode != "separate":
        raise ConfigError("train_duration_model trains separate-mode models only")
    rng = np.random.default_rng(settings.seed)
    model = DurationModel(config, rng=np.random.default_rng(settings.seed + 1))
    model.train(True)
    opt = Adam(model.parameters())
    losses = np.zeros(settings.steps)
    for step in range(settings.steps):
        take = rng.choice(len(records), size=min(settings.batch_size, len(records)),
                          replace=len(records) < settings.batch_size)
        batch = [records[i] for i in take]
        ids, lengths, spk, durs, mask = make_duration_batch(batch, speakers)
        pred = model.forward_batch(ids, lengths, spk)
        loss = duration_loss_t(pred, durs, mask)
        model.zero_grad()
        loss.backward()
        mult = lr_multiplier(step) if lr_multiplier is not None else 1.0
        opt.step(lr=settings.base_lr * mult)
        losses[step] = float(loss.data)
    model.eval()
    return model, losses
