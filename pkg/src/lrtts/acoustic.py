"""Non-autoregressive acoustic model.

Phoneme encoder (embedding, 3 convs, bi-LSTM), utterance-level VAE over the
reference mel (6 convs, GRU, projection split into mu / log-sigma),
duration-driven upsampling with positional features, and a decoder of
residual gated convolutions followed by two unidirectional LSTMs.

Batched forwards mask right-padding so results equal per-utterance runs.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .corpus.types import (DurationSequence, MelSpectrogram, PhonemeSequence,
                           SpeakerEmbedding, UtteranceRecord)
from .errors import ValidationError
from .nn import (BiLSTM, Conv1d, Dropout, Embedding, GRU, LSTM, Linear, Module,
                 ModuleList, Tensor, as_tensor, concat, gather_frames)


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class AcousticConfig:
    """Model dimensions; ``paper`` holds published sizes, ``desk`` small ones."""

    vocab_size: int
    mel_bins: int = 80
    speaker_dim: int = 256
    enc_hidden: int = 512
    enc_kernel: int = 3
    enc_blocks: int = 3
    vae_hidden: int = 128
    vae_latent: int = 64
    vae_kernel: int = 5
    vae_blocks: int = 6
    dec_hidden: int = 512
    dec_kernel: int = 15
    dec_blocks: int = 9
    pos_width: int = 32
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.pos_width % 2 != 0:
            raise ValidationError("pos_width must be even (interleaved sin/cos)")
        if self.enc_hidden % 2 != 0:
            raise ValidationError("enc_hidden must be even (bi-directional halves)")

    @property
    def conditioning_width(self) -> int:
        return (self.enc_hidden + self.vae_latent + self.speaker_dim + 2
                + 2 * self.pos_width + 1)

    @classmethod
    def paper(cls, vocab_size: int, mel_bins: int = 80, speaker_dim: int = 256,
              seed: int = 0) -> "AcousticConfig":
        return cls(vocab_size=vocab_size, mel_bins=mel_bins, speaker_dim=speaker_dim,
                   seed=seed)

    @classmethod
    def desk(cls, vocab_size: int, mel_bins: int = 20, speaker_dim: int = 16,
             seed: int = 0) -> "AcousticConfig":
        return cls(vocab_size=vocab_size, mel_bins=mel_bins, speaker_dim=speaker_dim,
                   enc_hidden=64, vae_hidden=32, vae_latent=8, dec_hidden=64,
                   dec_kernel=7, pos_width=8, seed=seed)

    @classmethod
    def tiny(cls, vocab_size: int, mel_bins: int = 6, speaker_dim: int = 4,
             seed: int = 0) -> "AcousticConfig":
        """Hidden-16 configuration for finite-difference gradient checks."""
        return cls(vocab_size=vocab_size, mel_bins=mel_bins, speaker_dim=speaker_dim,
                   enc_hidden=16, enc_blocks=2, vae_hidden=16, vae_latent=8,
                   vae_blocks=2, dec_hidden=16, dec_blocks=2, dec_kernel=5,
                   pos_width=4, seed=seed)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class KlAnnealSchedule:
    """Logistic ramp of the KL weight from ~0 to gamma_max between two steps."""

    start: int = 1_000
    end: int = 10_000
    gamma_max: float = 1e-2

    def __post_init__(self):
        if self.start >= self.end:
            raise ValidationError("KL anneal schedule needs start < end")


def kl_anneal_weight(step: int, schedule: KlAnnealSchedule) -> float:
    """KL weight at ``step``: < 1% of gamma_max at start, > 99% at end, monotone."""
    midpoint = 0.5 * (schedule.start + schedule.end)
    span = schedule.end - schedule.start
    gamma = schedule.gamma_max / (1.0 + np.exp(-10.0 * (step - midpoint) / span))
    return float(np.clip(gamma, 0.0, schedule.gamma_max))


# ---------------------------------------------------------------------------
# posteriors and losses

@dataclass
class VaePosterior:
    """Diagonal-Gaussian posterior for one utterance."""

    mu: np.ndarray
    log_sigma: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.log_sigma = np.asarray(self.log_sigma, dtype=np.float64)
        if self.mu.shape != self.log_sigma.shape or self.mu.ndim != 1:
            raise ValidationError("posterior mu/log_sigma must be matching vectors")
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.log_sigma))):
            raise ValidationError("posterior contains non-finite entries")


def vae_sample(posterior: VaePosterior, rng: np.random.Generator) -> np.ndarray:
    """Reparameterized draw z = mu + sigma * eps with eps ~ N(0, I)."""
    eps = rng.standard_normal(posterior.mu.shape)
    return posterior.mu + np.exp(posterior.log_sigma) * eps


def kl_divergence(posterior: VaePosterior) -> float:
    """KL(q || N(0, I)) summed over dimensions."""
    mu, ls = posterior.mu, posterior.log_sigma
    return float(0.5 * np.sum(mu ** 2 + np.exp(2.0 * ls) - 1.0 - 2.0 * ls))


def kl_divergence_t(mu: Tensor, log_sigma: Tensor) -> Tensor:
    """Tensor KL per batch row, shape (B,)."""
    return ((mu.square() + (log_sigma * 2.0).exp() - 1.0 - log_sigma * 2.0)
            * 0.5).sum(axis=1)


def loss_train(pred: np.ndarray, target: np.ndarray, posterior: VaePosterior,
               gamma: float) -> float:
    """Training objective: mean |pred - target| + gamma * KL."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValidationError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean(np.abs(pred - target)) + gamma * kl_divergence(posterior))


# ---------------------------------------------------------------------------
# positional features and upsampling

def sinusoid_embedding(positions: np.ndarray, width: int) -> np.ndarray:
    """Interleaved sin/cos transformer embedding; position 0 -> [0,1,0,1,...]."""
    positions = np.asarray(positions, dtype=np.float64)
    half = width // 2
    freqs = 1.0 / (10000.0 ** (2.0 * np.arange(half) / width))
    angles = positions[..., None] * freqs
    out = np.empty(positions.shape + (width,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def positional_features(durations: DurationSequence | np.ndarray, width: int) -> np.ndarray:
    """(T, 2*width+1) per-frame features: embed(duration), embed(frame index),
    and fractional progress (k+1)/d reaching exactly 1.0 on a phoneme's last frame.

    Zero-duration phonemes emit no rows.
    """
    frames = durations.frames if isinstance(durations, DurationSequence) else \
        np.asarray(durations, dtype=np.int64)
    total = int(frames.sum())
    if total < 1:
        raise ValidationError("positional features need at least one frame")
    d_per_frame = np.repeat(frames, frames).astype(np.float64)
    starts = np.repeat(np.cumsum(frames) - frames, frames)
    k = np.arange(total, dtype=np.float64) - starts
    progress = (k + 1.0) / d_per_frame
    return np.concatenate([
        sinusoid_embedding(d_per_frame, width),
        sinusoid_embedding(k, width),
        progress[:, None],
    ], axis=1)


def frame_to_phoneme_map(frames: np.ndarray) -> np.ndarray:
    """Monotone non-decreasing frame index -> phoneme index map."""
    return np.repeat(np.arange(frames.size), frames)


@dataclass
class FrameConditioning:
    """Upsampled decoder input for one utterance."""

    data: np.ndarray            # (T, F)
    frame_map: np.ndarray       # (T,) phoneme index per frame
    n_frames: int


def synthetic_one_hot(flag: bool) -> np.ndarray:
    return np.array([0.0, 1.0]) if flag else np.array([1.0, 0.0])


def build_conditioning_batch(x_tilde: Tensor, z: Tensor, speakers: np.ndarray,
                             synthetic: np.ndarray, durations: np.ndarray,
                             pos_width: int):
    """Assemble decoder conditioning for a padded batch.

    Args:
        x_tilde: (B, N, H) phoneme embeddings.
        z: (B, Z) latent rows.
        speakers: (B, S) speaker vectors.
        synthetic: (B,) bool flags.
        durations: (B, N) int frames per phoneme (0 on padding).
        pos_width: per-embedding sinusoid width.

    Returns:
        (cond (B, T, F) Tensor, frame_lengths (B,), frame_map (B, T)).
    """
    B, N, _ = x_tilde.shape
    if durations.shape != (B, N):
        raise ValidationError(f"durations {durations.shape} do not match x_tilde rows {(B, N)}")
    frame_lengths = durations.sum(axis=1).astype(np.int64)
    if np.any(frame_lengths < 1):
        raise ValidationError("every utterance needs at least one frame")
    t_max = int(frame_lengths.max())

    frame_map = np.zeros((B, t_max), dtype=np.int64)
    pos = np.zeros((B, t_max, 2 * pos_width + 1))
    for b in range(B):
        t = frame_lengths[b]
        frame_map[b, :t] = frame_to_phoneme_map(durations[b])
        pos[b, :t] = positional_features(durations[b], pos_width)

    gathered = gather_frames(x_tilde, frame_map)               # (B, T, H)
    z_rows = z.reshape(B, 1, -1).broadcast_to((B, t_max, z.shape[-1]))
    one_hot = np.stack([synthetic_one_hot(bool(s)) for s in synthetic])
    static = np.concatenate([
        np.broadcast_to(speakers[:, None, :], (B, t_max, speakers.shape[1])),
        np.broadcast_to(one_hot[:, None, :], (B, t_max, 2)),
        pos,
    ], axis=2)
    cond = concat([gathered, z_rows, Tensor(static)], axis=2)
    valid = (np.arange(t_max)[None, :] < frame_lengths[:, None]).astype(np.float64)
    return cond * Tensor(valid[:, :, None]), frame_lengths, frame_map


def upsample_and_condition(x_tilde: np.ndarray, z: np.ndarray,
                           speaker: SpeakerEmbedding, synthetic: bool,
                           durations: DurationSequence,
                           pos_width: int = 32) -> FrameConditioning:
    """Single-utterance conditioning: [x_tilde | z | speaker | flag] + positional.

    ``pos_width`` must match the consuming model's configuration.

    Raises:
        ValidationError: duration/embedding count mismatch or zero total frames.
    """
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    frames = durations.frames
    if x_tilde.ndim != 2 or frames.size != x_tilde.shape[0]:
        raise ValidationError(
            f"{frames.size} durations for {x_tilde.shape[0]} phoneme embeddings")
    if int(frames.sum()) < 1:
        raise ValidationError("all durations are zero")
    fmap = frame_to_phoneme_map(frames)
    t = fmap.size
    data = np.concatenate([
        x_tilde[fmap],
        np.broadcast_to(np.asarray(z, dtype=np.float64), (t, np.size(z))),
        np.broadcast_to(speaker.vector, (t, speaker.dim)),
        np.broadcast_to(synthetic_one_hot(synthetic), (t, 2)),
        positional_features(frames, pos_width),
    ], axis=1)
    return FrameConditioning(data=data, frame_map=fmap, n_frames=t)


# ---------------------------------------------------------------------------
# model

class GatedConvBlock(Module):
    """x + dropout(tanh(conv_f(x)) * sigmoid(conv_g(x))), length preserved."""

    def __init__(self, width: int, kernel: int, dropout: float,
                 rng: np.random.Generator):
        super().__init__()
        self.conv_filter = Conv1d(width, width, kernel, rng)
        self.conv_gate = Conv1d(width, width, kernel, rng)
        self.drop = Dropout(dropout, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return x + self.drop(self.conv_filter(x).tanh() * self.conv_gate(x).sigmoid())


def _length_mask(lengths: np.ndarray | None, t_max: int):
    if lengths is None:
        return None
    lengths = np.asarray(lengths)
    if np.all(lengths == t_max):
        return None
    return Tensor((np.arange(t_max)[None, :] < lengths[:, None]).astype(np.float64)[:, :, None])


class AcousticModel(Module):
    """Encoder + VAE + decoder with batched, padding-safe forwards."""

    def __init__(self, config: AcousticConfig, rng: np.random.Generator | None = None):
        super().__init__()
        self.config = config
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.rng = rng
        h, k = config.enc_hidden, config.enc_kernel
        self.embedding = Embedding(config.vocab_size, h, rng)
        self.enc_convs = ModuleList([Conv1d(h, h, k, rng) for _ in range(config.enc_blocks)])
        self.enc_drop = Dropout(config.dropout, rng)
        self.enc_lstm = BiLSTM(h, h // 2, rng)

        vh = config.vae_hidden
        self.vae_convs = ModuleList(
            [Conv1d(config.mel_bins if i == 0 else vh, vh, config.vae_kernel, rng)
             for i in range(config.vae_blocks)])
        self.vae_drop = Dropout(config.dropout, rng)
        self.vae_gru = GRU(vh, vh, rng)
        self.vae_proj = Linear(vh, 2 * config.vae_latent, rng)

        dh = config.dec_hidden
        self.dec_in = Linear(config.conditioning_width, dh, rng)
        self.dec_blocks = ModuleList(
            [GatedConvBlock(dh, config.dec_kernel, config.dropout, rng)
             for _ in range(config.dec_blocks)])
        self.dec_lstm1 = LSTM(dh, dh, rng)
        self.dec_lstm2 = LSTM(dh, dh, rng)
        self.dec_drop = Dropout(config.dropout, rng)
        self.dec_out = Linear(dh, config.mel_bins, rng)

    # -- batched forwards ---------------------------------------------------

    def encode_batch(self, ids: np.ndarray, lengths: np.ndarray | None = None) -> Tensor:
        """(B, N) ids -> (B, N, enc_hidden); padded rows are zeroed."""
        if ids.ndim != 2 or ids.shape[1] < 1:
            raise ValidationError("phoneme id batch must be (B, N>=1)")
        mask = _length_mask(lengths, ids.shape[1])
        x = self.embedding(ids)
        if mask is not None:
            x = x * mask
        for conv in self.enc_convs:
            x = self.enc_drop(conv(x).relu())
            if mask is not None:
                x = x * mask
        x = self.enc_lstm(x, lengths)
        x = self.enc_drop(x)
        if mask is not None:
            x = x * mask
        return x

    def vae_posterior_batch(self, mel, frame_lengths: np.ndarray | None = None):
        """(B, T, bins) mel -> (mu, log_sigma), each (B, latent)."""
        x = as_tensor(mel)
        mask = _length_mask(frame_lengths, x.shape[1])
        for conv in self.vae_convs:
            x = self.vae_drop(conv(x).relu())
            if mask is not None:
                x = x * mask
        h = self.vae_gru.last_output(x, frame_lengths)
        stats = self.vae_proj(h)
        z = self.config.vae_latent
        return stats[:, :z], stats[:, z:]

    def decode_batch(self, cond: Tensor, frame_lengths: np.ndarray | None = None) -> Tensor:
        """(B, T, F) conditioning -> (B, T, mel_bins); frame count unchanged."""
        mask = _length_mask(frame_lengths, cond.shape[1])
        x = self.dec_in(cond)
        for blk in self.dec_blocks:
            x = blk(x)
            if mask is not None:
                x = x * mask
        x = self.dec_drop(self.dec_lstm1(x, frame_lengths))
        x = self.dec_drop(self.dec_lstm2(x, frame_lengths))
        return self.dec_out(x)

    def decoder_recurrent(self, x: Tensor, frame_lengths: np.ndarray | None = None) -> Tensor:
        """The decoder's recurrent tail alone (causal along time)."""
        return self.dec_lstm2(self.dec_lstm1(x, frame_lengths), frame_lengths)

    def vae_parameter_names(self) -> set[str]:
        return {name for name in self.parameters() if name.startswith("vae_")}


# ---------------------------------------------------------------------------
# single-utterance operations

def encode_phonemes(model: AcousticModel, phonemes: PhonemeSequence) -> np.ndarray:
    """Phoneme sequence -> (N, enc_hidden) embeddings x-tilde."""
    if len(phonemes) == 0:
        raise ValidationError("empty phoneme sequence")
    out = model.encode_batch(phonemes.ids[None, :])
    return out.data[0]


def vae_encode(model: AcousticModel, mel: MelSpectrogram) -> VaePosterior:
    """Reference mel -> posterior from the final recurrent state."""
    mu, log_sigma = model.vae_posterior_batch(mel.data[None, :, :])
    return VaePosterior(mu.data[0], log_sigma.data[0])


def vae_centroid(model: AcousticModel, records: list[UtteranceRecord]) -> np.ndarray:
    """Mean posterior mu over ground-truth (non-synthetic) records.

    Raises:
        ValidationError: when no ground-truth record is available.
    """
    ground_truth = [r for r in records if not r.synthetic]
    if not ground_truth:
        raise ValidationError("centroid needs at least one ground-truth record")
    mus = [vae_encode(model, r.mel).mu for r in ground_truth]
    return np.mean(np.stack(mus), axis=0)


def decode(model: AcousticModel, cond: FrameConditioning) -> np.ndarray:
    """Frame conditioning -> (T, mel_bins) prediction."""
    if cond.n_frames < 1:
        raise ValidationError("conditioning must cover at least one frame")
    out = model.decode_batch(Tensor(cond.data[None, :, :]))
    return out.data[0]
