"""Conditional-GAN fine-tuning pieces.

The discriminator scores 64-frame mel crops.  Conditioning (phoneme
embeddings upsampled to frames, projected to a channel block, plus the
utterance latent broadcast per frame) is concatenated channel-wise with the
mel, so real/fake decisions can exploit linguistic and acoustic context.
Convolutions, attention projections, and the output head are
spectral-normalized; one self-attention layer sits mid-stack.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .corpus.types import MelSpectrogram
from .errors import ValidationError
from .nn import (Conv1d, Linear, Module, ModuleList, Parameter, SpectralNorm,
                 Tensor, as_tensor, concat, matmul, softmax)

CROP_FRAMES = 64


@dataclass
class MelCrop:
    """Aligned mel / phoneme-embedding chunk pair with its latent vector."""

    mel: np.ndarray          # (crop, bins)
    embeddings: np.ndarray   # (crop, emb_dim)
    z: np.ndarray            # (latent,)
    start_frame: int

    def __post_init__(self):
        if self.mel.shape[0] != self.embeddings.shape[0]:
            raise ValidationError("mel and embedding chunks differ in length")


def sample_crop_start(n_frames: int, rng: np.random.Generator,
                      crop: int = CROP_FRAMES) -> int | None:
    """Uniform start over [0, T - crop]; None signals a too-short utterance."""
    if n_frames < crop:
        return None
    return int(rng.integers(0, n_frames - crop + 1))


def crop_random(mel: np.ndarray | MelSpectrogram, emb_frames: np.ndarray,
                z: np.ndarray, rng: np.random.Generator,
                crop: int = CROP_FRAMES) -> MelCrop | None:
    """Sample one aligned crop; returns None when the utterance is too short."""
    mel_data = mel.data if isinstance(mel, MelSpectrogram) else np.asarray(mel)
    emb_frames = np.asarray(emb_frames)
    if mel_data.shape[0] != emb_frames.shape[0]:
        raise ValidationError(
            f"mel has {mel_data.shape[0]} frames but embeddings have "
            f"{emb_frames.shape[0]}")
    start = sample_crop_start(mel_data.shape[0], rng, crop)
    if start is None:
        return None
    return MelCrop(mel=mel_data[start:start + crop],
                   embeddings=emb_frames[start:start + crop],
                   z=np.asarray(z, dtype=np.float64),
                   start_frame=start)


def crop_tensors(mel: Tensor, emb: Tensor, start: int,
                 crop: int = CROP_FRAMES) -> tuple[Tensor, Tensor]:
    """Slice aligned (T, ...) tensors at one shared start frame."""
    assert mel.shape[0] == emb.shape[0], "crop inputs must share frame count"
    assert 0 <= start <= mel.shape[0] - crop, "crop start out of range"
    return mel[start:start + crop], emb[start:start + crop]


# ---------------------------------------------------------------------------
# losses

def loss_generator(score_real, score_fake) -> float:
    """Mean(real - fake); minimizing pushes fake scores upward."""
    real = np.asarray(score_real, dtype=np.float64)
    fake = np.asarray(score_fake, dtype=np.float64)
    return float(np.mean(real - fake))


def loss_discriminator(score_real, score_fake) -> float:
    """Hinge: mean(ReLU(1 + fake) + ReLU(1 - real))."""
    real = np.asarray(score_real, dtype=np.float64)
    fake = np.asarray(score_fake, dtype=np.float64)
    return float(np.mean(np.maximum(1.0 + fake, 0.0) + np.maximum(1.0 - real, 0.0)))


def loss_gan_finetune(l1: float, l_g: float, alpha: float) -> float:
    """Generator fine-tuning objective: l1 + alpha * l_g."""
    if alpha < 0:
        raise ValidationError("alpha must be non-negative")
    return float(l1 + alpha * l_g)


def loss_generator_t(score_real: Tensor, score_fake: Tensor) -> Tensor:
    return (score_real - score_fake).mean()


def loss_discriminator_t(score_real: Tensor, score_fake: Tensor) -> Tensor:
    return ((score_fake + 1.0).relu() + (1.0 - score_real).relu()).mean()


# ---------------------------------------------------------------------------
# discriminator

@dataclass(frozen=True)
class DiscriminatorConfig:
    mel_bins: int
    latent_dim: int
    emb_dim: int
    cond_channels: int = 64
    channels: tuple = (64, 128, 256, 256)
    kernel: int = 5
    attn_after: int = 2
    leak: float = 0.2
    conditioned: bool = True
    crop: int = CROP_FRAMES
    seed: int = 0

    @classmethod
    def desk(cls, mel_bins: int, latent_dim: int, emb_dim: int,
             conditioned: bool = True, seed: int = 0):
        return cls(mel_bins=mel_bins, latent_dim=latent_dim, emb_dim=emb_dim,
                   cond_channels=16, channels=(16, 32, 64, 64),
                   conditioned=conditioned, seed=seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d


class SelfAttention1d(Module):
    """SAGAN-style self-attention over time with a zero-initialized output gain."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        inner = max(channels // 8, 1)
        mid = max(channels // 2, 1)
        self.query = SpectralNorm(Linear(channels, inner, rng, bias=False), rng)
        self.key = SpectralNorm(Linear(channels, inner, rng, bias=False), rng)
        self.value = SpectralNorm(Linear(channels, mid, rng, bias=False), rng)
        self.out = SpectralNorm(Linear(mid, channels, rng, bias=False), rng)
        self.gain = Parameter(np.zeros(1))

    def __call__(self, x: Tensor) -> Tensor:
        q = self.query(x)                          # (B, T, inner)
        k = self.key(x)
        attn = softmax(matmul(q, k.transpose(0, 2, 1)), axis=2)  # (B, T, T)
        ctx = matmul(attn, self.value(x))          # (B, T, mid)
        return x + self.out(ctx) * self.gain


class Discriminator(Module):
    """Strided spectral-normalized conv stack over crops, one scalar per crop."""

    def __init__(self, config: DiscriminatorConfig,
                 rng: np.random.Generator | None = None):
        super().__init__()
        self.config = config
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.rng = rng
        in_ch = config.mel_bins
        if config.conditioned:
            self.cond_proj = Linear(config.emb_dim, config.cond_channels, rng)
            in_ch += config.cond_channels + config.latent_dim
        blocks = []
        prev = in_ch
        for ch in config.channels:
            blocks.append(SpectralNorm(Conv1d(prev, ch, config.kernel, rng, stride=2), rng))
            prev = ch
        self.blocks = ModuleList(blocks)
        self.attention = SelfAttention1d(config.channels[config.attn_after - 1], rng)
        self.head = SpectralNorm(Linear(prev, 1, rng), rng)

    def spectral_norm_layers(self) -> dict[str, SpectralNorm]:
        out = {}
        for i, blk in enumerate(self.blocks):
            out[f"blocks.{i}"] = blk
        for name in ("query", "key", "value", "out"):
            out[f"attention.{name}"] = getattr(self.attention, name)
        out["head"] = self.head
        return out

    def score_batch(self, mel, emb=None, z=None) -> Tensor:
        """(B, crop, bins) mel [+ conditioning] -> (B,) scores."""
        x = as_tensor(mel)
        B, t, _ = x.shape
        if t != self.config.crop:
            raise ValidationError(f"crops must be {self.config.crop} frames, got {t}")
        if self.config.conditioned:
            if emb is None or z is None:
                raise ValidationError("conditioned discriminator needs emb and z")
            emb = as_tensor(emb)
            z = as_tensor(z)
            z_rows = z.reshape(B, 1, -1).broadcast_to((B, t, z.shape[-1]))
            x = concat([x, self.cond_proj(emb), z_rows], axis=2)
        for i, blk in enumerate(self.blocks, start=1):
            x = blk(x).leaky_relu(self.config.leak)
            if i == self.config.attn_after:
                x = self.attention(x)
        pooled = x.mean(axis=1)                    # (B, ch_last)
        return self.head(pooled).reshape(B)


def discriminate(model: Discriminator, crop: MelCrop) -> float:
    """Score one crop (conditioning used only by conditioned models)."""
    emb = crop.embeddings[None, :, :]
    z = crop.z[None, :]
    if not model.config.conditioned:
        emb = z = None
    return float(model.score_batch(crop.mel[None, :, :], emb, z).data[0])
