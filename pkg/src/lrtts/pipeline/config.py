"""Run configuration: one flat, JSON-round-trippable record per run.

Two built-in profiles:
  * ``desk``  -- minutes-scale budgets and small model dims for CPU runs.
  * ``paper`` -- published budgets (500k/30k/30k steps, batch 32, full dims).

A config file overrides individual fields of the chosen profile.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from ..acoustic import AcousticConfig, KlAnnealSchedule
from ..adversarial import DiscriminatorConfig
from ..duration import DurationConfig, DurationTrainSettings
from ..errors import ConfigError
from ..vc import VcConfig, VcTrainSettings
from .checkpoint import config_hash
from .schedule import LrSchedule

PROFILES = ("desk", "paper")


@dataclass(frozen=True)
class PipelineConfig:
    target_speaker: str
    profile: str = "desk"
    seed: int = 0
    # data dims
    mel_bins: int = 20
    speaker_dim: int = 16
    # optimizer & schedules
    base_lr: float = 2e-3
    grad_clip: float = 1.0
    warmup_steps: int = 200
    decay_end_steps: int = 20_000
    lr_floor: float = 1e-5
    kl_start: int = 200
    kl_end: int = 1_500
    gamma_max: float = 1e-2
    alpha: float = 0.1
    # stage budgets
    stage2_steps: int = 2_000
    stage3_steps: int = 500
    stage4_steps: int = 500
    batch_size: int = 8
    vc_multi_steps: int = 500
    vc_target_epochs: int = 32
    vc_batch_size: int = 8
    vc_lr: float = 2e-3
    vc_source_speaker: str = ""      # "" = supporting speaker with the most data
    duration_steps: int = 2_000
    duration_batch_size: int = 32
    joint_duration: bool = False
    crop_frames: int = 64
    # data locations (excluded from the config hash: moving files around
    # must not invalidate checkpoints)
    manifest: str = ""
    speakers: str = ""
    run_dir: str = "runs/default"

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}")
        if self.alpha < 0:
            raise ConfigError("alpha must be non-negative")

    # -- profiles -------------------------------------------------------------

    @classmethod
    def desk(cls, target_speaker: str, **overrides) -> "PipelineConfig":
        return replace(cls(target_speaker=target_speaker), **overrides)

    @classmethod
    def paper(cls, target_speaker: str, **overrides) -> "PipelineConfig":
        base = cls(
            target_speaker=target_speaker, profile="paper",
            mel_bins=80, speaker_dim=256,
            base_lr=1e-3, warmup_steps=10_000, decay_end_steps=100_000,
            kl_start=1_000, kl_end=10_000,
            stage2_steps=500_000, stage3_steps=30_000, stage4_steps=30_000,
            batch_size=32,
            vc_multi_steps=50_000, vc_target_epochs=320, vc_batch_size=32,
            duration_steps=150_000, duration_batch_size=32,
        )
        return replace(base, **overrides)

    @classmethod
    def from_file(cls, path, profile: str = "desk") -> "PipelineConfig":
        """Profile defaults overridden by the JSON file's fields."""
        overrides = json.loads(Path(path).read_text())
        if not isinstance(overrides, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        overrides.pop("profile", None)
        target = overrides.pop("target_speaker", None)
        if target is None:
            raise ConfigError(f"{path}: config needs 'target_speaker'")
        maker = cls.paper if profile == "paper" else cls.desk
        try:
            return maker(target, **overrides)
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    # -- derived component configs ---------------------------------------------

    def acoustic_config(self, vocab_size: int) -> AcousticConfig:
        maker = AcousticConfig.paper if self.profile == "paper" else AcousticConfig.desk
        return maker(vocab_size=vocab_size, mel_bins=self.mel_bins,
                     speaker_dim=self.speaker_dim, seed=self.seed)

    def vc_config(self, vocab_size: int) -> VcConfig:
        if self.profile == "paper":
            return VcConfig(vocab_size=vocab_size, mel_bins=self.mel_bins,
                            speaker_dim=self.speaker_dim, seed=self.seed)
        return VcConfig.desk(vocab_size=vocab_size, mel_bins=self.mel_bins,
                             speaker_dim=self.speaker_dim, seed=self.seed)

    def duration_config(self, vocab_size: int) -> DurationConfig:
        if self.joint_duration:
            ac = self.acoustic_config(vocab_size)
            return DurationConfig.joint_head(vocab_size, ac.enc_hidden,
                                             ac.vae_latent, seed=self.seed)
        maker = DurationConfig.paper if self.profile == "paper" else DurationConfig.desk
        return maker(vocab_size=vocab_size, speaker_dim=self.speaker_dim,
                     seed=self.seed)

    def discriminator_config(self, vocab_size: int) -> DiscriminatorConfig:
        ac = self.acoustic_config(vocab_size)
        if self.profile == "paper":
            return DiscriminatorConfig(mel_bins=self.mel_bins,
                                       latent_dim=ac.vae_latent,
                                       emb_dim=ac.enc_hidden, seed=self.seed)
        return DiscriminatorConfig.desk(mel_bins=self.mel_bins,
                                        latent_dim=ac.vae_latent,
                                        emb_dim=ac.enc_hidden, seed=self.seed)

    def lr_schedule(self) -> LrSchedule:
        return LrSchedule(warmup_steps=self.warmup_steps,
                          decay_end=self.decay_end_steps, floor=self.lr_floor)

    def kl_schedule(self) -> KlAnnealSchedule:
        return KlAnnealSchedule(start=self.kl_start, end=self.kl_end,
                                gamma_max=self.gamma_max)

    def vc_settings(self) -> VcTrainSettings:
        return VcTrainSettings(multi_steps=self.vc_multi_steps,
                               target_epochs=self.vc_target_epochs,
                               batch_size=self.vc_batch_size,
                               base_lr=self.vc_lr, seed=self.seed)

    def duration_settings(self) -> DurationTrainSettings:
        return DurationTrainSettings(steps=self.duration_steps,
                                     batch_size=self.duration_batch_size,
                                     base_lr=self.base_lr, seed=self.seed)

    # -- serialization ----------------------------------------------------------

    DATA_FIELDS = ("manifest", "speakers", "run_dir")

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        science = {k: v for k, v in self.to_dict().items()
                   if k not in self.DATA_FIELDS}
        return config_hash(science)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1))


def profile_defaults_json() -> str:
    """Both profiles' full defaults, for documentation and config templates."""
    return json.dumps({
        "desk": PipelineConfig.desk("TARGET").to_dict(),
        "paper": PipelineConfig.paper("TARGET").to_dict(),
    }, sort_keys=True, indent=1)
