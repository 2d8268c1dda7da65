"""Declarative per-stage training plans with filter/freeze invariants."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ConfigError
from .config import PipelineConfig

LOSS_VC = "vc_l1"
LOSS_L1_KL = "l1_kl"
LOSS_GAN = "gan"


@dataclass(frozen=True)
class TrainingPlan:
    stage: int
    speakers: frozenset[str] | None     # None = every speaker
    synthetic_allowed: bool
    steps: int
    batch_size: int
    loss: str
    frozen: frozenset = frozenset()     # parameter names never updated

    def __post_init__(self):
        if self.stage not in (1, 2, 3, 4):
            raise ConfigError(f"stage must be 1..4, got {self.stage}")
        if self.stage in (3, 4):
            if self.speakers is None or len(self.speakers) != 1:
                raise ConfigError(f"stage {self.stage} must filter to the target speaker")
            if self.synthetic_allowed:
                raise ConfigError(f"stage {self.stage} must exclude synthetic data")

    def admits(self, record) -> bool:
        if self.speakers is not None and record.speaker_id not in self.speakers:
            return False
        if not self.synthetic_allowed and record.synthetic:
            return False
        return True


def plan_for_stage(stage: int, cfg: PipelineConfig,
                   vae_parameters: frozenset = frozenset()) -> TrainingPlan:
    """Stage plans: data filters, budgets, losses, freeze sets.

    Raises:
        ConfigError: a stage-4 plan whose freeze set misses VAE parameters.
    """
    target = frozenset({cfg.target_speaker})
    if stage == 1:
        return TrainingPlan(stage=1, speakers=None, synthetic_allowed=False,
                            steps=cfg.vc_multi_steps, batch_size=cfg.vc_batch_size,
                            loss=LOSS_VC)
    if stage == 2:
        return TrainingPlan(stage=2, speakers=None, synthetic_allowed=True,
                            steps=cfg.stage2_steps, batch_size=cfg.batch_size,
                            loss=LOSS_L1_KL)
    if stage == 3:
        return TrainingPlan(stage=3, speakers=target, synthetic_allowed=False,
                            steps=cfg.stage3_steps, batch_size=cfg.batch_size,
                            loss=LOSS_L1_KL)
    if stage == 4:
        if not vae_parameters:
            raise ConfigError("stage-4 plan requires the VAE parameter freeze set")
        return TrainingPlan(stage=4, speakers=target, synthetic_allowed=False,
                            steps=cfg.stage4_steps, batch_size=cfg.batch_size,
                            loss=LOSS_GAN, frozen=frozenset(vae_parameters))
    raise ConfigError(f"unknown stage {stage}")
