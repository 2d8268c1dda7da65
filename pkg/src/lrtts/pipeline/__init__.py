from .schedule import LrSchedule, lr_at
from .checkpoint import (Checkpoint, checkpoint_roundtrip, config_hash,
                         load_checkpoint, save_checkpoint)
from .config import PipelineConfig, profile_defaults_json
from .plan import LOSS_GAN, LOSS_L1_KL, LOSS_VC, TrainingPlan, plan_for_stage
from .train import (MetricsLog, PipelineState, acoustic_training_forward,
                    adam_step, load_synthetic_records, make_acoustic_batch,
                    make_pipeline_state, masked_l1_t, run_pipeline_stage,
                    run_stage)

__all__ = [
    "LrSchedule", "lr_at",
    "Checkpoint", "checkpoint_roundtrip", "config_hash", "load_checkpoint",
    "save_checkpoint",
    "PipelineConfig", "profile_defaults_json",
    "LOSS_GAN", "LOSS_L1_KL", "LOSS_VC", "TrainingPlan", "plan_for_stage",
    "MetricsLog", "PipelineState", "acoustic_training_forward", "adam_step",
    "load_synthetic_records", "make_acoustic_batch", "make_pipeline_state",
    "masked_l1_t", "run_pipeline_stage", "run_stage",
]
