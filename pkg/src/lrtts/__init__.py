"""Low-resource expressive TTS.

A four-step pipeline: voice-conversion data augmentation, a multi-speaker
non-autoregressive acoustic model with external phoneme durations and a
variational prosody latent, target-speaker fine-tuning, and conditional-GAN
fine-tuning -- plus corpus ingestion, duration modelling, synthesis, and
objective evaluation.
"""

from . import acoustic, adversarial, corpus, duration, pipeline, synth, toydata, vc
from .errors import (AlignmentError, CheckpointError, ConfigError, LrttsError,
                     ManifestError, ValidationError)

__version__ = "0.1.0"

__all__ = [
    "acoustic", "adversarial", "corpus", "duration", "pipeline", "synth",
    "toydata", "vc",
    "AlignmentError", "CheckpointError", "ConfigError", "LrttsError",
    "ManifestError", "ValidationError",
    "__version__",
]
