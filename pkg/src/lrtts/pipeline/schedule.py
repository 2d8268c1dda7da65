"""Learning-rate schedule: linear warm-up then exponential decay to a floor."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True)
class LrSchedule:
    """Multiplier on a base learning rate.

    0.1 -> 1.0 linearly over ``warmup_steps``, then exponential decay hitting
    ``floor`` exactly at ``decay_end``, constant afterwards.
    """

    warmup_steps: int = 10_000
    decay_end: int = 100_000
    floor: float = 1e-5

    def __post_init__(self):
        if not (0 < self.warmup_steps < self.decay_end):
            raise ConfigError("need 0 < warmup_steps < decay_end")
        if not (0.0 < self.floor < 1.0):
            raise ConfigError("floor must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def lr_at(step: int, schedule: LrSchedule = LrSchedule()) -> float:
    """Learning-rate multiplier at ``step``; continuous at the warmup boundary."""
    if step < 0:
        raise ConfigError("step must be non-negative")
    if step <= schedule.warmup_steps:
        return 0.1 + 0.9 * step / schedule.warmup_steps
    if step >= schedule.decay_end:
        return schedule.floor
    span = schedule.decay_end - schedule.warmup_steps
    return float(np.exp(np.log(schedule.floor) * (step - schedule.warmup_steps) / span))
