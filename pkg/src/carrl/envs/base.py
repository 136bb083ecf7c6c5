"""Shared step-result container for the episodic environments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class EpisodeDoneError(RuntimeError):
    """Raised when stepping an episode that already ended."""


@dataclass(frozen=True)
class StepResult:
    state: object
    observation: np.ndarray
    reward: float
    done: bool
    info: dict = field(default_factory=dict)

    @property
    def terminal(self) -> bool:
        """True when the episode ended for a reason other than the step cap."""
        return self.done and not self.info.get("timed_out", False)
