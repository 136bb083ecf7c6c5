"""Certified-robust action selection for Q-network policies."""

from .certify import (
    CertifiedQBounds,
    PerturbationBall,
    certified_q_bounds,
    first_layer_bounds,
    propagate_bounds,
    relu_relaxation,
)
from .netcore import DenseReluNetwork, forward, load_network, save_network
from .policy import RobustQPolicy, nominal_action, robust_action

__all__ = [
    "CertifiedQBounds",
    "DenseReluNetwork",
    "PerturbationBall",
    "RobustQPolicy",
    "certified_q_bounds",
    "first_layer_bounds",
    "forward",
    "load_network",
    "nominal_action",
    "propagate_bounds",
    "relu_relaxation",
    "robust_action",
    "save_network",
]
