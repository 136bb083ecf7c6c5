"""Cart-pole balancing with the classic benchmark constants and Euler steps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .base import EpisodeDoneError, StepResult

GRAVITY = 9.8
CART_MASS = 1.0
POLE_MASS = 0.1
TOTAL_MASS = CART_MASS + POLE_MASS
HALF_LENGTH = 0.5
POLE_MASS_LENGTH = POLE_MASS * HALF_LENGTH
FORCE = 10.0
DT = 0.02
X_LIMIT = 2.4
THETA_LIMIT = 12 * 2 * math.pi / 360
MAX_STEPS = 200


@dataclass(frozen=True)
class CartpoleState:
    x: float
    x_dot: float
    theta: float
    theta_dot: float
    steps: int = 0

    @property
    def alive(self) -> bool:
        return abs(self.x) <= X_LIMIT and abs(self.theta) <= THETA_LIMIT

    def observation(self) -> np.ndarray:
        return np.array([self.x, self.x_dot, self.theta, self.theta_dot])


def cartpole_reset(rng: np.random.Generator) -> CartpoleState:
    x, x_dot, theta, theta_dot = rng.uniform(-0.05, 0.05, size=4)
    return CartpoleState(float(x), float(x_dot), float(theta), float(theta_dot))


def cartpole_step(state: CartpoleState, action: int) -> StepResult:
    """Advance one step. Reward 1 if the pole is still up afterwards."""
    if not state.alive or state.steps >= MAX_STEPS:
        raise EpisodeDoneError("cannot step a finished cart-pole episode")
    if action not in (0, 1):
        raise ValueError(f"cart-pole action must be 0 or 1, got {action!r}")
    force = FORCE if action == 1 else -FORCE
    cos, sin = math.cos(state.theta), math.sin(state.theta)
    temp = (force + POLE_MASS_LENGTH * state.theta_dot**2 * sin) / TOTAL_MASS
    theta_acc = (GRAVITY * sin - cos * temp) / (
        HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos**2 / TOTAL_MASS)
    )
    x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS
    new = CartpoleState(
        x=state.x + DT * state.x_dot,
        x_dot=state.x_dot + DT * x_acc,
        theta=state.theta + DT * state.theta_dot,
        theta_dot=state.theta_dot + DT * theta_acc,
        steps=state.steps + 1,
    )
    fell = not new.alive
    timed_out = not fell and new.steps >= MAX_STEPS
    info = {"collided": False, "reached_goal": False, "fell": fell, "timed_out": timed_out}
    return StepResult(new, new.observation(), 0.0 if fell else 1.0, fell or timed_out, info)


class CartpoleEnv:
    """Mutable single-episode wrapper around the pure step function."""

    name = "cartpole"
    n_actions = 2
    obs_dim = 4

    def __init__(self):
        self.state = None

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state = cartpole_reset(rng)
        return self.state.observation()

    def step(self, action: int) -> StepResult:
        if self.state is None:
            raise EpisodeDoneError("call reset() first")
        result = cartpole_step(self.state, int(action))
        self.state = result.state
        return result

    def robust_mask(self) -> np.ndarray:
        """Dimensions that the robustness radius and perturbations act on."""
        return np.ones(self.obs_dim, dtype=int)
