from .base import EpisodeDoneError, StepResult
from .cartpole import CartpoleEnv, CartpoleState, cartpole_reset, cartpole_step
from .collision import (
    CollisionAvoidanceEnv,
    CollisionWorldState,
    Scenario,
    ca_observe,
    ca_reset,
    ca_step,
    obstacle_policy_noncooperative,
    obstacle_policy_static,
)

ENVS = {"cartpole": CartpoleEnv, "collision": CollisionAvoidanceEnv}


def make_env(name: str, **kwargs):
    try:
        return ENVS[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVS)}") from None
