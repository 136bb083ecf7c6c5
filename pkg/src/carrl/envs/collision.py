"""Two-agent collision avoidance with unicycle kinematics.

The controlled (ego) agent moves at a constant 1 m/s and picks one of 11
heading changes evenly spaced in [-pi/6, pi/6] each step. The other agent
follows a fixed policy: static or non-cooperative (straight to its goal at
1 m/s, ignoring the ego agent). Rewards are sparse: +1 on reaching the
goal, -0.25 on collision.

Observations are in world coordinates by default; an ego frame (origin at
the ego agent, x axis along its heading) is available. Layout::

    0-1  ego position      5-6  ego goal        9-10 obstacle velocity
    2-3  ego velocity      7-8  obstacle pos    11   obstacle radius
    4    ego radius
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .base import EpisodeDoneError, StepResult

SPEED = 1.0
DT = 0.1
MAX_STEPS = 80
RADIUS = 0.5
N_ACTIONS = 11
HEADING_CHANGES = np.linspace(-math.pi / 6, math.pi / 6, N_ACTIONS)
GOAL_REWARD = 1.0
COLLISION_REWARD = -0.25
OBSTACLE_POSITION_DIMS = (7, 8)
OBSTACLE_POLICIES = ("static", "noncooperative")


@dataclass(frozen=True)
class AgentState:
    position: tuple
    velocity: tuple
    heading: float
    radius: float
    goal: tuple
    policy: str = "rl"

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("agent radius must be positive")


@dataclass(frozen=True)
class CollisionWorldState:
    ego: AgentState
    obstacle: AgentState
    steps: int = 0
    done: bool = False


@dataclass(frozen=True)
class Scenario:
    ego_start: tuple = (-3.0, 0.0)
    ego_goal: tuple = (3.0, 0.0)
    obstacle_start: tuple = (3.0, 0.0)
    obstacle_goal: tuple = (-3.0, 0.0)
    obstacle_policy: str = "noncooperative"
    ego_radius: float = RADIUS
    obstacle_radius: float = RADIUS


SWAP = Scenario()


def _dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def random_scenario(rng: np.random.Generator, jitter: float = 1.0) -> Scenario:
    """Training/evaluation scenario: obstacle policy drawn uniformly, points jittered.

    Non-cooperative obstacles swap positions with the ego agent; static
    obstacles sit near the middle of the ego's path. Draws are rejected
    until the ego goal is clear of a static obstacle.
    """
    policy = OBSTACLE_POLICIES[int(rng.integers(len(OBSTACLE_POLICIES)))]
    clearance = 2 * RADIUS + 0.5
    while True:
        j = rng.uniform(-jitter, jitter, size=(4, 2))
        ego_start = (-3.0 + j[0, 0], j[0, 1])
        ego_goal = (3.0 + j[1, 0], j[1, 1])
        if policy == "static":
            obs_start = obs_goal = (j[2, 0], j[2, 1])
        else:
            obs_start = (3.0 + j[2, 0], j[2, 1])
            obs_goal = (-3.0 + j[3, 0], j[3, 1])
        if policy == "static" and _dist(ego_goal, obs_start) < clearance:
            continue
        if _dist(ego_start, obs_start) < clearance:
            continue
        return Scenario(ego_start, ego_goal, obs_start, obs_goal, policy)


def obstacle_policy_static(state: CollisionWorldState) -> np.ndarray:
    return np.zeros(2)


def obstacle_policy_noncooperative(state: CollisionWorldState) -> np.ndarray:
    """Unit-speed velocity straight at the obstacle's own goal (zero once there)."""
    obs = state.obstacle
    d = np.subtract(obs.goal, obs.position)
    n = float(np.hypot(*d))
    if n == 0.0:
        return np.zeros(2)
    return SPEED * d / n


_OBSTACLE_POLICIES = {"static": obstacle_policy_static, "noncooperative": obstacle_policy_noncooperative}


def _heading_to(a, b) -> float:
    return math.atan2(b[1] - a[1], b[0] - a[0])


def ca_reset(scenario: Scenario | str = SWAP, rng: np.random.Generator | None = None) -> CollisionWorldState:
    """Initial state; ``scenario='random'`` draws one with ``rng``."""
    if isinstance(scenario, str):
        if scenario == "swap":
            scenario = SWAP
        elif scenario == "random":
            if rng is None:
                raise ValueError("a random scenario needs an rng")
            scenario = random_scenario(rng)
        else:
            raise ValueError(f"unknown scenario {scenario!r}")
    if scenario.obstacle_policy not in _OBSTACLE_POLICIES:
        raise ValueError(f"unknown obstacle policy {scenario.obstacle_policy!r}")
    h = _heading_to(scenario.ego_start, scenario.ego_goal)
    ego = AgentState(
        position=tuple(map(float, scenario.ego_start)),
        velocity=(SPEED * math.cos(h), SPEED * math.sin(h)),
        heading=h,
        radius=scenario.ego_radius,
        goal=tuple(map(float, scenario.ego_goal)),
    )
    obstacle = AgentState(
        position=tuple(map(float, scenario.obstacle_start)),
        velocity=(0.0, 0.0),
        heading=_heading_to(scenario.obstacle_start, scenario.obstacle_goal),
        radius=scenario.obstacle_radius,
        goal=tuple(map(float, scenario.obstacle_goal)),
        policy=scenario.obstacle_policy,
    )
    state = CollisionWorldState(ego=ego, obstacle=obstacle)
    v = _OBSTACLE_POLICIES[obstacle.policy](state)
    return replace(state, obstacle=replace(obstacle, velocity=(float(v[0]), float(v[1]))))


def _to_ego_frame(state):
    """Rotation/translation into the frame centred on the ego agent, x along its heading."""
    e = state.ego
    c, s = math.cos(e.heading), math.sin(e.heading)

    def point(p):
        dx, dy = p[0] - e.position[0], p[1] - e.position[1]
        return (c * dx + s * dy, -s * dx + c * dy)

    def vector(v):
        return (c * v[0] + s * v[1], -s * v[0] + c * v[1])

    return point, vector


def ca_observe(state: CollisionWorldState, frame: str = "world") -> np.ndarray:
    """12-entry observation in the world frame (default) or the ego frame."""
    e, o = state.ego, state.obstacle
    if frame == "world":
        values = [*e.position, *e.velocity, e.radius, *e.goal, *o.position, *o.velocity, o.radius]
    elif frame == "ego":
        point, vector = _to_ego_frame(state)
        values = [
            *point(e.position), *vector(e.velocity), e.radius, *point(e.goal),
            *point(o.position), *vector(o.velocity), o.radius,
        ]
    else:
        raise ValueError(f"frame must be 'ego' or 'world', got {frame!r}")
    return np.array(values, dtype=np.float64)


def state_from_observation(obs, obstacle_policy: str = "static") -> CollisionWorldState:
    """Inverse of :func:`ca_observe` for the fields an observation carries."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (12,):
        raise ValueError("collision-world observations have 12 entries")
    ego = AgentState(
        position=(obs[0], obs[1]),
        velocity=(obs[2], obs[3]),
        heading=math.atan2(obs[3], obs[2]),
        radius=obs[4],
        goal=(obs[5], obs[6]),
    )
    obstacle = AgentState(
        position=(obs[7], obs[8]),
        velocity=(obs[9], obs[10]),
        heading=math.atan2(obs[10], obs[9]),
        radius=obs[11],
        goal=(obs[7], obs[8]),
        policy=obstacle_policy,
    )
    return CollisionWorldState(ego=ego, obstacle=obstacle)


def _move_obstacle(state):
    obs = state.obstacle
    v = _OBSTACLE_POLICIES[obs.policy](state)
    remaining = _dist(obs.position, obs.goal)
    if obs.policy == "noncooperative" and remaining <= SPEED * DT + 1e-9:
        return replace(obs, position=obs.goal, velocity=(0.0, 0.0))
    pos = (obs.position[0] + DT * v[0], obs.position[1] + DT * v[1])
    return replace(obs, position=pos, velocity=(float(v[0]), float(v[1])))


def ca_step(
    state: CollisionWorldState, action: int, max_steps: int = MAX_STEPS, frame: str = "world"
) -> StepResult:
    """Apply ego heading change ``HEADING_CHANGES[action]`` and advance ``DT``."""
    if state.done:
        raise EpisodeDoneError("cannot step a finished collision-avoidance episode")
    if not (isinstance(action, (int, np.integer)) and 0 <= action < N_ACTIONS):
        raise ValueError(f"action must be an integer in [0, {N_ACTIONS}), got {action!r}")
    e = state.ego
    h = e.heading + float(HEADING_CHANGES[action])
    vel = (SPEED * math.cos(h), SPEED * math.sin(h))
    ego = replace(
        e, heading=h, velocity=vel, position=(e.position[0] + DT * vel[0], e.position[1] + DT * vel[1])
    )
    obstacle = _move_obstacle(state)
    steps = state.steps + 1

    collided = _dist(ego.position, obstacle.position) < ego.radius + obstacle.radius
    reached = not collided and _dist(ego.position, ego.goal) < ego.radius
    timed_out = not (collided or reached) and steps >= max_steps
    reward = COLLISION_REWARD if collided else GOAL_REWARD if reached else 0.0
    done = collided or reached or timed_out
    new = CollisionWorldState(ego=ego, obstacle=obstacle, steps=steps, done=done)
    info = {"collided": collided, "reached_goal": reached, "timed_out": timed_out}
    return StepResult(new, ca_observe(new, frame), reward, done, info)


class CollisionAvoidanceEnv:
    """Mutable wrapper; ``scenario`` is a :class:`Scenario`, ``'swap'`` or ``'random'``."""

    name = "collision"
    n_actions = N_ACTIONS
    obs_dim = 12

    def __init__(self, scenario: Scenario | str = "random", max_steps: int = MAX_STEPS, frame: str = "world"):
        self.scenario = scenario
        self.max_steps = max_steps
        self.frame = frame
        self.state = None

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state = ca_reset(self.scenario, rng)
        return ca_observe(self.state, self.frame)

    def step(self, action: int) -> StepResult:
        if self.state is None:
            raise EpisodeDoneError("call reset() first")
        result = ca_step(self.state, int(action), self.max_steps, self.frame)
        self.state = result.state
        return result

    def robust_mask(self) -> np.ndarray:
        mask = np.zeros(self.obs_dim, dtype=int)
        mask[list(OBSTACLE_POSITION_DIMS)] = 1
        return mask

    def potential(self) -> float:
        """Negative ego distance to goal, for training-time progress rewards."""
        e = self.state.ego
        return -_dist(e.position, e.goal)

    def separation(self) -> float:
        """Centre-to-centre ego/obstacle distance."""
        return _dist(self.state.ego.position, self.state.obstacle.position)
