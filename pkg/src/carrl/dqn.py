"""Minimal DQN: replay buffer, hard target sync, Adam on squared TD error."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .envs import make_env
from .netcore import DenseReluNetwork, forward, init_network, td_loss, weight_gradients

log = logging.getLogger(__name__)

DIVERGENCE_LOSS = 1e6


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: bool


@dataclass(frozen=True)
class TrainConfig:
    """DQN hyperparameters. Defaults are the published collision-world values."""

    learning_rate: float = 2.05e-4
    exploration_fraction: float = 0.497
    final_epsilon_greedy: float = 0.054852
    buffer_size: int = 152_000
    total_steps: int = 400_000
    target_update_freq: int = 10_000
    batch_size: int = 64
    gamma: float = 0.97
    seed: int = 0
    learning_starts: int = 1_000
    train_freq: int = 1
    shaping_scale: float = 0.0
    checkpoint_freq: int = 0
    checkpoint_window: int = 20

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("seed", "shaping_scale", "checkpoint_freq"):
                if v < 0:
                    raise ValueError(f"{f.name} must be non-negative")
            elif not v > 0:
                raise ValueError(f"{f.name} must be positive, got {v}")
        if not 0 < self.final_epsilon_greedy < 1:
            raise ValueError("final_epsilon_greedy must lie in (0, 1)")
        if not 0 < self.gamma <= 1 or self.exploration_fraction > 1:
            raise ValueError("gamma must lie in (0, 1] and exploration_fraction in (0, 1]")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_text(cls, text: str, base: "TrainConfig | None" = None) -> "TrainConfig":
        """Parse flat ``key = value`` lines; ``#`` starts a comment."""
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (part.strip() for part in line.partition("="))
            if not sep or key not in types:
                raise ValueError(f"line {lineno}: expected '<field> = <value>', got {raw!r}")
            values[key] = int(float(value)) if types[key] in (int, "int") else float(value)
        return dataclasses.replace(base or cls(), **values)

    @classmethod
    def from_file(cls, path, base: "TrainConfig | None" = None) -> "TrainConfig":
        return cls.from_text(Path(path).read_text(), base)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)!r}\n" for f in fields(self))


# Environment-specific defaults; the cartpole values were tuned here since
# only the collision-world hyperparameters are published.
CARTPOLE_CONFIG = TrainConfig(
    learning_rate=1e-3,
    exploration_fraction=0.2,
    final_epsilon_greedy=0.02,
    buffer_size=50_000,
    total_steps=100_000,
    target_update_freq=500,
    gamma=0.99,
    checkpoint_freq=1_000,
)
COLLISION_CONFIG = TrainConfig(total_steps=200_000, shaping_scale=1.0)
DEFAULT_CONFIGS = {"cartpole": CARTPOLE_CONFIG, "collision": COLLISION_CONFIG}
DEFAULT_HIDDEN = {"cartpole": (4, 4), "collision": (64, 64)}


class ReplayBuffer:
    """Fixed-capacity FIFO store of transitions with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.s = np.zeros((capacity, obs_dim))
        self.a = np.zeros(capacity, dtype=np.intp)
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, t: Transition) -> None:
        i = self.cursor
        self.s[i], self.a[i], self.r[i], self.s_next[i], self.done[i] = t.s, t.a, t.r, t.s_next, float(t.done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def oldest(self) -> Transition:
        i = self.cursor if self.size == self.capacity else 0
        return self[i]

    def __getitem__(self, i) -> Transition:
        return Transition(self.s[i].copy(), int(self.a[i]), float(self.r[i]), self.s_next[i].copy(), bool(self.done[i]))

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform draw with replacement: ``(s, a, r, s_next, done)`` arrays."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(self.size, size=batch_size)
        return self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.done[idx]


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            out.append(p - self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps))
        return out


def epsilon_at(step: int, config: TrainConfig) -> float:
    """Exploration rate: linear from 1.0 to the final value, then flat."""
    horizon = config.exploration_fraction * config.total_steps
    frac = min(step / horizon, 1.0)
    return 1.0 + frac * (config.final_epsilon_greedy - 1.0)


def _flat(net):
    return [*net.weights, *net.biases]


def _unflat(params):
    m = len(params) // 2
    return DenseReluNetwork(params[:m], params[m:])


def _flat_grads(grads):
    return [g[0] for g in grads] + [g[1] for g in grads]


def td_targets(target_net, r, s_next, done, gamma):
    return r + gamma * (1.0 - done) * forward(target_net, s_next).max(axis=1)


def train(
    env_factory: Callable,
    net_shape: Sequence[int],
    config: TrainConfig,
    callback: Callable | None = None,
) -> DenseReluNetwork:
    """Train a Q-network with DQN.

    Returns the final online network, or with ``config.checkpoint_freq > 0``
    the network saved at the checkpoint with the best mean reward over the
    last ``checkpoint_window`` training episodes.

    ``net_shape`` lists the hidden widths, or all widths including input and
    output. ``callback(step, online, target)`` is invoked after every update.
    """
    env = env_factory()
    sizes = list(net_shape)
    if not sizes or sizes[0] != env.obs_dim or sizes[-1] != env.n_actions:
        sizes = [env.obs_dim, *sizes, env.n_actions]
    rng = np.random.default_rng(config.seed)
    online = init_network(sizes, rng)
    target = online
    params = _flat(online)
    adam = Adam(params, config.learning_rate)
    buffer = ReplayBuffer(min(config.buffer_size, config.total_steps), env.obs_dim)
    shaping = config.shaping_scale > 0 and hasattr(env, "potential")

    obs = env.reset(rng)
    phi = env.potential() if shaping else 0.0
    episode_reward, episode_rewards = 0.0, []
    best, best_score = None, -np.inf
    for step in range(config.total_steps):
        if rng.random() < epsilon_at(step, config):
            action = int(rng.integers(env.n_actions))
        else:
            action = int(np.argmax(forward(online, obs)))
        res = env.step(action)
        reward = res.reward
        if shaping:
            # progress toward the goal; training signal only, metrics use env reward
            phi_next = env.potential()
            reward += config.shaping_scale * (phi_next - phi)
            phi = phi_next
        buffer.add(Transition(obs, action, reward, res.observation, res.terminal))
        episode_reward += res.reward
        obs = res.observation
        if res.done:
            episode_rewards.append(episode_reward)
            episode_reward = 0.0
            obs = env.reset(rng)
            phi = env.potential() if shaping else 0.0

        if step >= config.learning_starts and step % config.train_freq == 0:
            s, a, r, s_next, done = buffer.sample(config.batch_size, rng)
            y = td_targets(target, r, s_next, done, config.gamma)
            if step % 1000 == 0:
                loss = td_loss(online, s, a, y)
                if not np.isfinite(loss) or loss > DIVERGENCE_LOSS:
                    raise TrainingDivergedError(f"TD loss {loss:.3g} at step {step}")
                recent = episode_rewards[-20:]
                log.info("step %d loss %.4g eps %.3f mean reward %.2f", step, loss,
                         epsilon_at(step, config), np.mean(recent) if recent else float("nan"))
            params = adam.step(params, _flat_grads(weight_gradients(online, s, a, y)))
            online = _unflat(params)
            if callback is not None:
                callback(step, online, target)
        if (step + 1) % config.target_update_freq == 0:
            target = online
        if (
            config.checkpoint_freq
            and (step + 1) % config.checkpoint_freq == 0
            and len(episode_rewards) >= config.checkpoint_window
        ):
            score = float(np.mean(episode_rewards[-config.checkpoint_window:]))
            if score > best_score:
                best, best_score = online, score
    return online if best is None else best


def evaluate_greedy(net: DenseReluNetwork, env_factory: Callable, episodes: int, seed: int):
    """Greedy rollouts on clean observations; returns ``(mean_reward, metrics)``."""
    from .evaluation import run_batch

    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    metrics = run_batch(net, env_factory, "nominal", 0.0, None, episodes, [seed], timed=False)
    return float(np.mean([m.total_reward for m in metrics])), metrics


class DQNAgent(BaseEstimator):
    """Estimator wrapper: ``fit`` trains a Q-network, ``predict`` acts greedily.

    Parameters
    ----------
    env : {"cartpole", "collision"}
    hidden_layer_sizes : tuple of int, optional
        Defaults to (4, 4) for cartpole and (64, 64) for the collision world.
    config : TrainConfig, optional
        Defaults to the environment's tuned configuration.
    seed : int, optional
        Overrides ``config.seed``.
    """

    def __init__(self, env="cartpole", hidden_layer_sizes=None, config=None, seed=None):
        self.env = env
        self.hidden_layer_sizes = hidden_layer_sizes
        self.config = config
        self.seed = seed

    def _resolved_config(self):
        config = self.config or DEFAULT_CONFIGS[self.env]
        return config if self.seed is None else config.replace(seed=self.seed)

    def fit(self, X=None, y=None):
        """Train from scratch. ``X`` and ``y`` are ignored; experience comes from the env."""
        hidden = self.hidden_layer_sizes or DEFAULT_HIDDEN[self.env]
        self.network_ = train(lambda: make_env(self.env), hidden, self._resolved_config())
        self.n_features_in_ = self.network_.n_inputs
        return self

    def predict(self, X):
        check_is_fitted(self, "network_")
        return np.argmax(forward(self.network_, check_array(X)), axis=1)

    def score(self, X=None, y=None, episodes=100):
        """Mean clean greedy reward over ``episodes`` episodes."""
        check_is_fitted(self, "network_")
        return evaluate_greedy(self.network_, lambda: make_env(self.env), episodes, self._resolved_config().seed)[0]
