"""Observation perturbations: uniform noise, FGST and a sampling adversary."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .certify import PerturbationBall
from .netcore import DenseReluNetwork, forward, input_gradient

KINDS = ("none", "uniform_noise", "fgst", "oracle")
_ALIASES = {"noise": "uniform_noise", "uniform": "uniform_noise"}


def _mask(mask, n):
    if mask is None:
        return np.ones(n, dtype=bool)
    m = np.asarray(mask)
    if m.shape != (n,) or not np.all((m == 0) | (m == 1)):
        raise ValueError(f"mask must be a length-{n} vector of 0/1")
    return m.astype(bool)


@dataclass(frozen=True)
class PerturbationSpec:
    """Which perturbation to apply, how strong, and to which dimensions.

    ``magnitude`` is sigma for noise and the attack radius otherwise. A
    ``mask`` of ``None`` means every dimension.
    """

    kind: str = "none"
    magnitude: float = 0.0
    mask: tuple | None = None
    oracle_samples: int = 256

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}; expected one of {KINDS}")
        if not (self.magnitude >= 0 and math.isfinite(self.magnitude)):
            raise ValueError("magnitude must be finite and non-negative")
        object.__setattr__(self, "kind", kind)
        if self.mask is not None:
            object.__setattr__(self, "mask", tuple(int(v) for v in self.mask))

    def apply(self, net: DenseReluNetwork, s0, rng: np.random.Generator) -> np.ndarray:
        s0 = np.asarray(s0, dtype=np.float64)
        if self.kind == "none":
            return s0.copy()
        if self.kind == "uniform_noise":
            return uniform_noise(s0, self.magnitude, self.mask, rng)
        if self.kind == "fgst":
            return fgst(net, s0, self.magnitude, self.mask)
        eps = self.magnitude * _mask(self.mask, s0.shape[0])
        return oracle_adversary(net, s0, eps, math.inf, self.oracle_samples, rng)


def uniform_noise(s0, sigma: float, mask, rng: np.random.Generator) -> np.ndarray:
    """``s0 + U([-sigma, sigma])`` on masked dimensions; others unchanged."""
    s0 = np.asarray(s0, dtype=np.float64)
    m = _mask(mask, s0.shape[0])
    delta = rng.uniform(-sigma, sigma, size=s0.shape)
    out = s0.copy()
    out[m] += delta[m]
    return out


def fgst(net: DenseReluNetwork, s0, eps_adv: float, mask=None) -> np.ndarray:
    """One targeted signed-gradient step toward the nominally worst action.

    The target is the one-hot of ``argmin_a Q(s0, a)``; the step descends
    the softmax cross-entropy between that target and the Q-values.
    """
    if eps_adv < 0:
        raise ValueError("eps_adv must be non-negative")
    s0 = np.asarray(s0, dtype=np.float64)
    m = _mask(mask, s0.shape[0])
    q = forward(net, s0)
    target = np.zeros_like(q)
    target[int(np.argmin(q))] = 1.0
    g = input_gradient(net, s0, target)
    out = s0.copy()
    out[m] -= eps_adv * np.sign(g[m])
    return out


def worst_action_margin(q, a_worst) -> np.ndarray:
    """``Q(., a_worst) - max_{a != a_worst} Q(., a)`` for rows of ``q``."""
    q = np.atleast_2d(q)
    others = np.delete(q, a_worst, axis=1)
    if others.shape[1] == 0:
        return np.zeros(q.shape[0])
    return q[:, a_worst] - others.max(axis=1)


def oracle_adversary(net: DenseReluNetwork, s0, eps, p, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Sampled observation in the ball that most favours the worst action.

    Searches ``s0``, the ball's extreme points and ``n_samples`` uniform
    draws, and returns the one maximising the margin of
    ``argmin_a Q(s0, a)`` over all other actions.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    ball = PerturbationBall(s0, eps, p)
    if not np.any(ball.eps):
        return ball.center.copy()
    a_worst = int(np.argmin(forward(net, ball.center)))
    cands = np.vstack([ball.center, ball.sample(n_samples, rng, corners=True)])
    margin = worst_action_margin(forward(net, cands), a_worst)
    return cands[int(np.argmax(margin))].copy()
