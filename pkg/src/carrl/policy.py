"""Greedy action selection on nominal Q-values or certified lower bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .certify import PerturbationBall, certified_q_bounds, parse_norm
from .netcore import DenseReluNetwork, forward, load_network


@dataclass(frozen=True)
class ActionChoice:
    action_index: int
    scores: np.ndarray


def argmax_first(scores) -> int:
    """Index of the largest score; ties go to the lowest index."""
    return int(np.argmax(np.asarray(scores)))


def nominal_action(net: DenseReluNetwork, s) -> ActionChoice:
    q = forward(net, np.asarray(s, dtype=np.float64).reshape(-1))
    return ActionChoice(argmax_first(q), q)


def robust_action(net: DenseReluNetwork, s_adv, eps, p=math.inf) -> ActionChoice:
    """Action with the highest certified worst-case Q-value over the eps-ball."""
    bounds = certified_q_bounds(net, PerturbationBall(s_adv, eps, p))
    return ActionChoice(argmax_first(bounds.q_lower), bounds.q_lower)


class RobustQPolicy(BaseEstimator):
    """Greedy policy over certified lower bounds of a Q-network.

    With ``eps=0`` this is the plain greedy (nominal) policy.

    Parameters
    ----------
    network : DenseReluNetwork or path-like
        Trained Q-network, or a path to its weight file.
    eps : float or array-like, default=0.0
        Per-dimension radius of the ball of possible true observations.
    p : {1, 2, inf}, default=inf
        Norm order of the ball.

    Attributes
    ----------
    network_ : DenseReluNetwork
    eps_ : ndarray of shape (n_features,)
    n_features_in_ : int
    n_actions_ : int
    """

    def __init__(self, network=None, eps=0.0, p=math.inf):
        self.network = network
        self.eps = eps
        self.p = p

    def fit(self, X=None, y=None):
        """Resolve the network and validate ``eps`` against it. ``X`` is only shape-checked."""
        if self.network is None:
            raise ValueError("RobustQPolicy needs a network")
        net = self.network if isinstance(self.network, DenseReluNetwork) else load_network(self.network)
        eps = np.asarray(self.eps, dtype=np.float64)
        if eps.ndim == 0:
            eps = np.full(net.n_inputs, float(eps))
        if eps.shape != (net.n_inputs,):
            raise ValueError(f"eps has shape {eps.shape}, network expects {net.n_inputs} inputs")
        if np.any(eps < 0) or not np.all(np.isfinite(eps)):
            raise ValueError("eps must be finite and non-negative")
        if X is not None:
            check_array(X)
        self.p_ = parse_norm(self.p)
        self.network_ = net
        self.eps_ = eps
        self.n_features_in_ = net.n_inputs
        self.n_actions_ = net.n_actions
        return self

    def _validate(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, policy expects {self.n_features_in_}")
        return X

    def decision_function(self, X) -> np.ndarray:
        """Certified lower bounds ``Q_L``, shape ``(n_samples, n_actions)``."""
        X = self._validate(X)
        if not np.any(self.eps_):
            return forward(self.network_, X)
        return np.vstack([self.predict_bounds_one(x).q_lower for x in X])

    def predict_bounds_one(self, x):
        return certified_q_bounds(self.network_, PerturbationBall(x, self.eps_, self.p_))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)

    def act(self, observation) -> int:
        """Action for a single observation."""
        check_is_fitted(self, "network_")
        if not np.any(self.eps_):
            return nominal_action(self.network_, observation).action_index
        return robust_action(self.network_, observation, self.eps_, self.p_).action_index
