"""Certified bounds on Q-values over a per-dimension perturbation ball.

Bounds follow the Fast-Lin linear relaxation of ReLU networks. Every hidden
pre-activation is bounded by treating it as the output of the truncated
network, which yields the status (active / inactive / undecided) and slope
of each ReLU. The relaxed network then collapses to one linear map per
output, and the inner minimisation over the ball has a closed form through
the dual norm of the axis-scaled coefficients.

Soundness holds in exact arithmetic; float64 rounding is not controlled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .netcore import DenseReluNetwork, forward

ACTIVE, INACTIVE, UNDECIDED = "active", "inactive", "undecided"

_NORMS = {1: 1.0, 2: 2.0, math.inf: math.inf}


def parse_norm(p) -> float:
    """Accept 1, 2, inf (or the strings '1', '2', 'inf') and return a float order."""
    if isinstance(p, str):
        p = p.strip().lower()
        p = math.inf if p in ("inf", "infinity", "linf") else float(p)
    p = float(p)
    if p not in _NORMS:
        raise ValueError(f"norm order must be 1, 2 or inf, got {p}")
    return p


def dual_order(p) -> float:
    """Order q of the dual norm, 1/p + 1/q = 1."""
    p = parse_norm(p)
    if p == 1.0:
        return math.inf
    if p == math.inf:
        return 1.0
    return 2.0


def _rownorm(m, q):
    if q == math.inf:
        return np.abs(m).max(axis=-1)
    if q == 1.0:
        return np.abs(m).sum(axis=-1)
    return np.sqrt((m * m).sum(axis=-1))


@dataclass(frozen=True, eq=False)
class PerturbationBall:
    """Axis-scaled p-norm ball ``{s : ||(s - center) / eps||_p <= 1}``.

    ``eps`` may be a scalar (broadcast to every dimension) or a vector.
    Dimensions with ``eps == 0`` are pinned to the center.
    """

    center: np.ndarray
    eps: np.ndarray
    p: float = math.inf

    def __post_init__(self):
        center = np.array(self.center, dtype=np.float64).reshape(-1)
        eps = np.array(self.eps, dtype=np.float64)
        if eps.ndim == 0:
            eps = np.full_like(center, float(eps))
        eps = eps.reshape(-1)
        if eps.shape != center.shape:
            raise ValueError(f"eps has length {eps.shape[0]}, center has length {center.shape[0]}")
        if not (np.all(np.isfinite(center)) and np.all(np.isfinite(eps))):
            raise ValueError("ball center and radii must be finite")
        if np.any(eps < 0):
            raise ValueError("eps must be non-negative")
        center.setflags(write=False)
        eps.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "p", parse_norm(self.p))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def contains(self, s, atol: float = 1e-12) -> bool:
        s = np.asarray(s, dtype=np.float64)
        d = s - self.center
        pinned = self.eps == 0
        if np.any(np.abs(d[pinned]) > atol):
            return False
        y = d[~pinned] / self.eps[~pinned]
        if y.size == 0:
            return True
        return bool(np.linalg.norm(y, ord=self.p) <= 1.0 + atol)

    def sample(self, n: int, rng: np.random.Generator, corners: bool = False) -> np.ndarray:
        """Draw ``n`` points uniformly from the ball.

        With ``corners=True`` and p=inf the ``2**d`` box vertices (or, for
        ``d > 12``, the 2d axis extremes) are prepended; they are where a
        piecewise-linear function over a box tends to attain its extremes.
        """
        d = self.dim
        if self.p == math.inf:
            y = rng.uniform(-1.0, 1.0, size=(n, d))
        elif self.p == 2.0:
            g = rng.standard_normal(size=(n, d))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            y = g * rng.uniform(size=(n, 1)) ** (1.0 / d)
        else:
            e = rng.exponential(size=(n, d))
            e /= e.sum(axis=1, keepdims=True)
            y = e * rng.choice([-1.0, 1.0], size=(n, d)) * rng.uniform(size=(n, 1)) ** (1.0 / d)
        if corners:
            y = np.vstack([self.extreme_points(), y])
        return self.center + y * self.eps

    def extreme_points(self) -> np.ndarray:
        """Unit-ball extreme directions scaled later by ``eps``."""
        d = self.dim
        axes = np.vstack([np.eye(d), -np.eye(d)])
        if self.p != math.inf:
            return axes
        live = np.flatnonzero(self.eps > 0)
        if len(live) > 12:
            return axes
        grid = np.array(np.meshgrid(*[[-1.0, 1.0]] * len(live), indexing="ij")).reshape(len(live), -1).T
        out = np.zeros((grid.shape[0], d))
        out[:, live] = grid
        return np.vstack([out, axes])


@dataclass(frozen=True)
class LayerBounds:
    """Lower and upper bounds on one hidden layer's pre-ReLU activations."""

    lower: np.ndarray
    upper: np.ndarray


@dataclass(frozen=True)
class ReluRelaxation:
    """Linear relaxation of one hidden ReLU layer.

    ``slope`` is the diagonal of the slope matrix; the undecided upper line
    passes through ``(lower, 0)`` and ``(upper, upper)``.
    """

    status: np.ndarray
    slope: np.ndarray
    lower: np.ndarray

    @property
    def undecided(self) -> np.ndarray:
        return self.status == UNDECIDED

    def offsets(self, coeff: np.ndarray, lower_bound: bool = True) -> np.ndarray:
        """Offset matrix with one column per output row of ``coeff``.

        ``H[r, j] = lower[r]`` where neuron r is undecided and its coefficient
        for output j is negative (positive when ``lower_bound`` is False).
        """
        sign = coeff < 0 if lower_bound else coeff > 0
        return np.where(sign & self.undecided, self.lower, 0.0).T


@dataclass(frozen=True)
class CertifiedQBounds:
    q_lower: np.ndarray
    q_upper: np.ndarray
    q_nominal: np.ndarray


def relu_relaxation(l: float, u: float):
    """Return ``(status, slope)`` of a ReLU whose input lies in ``[l, u]``.

    ``l == 0`` counts as active and ``u == 0`` as inactive.
    """
    if l > u:
        raise ValueError(f"lower bound {l} exceeds upper bound {u}")
    if l >= 0:
        return ACTIVE, 1.0
    if u <= 0:
        return INACTIVE, 0.0
    return UNDECIDED, u / (u - l)


def _relax_layer(lower, upper):
    active = lower >= 0
    inactive = ~active & (upper <= 0)
    undecided = ~active & ~inactive
    status = np.where(active, ACTIVE, np.where(inactive, INACTIVE, UNDECIDED))
    slope = np.where(active, 1.0, 0.0)
    # divide only where undecided, so u - l > 0
    slope[undecided] = upper[undecided] / (upper[undecided] - lower[undecided])
    return ReluRelaxation(status=status, slope=slope, lower=np.asarray(lower, dtype=np.float64))


def _check_ball(net, ball):
    if ball.dim != net.n_inputs:
        raise ValueError(f"ball has dimension {ball.dim}, network expects {net.n_inputs}")


def _linear_bounds(net, ball, relaxations, k):
    """Bounds on the outputs of layer ``k`` (0-based) of the relaxed network.

    Layers ``0..k-1`` use the given relaxations. Returns ``(lower, upper)``.
    """
    w, b = net.weights, net.biases
    coeff = w[k]
    lo_coeff = up_coeff = coeff
    lo_const = b[k].copy()
    up_const = b[k].copy()
    for i in range(k - 1, -1, -1):
        rel = relaxations[i]
        # offsets: sum_r A[j, r] * (b_r - H[r, j]); H is never materialised
        lo_mask = (lo_coeff < 0) & rel.undecided
        up_mask = (up_coeff > 0) & rel.undecided
        lo_const = lo_const - (lo_coeff * lo_mask * rel.slope) @ rel.lower
        up_const = up_const - (up_coeff * up_mask * rel.slope) @ rel.lower
        lo_coeff = lo_coeff * rel.slope
        up_coeff = up_coeff * rel.slope
        lo_const = lo_const + lo_coeff @ b[i]
        up_const = up_const + up_coeff @ b[i]
        lo_coeff = lo_coeff @ w[i]
        up_coeff = up_coeff @ w[i]
    q = dual_order(ball.p)
    lower = lo_coeff @ ball.center + lo_const - _rownorm(lo_coeff * ball.eps, q)
    upper = up_coeff @ ball.center + up_const + _rownorm(up_coeff * ball.eps, q)
    return lower, upper


def first_layer_bounds(net: DenseReluNetwork, ball: PerturbationBall):
    """Exact bounds ``(l, u)`` of the first affine layer over the ball."""
    _check_ball(net, ball)
    return _linear_bounds(net, ball, [], 0)


def _propagate(net, ball):
    bounds, relaxations = [], []
    for k in range(net.n_layers - 1):
        lower, upper = _linear_bounds(net, ball, relaxations, k)
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise FloatingPointError(f"non-finite bounds at hidden layer {k + 1}")
        # rounding can leave lower a hair above upper for eps == 0
        lower = np.minimum(lower, upper)
        bounds.append(LayerBounds(lower=lower, upper=upper))
        relaxations.append(_relax_layer(lower, upper))
    return bounds, relaxations


def propagate_bounds(net: DenseReluNetwork, ball: PerturbationBall) -> list[LayerBounds]:
    """Pre-ReLU bounds for every hidden layer, first to last."""
    _check_ball(net, ball)
    return _propagate(net, ball)[0]


def relaxations(net: DenseReluNetwork, ball: PerturbationBall) -> list[ReluRelaxation]:
    _check_ball(net, ball)
    return _propagate(net, ball)[1]


def certified_q_bounds(net: DenseReluNetwork, ball: PerturbationBall) -> CertifiedQBounds:
    """Guaranteed ``q_lower <= Q(s, a) <= q_upper`` for all ``s`` in ``ball``."""
    _check_ball(net, ball)
    _, rels = _propagate(net, ball)
    lower, upper = _linear_bounds(net, ball, rels, net.n_layers - 1)
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise FloatingPointError("non-finite bounds at the output layer")
    nominal = forward(net, ball.center)
    return CertifiedQBounds(q_lower=lower, q_upper=upper, q_nominal=nominal)
