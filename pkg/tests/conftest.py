import numpy as np
import pytest

from carrl.netcore import DenseReluNetwork, init_network


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def linear_net():
    """Single linear layer: Q = s0 - 2 s1 + 0.5."""
    return DenseReluNetwork([[[1.0, -2.0]]], [[0.5]])


@pytest.fixture
def two_layer_net():
    return DenseReluNetwork([[[1.0], [-1.0]], [[1.0, 1.0]]], [[0.0, 0.0], [0.0]])


def random_net(rng, sizes, bias_scale=0.5):
    net = init_network(sizes, rng)
    biases = [bias_scale * rng.standard_normal(b.shape) for b in net.biases]
    return DenseReluNetwork(net.weights, biases)


def random_shape(rng, max_hidden=16, max_layers=2, max_in=6, max_actions=11):
    hidden = [int(rng.integers(1, max_hidden + 1)) for _ in range(int(rng.integers(1, max_layers + 1)))]
    return [int(rng.integers(1, max_in + 1)), *hidden, int(rng.integers(2, max_actions + 1))]
