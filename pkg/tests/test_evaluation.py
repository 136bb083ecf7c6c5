import io
import math

import numpy as np
import pytest

from carrl.attacks import PerturbationSpec
from carrl.dqn import evaluate_greedy
from carrl.envs import CartpoleEnv, CollisionAvoidanceEnv, ca_observe
from carrl.evaluation import (
    SWEEP_COLUMNS,
    _rngs,
    best_eps_analysis,
    min_separation_trend,
    read_sweep,
    run_batch,
    run_episode,
    summarize,
    sweep,
    timing_probe,
    write_cells,
)
from carrl.netcore import init_network

from .conftest import random_net


@pytest.fixture
def cp_net():
    return init_network([4, 4, 4, 2], np.random.default_rng(3))


@pytest.fixture
def ca_net():
    return random_net(np.random.default_rng(5), [12, 16, 16, 11])


def test_run_batch_matches_evaluate_greedy(cp_net):
    mean, metrics = evaluate_greedy(cp_net, CartpoleEnv, 10, seed=4)
    batch = run_batch(cp_net, "cartpole", "nominal", 0.0, None, 10, [4], timed=False)
    assert batch == metrics
    assert np.mean([m.total_reward for m in batch]) == mean


def test_carrl_eps_zero_matches_nominal_trajectories(ca_net):
    a, b = [], []
    run_batch(ca_net, "collision", "nominal", 0.0, None, 5, [0, 1], timed=False, trajectories=a)
    run_batch(ca_net, "collision", "carrl", 0.0, None, 5, [0, 1], timed=False, trajectories=b)
    assert a == b and len(a) == 10


def test_policy_sees_only_perturbed_observation(ca_net):
    seen = []
    env = CollisionAvoidanceEnv()
    def decide(obs):
        seen.append((obs.copy(), env.state))
        return 5

    run_episode(ca_net, env, decide, PerturbationSpec("noise", 0.5, env.robust_mask()), *_rngs(0), timed=False)
    diffs = [obs - ca_observe(st) for obs, st in seen]
    assert all(np.all(d[[0, 1, 2, 3, 4, 5, 6, 9, 10, 11]] == 0) for d in diffs)
    assert any(np.any(d[7:9] != 0) for d in diffs)


def test_metrics_invariants(ca_net):
    for m in run_batch(ca_net, "collision", "carrl", 0.1, PerturbationSpec("fgst", 0.2), 10, [0], timed=False):
        assert not (m.collided and m.reached_goal)
        assert m.min_separation > 0


def test_run_batch_validation(cp_net):
    with pytest.raises(ValueError):
        run_batch(cp_net, "cartpole", "nominal", -0.1, None, 1, [0])
    with pytest.raises(ValueError):
        run_batch(cp_net, "cartpole", "greedy", 0.0, None, 1, [0])
    with pytest.raises(ValueError):
        run_batch(cp_net, "cartpole", "nominal", 0.0, None, 1, [])


def test_sweep_cross_product_and_determinism(cp_net, tmp_path):
    args = (cp_net, "cartpole", [0.0, 0.05, 0.1], ["noise", "fgst"], [0.0, 0.1, 0.2, 0.3], 2, [0, 1])
    cells = sweep(*args, out_path=tmp_path / "a.csv")
    sweep(*args, out_path=tmp_path / "b.csv")
    assert len(cells) == 24
    assert all(c.episodes == 4 for c in cells)
    assert {c.policy for c in cells if c.eps_robust == 0} == {"nominal"}
    a, b = (tmp_path / "a.csv").read_bytes(), (tmp_path / "b.csv").read_bytes()
    assert a == b
    header = a.decode().splitlines()[0]
    assert header == ",".join(SWEEP_COLUMNS)
    assert len(read_sweep(tmp_path / "a.csv")) == 24


def test_sweep_rejects_empty_grid(cp_net):
    with pytest.raises(ValueError):
        sweep(cp_net, "cartpole", [], ["noise"], [0.1], 1, [0])


def test_sweep_unwritable_path(cp_net, tmp_path):
    with pytest.raises(OSError):
        sweep(cp_net, "cartpole", [0.0], ["noise"], [0.1], 1, [0], out_path=tmp_path / "missing" / "x.csv")


def test_summarize_timing_column_blank_when_untimed(cp_net):
    metrics = run_batch(cp_net, "cartpole", "nominal", 0.0, None, 2, [0], timed=False)
    cell = summarize("cartpole", "nominal", 0.0, PerturbationSpec(), [0], metrics)
    out = io.StringIO()
    write_cells([cell], out)
    assert out.getvalue().splitlines()[1].endswith(",")


def test_best_eps_synthetic():
    eps_grid = [0.0, 0.1, 0.2, 0.3]
    rows = [
        {"attack_kind": "fgst", "eps_robust": e, "attack_magnitude": m, "mean_reward": -(e - m) ** 2}
        for e in eps_grid for m in eps_grid
    ]
    res = best_eps_analysis(rows)["fgst"]
    assert res["best_eps"] == {m: m for m in eps_grid}
    assert res["pearson_r"] == pytest.approx(1.0)


def test_best_eps_tie_goes_to_smallest():
    rows = [{"eps_robust": e, "attack_magnitude": m, "mean_reward": 1.0} for e in (0.2, 0.1) for m in (0.0, 1.0)]
    res = best_eps_analysis(rows)[""]
    assert res["best_eps"] == {0.0: 0.1, 1.0: 0.1}
    assert math.isnan(res["pearson_r"])


def test_best_eps_rejects_degenerate():
    with pytest.raises(ValueError):
        best_eps_analysis([{"eps_robust": 0.1, "attack_magnitude": m, "mean_reward": m} for m in (0.0, 0.1)])
    with pytest.raises(ValueError):
        best_eps_analysis([])


def test_timing_probe(ca_net):
    res = timing_probe(ca_net, 0.1, 100)
    assert res["robust_s"] > 0 and res["nominal_s"] > 0 and math.isfinite(res["ratio"])
    with pytest.raises(ValueError):
        timing_probe(ca_net, 0.1, 10)


def test_min_separation_trend_shape(ca_net):
    trend = min_separation_trend(ca_net, [0.0, 0.1])
    assert len(trend) == 2 and all(t > 0 for t in trend)
