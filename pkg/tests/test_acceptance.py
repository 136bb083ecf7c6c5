"""Acceptance criteria 1-10, each printing one PASS/FAIL line.

Criteria 6-8 train networks (about 10 minutes on one core in total).
"""

import io
import math
import time

import numpy as np
import pytest

from carrl.attacks import PerturbationSpec
from carrl.certify import PerturbationBall, certified_q_bounds, dual_order
from carrl.cli import main
from carrl.dqn import CARTPOLE_CONFIG, COLLISION_CONFIG, train
from carrl.envs import CartpoleEnv, CollisionAvoidanceEnv
from carrl.evaluation import min_separation_trend, run_batch, timing_probe
from carrl.netcore import DenseReluNetwork, forward, input_gradient, save_network, weight_gradients

from .conftest import random_net, random_shape
from .test_netcore import fd_input_gradient, fd_weight_gradients, kink_margin

SEEDS = [0, 1, 2, 3, 4]
EPISODES = 100


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail

    return _report


def _rewards(metrics):
    return float(np.mean([m.total_reward for m in metrics]))


def test_criterion_1_soundness(report):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = -math.inf
    for _ in range(20):
        net = random_net(rng, random_shape(rng, max_hidden=16, max_layers=2, max_actions=11))
        for _ in range(10):
            ball = PerturbationBall(rng.standard_normal(net.n_inputs), rng.uniform(0, 0.2, net.n_inputs))
            b = certified_q_bounds(net, ball)
            lo, hi = np.full(net.n_actions, np.inf), np.full(net.n_actions, -np.inf)
            for chunk in range(10):
                q = forward(net, ball.sample(100_000, rng, corners=chunk == 0))
                lo, hi = np.minimum(lo, q.min(axis=0)), np.maximum(hi, q.max(axis=0))
            worst = max(worst, float(np.max(b.q_lower - lo)), float(np.max(hi - b.q_upper)))
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-9 and elapsed <= 300,
           f"max violation {worst:.3e} (tolerance 1e-9) over 200 balls x 1e6 samples in {elapsed:.0f}s")


def test_criterion_2_eps_zero_exactness(report):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        net = random_net(rng, random_shape(rng))
        s = rng.standard_normal(net.n_inputs)
        b = certified_q_bounds(net, PerturbationBall(s, 0.0))
        q = forward(net, s)
        scale = np.maximum(np.abs(q), 1e-12)
        worst = max(worst, float(np.max(np.abs(b.q_lower - q) / scale)), float(np.max(np.abs(b.q_upper - q) / scale)))
    report(2, worst <= 1e-9, f"max relative deviation {worst:.3e} over 1000 pairs")


def test_criterion_3_linear_exactness(report):
    lin = DenseReluNetwork([[[1.0, -2.0]]], [[0.5]])
    b = certified_q_bounds(lin, PerturbationBall([1, 1], [0.1, 0.2]))
    fixture_ok = (np.allclose(b.q_nominal, [-0.5], rtol=0, atol=1e-15)
                  and np.allclose(b.q_lower, [-1.0], rtol=1e-12, atol=0)
                  and np.allclose(b.q_upper, [0.0], rtol=0, atol=1e-15))
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(200):
        p = [1.0, 2.0, math.inf][int(rng.integers(3))]
        # a linear layer, or a positive two-layer net whose ReLUs are all active
        if rng.random() < 0.5:
            w = [rng.standard_normal((int(rng.integers(1, 12)), 5))]
            bias = [rng.standard_normal(w[0].shape[0])]
        else:
            w = [rng.uniform(0.1, 1, (8, 5)), rng.standard_normal((4, 8))]
            bias = [np.full(8, 5.0), rng.standard_normal(4)]
        net = DenseReluNetwork(w, bias)
        ball = PerturbationBall(rng.uniform(0, 1, 5), rng.uniform(0, 0.3, 5), p)
        eff = w[0] if len(w) == 1 else w[1] @ w[0]
        expected = forward(net, ball.center) - np.linalg.norm(eff * ball.eps, ord=dual_order(p), axis=1)
        got = certified_q_bounds(net, ball).q_lower
        worst = max(worst, float(np.max(np.abs(got - expected) / np.maximum(np.abs(expected), 1e-300))))
    report(3, fixture_ok and worst <= 1e-12,
           f"hand fixture {'ok' if fixture_ok else 'wrong'}; max relative error {worst:.3e} over 200 nets")


def test_criterion_4_monotonicity(report):
    rng = np.random.default_rng(4)
    violations = 0
    for _ in range(1000):
        net = random_net(rng, random_shape(rng))
        s = rng.standard_normal(net.n_inputs)
        eps = rng.uniform(0, 0.2, net.n_inputs)
        a = certified_q_bounds(net, PerturbationBall(s, eps))
        b = certified_q_bounds(net, PerturbationBall(s, 2 * eps))
        violations += bool(np.any(b.q_lower > a.q_lower + 1e-12) or np.any(b.q_upper < a.q_upper - 1e-12))
    report(4, violations == 0, f"{violations} violations over 1000 (eps, 2 eps) pairs")


def test_criterion_5_gradients(report):
    rng = np.random.default_rng(5)
    worst, nets = 0.0, 0
    while nets < 100:
        net = random_net(rng, [3, 5, 4, 3])
        states = rng.standard_normal((4, 3))
        if min(kink_margin(net, s) for s in states) < 1e-3:
            continue
        target = np.eye(3)[rng.integers(3)]
        g, fd = input_gradient(net, states[0], target), fd_input_gradient(net, states[0], target)
        pairs = [(g, fd)]
        actions, targets = rng.integers(3, size=4), rng.standard_normal(4)
        for (gw, gb), (fw, fb) in zip(weight_gradients(net, states, actions, targets),
                                      fd_weight_gradients(net, states, actions, targets)):
            pairs += [(gw, fw), (gb, fb)]
        for got, ref in pairs:
            # relative error with a floor for entries that are zero analytically
            err = np.abs(got - ref) / np.maximum(np.abs(ref), 1e-4)
            worst = max(worst, float(err.max()))
        nets += 1
    report(5, worst <= 1e-4, f"max relative error {worst:.2e} over 100 nets")


@pytest.fixture(scope="module")
def cartpole_nets():
    return [train(CartpoleEnv, (4, 4), CARTPOLE_CONFIG.replace(seed=s)) for s in SEEDS]


@pytest.mark.slow
def test_criterion_6_cartpole(report, cartpole_nets):
    t0 = time.perf_counter()
    noise = PerturbationSpec("noise", 0.25)
    clean, gains, lines = [], [], []
    for seed, net in zip(SEEDS, cartpole_nets):
        c = _rewards(run_batch(net, "cartpole", "nominal", 0.0, None, EPISODES, SEEDS, timed=False))
        nom = _rewards(run_batch(net, "cartpole", "nominal", 0.0, noise, EPISODES, SEEDS, timed=False))
        rob = _rewards(run_batch(net, "cartpole", "carrl", 0.05, noise, EPISODES, SEEDS, timed=False))
        clean.append(c)
        gains.append(rob - nom)
        lines.append(f"seed {seed}: clean {c:.1f} noisy {nom:.1f} carrl {rob:.1f}")
    n_clean = sum(c >= 195 for c in clean)
    n_gain = sum(g >= 20 for g in gains)
    report(6, n_clean >= 3 and n_gain >= 3,
           f"clean>=195 in {n_clean}/5, carrl gain>=20 in {n_gain}/5 ({'; '.join(lines)}; "
           f"eval {time.perf_counter() - t0:.0f}s)")


@pytest.fixture(scope="module")
def collision_net():
    return train(CollisionAvoidanceEnv, (64, 64), COLLISION_CONFIG)


@pytest.mark.slow
def test_criterion_7_collision_directional(report, collision_net):
    mask = CollisionAvoidanceEnv().robust_mask()
    arms = {}
    for label, spec in [("clean", None), ("noise 0.5", PerturbationSpec("noise", 0.5, mask)),
                        ("fgst 0.2", PerturbationSpec("fgst", 0.2, mask))]:
        for policy, eps in [("nominal", 0.0), ("carrl", 0.1)]:
            m = run_batch(collision_net, "collision", policy, eps, spec, EPISODES, SEEDS, timed=False)
            arms[label, policy] = (_rewards(m), float(np.mean([x.collided for x in m])))
    ok = all(arms[k, "carrl"][1] < arms[k, "nominal"][1] and arms[k, "carrl"][0] > arms[k, "nominal"][0]
             for k in ("noise 0.5", "fgst 0.2"))
    clean_nom, clean_rob = arms["clean", "nominal"][0], arms["clean", "carrl"][0]
    ok = ok and abs(clean_rob - clean_nom) <= 0.15 * abs(clean_nom)
    detail = "; ".join(f"{k} {p}: reward {r:.3f} collisions {c:.3f}" for (k, p), (r, c) in arms.items())
    report(7, ok, detail)


@pytest.mark.slow
def test_criterion_8_conservatism(report, collision_net):
    trend = min_separation_trend(collision_net, [0.0, 0.1, 0.2, 0.3])
    drops = [a - b for a, b in zip(trend, trend[1:]) if b < a]
    ok = len(drops) == 0 or (len(drops) == 1 and drops[0] <= 0.05)
    report(8, ok, "min separation " + ", ".join(f"{d:.3f}" for d in trend))


def test_criterion_9_timing(report):
    net = random_net(np.random.default_rng(9), [12, 64, 64, 11])
    res = timing_probe(net, 0.1, 1000)
    nominal_ms, robust_ms = 1e3 * res["nominal_s"], 1e3 * res["robust_s"]
    report(9, nominal_ms <= 1 and robust_ms <= 20,
           f"nominal {nominal_ms:.3f} ms, robust {robust_ms:.3f} ms, ratio {res['ratio']:.1f}")


@pytest.mark.slow
def test_criterion_10_determinism(report, tmp_path, cartpole_nets, collision_net):
    cp, ca = tmp_path / "cp.json", tmp_path / "ca.json"
    save_network(cartpole_nets[0], cp)
    save_network(collision_net, ca)
    cfg = tmp_path / "short.cfg"
    cfg.write_text("total_steps = 2000\nlearning_starts = 200\n")
    sweep_csv = tmp_path / "sweep.csv"
    commands = [
        ["certify", "--net", str(ca), "--state", ",".join(["0.3"] * 12), "--eps", "0.1"],
        ["attack", "--net", str(cp), "--state", "0.01,0,0.02,0", "--kind", "fgst", "--mag", "0.1"],
        ["attack", "--net", str(cp), "--state", "0.01,0,0.02,0", "--kind", "noise", "--mag", "0.1"],
        ["train", "--env", "cartpole", "--config", str(cfg), "--out", str(tmp_path / "w.json"), "--eval-episodes", "5"],
        ["eval", "--net", str(ca), "--env", "collision", "--eps", "0.1", "--attack", "fgst", "--mag", "0.2",
         "--episodes", "10", "--trajectory", str(tmp_path / "traj.csv")],
        ["sweep", "--net", str(ca), "--env", "collision", "--eps-grid", "0,0.1,0.2", "--attacks", "fgst",
         "--mags", "0,0.1,0.2", "--episodes", "5", "--out", str(sweep_csv)],
        ["analyze", "--sweep", str(sweep_csv)],
    ]
    differing = []
    for argv in commands:
        outputs = []
        for _ in range(2):
            out = io.StringIO()
            assert main(argv, out) == 0
            files = [p.read_bytes() for p in sorted(tmp_path.glob("*.csv"))]
            outputs.append((out.getvalue(), files))
        if outputs[0] != outputs[1]:
            differing.append(argv[0])
    report(10, not differing, f"{len(commands)} commands rerun, differing: {differing or 'none'}")
