"""Episode batches under perturbation, parameter sweeps and timing."""

from __future__ import annotations

import csv
import itertools
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .attacks import PerturbationSpec
from .certify import PerturbationBall, certified_q_bounds
from .envs import make_env
from .netcore import DenseReluNetwork, forward
from .policy import argmax_first

POLICY_KINDS = ("nominal", "carrl")
SWEEP_COLUMNS = (
    "env", "policy", "eps_robust", "attack_kind", "attack_magnitude", "seeds", "episodes",
    "mean_reward", "std_reward", "mean_collisions", "mean_goal_rate", "mean_decision_ms",
)
TRAJECTORY_COLUMNS = ("step", "ego_x", "ego_y", "obs_x", "obs_y", "action", "reward")


@dataclass(frozen=True)
class EpisodeMetrics:
    total_reward: float
    steps: int
    collided: bool
    reached_goal: bool
    mean_decision_time: float
    min_separation: float = math.nan


@dataclass(frozen=True)
class SweepCell:
    env: str
    policy: str
    eps_robust: float
    attack_kind: str
    attack_magnitude: float
    seeds: tuple
    episodes: int
    mean_reward: float
    std_reward: float
    mean_collisions: float
    mean_goal_rate: float
    mean_decision_ms: float

    def row(self) -> list:
        return [
            self.env, self.policy, repr(self.eps_robust), self.attack_kind, repr(self.attack_magnitude),
            " ".join(map(str, self.seeds)), self.episodes, repr(self.mean_reward), repr(self.std_reward),
            repr(self.mean_collisions), repr(self.mean_goal_rate),
            "" if math.isnan(self.mean_decision_ms) else repr(self.mean_decision_ms),
        ]


def _env_factory(env):
    if isinstance(env, str):
        return lambda: make_env(env)
    return env


def _rngs(seed):
    """Independent streams for scenario draws and observation perturbations."""
    ss = np.random.SeedSequence(seed)
    env_ss, noise_ss = ss.spawn(2)
    return np.random.default_rng(env_ss), np.random.default_rng(noise_ss)


def make_decider(net: DenseReluNetwork, policy_kind: str, eps_vector: np.ndarray, p=math.inf):
    """Return ``observation -> action`` for the nominal or certified-robust policy."""
    if policy_kind not in POLICY_KINDS:
        raise ValueError(f"policy must be one of {POLICY_KINDS}, got {policy_kind!r}")
    if policy_kind == "nominal":
        return lambda obs: argmax_first(forward(net, obs))
    return lambda obs: argmax_first(certified_q_bounds(net, PerturbationBall(obs, eps_vector, p)).q_lower)


def run_episode(
    net: DenseReluNetwork,
    env,
    decide: Callable,
    perturbation: PerturbationSpec,
    env_rng: np.random.Generator,
    noise_rng: np.random.Generator,
    trajectory: list | None = None,
    timed: bool = True,
) -> EpisodeMetrics:
    """Roll out one episode; the policy sees only the perturbed observation."""
    true_obs = env.reset(env_rng)
    total, steps, elapsed = 0.0, 0, 0.0
    separation = getattr(env, "separation", None)
    min_sep = separation() if separation else math.nan
    while True:
        seen = perturbation.apply(net, true_obs, noise_rng)
        t0 = time.perf_counter() if timed else 0.0
        action = decide(seen)
        if timed:
            elapsed += time.perf_counter() - t0
        res = env.step(action)
        total += res.reward
        steps += 1
        if separation:
            min_sep = min(min_sep, separation())
        if trajectory is not None and hasattr(env.state, "ego"):
            st = env.state
            trajectory.append((steps, *st.ego.position, *st.obstacle.position, action, res.reward))
        true_obs = res.observation
        if res.done:
            return EpisodeMetrics(
                total_reward=total,
                steps=steps,
                collided=bool(res.info.get("collided")),
                reached_goal=bool(res.info.get("reached_goal")),
                mean_decision_time=elapsed / steps if timed else math.nan,
                min_separation=min_sep,
            )


def robust_eps_vector(env, eps_robust: float) -> np.ndarray:
    """Uniform radius on the environment's perturbable dimensions, zero elsewhere."""
    return float(eps_robust) * env.robust_mask().astype(np.float64)


def run_batch(
    net: DenseReluNetwork,
    env,
    policy_kind: str,
    eps_robust: float,
    perturbation: PerturbationSpec | None,
    episodes_per_seed: int,
    seeds: Sequence[int],
    p=math.inf,
    timed: bool = True,
    trajectories: list | None = None,
) -> list[EpisodeMetrics]:
    """Run ``episodes_per_seed`` episodes for each seed, in seed order.

    If ``trajectories`` is a list, one list of per-step rows is appended to
    it for every episode (collision world only).
    """
    if eps_robust < 0:
        raise ValueError("eps_robust must be non-negative")
    if episodes_per_seed < 1 or not seeds:
        raise ValueError("need at least one seed and one episode per seed")
    factory = _env_factory(env)
    perturbation = perturbation or PerturbationSpec()
    metrics = []
    for seed in seeds:
        env_obj = factory()
        decide = make_decider(net, policy_kind, robust_eps_vector(env_obj, eps_robust), p)
        env_rng, noise_rng = _rngs(seed)
        for _ in range(episodes_per_seed):
            traj = None if trajectories is None else []
            metrics.append(
                run_episode(net, env_obj, decide, perturbation, env_rng, noise_rng, trajectory=traj, timed=timed)
            )
            if traj is not None:
                trajectories.append(traj)
    return metrics


def summarize(
    env_name: str, policy: str, eps_robust: float, perturbation: PerturbationSpec,
    seeds: Sequence[int], metrics: Sequence[EpisodeMetrics],
) -> SweepCell:
    rewards = np.array([m.total_reward for m in metrics])
    times = [m.mean_decision_time for m in metrics]
    return SweepCell(
        env=env_name,
        policy=policy,
        eps_robust=float(eps_robust),
        attack_kind=perturbation.kind,
        attack_magnitude=float(perturbation.magnitude),
        seeds=tuple(seeds),
        episodes=len(metrics),
        mean_reward=float(rewards.mean()),
        std_reward=float(rewards.std()),
        mean_collisions=float(np.mean([m.collided for m in metrics])),
        mean_goal_rate=float(np.mean([m.reached_goal for m in metrics])),
        mean_decision_ms=math.nan if any(math.isnan(t) for t in times) else 1e3 * float(np.mean(times)),
    )


def write_cells(cells: Iterable[SweepCell], out) -> None:
    """Write sweep rows as CSV to a path or text stream."""
    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for c in cells:
            w.writerow(c.row())

    if isinstance(out, (str, Path)):
        with open(out, "w", newline="") as fh:
            _write(fh)
    else:
        _write(out)


def sweep(
    net: DenseReluNetwork,
    env_name: str,
    eps_grid: Sequence[float],
    attack_kinds: Sequence[str],
    magnitude_grid: Sequence[float],
    episodes_per_seed: int,
    seeds: Sequence[int],
    out_path=None,
    mask=None,
    timed: bool = False,
) -> list[SweepCell]:
    """Evaluate the full (eps, attack kind, magnitude) grid; optionally write CSV.

    ``eps = 0`` rows use the nominal policy, the rest the certified policy.
    ``mask`` defaults to the environment's perturbable dimensions.
    """
    if not (eps_grid and attack_kinds and magnitude_grid):
        raise ValueError("sweep grids must be non-empty")
    if mask is None:
        mask = make_env(env_name).robust_mask()
    cells = []
    for eps, kind, mag in itertools.product(eps_grid, attack_kinds, magnitude_grid):
        spec = PerturbationSpec(kind, float(mag), mask)
        policy = "nominal" if eps == 0 else "carrl"
        metrics = run_batch(net, env_name, policy, eps, spec, episodes_per_seed, seeds, timed=timed)
        cells.append(summarize(env_name, policy, eps, spec, seeds, metrics))
    if out_path is not None:
        write_cells(cells, out_path)
    return cells


def read_sweep(path) -> list[dict]:
    """Rows of a sweep CSV file with numeric columns parsed."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in ("eps_robust", "attack_magnitude", "mean_reward", "std_reward", "mean_collisions"):
            r[k] = float(r[k])
    return rows


def best_eps_analysis(rows) -> dict:
    """Best robustness radius per attack magnitude and its correlation with magnitude.

    ``rows`` are mappings with ``eps_robust``, ``attack_magnitude``,
    ``mean_reward`` and optionally ``attack_kind``. Ties go to the smaller
    eps. Returns ``{kind: {"best_eps": {magnitude: eps}, "pearson_r": r}}``;
    ``r`` is NaN when the best eps never changes.
    """
    by_kind: dict = {}
    for r in rows:
        kind = r.get("attack_kind", "")
        by_kind.setdefault(kind, {}).setdefault(float(r["attack_magnitude"]), []).append(
            (float(r["eps_robust"]), float(r["mean_reward"]))
        )
    if not by_kind:
        raise ValueError("empty sweep")
    out = {}
    for kind, by_mag in by_kind.items():
        eps_values = {e for cells in by_mag.values() for e, _ in cells}
        if len(by_mag) < 2 or len(eps_values) < 2:
            raise ValueError(f"{kind or 'sweep'}: need at least 2 magnitudes and 2 eps values")
        best = {}
        for mag in sorted(by_mag):
            cells = sorted(by_mag[mag])
            top = max(rew for _, rew in cells)
            best[mag] = next(e for e, rew in cells if rew == top)
        mags = np.array(list(best))
        eps = np.array(list(best.values()))
        r = math.nan if np.ptp(eps) == 0 else float(np.corrcoef(mags, eps)[0, 1])
        out[kind] = {"best_eps": best, "pearson_r": r}
    return out


def timing_probe(net: DenseReluNetwork, eps, n_queries: int = 1000, seed: int = 0, p=math.inf) -> dict:
    """Mean wall-clock seconds per nominal and per certified-robust decision."""
    if n_queries < 100:
        raise ValueError("n_queries must be at least 100")
    rng = np.random.default_rng(seed)
    states = rng.standard_normal((n_queries, net.n_inputs))
    eps = np.broadcast_to(np.asarray(eps, dtype=np.float64), (net.n_inputs,))

    t0 = time.perf_counter()
    for s in states:
        argmax_first(forward(net, s))
    nominal = (time.perf_counter() - t0) / n_queries

    t0 = time.perf_counter()
    for s in states:
        argmax_first(certified_q_bounds(net, PerturbationBall(s, eps, p)).q_lower)
    robust = (time.perf_counter() - t0) / n_queries
    return {"nominal_s": nominal, "robust_s": robust, "ratio": robust / nominal}


def min_separation_trend(net: DenseReluNetwork, eps_values: Sequence[float], scenario="swap") -> list[float]:
    """Minimum ego/obstacle distance of one noiseless episode per robustness radius."""
    from .envs import CollisionAvoidanceEnv

    out = []
    for eps in eps_values:
        env = CollisionAvoidanceEnv(scenario)
        decide = make_decider(net, "nominal" if eps == 0 else "carrl", robust_eps_vector(env, eps))
        env_rng, noise_rng = _rngs(0)
        m = run_episode(net, env, decide, PerturbationSpec(), env_rng, noise_rng, timed=False)
        out.append(m.min_separation)
    return out
