"""Command-line entry point: ``carrl <subcommand> ...``.

All tabular output is CSV with floats written at round-trip precision, so
reruns with the same seeds are byte-identical (timing columns excepted).
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys

import numpy as np

from . import dqn
from .attacks import PerturbationSpec
from .certify import PerturbationBall, certified_q_bounds, parse_norm
from .envs import make_env
from .evaluation import (
    TRAJECTORY_COLUMNS,
    best_eps_analysis,
    read_sweep,
    run_batch,
    summarize,
    sweep,
    timing_probe,
    write_cells,
)
from .netcore import load_network, save_network


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _fmt(x) -> str:
    return repr(float(x))


def _writer(out):
    return csv.writer(out, lineterminator="\n")


def cmd_certify(args, out):
    net = load_network(args.net)
    state = np.array(args.state)
    eps = args.eps[0] if len(args.eps) == 1 else np.array(args.eps)
    bounds = certified_q_bounds(net, PerturbationBall(state, eps, args.p))
    w = _writer(out)
    w.writerow(["action", "nominal", "q_lower", "q_upper"])
    for a, (q, lo, hi) in enumerate(zip(bounds.q_nominal, bounds.q_lower, bounds.q_upper)):
        w.writerow([a, _fmt(q), _fmt(lo), _fmt(hi)])


def cmd_attack(args, out):
    net = load_network(args.net)
    state = np.array(args.state)
    mask = args.mask if args.mask is not None else None
    spec = PerturbationSpec(args.kind, args.mag, mask)
    perturbed = spec.apply(net, state, np.random.default_rng(args.seed))
    _writer(out).writerow([_fmt(v) for v in perturbed])


def cmd_train(args, out):
    config = dqn.DEFAULT_CONFIGS[args.env]
    if args.config:
        config = dqn.TrainConfig.from_file(args.config, base=config)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    hidden = args.hidden or dqn.DEFAULT_HIDDEN[args.env]
    net = dqn.train(lambda: make_env(args.env), hidden, config)
    save_network(net, args.out)
    mean, _ = dqn.evaluate_greedy(net, lambda: make_env(args.env), args.eval_episodes, config.seed)
    _writer(out).writerows([["env", "seed", "steps", "greedy_mean_reward"],
                            [args.env, config.seed, config.total_steps, _fmt(mean)]])


def _spec(args, env):
    mask = args.mask if args.mask is not None else env.robust_mask()
    return PerturbationSpec(args.attack, args.mag, mask)


def cmd_eval(args, out):
    net = load_network(args.net)
    env = make_env(args.env)
    spec = _spec(args, env)
    policy = args.policy or ("nominal" if args.eps == 0 else "carrl")
    trajectories = [] if args.trajectory else None
    metrics = run_batch(net, args.env, policy, args.eps, spec, args.episodes, args.seeds,
                        timed=args.timing, trajectories=trajectories)
    write_cells([summarize(args.env, policy, args.eps, spec, args.seeds, metrics)], out)
    if trajectories is not None:
        with open(args.trajectory, "w", newline="") as fh:
            w = _writer(fh)
            w.writerow(("episode",) + TRAJECTORY_COLUMNS)
            for i, traj in enumerate(trajectories):
                for step, ex, ey, ox, oy, action, reward in traj:
                    w.writerow([i, step, _fmt(ex), _fmt(ey), _fmt(ox), _fmt(oy), action, _fmt(reward)])


def cmd_sweep(args, out):
    net = load_network(args.net)
    env = make_env(args.env)
    mask = args.mask if args.mask is not None else env.robust_mask()
    cells = sweep(net, args.env, args.eps_grid, args.attacks, args.mags, args.episodes, args.seeds,
                  mask=mask, timed=args.timing)
    if args.out:
        write_cells(cells, args.out)
    else:
        write_cells(cells, out)


def cmd_analyze(args, out):
    result = best_eps_analysis(read_sweep(args.sweep))
    w = _writer(out)
    w.writerow(["attack_kind", "attack_magnitude", "best_eps", "pearson_r"])
    for kind, res in result.items():
        for mag, eps in res["best_eps"].items():
            w.writerow([kind, _fmt(mag), _fmt(eps), _fmt(res["pearson_r"])])


def cmd_time(args, out):
    net = load_network(args.net)
    res = timing_probe(net, args.eps, args.queries, args.seed, args.p)
    w = _writer(out)
    w.writerow(["nominal_ms", "robust_ms", "ratio"])
    w.writerow([f"{1e3 * res['nominal_s']:.4f}", f"{1e3 * res['robust_s']:.4f}", f"{res['ratio']:.2f}"])


def _add_attack_args(p):
    p.add_argument("--attack", default="none", choices=["none", "noise", "fgst", "oracle"])
    p.add_argument("--mag", type=float, default=0.0, help="noise sigma or attack radius")
    p.add_argument("--mask", type=_ints, help="0/1 per observation entry (default: env's perturbable dims)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carrl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", help="certified Q-value bounds at a state")
    p.add_argument("--net", required=True)
    p.add_argument("--state", type=_floats, required=True)
    p.add_argument("--eps", type=_floats, required=True, help="scalar or one radius per dimension")
    p.add_argument("--p", type=parse_norm, default=math.inf)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("attack", help="perturb one observation")
    p.add_argument("--net", required=True)
    p.add_argument("--state", type=_floats, required=True)
    p.add_argument("--kind", choices=["noise", "fgst"], required=True)
    p.add_argument("--mag", type=float, required=True)
    p.add_argument("--mask", type=_ints)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("train", help="train a DQN and save its weights")
    p.add_argument("--env", choices=["cartpole", "collision"], required=True)
    p.add_argument("--config", help="key = value file overriding the env defaults")
    p.add_argument("--out", required=True)
    p.add_argument("--hidden", type=_ints)
    p.add_argument("--seed", type=int)
    p.add_argument("--eval-episodes", type=int, default=100)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="one batch of episodes")
    p.add_argument("--net", required=True)
    p.add_argument("--env", choices=["cartpole", "collision"], required=True)
    p.add_argument("--policy", choices=["nominal", "carrl"])
    p.add_argument("--eps", type=float, default=0.0, help="robustness radius on perturbable dims")
    _add_attack_args(p)
    p.add_argument("--episodes", type=int, default=100, help="episodes per seed")
    p.add_argument("--seeds", type=_ints, default=[0, 1, 2, 3, 4])
    p.add_argument("--trajectory", help="write per-step positions (collision world) to this CSV")
    p.add_argument("--timing", action="store_true", help="record decision latency (not reproducible)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid over eps, attack kind and magnitude")
    p.add_argument("--net", required=True)
    p.add_argument("--env", choices=["cartpole", "collision"], required=True)
    p.add_argument("--eps-grid", type=_floats, required=True)
    p.add_argument("--attacks", type=lambda t: t.split(","), required=True)
    p.add_argument("--mags", type=_floats, required=True)
    p.add_argument("--mask", type=_ints)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seeds", type=_ints, default=[0, 1, 2, 3, 4])
    p.add_argument("--out")
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="best eps per attack magnitude from a sweep CSV")
    p.add_argument("--sweep", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("time", help="latency of nominal vs certified decisions")
    p.add_argument("--net", required=True)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--p", type=parse_norm, default=math.inf)
    p.add_argument("--queries", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_time)
    return parser


def main(argv=None, out=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args, out or sys.stdout)
    except (ValueError, OSError, FloatingPointError, dqn.TrainingDivergedError) as exc:
        print(f"carrl {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
