"""``dronepatrol`` command line: training, evaluation and the comparison experiments."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .. import env as E
from ..learner import load_weights, save_weights, train_run
from ..relevance import generate_random_map, load_map
from . import experiments as X
from .bruteforce import brute_force_search
from .config import load_config, resolve_seed, with_overrides

LOG_COLUMNS = ["epoch", "epsilon", "loss", "mean_reward", "wall_ms"]


def _load_map(spec: str, config: E.EnvConfig):
    if spec.startswith("random:"):
        return generate_random_map(int(spec.split(":", 1)[1]), config.map_gen)
    rmap = load_map(spec)
    if rmap.shape != config.grid.shape:
        raise SystemExit(f"map is {rmap.shape}, config expects {config.grid.shape}")
    return rmap


def cmd_train(args, env, train):
    seed = resolve_seed(args.seed)
    res = train_run(args.mode, train, env, seed, epochs=args.epochs,
                    progress_every=args.progress)
    save_weights(res.params, args.out)
    if args.log:
        X.write_csv(args.log, [vars(e) for e in res.log], LOG_COLUMNS)
    print(f"saved {args.out} after {len(res.log)} epochs")


def cmd_eval(args, env, train):
    seed = resolve_seed(args.seed)
    params = load_weights(args.weights)
    rmap = _load_map(args.map, env)
    rng = np.random.default_rng(seed)
    starts = [E.random_state(rng, env) for _ in range(args.drones)]
    ro = X.rollout(params, rmap, starts, args.steps, env, epsilon=args.epsilon, rng=rng)
    rows = []
    for t in range(args.steps + 1):
        row = {"step": t, "coverage": float(ro.coverage[t])}
        for i in range(args.drones):
            s = ro.states[t][i]
            row[f"cor_{i}"] = float(ro.cors[t, i])
            row[f"state_{i}"] = " ".join(map(str, s))
        rows.append(row)
    if args.csv:
        X.write_csv(args.csv, rows)
    print(f"average G = {X.fmt(float(ro.coverage[1:].mean()))}")


def cmd_bruteforce(args, env, train):
    cfg = with_overrides(env, disc=args.disc)
    rmap = _load_map(args.map, cfg)
    state, cor = brute_force_search(rmap, cfg, workers=args.workers)
    row = dict(zip(E.DroneState._fields, state))
    row["cor"] = float(cor)
    if args.csv:
        X.write_csv(args.csv, [row])
    print(f"best state {tuple(state)} COR {X.fmt(cor)}")


def cmd_compare_zigzag(args, env, train):
    seed = resolve_seed(args.seed)
    rep = X.patrol_comparison(load_weights(args.weights), env, n_maps=args.maps,
                              steps=args.steps, seed=seed, epsilon=args.epsilon)
    if args.csv:
        X.write_csv(args.csv, rep.records)
    _print_aggregates(rep)


def cmd_swarm_compare(args, env, train):
    seed = resolve_seed(args.seed)
    counts = tuple(int(c) for c in args.drones.split(","))
    rep = X.swarm_comparison(load_weights(args.greedy), load_weights(args.coop), env,
                             counts=counts, maps_per_count=args.maps, steps=args.steps,
                             seed=seed, epsilon=args.epsilon)
    if args.csv:
        X.write_csv(args.csv, rep.records)
    _print_aggregates(rep)


def cmd_convergence(args, env, train):
    seed = resolve_seed(args.seed)
    rep = X.convergence_experiment(load_weights(args.weights), env, n_maps=args.maps,
                                   drones_per_map=args.drones, steps=args.steps, seed=seed,
                                   epsilon=args.epsilon)
    if args.csv:
        X.write_csv(args.csv, rep.records)
    _print_aggregates(rep)


def cmd_timing(args, env, train):
    params = load_weights(args.weights)
    ms = X.inference_timing(params, trials=args.trials, batches=args.batches)
    for m in ms:
        print(f"{m:.4f} ms per forward pass")


def _print_aggregates(rep):
    for k, v in rep.aggregates.items():
        print(f"{k} = {X.fmt(v)}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dronepatrol", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="INI config file (defaults if omitted)")
        sp.set_defaults(func=fn)
        return sp

    sp = add("train", cmd_train, "train greedy or cooperative weights")
    sp.add_argument("--mode", choices=["greedy", "coop"], required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--log", help="training log CSV")
    sp.add_argument("--progress", type=int, default=0, metavar="N",
                    help="log a progress line every N epochs")

    sp = add("eval", cmd_eval, "roll out trained weights on one map")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--map", required=True, help="map file or random:SEED")
    sp.add_argument("--drones", type=int, default=1)
    sp.add_argument("--steps", type=int, default=500)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epsilon", type=float, default=X.EVAL_EPSILON,
                    help="random-action probability during evaluation")
    sp.add_argument("--csv")

    sp = add("bruteforce", cmd_bruteforce, "exhaustive COR optimum at reduced discretization")
    sp.add_argument("--map", required=True, help="map file or random:SEED")
    sp.add_argument("--disc", type=int, default=16)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--csv")

    sp = add("compare-zigzag", cmd_compare_zigzag, "learned patroller vs. zigzag baseline")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--maps", type=int, default=50)
    sp.add_argument("--steps", type=int, default=500)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epsilon", type=float, default=X.EVAL_EPSILON,
                    help="random-action probability during evaluation")
    sp.add_argument("--csv")

    sp = add("swarm-compare", cmd_swarm_compare, "greedy vs. cooperative swarms")
    sp.add_argument("--greedy", required=True)
    sp.add_argument("--coop", required=True)
    sp.add_argument("--drones", default="2,3,4,5")
    sp.add_argument("--maps", type=int, default=20)
    sp.add_argument("--steps", type=int, default=500)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epsilon", type=float, default=X.EVAL_EPSILON,
                    help="random-action probability during evaluation")
    sp.add_argument("--csv")

    sp = add("convergence", cmd_convergence, "COR spread of single drones on frozen masks")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--maps", type=int, default=50)
    sp.add_argument("--drones", type=int, default=20)
    sp.add_argument("--steps", type=int, default=50)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epsilon", type=float, default=X.EVAL_EPSILON,
                    help="random-action probability during evaluation")
    sp.add_argument("--csv")

    sp = add("timing", cmd_timing, "single-threaded forward pass latency")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--batches", type=int, default=1)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose or getattr(args, "progress", 0)
                        else logging.WARNING, format="%(asctime)s %(message)s")
    env, train = load_config(args.config)
    try:
        args.func(args, env, train)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
