"""Evaluation runners: convergence, patrol vs. zigzag, greedy vs. cooperative, timing."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .. import env as E
from ..learner.dqn import greedy_action
from ..learner.network import NetworkParams, forward
from ..relevance import RelevanceMap, generate_random_map, global_coverage
from .zigzag import zigzag_action, zigzag_plan


@dataclass
class ExperimentReport:
    records: list[dict] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records], dtype=np.float64)


def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


def write_csv(path, rows: list[dict], columns: list[str] | None = None) -> None:
    columns = columns or (list(rows[0].keys()) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r[c]) for c in columns])


def boost(ours: float, baseline: float) -> float:
    """Percent improvement over the baseline (0 when both are 0, inf when only it is)."""
    if baseline == 0.0:
        return 0.0 if ours == 0.0 else math.copysign(math.inf, ours)
    return 100.0 * (ours - baseline) / baseline


def mode_of(params: NetworkParams) -> str:
    return {2: "greedy", 3: "coop"}[params.channels]


def normalized_spread(values) -> float:
    """Population std of ``values`` after scaling them to mean 1."""
    v = np.asarray(values, dtype=np.float64)
    mean = v.mean()
    return float((v / mean).std()) if mean > 0 else float("nan")


# Evaluation rollouts take a random action with this probability so a
# deterministic policy cannot lock into a cycle of states for the whole run.
EVAL_EPSILON = 0.05


def _explore_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 20_000])


def map_seeds(master_seed: int, n: int) -> list[int]:
    return [master_seed + i for i in range(n)]


@dataclass
class Rollout:
    states: list[list[E.DroneState]]  # per step, per drone (index 0 = initial)
    cors: np.ndarray  # (steps + 1, drones)
    coverage: np.ndarray  # (steps + 1,) global coverage
    rewards: np.ndarray  # (steps, drones)


def rollout(params: NetworkParams | None, rmap: RelevanceMap, drones, steps: int,
            config: E.EnvConfig, update_mask: bool = True, policy=None,
            epsilon: float = 0.0, rng: np.random.Generator | None = None) -> Rollout:
    """Run a swarm for ``steps`` steps.

    Actions come from ``policy(step, swarm)`` when given, otherwise from the
    network (argmax, or epsilon-greedy with ``rng``).
    """
    swarm = E.new_swarm(drones, rmap.shape)
    mode = mode_of(params) if params is not None else "greedy"
    states = [list(swarm.drones)]
    cors = [E.swarm_cors(swarm, rmap, config)]
    cov = [global_coverage(rmap, swarm.mask)]
    rewards = []
    n = len(swarm.drones)
    for t in range(steps):
        if policy is not None:
            actions = list(policy(t, swarm))
        else:
            obs = np.stack([E.encode_observation(swarm, i, rmap, mode, config)
                            for i in range(n)])
            q = forward(params, obs)
            actions = [greedy_action(row) for row in q]
            if epsilon > 0:
                for i in range(n):
                    if rng.random() < epsilon:
                        actions[i] = int(rng.integers(E.N_ACTIONS))
        swarm, r = E.step_swarm(swarm, actions, rmap, config, update_mask=update_mask)
        states.append(list(swarm.drones))
        cors.append(E.swarm_cors(swarm, rmap, config))
        cov.append(global_coverage(rmap, swarm.mask))
        rewards.append(r)
    return Rollout(states, np.array(cors), np.array(cov),
                   np.array(rewards).reshape(steps, n))


def random_policy(rng: np.random.Generator, n: int):
    def policy(t, swarm):
        return [int(a) for a in rng.integers(0, E.N_ACTIONS, n)]
    return policy


def convergence_experiment(params: NetworkParams, config: E.EnvConfig, n_maps: int = 50,
                           drones_per_map: int = 20, steps: int = 50,
                           seed: int = 0, maps: list[RelevanceMap] | None = None,
                           epsilon: float = EVAL_EPSILON) -> ExperimentReport:
    """Single drones on frozen masks; spread of normalized final COR per map.

    Also records the steps/shortest-path ratio: steps taken until the run
    first reached its best-COR state, over the fewest actions needed to get
    there from the start.
    """
    report = ExperimentReport()
    if maps is None:
        maps = [generate_random_map(s, config.map_gen) for s in map_seeds(seed, n_maps)]
    sigmas, ratios_all, finals = [], [], []
    for m, rmap in enumerate(maps):
        rng = np.random.default_rng(seed + 10_000 + m)
        explore = _explore_rng(seed + m)
        final = []
        ratios = []
        for _ in range(drones_per_map):
            s0 = E.random_state(rng, config)
            ro = rollout(params, rmap, [s0], steps, config, update_mask=False,
                         epsilon=epsilon, rng=explore)
            c = ro.cors[:, 0]
            final.append(c[-1])
            t_best = int(np.argmax(c))
            dist = E.min_state_distance(s0, ro.states[t_best][0], config)
            if dist > 0:
                ratios.append(t_best / dist)
        final = np.array(final)
        mean = final.mean()
        sigma = normalized_spread(final)
        ratio = float(np.mean(ratios)) if ratios else float("nan")
        report.records.append({"map": m, "seed": seed + m, "mean_final_cor": float(mean),
                               "sigma": sigma, "step_ratio": ratio})
        sigmas.append(sigma)
        ratios_all.extend(ratios)
        finals.append(mean)
    report.aggregates = {"mean_sigma": float(np.nanmean(sigmas)),
                         "max_sigma": float(np.nanmax(sigmas)),
                         "mean_step_ratio": float(np.mean(ratios_all)) if ratios_all else float("nan"),
                         "mean_final_cor": float(np.mean(finals))}
    return report


def patrol_run(params: NetworkParams, rmap: RelevanceMap, start: E.DroneState, steps: int,
               config: E.EnvConfig, epsilon: float = 0.0,
               rng: np.random.Generator | None = None) -> float:
    """Time-averaged global coverage of the learned patroller (steps 1..steps)."""
    ro = rollout(params, rmap, [start], steps, config, epsilon=epsilon, rng=rng)
    return float(ro.coverage[1:].mean())


def zigzag_run(rmap: RelevanceMap, steps: int, config: E.EnvConfig, plan=None) -> float:
    plan = plan or zigzag_plan(config)
    ro = rollout(None, rmap, [plan.start], steps, config,
                 policy=lambda t, swarm: [zigzag_action(plan, t)])
    return float(ro.coverage[1:].mean())


def patrol_comparison(params: NetworkParams | None, config: E.EnvConfig, n_maps: int = 50,
                      steps: int = 500, seed: int = 0,
                      epsilon: float = EVAL_EPSILON) -> ExperimentReport:
    """Learned single-drone patrolling against the zigzag baseline, per map.

    With ``params=None`` the zigzag is compared against itself.
    """
    report = ExperimentReport()
    plan = zigzag_plan(config)
    for m, map_seed in enumerate(map_seeds(seed, n_maps)):
        rmap = generate_random_map(map_seed, config.map_gen)
        zz = zigzag_run(rmap, steps, config, plan)
        if params is None:
            ours = zigzag_run(rmap, steps, config, plan)
        else:
            start = E.random_state(np.random.default_rng(map_seed + 10_000), config)
            ours = patrol_run(params, rmap, start, steps, config, epsilon,
                              _explore_rng(map_seed))
        report.records.append({"test": m + 1, "seed": map_seed, "ours": ours,
                               "zigzag": zz, "boost_pct": boost(ours, zz)})
    _aggregate(report, "ours", "zigzag")
    report.aggregates["win_fraction"] = float(np.mean(report.column("ours") > report.column("zigzag")))
    return report


def swarm_comparison(greedy: NetworkParams, coop: NetworkParams, config: E.EnvConfig,
                     counts=(2, 3, 4, 5), maps_per_count: int = 20, steps: int = 500,
                     seed: int = 0, epsilon: float = EVAL_EPSILON) -> ExperimentReport:
    """Greedy vs. cooperative swarms from identical initial states and maps.

    Both swarms draw their exploration from identically seeded streams.
    """
    report = ExperimentReport()
    for n in counts:
        for m in range(maps_per_count):
            map_seed = seed + 1000 * n + m
            rmap = generate_random_map(map_seed, config.map_gen)
            rng = np.random.default_rng(map_seed + 10_000)
            starts = [E.random_state(rng, config) for _ in range(n)]
            g = rollout(greedy, rmap, starts, steps, config, epsilon=epsilon,
                        rng=_explore_rng(map_seed)).coverage[1:].mean()
            c = rollout(coop, rmap, starts, steps, config, epsilon=epsilon,
                        rng=_explore_rng(map_seed)).coverage[1:].mean()
            g, c = float(g), float(c)
            report.records.append({"drones": n, "test": m + 1, "seed": map_seed,
                                   "coop": c, "greedy": g, "boost_pct": boost(c, g)})
    _aggregate(report, "coop", "greedy")
    for n in counts:
        rows = [r for r in report.records if r["drones"] == n]
        report.aggregates[f"boost_pct_{n}"] = float(np.mean([r["boost_pct"] for r in rows]))
        report.aggregates[f"win_fraction_{n}"] = float(np.mean([r["coop"] >= r["greedy"] for r in rows]))
    return report


def _aggregate(report: ExperimentReport, ours: str, base: str) -> None:
    a, b = report.column(ours), report.column(base)
    report.aggregates.update({
        f"mean_{ours}": float(a.mean()), f"std_{ours}": float(a.std()),
        f"mean_{base}": float(b.mean()), f"std_{base}": float(b.std()),
        "mean_boost_pct": float(report.column("boost_pct").mean()),
    })


def inference_timing(params: NetworkParams, trials: int = 1000, seed: int = 0,
                     batches: int = 1) -> list[float]:
    """Mean wall-clock milliseconds per single-observation forward pass.

    Returns one mean per batch of ``trials`` calls, measured single-threaded.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    from threadpoolctl import threadpool_limits

    rng = np.random.default_rng(seed)
    size = params.input_size
    obs = rng.random((trials, size, size, params.channels)).astype(np.float32)
    out = []
    with threadpool_limits(limits=1):
        forward(params, obs[0])  # warm-up
        for _ in range(batches):
            t0 = time.perf_counter()
            for i in range(trials):
                forward(params, obs[i])
            out.append((time.perf_counter() - t0) * 1e3 / trials)
    return out
