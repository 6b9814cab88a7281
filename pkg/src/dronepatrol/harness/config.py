"""Flat ``key = value`` config files with [env], [penalty], [decay], [train] sections.

Every key is optional; missing keys keep the dataclass defaults.  See
``configs/full.ini`` for the full documented list.
"""
from __future__ import annotations

import configparser
import dataclasses
import os
from pathlib import Path

from ..env import EnvConfig
from ..geometry import CameraIntrinsics
from ..learner.dqn import TrainConfig
from ..relevance import DecayParams

SEED_ENV_VAR = "PATROL_SEED"

_ENV_KEYS = {
    "side": float, "grid_cells": int, "z_min": float, "z_max": float, "disc": int,
    "episode_length": int, "obs_size": int, "obs_scale": float,
}
_INTRINSIC_KEYS = ("sensor_half_width", "sensor_half_height", "focal_min", "focal_max")
_TRAIN_KEYS = {
    "gamma": float, "batch_size": int, "lr": float, "adam_beta1": float,
    "adam_beta2": float, "adam_eps": float, "epochs": int, "alpha": float,
    "eps_start": float, "eps_end": float, "replay_capacity": int,
    "updates_per_epoch": int, "target_rule": str, "filters": int, "kernel": int,
    "stride": int,
}


def _pair(section, lo_key, hi_key, default, cast):
    return (cast(section.get(lo_key, default[0])), cast(section.get(hi_key, default[1])))


def parse_config(text: str) -> tuple[EnvConfig, TrainConfig]:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_string(text)
    for name in cp.sections():
        if name not in ("env", "penalty", "decay", "train"):
            raise ValueError(f"unknown config section [{name}]")
    env_s = cp["env"] if cp.has_section("env") else {}
    base = EnvConfig()
    env_kw = {k: cast(env_s[k]) for k, cast in _ENV_KEYS.items() if k in env_s}
    intr = base.intrinsics
    env_kw["intrinsics"] = CameraIntrinsics(
        *(float(env_s.get(k, getattr(intr, k))) for k in _INTRINSIC_KEYS))
    env_kw["map_blobs"] = _pair(env_s, "map_blobs_min", "map_blobs_max", base.map_blobs, int)
    env_kw["map_sigma"] = _pair(env_s, "map_sigma_min", "map_sigma_max", base.map_sigma, float)
    unknown = set(env_s) - set(_ENV_KEYS) - set(_INTRINSIC_KEYS) - {
        "map_blobs_min", "map_blobs_max", "map_sigma_min", "map_sigma_max"}
    if unknown:
        raise ValueError(f"unknown [env] keys: {sorted(unknown)}")

    pen_s = cp["penalty"] if cp.has_section("penalty") else {}
    env_kw["penalty_fractions"] = tuple(
        float(pen_s.get(f"a{i}_frac", base.penalty_fractions[i])) for i in range(4))

    dec_s = cp["decay"] if cp.has_section("decay") else {}
    env_kw["decay"] = DecayParams(float(dec_s.get("delta_minus", base.decay.delta_minus)),
                                  float(dec_s.get("delta_plus", base.decay.delta_plus)))
    env = EnvConfig(**env_kw)

    tr_s = cp["train"] if cp.has_section("train") else {}
    tbase = TrainConfig()
    tr_kw = {k: cast(tr_s[k]) for k, cast in _TRAIN_KEYS.items() if k in tr_s}
    tr_kw["drones"] = _pair(tr_s, "drones_min", "drones_max", tbase.drones, int)
    tr_kw["hidden"] = _pair(tr_s, "hidden1", "hidden2", tbase.hidden, int)
    if "grad_clip" in tr_s:
        v = tr_s["grad_clip"].strip().lower()
        tr_kw["grad_clip"] = None if v in ("", "none") else float(v)
    unknown = set(tr_s) - set(_TRAIN_KEYS) - {"drones_min", "drones_max", "hidden1",
                                              "hidden2", "grad_clip"}
    if unknown:
        raise ValueError(f"unknown [train] keys: {sorted(unknown)}")
    return env, TrainConfig(**tr_kw)


def load_config(path=None) -> tuple[EnvConfig, TrainConfig]:
    if path is None:
        return EnvConfig(), TrainConfig()
    return parse_config(Path(path).read_text())


def format_config(env: EnvConfig, train: TrainConfig) -> str:
    lines = ["[env]"]
    for k in _ENV_KEYS:
        lines.append(f"{k} = {getattr(env, k)}")
    for k in _INTRINSIC_KEYS:
        lines.append(f"{k} = {getattr(env.intrinsics, k)!r}")
    lines += [f"map_blobs_min = {env.map_blobs[0]}", f"map_blobs_max = {env.map_blobs[1]}",
              f"map_sigma_min = {env.map_sigma[0]}", f"map_sigma_max = {env.map_sigma[1]}",
              "", "[penalty]"]
    lines += [f"a{i}_frac = {f}" for i, f in enumerate(env.penalty_fractions)]
    lines += ["", "[decay]", f"delta_minus = {env.decay.delta_minus}",
              f"delta_plus = {env.decay.delta_plus}", "", "[train]"]
    for k in _TRAIN_KEYS:
        lines.append(f"{k} = {getattr(train, k)}")
    lines += [f"drones_min = {train.drones[0]}", f"drones_max = {train.drones[1]}",
              f"hidden1 = {train.hidden[0]}", f"hidden2 = {train.hidden[1]}",
              f"grad_clip = {train.grad_clip}"]
    return "\n".join(lines) + "\n"


def resolve_seed(seed: int | None, default: int = 0) -> int:
    """``PATROL_SEED`` in the environment wins over the command-line seed."""
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed not in (None, ""):
        return int(env_seed)
    return default if seed is None else int(seed)


def with_overrides(obj, **kw):
    return dataclasses.replace(obj, **{k: v for k, v in kw.items() if v is not None})
