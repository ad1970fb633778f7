"""Environment construction from CLI-style specifiers.

An environment spec is a name plus keyword parameters:

    chain          length, reward
    fan            rewards (comma list)
    diamond        reward
    asym_diamond   (no parameters)
    grid           dim, side, reward_fn
    file:PATH      a saved environment file
"""

from __future__ import annotations

from typing import Mapping

from ..graph import (
    Dag,
    RewardTable,
    build_asym_diamond,
    build_chain,
    build_diamond,
    build_fan,
    build_grid,
    load_dag,
)

ENV_NAMES = ("chain", "fan", "diamond", "asym_diamond", "grid")


def build_env(env: str, params: Mapping[str, object] | None = None) -> tuple[Dag, RewardTable]:
    params = dict(params or {})
    if env.startswith("file:"):
        if params:
            raise ValueError("file: environments take no extra parameters")
        return load_dag(env[len("file:") :])
    if env == "chain":
        length = int(params.pop("length", 4))
        reward = float(params.pop("reward", 1.0))
        out = build_chain(length, reward)
    elif env == "fan":
        raw = params.pop("rewards", (1.0, 3.0))
        if isinstance(raw, str):
            raw = [float(v) for v in raw.split(",") if v]
        out = build_fan([float(v) for v in raw])
    elif env == "diamond":
        out = build_diamond(float(params.pop("reward", 1.0)))
    elif env == "asym_diamond":
        out = build_asym_diamond()
    elif env == "grid":
        dim = int(params.pop("dim", 2))
        side = int(params.pop("side", 2))
        reward_fn = str(params.pop("reward_fn", "uniform"))
        out = build_grid(dim, side, reward_fn)
    else:
        raise ValueError(f"unknown environment {env!r}; expected one of {ENV_NAMES} or file:PATH")
    if params:
        raise ValueError(f"unused environment parameters for {env!r}: {sorted(params)}")
    return out


def env_label(env: str, params: Mapping[str, object] | None = None) -> str:
    """Deterministic short label for file names, e.g. grid-d2s3-corner."""
    params = dict(params or {})
    if env.startswith("file:"):
        stem = env[len("file:") :].rsplit("/", 1)[-1]
        return stem.rsplit(".", 1)[0]
    if env == "chain":
        return f"chain{int(params.get('length', 4))}"
    if env == "fan":
        raw = params.get("rewards", (1.0, 3.0))
        n = len(raw.split(",")) if isinstance(raw, str) else len(raw)
        return f"fan{n}"
    if env == "diamond":
        return "diamond"
    if env == "asym_diamond":
        return "asymdiamond"
    if env == "grid":
        return (
            f"grid-d{int(params.get('dim', 2))}s{int(params.get('side', 2))}"
            f"-{params.get('reward_fn', 'uniform')}"
        )
    raise ValueError(f"unknown environment {env!r}")
