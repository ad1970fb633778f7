"""Throughput comparison between the available training-loop kernels.

Both kernels implement the same loop with the same floating-point semantics,
so beyond timing each cell the benchmark asserts that they produce bitwise
identical parameters and step counts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .._kernels import implementations
from ..graph import build_chain, build_diamond, build_grid
from ..trainer import RunRecord, TrainConfig, train

__all__ = ["BenchResult", "run_bench"]


@dataclass(frozen=True)
class BenchResult:
    cell: str
    impl: str
    steps: int
    seconds: float
    steps_per_sec: float
    identical: bool


def _cells(steps: int):
    chain_dag, chain_rewards = build_chain(16, 2.0)
    dia_dag, dia_rewards = build_diamond(1.0)
    grid_dag, grid_rewards = build_grid(2, 3)
    mk = lambda obj, mode: TrainConfig(  # noqa: E731 - local shorthand
        objective=obj, schedule="constant", eta0=0.05, steps=steps,
        sampling_mode=mode, seed=0)
    return (
        ("chain16_fm_on_policy", chain_dag, chain_rewards, mk("fm", "on_policy")),
        ("diamond_tb_on_policy", dia_dag, dia_rewards, mk("tb", "on_policy")),
        ("grid-d2s3_db_on_policy", grid_dag, grid_rewards, mk("db", "on_policy")),
    )


def _same_record(a: RunRecord, b: RunRecord) -> bool:
    return (
        np.array_equal(a.final_params.w, b.final_params.w)
        and a.final_params.zeta == b.final_params.zeta
        and a.stop_step == b.stop_step
        and a.clamp_count == b.clamp_count
    )


def run_bench(steps: int = 20_000) -> list[BenchResult]:
    """Time every kernel on every cell; flag any cross-kernel mismatch."""
    results: list[BenchResult] = []
    for cell, dag, rewards, cfg in _cells(steps):
        records: dict[str, RunRecord] = {}
        timings: dict[str, float] = {}
        for name in sorted(implementations()):
            t0 = time.perf_counter()
            records[name] = train(dag, rewards, cfg, checkpoint_every=cfg.steps,
                                  track_exact=False, impl=name)
            timings[name] = time.perf_counter() - t0
        reference = records[sorted(records)[0]]
        for name in sorted(records):
            dt = timings[name]
            results.append(BenchResult(
                cell=cell, impl=name, steps=steps, seconds=dt,
                steps_per_sec=steps / dt if dt > 0 else float("inf"),
                identical=_same_record(records[name], reference),
            ))
    return results
