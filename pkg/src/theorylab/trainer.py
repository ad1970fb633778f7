"""Deterministic SGD training loop over the tabular parameterization.

The hot loop lives in theorylab._kernels (compiled when available, pure
Python otherwise; both produce bit-identical streams).  This module owns
configuration, seed derivation, reward-noise setup, checkpoint metric
assembly and CSV serialization.

Seed layout: one base seed spawns three independent streams (sampling,
noise, init), so runs differ in exactly the configured way and rerunning a
config reproduces every byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import IO, Sequence

import numpy as np

from . import oracle
from ._kernels import active_implementation, implementations
from .flow_model import LogFlowParams, Trajectory, init_params
from .graph import Dag, GraphError, ResourceLimitError, RewardTable

__all__ = [
    "TrainConfig",
    "NoiseConfig",
    "Row",
    "RunRecord",
    "TrainingDivergedError",
    "lr",
    "effective_reward",
    "train",
    "replay_order",
    "CSV_COLUMNS",
]

_OBJECTIVES = {"fm": 0, "db": 1, "tb": 2}
_SCHEDULES = {"inv_sqrt": 0, "two_thirds": 1, "constant": 2}
_MODES = {"on_policy": 0, "backward": 1, "uniform_traj": 2, "custom": 3, "exhaustive": 4}
_REPLAY_MODE = 5

CSV_COLUMNS = (
    "t",
    "eta",
    "loss",
    "grad_norm",
    "min_grad_sq",
    "l1_flow_err",
    "tv",
    "kl",
    "g_est",
    "k_est",
    "clamp_rate",
)

# references (max-entropy flow, trajectory table) are computed automatically
# below these sizes; larger runs must pass their own or go without
_AUTO_FLOW_REF_EDGES = 4096
_ENUM_CAP = 10**6


@dataclass(frozen=True)
class TrainConfig:
    objective: str
    schedule: str = "inv_sqrt"
    eta0: float = 0.1
    steps: int = 1000
    batch_size: int = 1
    sampling_mode: str = "on_policy"
    seed: int = 0
    init: str = "zero"
    init_scale: float = 0.1
    custom_probs: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.objective not in _OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.schedule not in _SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.sampling_mode not in _MODES:
            raise ValueError(f"unknown sampling_mode {self.sampling_mode!r}")
        if self.eta0 < 0:
            raise ValueError(f"eta0 must be >= 0, got {self.eta0}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.init not in ("zero", "uniform"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.sampling_mode == "custom" and self.custom_probs is None:
            raise ValueError("sampling_mode 'custom' needs custom_probs")


@dataclass(frozen=True)
class NoiseConfig:
    kind: str = "none"
    sigma2: float = 0.0
    floor: float | None = None
    resample: str = "per_draw"

    def __post_init__(self) -> None:
        if self.kind not in ("none", "uniform", "gaussian"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma2 < 0:
            raise ValueError(f"sigma2 must be >= 0, got {self.sigma2}")
        if self.floor is not None and self.floor <= 0:
            raise ValueError(f"floor must be positive, got {self.floor}")
        if self.resample not in ("per_draw", "fixed_realization"):
            raise ValueError(f"unknown resample {self.resample!r}")

    @property
    def half_width(self) -> float:
        """Half-width of the zero-mean uniform kind with variance sigma2."""
        return math.sqrt(3.0 * self.sigma2)

    def floor_value(self, rewards: RewardTable) -> float:
        return self.floor if self.floor is not None else rewards.r_min / 10.0


@dataclass(frozen=True)
class Row:
    t: int
    eta: float
    loss: float
    grad_norm: float
    min_grad_sq: float
    l1_flow_err: float
    tv: float
    kl: float
    g_est: float
    k_est: float
    clamp_rate: float


@dataclass
class RunRecord:
    rows: list[Row]
    final_params: LogFlowParams
    stop_step: int
    diverged_step: int
    clamp_count: int
    eval_count: int
    config: TrainConfig
    noise: NoiseConfig
    snapshots: list[LogFlowParams] | None = None

    def final_row(self) -> Row:
        return self.rows[-1]

    def write_csv(self, fh: IO[str]) -> None:
        """The fixed schema, floats at 17 significant digits; byte-stable."""
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for r in self.rows:
            vals = [str(r.t)] + [
                f"{getattr(r, c):.17g}" for c in CSV_COLUMNS[1:]
            ]
            fh.write(",".join(vals) + "\n")

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            self.write_csv(fh)


class TrainingDivergedError(RuntimeError):
    """A parameter update produced a non-finite entry."""

    def __init__(self, step: int, record: RunRecord):
        super().__init__(f"training diverged at step {step}")
        self.step = step
        self.record = record


def lr(schedule: str, eta0: float, t: int) -> float:
    """Learning rate at step t >= 1 for the named schedule."""
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    if schedule == "inv_sqrt":
        return eta0 / math.sqrt(t)
    if schedule == "two_thirds":
        return eta0 / t ** (2.0 / 3.0)
    if schedule == "constant":
        return eta0
    raise ValueError(f"unknown schedule {schedule!r}")


def effective_reward(
    rewards: RewardTable,
    noise: NoiseConfig,
    terminal: int,
    rng: np.random.Generator,
    realization: dict[int, float] | None = None,
) -> float:
    """The reward the learner sees: true reward plus noise, floored.

    With resample="fixed_realization" pass a dict (one per run) so each
    terminal's draw happens once and is reused.
    """
    r = rewards.reward(terminal)
    if noise.kind == "none":
        return r
    if noise.resample == "fixed_realization" and realization is not None:
        if terminal not in realization:
            realization[terminal] = _draw_eps(noise, rng)
        eps = realization[terminal]
    else:
        eps = _draw_eps(noise, rng)
    return max(r + eps, noise.floor_value(rewards))


def _draw_eps(noise: NoiseConfig, rng: np.random.Generator) -> float:
    if noise.kind == "gaussian":
        return float(rng.standard_normal() * math.sqrt(noise.sigma2))
    return float(rng.uniform(-noise.half_width, noise.half_width))


def _csr(adjacency: tuple[tuple[int, ...], ...]) -> tuple[np.ndarray, np.ndarray]:
    ptr = np.zeros(len(adjacency) + 1, dtype=np.int64)
    flat: list[int] = []
    for i, lst in enumerate(adjacency):
        flat.extend(lst)
        ptr[i + 1] = len(flat)
    return ptr, np.array(flat, dtype=np.int64)


def _traj_arrays(
    trajs: Sequence[Trajectory],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ptr = np.zeros(len(trajs) + 1, dtype=np.int64)
    flat: list[int] = []
    term: list[int] = []
    for i, tr in enumerate(trajs):
        flat.extend(tr.edges)
        ptr[i + 1] = len(flat)
        term.append(tr.terminal)
    return ptr, np.array(flat, dtype=np.int64), np.array(term, dtype=np.int64)


def _backward_traj_probs(
    dag: Dag, table: oracle.TrajectoryTable, terminal_reward: dict[int, float]
) -> np.ndarray:
    z = sum(terminal_reward.values())
    probs = np.empty(table.count)
    for i, tr in enumerate(table.trajectories):
        p = terminal_reward[tr.terminal] / z
        for s in tr.states[1:]:
            p /= len(dag.in_adjacency[s])
        probs[i] = p
    return probs


def _scatter_item_weights(
    dag: Dag, table: oracle.TrajectoryTable, traj_probs: np.ndarray, objective: str
) -> np.ndarray:
    """Fixed item distribution induced by a fixed trajectory distribution:
    each trajectory spreads its probability uniformly over its items."""
    n = dag.n_states if objective == "fm" else dag.n_edges
    weights = np.zeros(n)
    for tr, p in zip(table.trajectories, traj_probs):
        share = p / len(tr)
        for e in tr.edges:
            if objective == "fm":
                weights[dag.edges[e][1]] += share
            else:
                weights[e] += share
    return weights


def _checkpoint_steps(steps: int, checkpoint_every) -> np.ndarray:
    if checkpoint_every == "geometric":
        pts = {1, steps}
        v = 2
        while v < steps:
            pts.add(v)
            v *= 2
        return np.array(sorted(pts), dtype=np.int64)
    if isinstance(checkpoint_every, (list, tuple, np.ndarray)):
        pts = {int(v) for v in checkpoint_every}
        if not pts or not all(1 <= v <= steps for v in pts):
            raise ValueError(
                f"checkpoint steps must be a nonempty subset of 1..{steps}"
            )
        pts.add(steps)
        return np.array(sorted(pts), dtype=np.int64)
    k = int(checkpoint_every)
    if k < 1:
        raise ValueError(f"checkpoint_every must be >= 1, got {checkpoint_every}")
    pts = set(range(k, steps + 1, k))
    pts.add(steps)
    return np.array(sorted(pts), dtype=np.int64)


_STOP_METRICS = {None: 0, "terminal_tv": 1, "flow_tv": 2, "traj_tv": 3}


def train(
    dag: Dag,
    rewards: RewardTable,
    config: TrainConfig,
    noise: NoiseConfig | None = None,
    checkpoint_every="geometric",
    *,
    params0: LogFlowParams | None = None,
    table: oracle.TrajectoryTable | None = None,
    flow_ref: np.ndarray | None = None,
    stop_metric: str | None = None,
    stop_eps: float = 0.0,
    track_exact: bool = True,
    keep_snapshots: bool = False,
    impl: str | None = None,
) -> RunRecord:
    """Run T SGD steps and return the metric record.

    Fully deterministic given (config, noise, checkpoint_every, overrides):
    the base seed spawns separate sampling / noise / init streams.  With
    stop_metric set ("terminal_tv", "flow_tv" or "traj_tv") the run halts at
    first passage below stop_eps and RunRecord.stop_step records the step.
    Raises TrainingDivergedError (carrying the partial record) if an update
    goes non-finite.
    """
    noise = noise or NoiseConfig()
    if noise.kind != "none" and config.sampling_mode == "exhaustive":
        raise ValueError("reward noise requires a sampling mode, not exhaustive batches")
    return _run(
        dag, rewards, config, noise, checkpoint_every,
        params0=params0, table=table, flow_ref=flow_ref,
        stop_metric=stop_metric, stop_eps=stop_eps, track_exact=track_exact,
        keep_snapshots=keep_snapshots, impl=impl, replay=None,
    )


def replay_order(
    dag: Dag,
    rewards: RewardTable,
    traj_list: Sequence[Trajectory],
    config: TrainConfig,
    checkpoint_every="geometric",
    *,
    params0: LogFlowParams | None = None,
    flow_ref: np.ndarray | None = None,
    track_exact: bool = False,
    keep_snapshots: bool = False,
    impl: str | None = None,
) -> RunRecord:
    """Train by consuming the given trajectories in order, one per step."""
    if not traj_list:
        raise ValueError("traj_list is empty")
    if track_exact and config.objective == "tb":
        raise ValueError("exact tracking during replay is not defined for tb")
    config = replace(config, steps=len(traj_list), batch_size=1)
    return _run(
        dag, rewards, config, NoiseConfig(), checkpoint_every,
        params0=params0, table=None, flow_ref=flow_ref,
        stop_metric=None, stop_eps=0.0, track_exact=track_exact,
        keep_snapshots=keep_snapshots, impl=impl, replay=tuple(traj_list),
    )


def _run(
    dag: Dag,
    rewards: RewardTable,
    config: TrainConfig,
    noise: NoiseConfig,
    checkpoint_every,
    *,
    params0, table, flow_ref, stop_metric, stop_eps, track_exact,
    keep_snapshots, impl, replay,
) -> RunRecord:
    if stop_metric not in _STOP_METRICS:
        raise ValueError(f"unknown stop_metric {stop_metric!r}")
    mode = _REPLAY_MODE if replay is not None else _MODES[config.sampling_mode]
    objective = config.objective

    ss = np.random.SeedSequence(config.seed)
    ss_sample, ss_noise, ss_init = ss.spawn(3)
    rng = np.random.Generator(np.random.PCG64(ss_sample))
    noise_rng = np.random.Generator(np.random.PCG64(ss_noise))

    if params0 is not None:
        params = params0.copy()
    elif config.init == "uniform":
        params = init_params(
            dag, rewards, "uniform", config.init_scale,
            np.random.Generator(np.random.PCG64(ss_init)),
        )
    else:
        params = init_params(dag, rewards)

    # trajectory table, when anything needs one
    needs_table = (
        mode in (_MODES["uniform_traj"], _MODES["custom"])
        or stop_metric == "traj_tv"
        or (track_exact and replay is None)
        or (mode == _MODES["exhaustive"] and objective == "tb")
    )
    if table is None and needs_table:
        table = oracle.enumerate_trajectories(dag, rewards, cap=_ENUM_CAP)

    # effective rewards: fixed realizations are resolved here, once
    terminal_reward = {t: rewards.rewards[t] for t in dag.terminals}
    clamp0 = eval0 = 0
    if noise.kind != "none" and noise.resample == "fixed_realization":
        floor = noise.floor_value(rewards)
        eps = _draw_eps_vector(noise, noise_rng, len(dag.terminals))
        for i, t in enumerate(dag.terminals):
            val = terminal_reward[t] + eps[i]
            eval0 += 1
            if val < floor:
                val = floor
                clamp0 += 1
            terminal_reward[t] = val
        eps_draws = np.empty(0)
    elif noise.kind != "none":
        eps_draws = _draw_eps_vector(
            noise, noise_rng, config.steps * config.batch_size
        )
    else:
        eps_draws = np.empty(0)

    state_reward = np.zeros(dag.n_states)
    for t in dag.terminals:
        state_reward[t] = terminal_reward[t]
    terminal_states = np.array(dag.terminals, dtype=np.int64)
    terminal_probs = np.array(
        [terminal_reward[t] for t in dag.terminals]
    )
    terminal_probs = terminal_probs / terminal_probs.sum()

    # tracking distribution
    track_kind = 0
    track_item_weights = np.empty(0)
    track_traj_probs = np.empty(0)
    if track_exact:
        if objective == "tb":
            if mode in (_MODES["on_policy"], _MODES["exhaustive"]):
                track_kind = 1
            else:
                track_kind = 2
                track_traj_probs = _fixed_traj_probs(
                    dag, table, mode, config, terminal_reward
                )
        else:
            if mode == _MODES["on_policy"]:
                track_kind = 1
            else:
                if mode in (_MODES["exhaustive"], _REPLAY_MODE):
                    if objective == "fm":
                        track_item_weights = np.full(
                            dag.n_states, 1.0 / (dag.n_states - 1)
                        )
                        track_item_weights[dag.source] = 0.0
                    else:
                        track_item_weights = np.full(
                            dag.n_edges, 1.0 / dag.n_edges
                        )
                else:
                    probs = _fixed_traj_probs(dag, table, mode, config, terminal_reward)
                    track_item_weights = _scatter_item_weights(
                        dag, table, probs, objective
                    )
    elif mode == _MODES["exhaustive"]:
        # the batch itself is built from these fixed weights
        if objective == "fm":
            track_item_weights = np.full(dag.n_states, 1.0 / (dag.n_states - 1))
            track_item_weights[dag.source] = 0.0
            track_kind = 0
        elif objective == "db":
            track_item_weights = np.full(dag.n_edges, 1.0 / dag.n_edges)
            track_kind = 0
        else:
            track_kind = 1

    sample_traj_probs = np.empty(0)
    if mode == _MODES["uniform_traj"]:
        sample_traj_probs = np.full(table.count, 1.0 / table.count)
    elif mode == _MODES["custom"]:
        sample_traj_probs = np.array(config.custom_probs, dtype=np.float64)
        if sample_traj_probs.shape != (table.count,):
            raise ValueError(
                f"custom_probs must have one entry per trajectory ({table.count})"
            )
        if np.any(sample_traj_probs < 0) or abs(sample_traj_probs.sum() - 1.0) > 1e-9:
            raise ValueError("custom_probs must be a probability vector")

    # flow reference for the l1 column and the flow_tv stop metric
    if flow_ref is None and dag.n_edges <= _AUTO_FLOW_REF_EDGES:
        try:
            system = oracle.build_incidence(dag, rewards)
            flow_ref = oracle.max_entropy_flow(system, dag).edge_flows
        except oracle.SolverError:
            flow_ref = None
    if stop_metric == "flow_tv" and flow_ref is None:
        raise ValueError("stop_metric 'flow_tv' needs a flow reference")
    f_star = np.array(flow_ref, dtype=np.float64) if flow_ref is not None else np.empty(0)

    target_terminal = oracle.exact_terminal_distribution(rewards)
    # copies: the kernel takes writable buffers, table arrays are frozen
    stop_target_traj = np.array(table.target_probs) if table is not None else np.empty(0)

    if replay is not None:
        traj_ptr, traj_edge_list, traj_terminal = _traj_arrays(replay)
    elif table is not None:
        traj_ptr, traj_edge_list, traj_terminal = _traj_arrays(table.trajectories)
    else:
        traj_ptr = np.empty(0, dtype=np.int64)
        traj_edge_list = np.empty(0, dtype=np.int64)
        traj_terminal = np.empty(0, dtype=np.int64)

    checkpoints = _checkpoint_steps(config.steps, checkpoint_every)
    n_rows_cap = len(checkpoints) + 2
    out_ptr, out_edges = _csr(dag.out_adjacency)
    in_ptr, in_edges = _csr(dag.in_adjacency)

    zeta_io = np.array([params.zeta])
    args = {
        "n_states": dag.n_states,
        "n_edges": dag.n_edges,
        "source": dag.source,
        "out_ptr": out_ptr,
        "out_edges": out_edges,
        "in_ptr": in_ptr,
        "in_edges": in_edges,
        "edge_tails": np.array(dag.edge_tails),
        "edge_heads": np.array(dag.edge_heads),
        "topo_order": np.array(dag.topo_order, dtype=np.int64),
        "state_reward": state_reward,
        "terminal_states": terminal_states,
        "terminal_probs": terminal_probs,
        "traj_ptr": traj_ptr,
        "traj_edge_list": traj_edge_list,
        "traj_terminal": traj_terminal,
        "w": params.w,
        "zeta_io": zeta_io,
        "objective": _OBJECTIVES[objective],
        "schedule": _SCHEDULES[config.schedule],
        "eta0": float(config.eta0),
        "steps": config.steps,
        "batch_size": config.batch_size,
        "mode": mode,
        "eps_draws": eps_draws,
        "floor": noise.floor_value(rewards),
        "track_exact": bool(track_exact),
        "track_kind": track_kind,
        "track_item_weights": track_item_weights,
        "track_traj_probs": track_traj_probs,
        "sample_traj_probs": sample_traj_probs,
        "stop_metric": _STOP_METRICS[stop_metric],
        "stop_eps": float(stop_eps),
        "f_star": f_star,
        "z_total": rewards.z_r,
        "target_terminal": target_terminal,
        "stop_target_traj": stop_target_traj,
        "checkpoint_steps": checkpoints,
        "out_t": np.zeros(n_rows_cap, dtype=np.int64),
        "out_eta": np.zeros(n_rows_cap),
        "out_loss": np.zeros(n_rows_cap),
        "out_gnorm": np.zeros(n_rows_cap),
        "out_mings": np.zeros(n_rows_cap),
        "out_gest": np.zeros(n_rows_cap),
        "out_clamp": np.zeros(n_rows_cap, dtype=np.int64),
        "out_eval": np.zeros(n_rows_cap, dtype=np.int64),
        "snap_w": np.zeros((n_rows_cap, dag.n_edges)),
        "snap_zeta": np.zeros(n_rows_cap),
        "rng": rng,
    }

    runner = implementations()[impl] if impl else active_implementation()
    rows_written, stop_step, diverged_step, _mings, _gest, clamp, evals = runner(args)
    clamp += clamp0
    evals += eval0
    # the kernel updated params.w in place; zeta comes back through its box
    params.zeta = float(zeta_io[0])

    k_const = float(max(len(a) for a in dag.in_adjacency) ** 2)
    rows: list[Row] = []
    snapshots: list[LogFlowParams] | None = [] if keep_snapshots else None
    fallback_min = math.inf
    for i in range(rows_written):
        w_i = args["snap_w"][i].copy()
        zeta_i = float(args["snap_zeta"][i])
        finite = bool(np.all(np.isfinite(w_i)) and math.isfinite(zeta_i))
        p_i = LogFlowParams(w_i, zeta_i) if finite else None
        if snapshots is not None and p_i is not None:
            snapshots.append(p_i)
        if track_exact:
            loss_i = float(args["out_loss"][i])
            gnorm_i = float(args["out_gnorm"][i])
            mings_i = float(args["out_mings"][i])
        elif p_i is not None:
            loss_i, gnorm_i = _checkpoint_loss_grad(
                p_i, dag, rewards, objective, table, terminal_reward
            )
            fallback_min = min(fallback_min, gnorm_i * gnorm_i)
            mings_i = fallback_min
        else:
            loss_i = gnorm_i = mings_i = math.nan
        if p_i is not None:
            with np.errstate(over="ignore"):  # huge-but-finite params: l1 = inf
                flows_i = np.exp(w_i)
            l1 = float(np.abs(flows_i - f_star).sum()) if f_star.size else math.nan
            dist = oracle.terminal_distribution_of_params(p_i, dag)
            tv = oracle.tv_distance(dist, target_terminal)
            kl = oracle.kl_divergence(dist, target_terminal)
        else:
            l1 = tv = kl = math.nan
        ev = int(args["out_eval"][i]) + eval0
        cl = int(args["out_clamp"][i]) + clamp0
        rows.append(
            Row(
                t=int(args["out_t"][i]),
                eta=float(args["out_eta"][i]),
                loss=loss_i,
                grad_norm=gnorm_i,
                min_grad_sq=mings_i,
                l1_flow_err=l1,
                tv=tv,
                kl=kl,
                g_est=float(args["out_gest"][i]),
                k_est=k_const,
                clamp_rate=cl / ev if ev else 0.0,
            )
        )

    record = RunRecord(
        rows=rows,
        final_params=params,
        stop_step=stop_step,
        diverged_step=diverged_step,
        clamp_count=clamp,
        eval_count=evals,
        config=config,
        noise=noise,
        snapshots=snapshots,
    )
    if diverged_step:
        raise TrainingDivergedError(diverged_step, record)
    params.check_finite()
    return record


def _draw_eps_vector(
    noise: NoiseConfig, noise_rng: np.random.Generator, n: int
) -> np.ndarray:
    if noise.kind == "gaussian":
        return noise_rng.standard_normal(n) * math.sqrt(noise.sigma2)
    return noise_rng.uniform(-noise.half_width, noise.half_width, n)


def _fixed_traj_probs(
    dag: Dag,
    table: oracle.TrajectoryTable,
    mode: int,
    config: TrainConfig,
    terminal_reward: dict[int, float],
) -> np.ndarray:
    if mode == _MODES["backward"]:
        return _backward_traj_probs(dag, table, terminal_reward)
    if mode == _MODES["uniform_traj"]:
        return np.full(table.count, 1.0 / table.count)
    if mode == _MODES["custom"]:
        return np.array(config.custom_probs, dtype=np.float64)
    raise AssertionError(f"no fixed trajectory distribution for mode {mode}")


def _checkpoint_loss_grad(
    params: LogFlowParams,
    dag: Dag,
    rewards: RewardTable,
    objective: str,
    table: oracle.TrajectoryTable | None,
    terminal_reward: dict[int, float],
) -> tuple[float, float]:
    """Exhaustive loss and gradient norm at a checkpoint, for runs that skip
    per-step tracking.  Uses uniform item weights (states / edges) for the
    conservation and balance objectives, forward-policy weights for the
    trajectory objective."""
    from . import objectives

    eff = rewards if terminal_reward == dict(rewards.rewards) else rewards.replace(
        terminal_reward
    )
    if objective == "fm":
        states = [s for s in range(dag.n_states) if s != dag.source]
        lg = objectives.fm_loss_grad(params, dag, eff, states)
    elif objective == "db":
        lg = objectives.db_loss_grad(params, dag, eff, list(range(dag.n_edges)))
    else:
        if table is None:
            return math.nan, math.nan
        probs = table.forward_probs(params, dag)
        lg = objectives.tb_loss_grad(
            params, dag, eff, list(table.trajectories), weights=probs
        )
    gnorm = math.hypot(float(np.linalg.norm(lg.grad_w)), lg.grad_zeta)
    return lg.loss, gnorm
