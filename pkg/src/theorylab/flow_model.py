"""Tabular log edge-flow parameters and the policies and samplers they induce.

The single trainable object is LogFlowParams: one log-flow value per edge plus
a log-partition scalar.  Policy evaluation here is done with scalar libm calls
and sequential accumulation, in edge order, on purpose: the training kernels
(compiled and pure-Python) replicate exactly this arithmetic, so trajectory
streams are bit-identical across implementations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .graph import Dag, GraphError, RewardTable

__all__ = [
    "LogFlowParams",
    "Trajectory",
    "init_params",
    "edge_flow",
    "node_outflow",
    "forward_policy",
    "backward_policy_uniform",
    "sample_forward",
    "sample_backward",
    "trajectory_logprob",
    "save_params",
    "load_params",
]


@dataclass
class LogFlowParams:
    """Per-edge log flows ``w`` plus the log-partition scalar ``zeta``.

    ``w[e]`` is the log flow of edge ``e`` in Dag edge order; the edge flow is
    ``exp(w[e])``.  ``zeta`` is the log of the learned partition constant and
    is only read by the trajectory-ratio objective.  All entries must stay
    finite; the trainer rejects updates that would break this.
    """

    w: np.ndarray
    zeta: float

    def __post_init__(self) -> None:
        self.w = np.asarray(self.w, dtype=np.float64)
        self.zeta = float(self.zeta)
        if self.w.ndim != 1:
            raise ValueError(f"w must be a vector, got shape {self.w.shape}")
        self.check_finite()

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.w)):
            bad = int(np.flatnonzero(~np.isfinite(self.w))[0])
            raise ValueError(f"non-finite w[{bad}] = {self.w[bad]}")
        if not math.isfinite(self.zeta):
            raise ValueError(f"non-finite zeta = {self.zeta}")

    def copy(self) -> "LogFlowParams":
        return LogFlowParams(self.w.copy(), self.zeta)


def init_params(
    dag: Dag,
    rewards: RewardTable,
    init: str = "zero",
    scale: float = 0.1,
    rng: np.random.Generator | None = None,
) -> LogFlowParams:
    """Fresh parameters: "zero" (w = 0, uniform policies) or "uniform"
    (w iid in [-scale, scale]).  zeta starts at log z_r either way."""
    if init == "zero":
        w = np.zeros(dag.n_edges)
    elif init == "uniform":
        if rng is None:
            raise ValueError("init='uniform' needs an rng")
        w = rng.uniform(-scale, scale, size=dag.n_edges)
    else:
        raise ValueError(f"unknown init {init!r}")
    return LogFlowParams(w, math.log(rewards.z_r))


@dataclass(frozen=True)
class Trajectory:
    """A source-to-terminal path: visited states and the edges joining them."""

    states: tuple[int, ...]
    edges: tuple[int, ...]

    @classmethod
    def from_edges(cls, dag: Dag, edge_ids: tuple[int, ...] | list[int]) -> "Trajectory":
        edge_ids = tuple(edge_ids)
        if not edge_ids:
            raise GraphError("empty trajectory")
        states = [dag.edges[edge_ids[0]][0]]
        for e in edge_ids:
            t, h = dag.edges[e]
            if t != states[-1]:
                raise GraphError(f"edge {e} does not continue from state {states[-1]}")
            states.append(h)
        traj = cls(tuple(states), edge_ids)
        traj.check(dag)
        return traj

    def check(self, dag: Dag) -> None:
        if self.states[0] != dag.source:
            raise GraphError(f"trajectory starts at {self.states[0]}, not the source")
        if not dag.is_terminal(self.states[-1]):
            raise GraphError(f"trajectory ends at non-terminal {self.states[-1]}")
        if len(self.edges) != len(self.states) - 1:
            raise GraphError("edge list does not match state list")
        for (a, b), e in zip(zip(self.states, self.states[1:]), self.edges):
            if dag.edges[e] != (a, b):
                raise GraphError(f"edge {e} is {dag.edges[e]}, expected ({a}, {b})")

    @property
    def terminal(self) -> int:
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.edges)


def edge_flow(params: LogFlowParams, edge: int) -> float:
    """exp(w[edge]); strictly positive."""
    return math.exp(params.w[edge])


def node_outflow(params: LogFlowParams, dag: Dag, rewards: RewardTable, state: int) -> float:
    """Total flow through a state: sum of outgoing edge flows, except that a
    terminal's flow is pinned to its reward."""
    out = dag.out_adjacency[state]
    if not out:
        return rewards.reward(state)
    total = 0.0
    for e in out:
        total += math.exp(params.w[e])
    return total


def forward_policy(params: LogFlowParams, dag: Dag, state: int) -> np.ndarray:
    """Step distribution over the outgoing edges of ``state``: softmax of w
    restricted to them (equivalently, edge flow over node outflow)."""
    out = dag.out_adjacency[state]
    if not out:
        raise GraphError(f"terminal state {state} has no forward policy")
    m = max(params.w[e] for e in out)
    p = [math.exp(params.w[e] - m) for e in out]
    total = 0.0
    for v in p:
        total += v
    return np.array([v / total for v in p])


def backward_policy_uniform(dag: Dag, state: int) -> np.ndarray:
    """Uniform distribution over the incoming edges of ``state``."""
    inc = dag.in_adjacency[state]
    if not inc:
        raise GraphError(f"source state {state} has no backward policy")
    return np.full(len(inc), 1.0 / len(inc))


def _pick(probs: list[float], u: float) -> int:
    """Index of the first cumulative bin exceeding u; sequential scan so every
    implementation, compiled or not, breaks ties identically."""
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i
    return len(probs) - 1


def sample_forward(params: LogFlowParams, dag: Dag, rng: np.random.Generator) -> Trajectory:
    """One on-policy trajectory; consumes exactly one uniform draw per step."""
    states = [dag.source]
    edges: list[int] = []
    s = dag.source
    while not dag.is_terminal(s):
        out = dag.out_adjacency[s]
        if len(out) == 1:
            e = out[0]
            rng.random()
        else:
            m = params.w[out[0]]
            for x in out[1:]:
                if params.w[x] > m:
                    m = params.w[x]
            p = [math.exp(params.w[e] - m) for e in out]
            total = 0.0
            for v in p:
                total += v
            e = out[_pick([v / total for v in p], rng.random())]
        edges.append(e)
        s = dag.edges[e][1]
        states.append(s)
    return Trajectory(tuple(states), tuple(edges))


def sample_backward(dag: Dag, rewards: RewardTable, rng: np.random.Generator) -> Trajectory:
    """Terminal drawn proportional to reward, then uniform parent steps back
    to the source; returned in forward order.  One draw per decision."""
    probs = [rewards.rewards[t] / rewards.z_r for t in dag.terminals]
    s = dag.terminals[_pick(probs, rng.random())]
    rev_states = [s]
    rev_edges: list[int] = []
    while s != dag.source:
        inc = dag.in_adjacency[s]
        if len(inc) == 1:
            e = inc[0]
            rng.random()
        else:
            u = rng.random()
            i = int(u * len(inc))
            if i == len(inc):
                i -= 1
            e = inc[i]
        rev_edges.append(e)
        s = dag.edges[e][0]
        rev_states.append(s)
    return Trajectory(tuple(reversed(rev_states)), tuple(reversed(rev_edges)))


def trajectory_logprob(params: LogFlowParams, dag: Dag, traj: Trajectory) -> float:
    """log probability of ``traj`` under the forward policy; always <= 0."""
    traj.check(dag)
    total = 0.0
    for s, e in zip(traj.states, traj.edges):
        out = dag.out_adjacency[s]
        if len(out) == 1:
            continue
        m = params.w[out[0]]
        for x in out[1:]:
            if params.w[x] > m:
                m = params.w[x]
        denom = 0.0
        for x in out:
            denom += math.exp(params.w[x] - m)
        total += (params.w[e] - m) - math.log(denom)
    return total


def save_params(params: LogFlowParams, path: str, fmt: str = "json") -> None:
    """Snapshot as a flat sequence: w in edge order, then zeta.

    fmt "json" writes a JSON array (lossless shortest-round-trip floats);
    fmt "binary" writes raw little-endian float64.
    """
    flat = np.append(params.w, params.zeta)
    if fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump([float(v) for v in flat], fh)
            fh.write("\n")
    elif fmt == "binary":
        flat.astype("<f8").tofile(path)
    else:
        raise ValueError(f"unknown snapshot format {fmt!r}")


def load_params(path: str, fmt: str = "json", dag: Dag | None = None) -> LogFlowParams:
    if fmt == "json":
        with open(path, "r", encoding="utf-8") as fh:
            flat = np.array(json.load(fh), dtype=np.float64)
    elif fmt == "binary":
        flat = np.fromfile(path, dtype="<f8")
    else:
        raise ValueError(f"unknown snapshot format {fmt!r}")
    if flat.size < 2:
        raise ValueError(f"{path}: snapshot too short")
    params = LogFlowParams(flat[:-1], float(flat[-1]))
    if dag is not None and params.w.size != dag.n_edges:
        raise ValueError(f"{path}: {params.w.size} edge values, dag has {dag.n_edges}")
    return params
