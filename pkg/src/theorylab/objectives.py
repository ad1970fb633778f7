"""The three training losses and their exact analytic gradients.

All three operate on the tabular parameterization: per-edge flows exp(w[e]),
with a terminal's node flow pinned to its reward.  Each returns the mean (or
weighted mean) loss over the supplied batch together with the gradient of that
mean.  These are the semantic reference implementations; the training kernels
are cross-checked against them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .flow_model import LogFlowParams, Trajectory, node_outflow
from .graph import Dag, GraphError, RewardTable

__all__ = ["LossGrad", "fm_loss_grad", "db_loss_grad", "tb_loss_grad", "fm_residual"]


@dataclass
class LossGrad:
    loss: float
    grad_w: np.ndarray
    grad_zeta: float


def _weights(weights: Sequence[float] | None, n: int) -> np.ndarray:
    if n == 0:
        raise GraphError("empty batch")
    if weights is None:
        return np.full(n, 1.0 / n)
    v = np.asarray(weights, dtype=np.float64)
    if v.shape != (n,):
        raise GraphError(f"weights shape {v.shape} does not match batch size {n}")
    if np.any(v < 0) or v.sum() <= 0:
        raise GraphError("weights must be nonnegative with positive sum")
    return v / v.sum()


def fm_residual(params: LogFlowParams, dag: Dag, rewards: RewardTable, state: int) -> float:
    """Conservation defect at one state: inflow minus outflow, where a
    terminal's outflow is its reward."""
    inflow = sum(math.exp(params.w[e]) for e in dag.in_adjacency[state])
    return inflow - node_outflow(params, dag, rewards, state)


def fm_loss_grad(
    params: LogFlowParams,
    dag: Dag,
    rewards: RewardTable,
    states: Sequence[int],
    weights: Sequence[float] | None = None,
) -> LossGrad:
    """Mean squared conservation residual over a batch of non-source states.

    For an interior state the residual is inflow - outflow; for a terminal it
    is inflow - reward, which pins the terminal constraint and removes the
    all-zero-flow minimum.  The gradient is exact: each residual moves by
    +exp(w[e]) per entering edge and -exp(w[e]) per leaving edge.
    """
    wts = _weights(weights, len(states))
    flows = np.exp(params.w)
    loss = 0.0
    grad = np.zeros(dag.n_edges)
    for s, wt in zip(states, wts):
        if s == dag.source:
            raise GraphError("flow-matching batch must not contain the source")
        r = sum(flows[e] for e in dag.in_adjacency[s])
        if dag.is_terminal(s):
            r -= rewards.reward(s)
        else:
            r -= sum(flows[e] for e in dag.out_adjacency[s])
        loss += wt * r * r
        scale = 2.0 * wt * r
        for e in dag.in_adjacency[s]:
            grad[e] += scale * flows[e]
        if not dag.is_terminal(s):
            for e in dag.out_adjacency[s]:
                grad[e] -= scale * flows[e]
    return LossGrad(loss, grad, 0.0)


def db_loss_grad(
    params: LogFlowParams,
    dag: Dag,
    rewards: RewardTable,
    transitions: Sequence[int],
    weights: Sequence[float] | None = None,
) -> LossGrad:
    """Mean squared balance-ratio defect over a batch of transitions.

    For edge e = (s, s') the ratio is exp(w[e]) / (F(s') * P_B(s|s')) with
    P_B uniform over parents and F pinned to the reward at terminals; the
    per-transition term is (ratio - 1)^2.  Gradient: the ratio scales by
    its own log-derivative, which is 1 on w[e] and, when s' is interior,
    -exp(w[x])/F(s') on each outgoing edge x of s'.
    """
    wts = _weights(weights, len(transitions))
    flows = np.exp(params.w)
    loss = 0.0
    grad = np.zeros(dag.n_edges)
    for e, wt in zip(transitions, wts):
        _, head = dag.edges[e]
        p_b = 1.0 / len(dag.in_adjacency[head])
        f_head = node_outflow(params, dag, rewards, head)
        ratio = flows[e] / (f_head * p_b)
        loss += wt * (ratio - 1.0) ** 2
        scale = 2.0 * wt * (ratio - 1.0) * ratio
        grad[e] += scale
        if not dag.is_terminal(head):
            for x in dag.out_adjacency[head]:
                grad[x] -= scale * flows[x] / f_head
    return LossGrad(loss, grad, 0.0)


def tb_loss_grad(
    params: LogFlowParams,
    dag: Dag,
    rewards: RewardTable,
    trajs: Sequence[Trajectory],
    weights: Sequence[float] | None = None,
) -> LossGrad:
    """Mean squared trajectory-ratio defect over a batch of trajectories.

    For trajectory tau ending at terminal s_T the ratio is
    P_F(tau) * exp(zeta) / R(s_T), computed in log space and exponentiated
    once.  Both the per-edge gradient (through the step softmaxes) and the
    zeta gradient are exact.
    """
    wts = _weights(weights, len(trajs))
    flows = np.exp(params.w)
    loss = 0.0
    grad = np.zeros(dag.n_edges)
    grad_zeta = 0.0
    for traj, wt in zip(trajs, wts):
        logprob = 0.0
        for s, e in zip(traj.states, traj.edges):
            out = dag.out_adjacency[s]
            logprob += params.w[e] - math.log(sum(flows[x] for x in out))
        r = rewards.reward(traj.terminal)
        ratio = math.exp(logprob + params.zeta - math.log(r))
        loss += wt * (ratio - 1.0) ** 2
        scale = 2.0 * wt * (ratio - 1.0) * ratio
        grad_zeta += scale
        for s, e in zip(traj.states, traj.edges):
            out = dag.out_adjacency[s]
            denom = sum(flows[x] for x in out)
            grad[e] += scale
            for x in out:
                grad[x] -= scale * flows[x] / denom
    return LossGrad(loss, grad, grad_zeta)
