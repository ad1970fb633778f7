"""Exact ground truth: the flow linear system, canonical solutions, exhaustive
trajectory enumeration, discrepancy, assumption audits and constant estimates.

Everything here is dense linear algebra and full enumeration, deliberately:
the environments are small enough that every theoretical quantity is computed
exactly rather than estimated.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .flow_model import (
    LogFlowParams,
    Trajectory,
    forward_policy,
    trajectory_logprob,
)
from .graph import Dag, GraphError, ResourceLimitError, RewardTable
from . import objectives

__all__ = [
    "SolverError",
    "InfiniteDiscrepancyError",
    "IncidenceSystem",
    "FlowSolution",
    "TrajectoryTable",
    "build_incidence",
    "feasibility_residual",
    "min_norm_flow",
    "max_entropy_flow",
    "uniform_backward_flow",
    "tb_fixed_point",
    "enumerate_trajectories",
    "count_trajectories",
    "discrepancy",
    "exact_terminal_distribution",
    "random_feasible_flow",
    "state_visitation",
    "terminal_distribution_of_params",
    "tv_distance",
    "kl_divergence",
    "audit_assumptions",
    "estimate_constants",
]


class SolverError(RuntimeError):
    """Numerical solve failed; carries the last constraint residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class InfiniteDiscrepancyError(ValueError):
    """A trajectory with positive target probability has zero sample probability."""


@dataclass(frozen=True)
class IncidenceSystem:
    """The flow constraints as one dense linear system a @ f = b.

    a[s, e] is +1 where edge e leaves s and -1 where it enters; b carries the
    total flow at the source, minus the reward at each terminal, zero at
    interior states.  Any nonnegative solution is a valid flow.
    """

    a: np.ndarray
    b: np.ndarray


def build_incidence(dag: Dag, rewards: RewardTable) -> IncidenceSystem:
    a = np.zeros((dag.n_states, dag.n_edges))
    for e, (t, h) in enumerate(dag.edges):
        a[t, e] = 1.0
        a[h, e] = -1.0
    b = np.zeros(dag.n_states)
    b[dag.source] = rewards.z_r
    for t in dag.terminals:
        b[t] = -rewards.rewards[t]
    a.setflags(write=False)
    b.setflags(write=False)
    return IncidenceSystem(a, b)


def feasibility_residual(system: IncidenceSystem, edge_flows: np.ndarray) -> float:
    """Worst constraint violation, max |a @ f - b|."""
    return float(np.abs(system.a @ edge_flows - system.b).max())


def min_norm_flow(system: IncidenceSystem) -> np.ndarray:
    """Minimum-Euclidean-norm solution of the flow system.

    The canonical least-squares representative; it may have negative entries
    on some graphs (reported as a warning, not an error).
    """
    f, *_ = np.linalg.lstsq(system.a, system.b, rcond=None)
    res = feasibility_residual(system, f)
    if res > 1e-9:
        raise SolverError("least-squares flow solve did not reach feasibility", res)
    if np.any(f < 0):
        warnings.warn(
            f"min-norm flow has negative entries (min {f.min():.6g})", stacklevel=2
        )
    return f


@dataclass(frozen=True)
class FlowSolution:
    """A nonnegative feasible flow with its derived quantities.

    node_flows[s] is the total flow through s (outflow for non-terminals,
    inflow for terminals); terminal_dist is the normalized terminal inflow
    vector; entropy is -sum (f/Z) log(f/Z) over edges with positive flow.
    """

    edge_flows: np.ndarray
    node_flows: np.ndarray
    terminal_dist: np.ndarray
    entropy: float

    @classmethod
    def from_edge_flows(cls, dag: Dag, edge_flows: np.ndarray, z: float) -> "FlowSolution":
        f = np.asarray(edge_flows, dtype=np.float64)
        node = np.zeros(dag.n_states)
        for s in range(dag.n_states):
            if dag.out_adjacency[s]:
                node[s] = sum(f[e] for e in dag.out_adjacency[s])
            else:
                node[s] = sum(f[e] for e in dag.in_adjacency[s])
        tdist = np.array([node[t] for t in dag.terminals])
        tdist = tdist / tdist.sum()
        return cls(f, node, tdist, flow_entropy(f, z))


def flow_entropy(edge_flows: np.ndarray, z: float) -> float:
    f = np.asarray(edge_flows)
    pos = f[f > 0]
    q = pos / z
    return float(-(q * np.log(q)).sum())


def max_entropy_flow(
    system: IncidenceSystem, dag: Dag, tol: float = 1e-10, max_iters: int = 10**5
) -> FlowSolution:
    """The feasible flow of maximum entropy, solved in the dual.

    The optimum has exponential-family form f_e = Z exp(lam[head] - lam[tail]
    - 1) for per-state multipliers lam, so the dual is smooth, concave and
    unconstrained; damped Newton on the stationarity system (the dual Hessian
    is a weighted graph Laplacian) with backtracking on the constraint
    residual drives the primal iterate below tol.  The residual, not the dual
    value, is the line-search merit: near the optimum the dual improves by
    less than one ulp per step while the residual still spans decades.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    a, b = system.a, system.b
    z = float(b[dag.source])
    log_z = math.log(z)
    lam = np.zeros(dag.n_states)

    def primal(lam: np.ndarray) -> np.ndarray | None:
        expo = log_z - 1.0 - a.T @ lam
        if expo.max() > 700.0:
            return None
        return np.exp(expo)

    f = primal(lam)
    assert f is not None
    residual = float(np.abs(a @ f - b).max())
    for _ in range(max_iters):
        if residual <= tol:
            return FlowSolution.from_edge_flows(dag, f, z)
        grad = a @ f - b
        hess = a @ (f[:, None] * a.T)
        step, *_ = np.linalg.lstsq(hess, grad, rcond=None)
        alpha = 1.0
        while alpha > 1e-18:
            cand = lam + alpha * step
            f_cand = primal(cand)
            if f_cand is not None:
                r_cand = float(np.abs(a @ f_cand - b).max())
                if r_cand <= (1.0 - 1e-4 * alpha) * residual:
                    lam, f, residual = cand, f_cand, r_cand
                    break
            alpha *= 0.5
        else:
            raise SolverError("max-entropy solve stalled", residual)
    raise SolverError("max-entropy solve did not converge", residual)


def uniform_backward_flow(dag: Dag, rewards: RewardTable) -> np.ndarray:
    """The unique flow whose parent splits are uniform.

    Built by backward induction: a terminal carries its reward, and every
    state hands its flow to its parents in equal shares.  This is exactly the
    flow at which the balance-ratio objective with uniform backward policy is
    zero on every transition; it is feasible with terminal inflows equal to
    the rewards.
    """
    f = np.zeros(dag.n_edges)
    node = np.zeros(dag.n_states)
    for s in reversed(dag.topo_order):
        if dag.is_terminal(s):
            node[s] = rewards.rewards[s]
        else:
            node[s] = sum(f[e] for e in dag.out_adjacency[s])
        share = node[s] / len(dag.in_adjacency[s]) if dag.in_adjacency[s] else 0.0
        for e in dag.in_adjacency[s]:
            f[e] = share
    return f


def tb_fixed_point(dag: Dag, rewards: RewardTable) -> tuple[LogFlowParams, float]:
    """Parameters with zero trajectory-ratio loss on every trajectory.

    Backward DP: g[s] is the path-weighted downstream reward (sum over all
    paths from s of the terminal reward reached).  The policy proportional to
    g[head] makes every trajectory probability R(s_T)/g[source], so with
    zeta = log g[source] every balance ratio is 1.  Returns the params and
    g[source] (the path-weighted partition sum, which exceeds the reward sum
    whenever some terminal is reachable along several paths).
    """
    g = np.zeros(dag.n_states)
    for s in reversed(dag.topo_order):
        if dag.is_terminal(s):
            g[s] = rewards.rewards[s]
        else:
            g[s] = sum(g[dag.edges[e][1]] for e in dag.out_adjacency[s])
    w = np.array([math.log(g[h]) for _, h in dag.edges])
    return LogFlowParams(w, math.log(g[dag.source])), float(g[dag.source])


def count_trajectories(dag: Dag) -> int:
    paths = [0] * dag.n_states
    for s in reversed(dag.topo_order):
        if dag.is_terminal(s):
            paths[s] = 1
        else:
            paths[s] = sum(paths[dag.edges[e][1]] for e in dag.out_adjacency[s])
    return paths[dag.source]


@dataclass(frozen=True)
class TrajectoryTable:
    """All source-to-terminal trajectories with the target distribution.

    target_probs weights each trajectory by the reward of its terminal and
    normalizes over trajectories, so a terminal reachable along k paths
    contributes k reward-weighted entries.
    """

    trajectories: tuple[Trajectory, ...]
    target_probs: np.ndarray
    count: int

    def forward_probs(self, params: LogFlowParams, dag: Dag) -> np.ndarray:
        """Probability of each trajectory under the forward policy."""
        return np.array(
            [math.exp(trajectory_logprob(params, dag, t)) for t in self.trajectories]
        )

    def terminal_marginal(self, dag: Dag, probs: np.ndarray) -> np.ndarray:
        """Aggregate per-trajectory probabilities to the terminal set."""
        out = np.zeros(len(dag.terminals))
        for traj, p in zip(self.trajectories, probs):
            out[dag.terminal_index(traj.terminal)] += p
        return out

    def lengths(self) -> np.ndarray:
        return np.array([len(t) for t in self.trajectories])


def enumerate_trajectories(
    dag: Dag, rewards: RewardTable, cap: int = 10**6
) -> TrajectoryTable:
    """Complete duplicate-free trajectory list in lexicographic edge order."""
    total = count_trajectories(dag)
    if total > cap:
        raise ResourceLimitError(f"{total} trajectories exceeds cap {cap}")
    trajs: list[Trajectory] = []
    # DFS visiting out-edges in edge order yields lexicographic edge sequences.
    stack_states = [dag.source]
    stack_edges: list[int] = []
    iter_stack = [iter(dag.out_adjacency[dag.source])]
    while iter_stack:
        e = next(iter_stack[-1], None)
        if e is None:
            iter_stack.pop()
            stack_states.pop()
            if stack_edges:
                stack_edges.pop()
            continue
        head = dag.edges[e][1]
        stack_states.append(head)
        stack_edges.append(e)
        if dag.is_terminal(head):
            trajs.append(Trajectory(tuple(stack_states), tuple(stack_edges)))
            stack_states.pop()
            stack_edges.pop()
        else:
            iter_stack.append(iter(dag.out_adjacency[head]))
    assert len(trajs) == total
    weights = np.array([rewards.rewards[t.terminal] for t in trajs])
    probs = weights / weights.sum()
    probs.setflags(write=False)
    return TrajectoryTable(tuple(trajs), probs, total)


def discrepancy(table: TrajectoryTable, sample_probs: Sequence[float]) -> float:
    """Worst-case ratio of target to sampling probability over trajectories."""
    q = np.asarray(sample_probs, dtype=np.float64)
    if q.shape != table.target_probs.shape:
        raise ValueError(f"expected {table.count} probabilities, got {q.shape}")
    if abs(q.sum() - 1.0) > 1e-9:
        raise ValueError(f"sample probabilities sum to {q.sum()!r}, not 1")
    support = table.target_probs > 0
    if np.any(q[support] <= 0):
        i = int(np.flatnonzero(support & (q <= 0))[0])
        raise InfiniteDiscrepancyError(
            f"trajectory {i} has target probability {table.target_probs[i]:.3g} "
            "but zero sample probability"
        )
    return float((table.target_probs[support] / q[support]).max())


def exact_terminal_distribution(rewards: RewardTable) -> np.ndarray:
    """Rewards normalized by their sum, in terminal id order."""
    v = np.array(list(rewards.rewards.values()))
    return v / rewards.z_r


def random_feasible_flow(
    dag: Dag, rewards: RewardTable, table: TrajectoryTable, rng: np.random.Generator
) -> np.ndarray:
    """A random feasible flow: per terminal, spread its reward over the paths
    reaching it with Dirichlet weights, then superpose the path flows."""
    f = np.zeros(dag.n_edges)
    by_terminal: dict[int, list[int]] = {}
    for i, traj in enumerate(table.trajectories):
        by_terminal.setdefault(traj.terminal, []).append(i)
    for t, idxs in sorted(by_terminal.items()):
        weights = rng.dirichlet(np.ones(len(idxs))) * rewards.rewards[t]
        for i, wt in zip(idxs, weights):
            for e in table.trajectories[i].edges:
                f[e] += wt
    return f


def state_visitation(params: LogFlowParams, dag: Dag) -> np.ndarray:
    """Probability that each state appears on a forward-policy trajectory."""
    visit = np.zeros(dag.n_states)
    visit[dag.source] = 1.0
    for s in dag.topo_order:
        if dag.is_terminal(s) or visit[s] == 0.0:
            continue
        p = forward_policy(params, dag, s)
        for e, pe in zip(dag.out_adjacency[s], p):
            visit[dag.edges[e][1]] += visit[s] * pe
    return visit


def terminal_distribution_of_params(params: LogFlowParams, dag: Dag) -> np.ndarray:
    """Exact terminal law of the forward policy, in dag.terminals order."""
    visit = state_visitation(params, dag)
    p = np.array([visit[t] for t in dag.terminals])
    return p / p.sum()


def tv_distance(p: Sequence[float], q: Sequence[float]) -> float:
    p, q = np.asarray(p), np.asarray(q)
    return float(0.5 * np.abs(p - q).sum())


def kl_divergence(p: Sequence[float], q: Sequence[float]) -> float:
    """sum p log(p/q), with 0 log 0 = 0 and +inf where q vanishes but p does not."""
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    mask = p > 0
    if np.any(q[mask] <= 0):
        return math.inf
    total = float((p[mask] * (np.log(p[mask]) - np.log(q[mask]))).sum())
    # rounding can leave a tiny negative sum when p == q to working precision
    return max(total, 0.0)


def _trajectory_rank_ratio(dag: Dag, traj: Trajectory) -> float:
    a = np.zeros((len(traj.states), len(traj.edges)))
    pos = {s: i for i, s in enumerate(traj.states)}
    for j, e in enumerate(traj.edges):
        t, h = dag.edges[e]
        a[pos[t], j] = 1.0
        a[pos[h], j] = -1.0
    return float(np.linalg.matrix_rank(a)) / len(traj.edges)


def audit_assumptions(
    dag: Dag,
    table: TrajectoryTable,
    params: LogFlowParams,
    noise_probe: float,
    n_draws: int = 64,
    seed: int = 0,
    max_lag: int = 3,
) -> dict:
    """Empirical audit of the structural assumptions behind the trade-off and
    error-accumulation results.

    Returns a JSON-serializable report with:
      min_visit_scaled: min over states of visitation probability times |S|
        (the uniform-coverage constant).
      rank_ratio_min / rank_ratio_mean: rank of each trajectory's incidence
        submatrix (its states by its edges) divided by its length.
      err_corr: lag-k correlations of per-edge flow errors along trajectories
        under iid log-flow perturbations of scale noise_probe; rho is the
        fitted geometric decay rate.
      traj_err_slope: through-origin regression of mean trajectory flow error
        against sqrt(length) times the mean edge error.
    """
    visit = state_visitation(params, dag)
    ratios = [_trajectory_rank_ratio(dag, t) for t in table.trajectories]

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA0D17]))
    base_flow = np.exp(params.w)
    lag_pairs: dict[int, list[tuple[float, float]]] = {k: [] for k in range(1, max_lag + 1)}
    traj_pts: list[tuple[float, float]] = []
    for _ in range(n_draws if noise_probe > 0 else 1):
        if noise_probe > 0:
            w_pert = params.w + noise_probe * rng.standard_normal(dag.n_edges)
        else:
            w_pert = params.w.copy()
        err = np.exp(w_pert) - base_flow
        mean_edge_err = float(np.abs(err).mean())
        for traj in table.trajectories:
            seq = [err[e] for e in traj.edges]
            for k in range(1, max_lag + 1):
                for i in range(len(seq) - k):
                    lag_pairs[k].append((seq[i], seq[i + k]))
            traj_err = float(np.abs(np.array(seq)).sum())
            traj_pts.append((math.sqrt(len(traj)) * mean_edge_err, traj_err))

    corr: dict[int, float] = {}
    for k, pairs in lag_pairs.items():
        if len(pairs) < 2:
            corr[k] = 0.0
            continue
        x = np.array([p[0] for p in pairs])
        y = np.array([p[1] for p in pairs])
        if x.std() == 0.0 or y.std() == 0.0:
            corr[k] = 0.0
        else:
            corr[k] = float(np.corrcoef(x, y)[0, 1])
    usable = [(k, abs(c)) for k, c in corr.items() if abs(c) > 1e-12]
    if usable:
        rho = float(np.exp(np.mean([math.log(c) / k for k, c in usable])))
    else:
        rho = 0.0

    x = np.array([p[0] for p in traj_pts])
    y = np.array([p[1] for p in traj_pts])
    slope = float((x * y).sum() / (x * x).sum()) if (x * x).sum() > 0 else 0.0

    return {
        "min_visit_scaled": float(visit.min() * dag.n_states),
        "rank_ratio_min": min(ratios),
        "rank_ratio_mean": float(np.mean(ratios)),
        "err_corr": {str(k): corr[k] for k in corr},
        "rho": rho,
        "traj_err_slope": slope,
        "n_draws": n_draws if noise_probe > 0 else 1,
        "noise_probe": noise_probe,
    }


def estimate_constants(
    params: LogFlowParams, dag: Dag, rewards: RewardTable, table: TrajectoryTable
) -> dict:
    """Empirical values of the constants appearing in the rate and error
    statements, at the current parameters.

    g_fm / g_db / g_tb: largest single-sample gradient norm of each objective
    (exact sup over states, transitions and trajectories).  k: the backward
    policy variance constant, exactly max in-degree squared under the uniform
    backward policy.  m / M: smallest and largest edge flow.  min_transition:
    smallest forward-policy step probability.
    """
    g_fm = max(
        float(np.linalg.norm(objectives.fm_loss_grad(params, dag, rewards, [s]).grad_w))
        for s in range(dag.n_states)
        if s != dag.source
    )
    g_db = max(
        float(np.linalg.norm(objectives.db_loss_grad(params, dag, rewards, [e]).grad_w))
        for e in range(dag.n_edges)
    )
    g_tb = 0.0
    for traj in table.trajectories:
        lg = objectives.tb_loss_grad(params, dag, rewards, [traj])
        g_tb = max(g_tb, math.hypot(float(np.linalg.norm(lg.grad_w)), lg.grad_zeta))
    k = max(len(dag.in_adjacency[s]) for s in range(dag.n_states)) ** 2
    flows = np.exp(params.w)
    min_transition = min(
        float(forward_policy(params, dag, s).min())
        for s in range(dag.n_states)
        if not dag.is_terminal(s)
    )
    return {
        "g_fm": g_fm,
        "g_db": g_db,
        "g_tb": g_tb,
        "g_max": max(g_fm, g_db, g_tb),
        "k": float(k),
        "m": float(flows.min()),
        "M": float(flows.max()),
        "min_transition": min_transition,
    }
