"""Parameters, policies, samplers, log-probabilities and snapshots."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from theorylab.flow_model import (
    LogFlowParams,
    Trajectory,
    backward_policy_uniform,
    edge_flow,
    forward_policy,
    init_params,
    load_params,
    node_outflow,
    sample_backward,
    sample_forward,
    save_params,
    trajectory_logprob,
)
from theorylab.graph import GraphError, build_chain, build_diamond, build_fan
from theorylab.oracle import enumerate_trajectories

from conftest import layered_dags


class TestParams:
    def test_init_zero(self, diamond):
        dag, rewards = diamond
        p = init_params(dag, rewards)
        assert np.array_equal(p.w, np.zeros(4))
        assert p.zeta == math.log(rewards.z_r)

    def test_init_uniform_seeded(self, diamond):
        dag, rewards = diamond
        a = init_params(dag, rewards, "uniform", 0.5, np.random.default_rng(7))
        b = init_params(dag, rewards, "uniform", 0.5, np.random.default_rng(7))
        assert np.array_equal(a.w, b.w)
        assert np.abs(a.w).max() <= 0.5
        with pytest.raises(ValueError):
            init_params(dag, rewards, "uniform")
        with pytest.raises(ValueError):
            init_params(dag, rewards, "gauss")

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            LogFlowParams(np.array([0.0, math.inf]), 0.0)
        with pytest.raises(ValueError):
            LogFlowParams(np.zeros(2), math.nan)
        with pytest.raises(ValueError):
            LogFlowParams(np.zeros((2, 2)), 0.0)

    def test_copy_is_independent(self):
        p = LogFlowParams(np.zeros(3), 1.0)
        q = p.copy()
        q.w[0] = 5.0
        assert p.w[0] == 0.0

    def test_edge_flow(self):
        p = LogFlowParams(np.array([0.0, math.log(2.0)]), 0.0)
        assert edge_flow(p, 0) == 1.0
        assert edge_flow(p, 1) == pytest.approx(2.0)


class TestTrajectory:
    def test_from_edges(self, diamond):
        dag, _ = diamond
        t = Trajectory.from_edges(dag, (0, 2))
        assert t.states == (0, 1, 3)
        assert t.terminal == 3
        assert len(t) == 2

    def test_from_edges_rejects_gap(self, diamond):
        dag, _ = diamond
        with pytest.raises(GraphError):
            Trajectory.from_edges(dag, (0, 3))  # edge 3 starts at 2, not 1
        with pytest.raises(GraphError):
            Trajectory.from_edges(dag, ())

    def test_check_rejects_wrong_endpoints(self, diamond):
        dag, _ = diamond
        with pytest.raises(GraphError):
            Trajectory((1, 3), (2,)).check(dag)  # does not start at the source
        with pytest.raises(GraphError):
            Trajectory((0, 1), (0,)).check(dag)  # ends at an interior state


class TestPolicies:
    def test_forward_policy_uniform_at_zero(self, diamond):
        dag, rewards = diamond
        p = init_params(dag, rewards)
        assert np.allclose(forward_policy(p, dag, 0), [0.5, 0.5])

    def test_forward_policy_softmax(self, fan13):
        dag, rewards = fan13
        p = LogFlowParams(np.array([0.0, math.log(3.0)]), 0.0)
        assert np.allclose(forward_policy(p, dag, 0), [0.25, 0.75])

    def test_forward_policy_terminal_raises(self, fan13):
        dag, _ = fan13
        with pytest.raises(GraphError):
            forward_policy(init_params(*fan13), dag, 1)

    def test_backward_policy(self, diamond):
        dag, _ = diamond
        assert np.allclose(backward_policy_uniform(dag, 3), [0.5, 0.5])
        with pytest.raises(GraphError):
            backward_policy_uniform(dag, 0)

    def test_node_outflow(self, fan13):
        dag, rewards = fan13
        p = LogFlowParams(np.array([0.0, 1.0]), 0.0)
        assert node_outflow(p, dag, rewards, 0) == pytest.approx(1.0 + math.e)
        assert node_outflow(p, dag, rewards, 2) == 3.0  # terminal pinned to reward

    @given(layered_dags(), st.integers(0, 2**31 - 1))
    def test_policy_shift_invariance(self, pair, shift_seed):
        dag, rewards = pair
        rng = np.random.default_rng(shift_seed)
        p = LogFlowParams(rng.normal(size=dag.n_edges), 0.0)
        shifted = LogFlowParams(p.w + 1.7, 0.0)
        base = forward_policy(p, dag, dag.source)
        assert np.allclose(base, forward_policy(shifted, dag, dag.source))
        assert base.sum() == pytest.approx(1.0)


class TestSamplers:
    def test_forward_deterministic_given_rng(self, diamond):
        dag, rewards = diamond
        p = init_params(dag, rewards)
        a = sample_forward(p, dag, np.random.default_rng(3))
        b = sample_forward(p, dag, np.random.default_rng(3))
        assert a == b
        a.check(dag)

    def test_forward_one_draw_per_step(self, chain4):
        dag, rewards = chain4
        p = init_params(dag, rewards)
        rng = np.random.default_rng(11)
        traj = sample_forward(p, dag, rng)
        assert len(traj) == 4
        ref = np.random.default_rng(11)
        ref.random(4)  # the four per-step draws
        assert rng.random() == ref.random()

    def test_backward_valid_and_deterministic(self, grid23):
        dag, rewards = grid23
        a = sample_backward(dag, rewards, np.random.default_rng(5))
        b = sample_backward(dag, rewards, np.random.default_rng(5))
        assert a == b
        a.check(dag)
        assert a.states[0] == dag.source

    def test_backward_terminal_law_matches_rewards(self, fan13):
        dag, rewards = fan13
        rng = np.random.default_rng(0)
        counts = {1: 0, 2: 0}
        n = 4000
        for _ in range(n):
            counts[sample_backward(dag, rewards, rng).terminal] += 1
        # binomial(4000, 0.75): 4 sigma is ~110 draws
        assert abs(counts[2] - 0.75 * n) < 4 * math.sqrt(n * 0.75 * 0.25)


class TestLogProb:
    def test_diamond_uniform(self, diamond):
        dag, rewards = diamond
        p = init_params(dag, rewards)
        for edges in ((0, 2), (1, 3)):
            t = Trajectory.from_edges(dag, edges)
            assert trajectory_logprob(p, dag, t) == pytest.approx(math.log(0.5))

    @given(layered_dags(), st.integers(0, 2**31 - 1))
    def test_probs_sum_to_one(self, pair, seed):
        dag, rewards = pair
        rng = np.random.default_rng(seed)
        p = LogFlowParams(rng.normal(scale=0.8, size=dag.n_edges), 0.0)
        table = enumerate_trajectories(dag, rewards)
        total = sum(math.exp(trajectory_logprob(p, dag, t)) for t in table.trajectories)
        assert total == pytest.approx(1.0, abs=1e-12)


class TestSnapshots:
    @pytest.mark.parametrize("fmt", ["json", "binary"])
    def test_round_trip_exact(self, tmp_path, fmt):
        p = LogFlowParams(np.array([0.1, -2.5, 1e-300, 3.7e12]), -0.25)
        path = str(tmp_path / f"p.{fmt}")
        save_params(p, path, fmt)
        q = load_params(path, fmt)
        assert np.array_equal(p.w, q.w)
        assert p.zeta == q.zeta

    def test_dag_size_check(self, tmp_path, diamond):
        dag, _ = diamond
        path = str(tmp_path / "p.json")
        save_params(LogFlowParams(np.zeros(3), 0.0), path)
        with pytest.raises(ValueError):
            load_params(path, dag=dag)

    def test_bad_format_and_short_file(self, tmp_path):
        p = LogFlowParams(np.zeros(2), 0.0)
        with pytest.raises(ValueError):
            save_params(p, str(tmp_path / "x"), fmt="xml")
        short = tmp_path / "short.json"
        short.write_text("[1.0]")
        with pytest.raises(ValueError):
            load_params(str(short))
