"""DAG construction, validation taxonomy, builders, and file round trips."""

from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given

from theorylab.graph import (
    CycleError,
    DeadEndError,
    DuplicateEdgeError,
    GraphError,
    RewardError,
    RewardTable,
    SchemaError,
    SourceError,
    UnreachableError,
    build_chain,
    build_dag,
    build_diamond,
    build_fan,
    build_grid,
    load_dag,
    save_dag,
)

from conftest import layered_dags


class TestBuilders:
    def test_chain_shape(self, chain4):
        dag, rewards = chain4
        assert dag.n_states == 5
        assert dag.n_edges == 4
        assert dag.edges == ((0, 1), (1, 2), (2, 3), (3, 4))
        assert dag.terminals == (4,)
        assert rewards.reward(4) == 2.0
        assert rewards.z_r == 2.0
        assert dag.max_trajectory_length() == 4

    def test_fan_shape(self, fan13):
        dag, rewards = fan13
        assert dag.n_states == 3
        assert dag.edges == ((0, 1), (0, 2))
        assert dag.terminals == (1, 2)
        assert rewards.z_r == 4.0
        assert rewards.r_min == 1.0
        assert dag.max_trajectory_length() == 1

    def test_diamond_shape(self, diamond):
        dag, rewards = diamond
        assert dag.edges == ((0, 1), (0, 2), (1, 3), (2, 3))
        assert dag.terminals == (3,)
        assert dag.in_adjacency[3] == (2, 3)
        assert dag.out_adjacency[0] == (0, 1)

    def test_asym_diamond_shape(self, asym_diamond):
        dag, rewards = asym_diamond
        assert dag.n_edges == 5
        assert dag.terminals == (3, 4)
        assert rewards.z_r == 2.0

    def test_grid_shape(self, grid22):
        dag, rewards = grid22
        # 4 lattice points with a terminal copy each; 4 moves + 4 stop edges
        assert dag.n_states == 8
        assert dag.n_edges == 8
        assert dag.terminals == (4, 5, 6, 7)
        assert all(r == 1.0 for r in rewards.rewards.values())
        assert dag.max_trajectory_length() == 3  # two moves plus the stop edge

    def test_grid_reward_functions(self):
        _, corner = build_grid(2, 2, "corner")
        assert sorted(corner.rewards.values()) == [0.1, 0.1, 0.1, 2.1]
        _, center = build_grid(2, 3, "center")
        assert sorted(center.rewards.values())[-1] == 2.1
        with pytest.raises(SchemaError):
            build_grid(2, 2, "nope")

    def test_builder_bounds(self):
        with pytest.raises(SchemaError):
            build_chain(0, 1.0)
        with pytest.raises(SchemaError):
            build_fan([])
        with pytest.raises(SchemaError):
            build_grid(0, 2)


class TestValidation:
    def test_cycle(self):
        with pytest.raises(CycleError):
            build_dag(3, 0, [(0, 1), (1, 2), (2, 1)], {})

    def test_self_loop(self):
        with pytest.raises(CycleError):
            build_dag(2, 0, [(0, 1), (1, 1)], {1: 1.0})

    def test_duplicate_edge(self):
        with pytest.raises(DuplicateEdgeError):
            build_dag(2, 0, [(0, 1), (0, 1)], {1: 1.0})

    def test_source_with_incoming(self):
        with pytest.raises(SourceError):
            build_dag(2, 1, [(0, 1)], {1: 1.0})

    def test_unreachable_state(self):
        with pytest.raises(UnreachableError):
            build_dag(3, 0, [(0, 1)], {1: 1.0})

    def test_reward_on_interior(self):
        with pytest.raises(DeadEndError):
            build_dag(3, 0, [(0, 1), (1, 2)], {1: 1.0, 2: 1.0})

    def test_missing_terminal_reward(self):
        with pytest.raises(RewardError):
            build_dag(3, 0, [(0, 1), (0, 2)], {1: 1.0})

    def test_nonpositive_reward(self):
        for bad in (0.0, -1.0, float("nan")):
            with pytest.raises(RewardError):
                build_dag(2, 0, [(0, 1)], {1: bad})

    def test_too_small(self):
        with pytest.raises(SchemaError):
            build_dag(1, 0, [], {})

    def test_edge_out_of_range(self):
        with pytest.raises(SchemaError):
            build_dag(2, 0, [(0, 5)], {1: 1.0})

    def test_error_taxonomy_is_graph_error(self):
        for exc in (CycleError, DuplicateEdgeError, SourceError, UnreachableError,
                    DeadEndError, RewardError, SchemaError):
            assert issubclass(exc, GraphError)


class TestDagProperties:
    def test_edge_arrays(self, diamond):
        dag, _ = diamond
        assert np.array_equal(dag.edge_tails, [0, 0, 1, 2])
        assert np.array_equal(dag.edge_heads, [1, 2, 3, 3])
        with pytest.raises(ValueError):
            dag.edge_tails[0] = 9  # frozen

    def test_terminal_index(self, fan13):
        dag, _ = fan13
        assert [dag.terminal_index(t) for t in dag.terminals] == [0, 1]
        with pytest.raises(GraphError):
            dag.terminal_index(0)

    def test_topo_order(self, grid23):
        dag, _ = grid23
        pos = {s: i for i, s in enumerate(dag.topo_order)}
        assert dag.topo_order[0] == dag.source
        assert all(pos[t] < pos[h] for t, h in dag.edges)


class TestRewardTable:
    def test_values_alignment(self, fan13):
        dag, rewards = fan13
        assert np.array_equal(rewards.values(dag), [1.0, 3.0])

    def test_values_mismatch(self, fan13, diamond):
        _, rewards = fan13
        dag, _ = diamond
        with pytest.raises(RewardError):
            rewards.values(dag)

    def test_replace(self, fan13):
        _, rewards = fan13
        doubled = rewards.replace({s: 2 * r for s, r in rewards.rewards.items()})
        assert doubled.z_r == 8.0
        assert rewards.z_r == 4.0  # original untouched
        assert doubled != rewards

    def test_lookup_error(self, fan13):
        _, rewards = fan13
        with pytest.raises(RewardError):
            rewards.reward(0)

    def test_empty(self):
        with pytest.raises(RewardError):
            RewardTable({})


class TestFileRoundTrip:
    def test_save_load_exact(self, tmp_path, grid23):
        dag, rewards = grid23
        path = str(tmp_path / "env.json")
        save_dag(dag, rewards, path)
        dag2, rewards2 = load_dag(path)
        assert dag2.edges == dag.edges
        assert dag2.source == dag.source
        assert dag2.n_states == dag.n_states
        assert rewards2 == rewards

    def test_load_rejects_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(SchemaError):
            load_dag(str(path))

    def test_load_rejects_missing_key(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"states": 2, "source": 0, "edges": [[0, 1]]}))
        with pytest.raises(SchemaError):
            load_dag(str(path))

    def test_load_rejects_bad_edge_entry(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(
            {"states": 2, "source": 0, "edges": [[0, 1, 2]], "rewards": {"1": 1.0}}))
        with pytest.raises(SchemaError):
            load_dag(str(path))

    def test_load_validates_fully(self, tmp_path):
        path = tmp_path / "cyclic.json"
        path.write_text(json.dumps(
            {"states": 3, "source": 0,
             "edges": [[0, 1], [1, 2], [2, 1]], "rewards": {}}))
        with pytest.raises(CycleError):
            load_dag(str(path))


@given(layered_dags())
def test_random_dag_invariants(pair):
    dag, rewards = pair
    pos = {s: i for i, s in enumerate(dag.topo_order)}
    assert dag.topo_order[0] == dag.source
    assert all(pos[t] < pos[h] for t, h in dag.edges)
    assert dag.terminals == tuple(sorted(dag.terminals))
    assert set(rewards.rewards) == set(dag.terminals)
    for s in range(dag.n_states):
        for e in dag.out_adjacency[s]:
            assert dag.edges[e][0] == s
        for e in dag.in_adjacency[s]:
            assert dag.edges[e][1] == s
    total_adj = sum(len(a) for a in dag.out_adjacency)
    assert total_adj == dag.n_edges
    assert rewards.z_r == pytest.approx(sum(rewards.rewards.values()))
    assert dag.max_trajectory_length() >= 1
