"""Explicit DAG environments and terminal reward tables.

States are dense integers 0..n-1.  Terminals are exactly the states with no
outgoing edge.  Edge order is fixed at construction time and is part of the
serialized contract: the parameter vector, the incidence matrix columns and
every per-edge array downstream all use it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "GraphError",
    "SchemaError",
    "DuplicateEdgeError",
    "CycleError",
    "SourceError",
    "UnreachableError",
    "DeadEndError",
    "RewardError",
    "ResourceLimitError",
    "Dag",
    "RewardTable",
    "build_dag",
    "build_chain",
    "build_fan",
    "build_diamond",
    "build_asym_diamond",
    "build_grid",
    "load_dag",
    "save_dag",
]

MAX_STATES = 10**5


class GraphError(ValueError):
    """Base class for environment validation failures."""


class SchemaError(GraphError):
    """Malformed file or out-of-range ids."""


class DuplicateEdgeError(GraphError):
    pass


class CycleError(GraphError):
    pass


class SourceError(GraphError):
    """Source has an incoming edge, or is itself terminal."""


class UnreachableError(GraphError):
    """Some state is not reachable from the source."""


class DeadEndError(GraphError):
    """A state marked non-terminal cannot reach any terminal."""


class RewardError(GraphError):
    """Reward table does not cover exactly the terminals with positive values."""


class ResourceLimitError(GraphError):
    """Requested environment exceeds the configured state cap."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dag:
    """Validated DAG with one source and out-degree-0 terminals.

    Attributes
    ----------
    n_states : int
        States are 0..n_states-1.
    source : int
        The unique entry state; in-degree 0.
    terminals : tuple of int
        States with out-degree 0, in increasing id order.
    edges : tuple of (tail, head) pairs
        Fixed ordering; edge index is the position in this tuple.
    out_adjacency, in_adjacency : tuple of tuple of int
        Per-state edge-index lists, in edge order.
    topo_order : tuple of int
        A topological order of the states (source first).
    """

    n_states: int
    source: int
    edges: tuple[tuple[int, int], ...]
    terminals: tuple[int, ...] = field(init=False)
    out_adjacency: tuple[tuple[int, ...], ...] = field(init=False)
    in_adjacency: tuple[tuple[int, ...], ...] = field(init=False)
    topo_order: tuple[int, ...] = field(init=False)

    def __post_init__(self) -> None:
        n, edges = self.n_states, self.edges
        if n < 2:
            raise SchemaError(f"need at least 2 states, got {n}")
        if n > MAX_STATES:
            raise ResourceLimitError(f"{n} states exceeds cap {MAX_STATES}")
        if not 0 <= self.source < n:
            raise SchemaError(f"source {self.source} out of range 0..{n - 1}")
        seen: set[tuple[int, int]] = set()
        out: list[list[int]] = [[] for _ in range(n)]
        inc: list[list[int]] = [[] for _ in range(n)]
        for e, (t, h) in enumerate(edges):
            if not (0 <= t < n and 0 <= h < n):
                raise SchemaError(f"edge ({t}, {h}) out of range 0..{n - 1}")
            if t == h:
                raise CycleError(f"self-loop on state {t}")
            if (t, h) in seen:
                raise DuplicateEdgeError(f"duplicate edge ({t}, {h})")
            seen.add((t, h))
            out[t].append(e)
            inc[h].append(e)
        if inc[self.source]:
            t, h = edges[inc[self.source][0]]
            raise SourceError(f"source {self.source} has incoming edge ({t}, {h})")
        if not out[self.source]:
            raise SourceError(f"source {self.source} has no outgoing edge")

        topo = self._toposort(out)

        # Reachability from the source (forward BFS over the edge lists).
        reach = [False] * n
        reach[self.source] = True
        for s in topo:
            if reach[s]:
                for e in out[s]:
                    reach[edges[e][1]] = True
        for s in range(n):
            if not reach[s]:
                raise UnreachableError(f"state {s} unreachable from source {self.source}")

        object.__setattr__(self, "terminals", tuple(s for s in range(n) if not out[s]))
        object.__setattr__(self, "out_adjacency", tuple(tuple(a) for a in out))
        object.__setattr__(self, "in_adjacency", tuple(tuple(a) for a in inc))
        object.__setattr__(self, "topo_order", tuple(topo))

    def _toposort(self, out: list[list[int]]) -> list[int]:
        """Iterative DFS; raises CycleError naming a back edge."""
        WHITE, GRAY, BLACK = 0, 1, 2
        color = [WHITE] * self.n_states
        order: list[int] = []
        for root in range(self.n_states):
            if color[root] != WHITE:
                continue
            stack: list[tuple[int, int]] = [(root, 0)]
            color[root] = GRAY
            while stack:
                s, i = stack[-1]
                if i < len(out[s]):
                    stack[-1] = (s, i + 1)
                    h = self.edges[out[s][i]][1]
                    if color[h] == GRAY:
                        raise CycleError(f"cycle through edge ({s}, {h})")
                    if color[h] == WHITE:
                        color[h] = GRAY
                        stack.append((h, 0))
                else:
                    color[s] = BLACK
                    order.append(s)
                    stack.pop()
        order.reverse()
        return order

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def edge_tails(self) -> np.ndarray:
        try:
            return self._edge_tails  # type: ignore[attr-defined]
        except AttributeError:
            a = _frozen(np.array([t for t, _ in self.edges], dtype=np.int64))
            object.__setattr__(self, "_edge_tails", a)
            return a

    @property
    def edge_heads(self) -> np.ndarray:
        try:
            return self._edge_heads  # type: ignore[attr-defined]
        except AttributeError:
            a = _frozen(np.array([h for _, h in self.edges], dtype=np.int64))
            object.__setattr__(self, "_edge_heads", a)
            return a

    def is_terminal(self, state: int) -> bool:
        return not self.out_adjacency[state]

    def terminal_index(self, state: int) -> int:
        """Position of ``state`` in ``terminals``."""
        try:
            lut = self._terminal_index  # type: ignore[attr-defined]
        except AttributeError:
            lut = {s: i for i, s in enumerate(self.terminals)}
            object.__setattr__(self, "_terminal_index", lut)
        try:
            return lut[state]
        except KeyError:
            raise GraphError(f"state {state} is not terminal") from None

    def max_trajectory_length(self) -> int:
        """Length (edge count) of the longest source-to-terminal path."""
        depth = [0] * self.n_states
        for s in reversed(self.topo_order):
            if self.out_adjacency[s]:
                depth[s] = 1 + max(depth[self.edges[e][1]] for e in self.out_adjacency[s])
        return depth[self.source]


class RewardTable:
    """Strictly positive rewards on the terminals of a companion Dag.

    Immutable; ``r_min`` and ``z_r`` are computed once at construction.
    """

    __slots__ = ("rewards", "r_min", "z_r", "_order")

    def __init__(self, rewards: Mapping[int, float]):
        if not rewards:
            raise RewardError("empty reward table")
        items: dict[int, float] = {}
        for s in sorted(rewards):
            r = float(rewards[s])
            if not np.isfinite(r) or r <= 0.0:
                raise RewardError(f"nonpositive reward {rewards[s]!r} on terminal {s}")
            items[int(s)] = r
        self.rewards: Mapping[int, float] = MappingProxyType(items)
        self.r_min: float = min(items.values())
        self.z_r: float = float(sum(items.values()))
        self._order = tuple(items)

    def reward(self, state: int) -> float:
        try:
            return self.rewards[state]
        except KeyError:
            raise RewardError(f"state {state} has no reward") from None

    def values(self, dag: Dag) -> np.ndarray:
        """Rewards as an array aligned with ``dag.terminals``."""
        if self._order != dag.terminals:
            raise RewardError(
                f"reward table covers {self._order}, dag terminals are {dag.terminals}"
            )
        return np.array([self.rewards[s] for s in dag.terminals], dtype=np.float64)

    def replace(self, new_values: Mapping[int, float]) -> "RewardTable":
        """A new table with some rewards overridden."""
        merged = dict(self.rewards)
        merged.update({int(s): float(r) for s, r in new_values.items()})
        return RewardTable(merged)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RewardTable) and dict(self.rewards) == dict(other.rewards)

    def __repr__(self) -> str:
        return f"RewardTable({dict(self.rewards)!r})"


def build_dag(
    n_states: int, source: int, edges: Iterable[tuple[int, int]], rewards: Mapping[int, float]
) -> tuple[Dag, RewardTable]:
    """Validate raw pieces into a (Dag, RewardTable) pair.

    Raises a specific GraphError subclass naming the offending element:
    CycleError, DuplicateEdgeError, SourceError, UnreachableError,
    DeadEndError, RewardError or SchemaError.
    """
    dag = Dag(n_states, source, tuple((int(t), int(h)) for t, h in edges))
    if dag.source in dag.terminals:
        raise SourceError(f"source {source} is terminal")
    table = RewardTable(rewards)
    extra = set(table.rewards) - set(dag.terminals)
    if extra:
        s = min(extra)
        raise DeadEndError(f"reward on non-terminal state {s} (it has outgoing edges)")
    missing = set(dag.terminals) - set(table.rewards)
    if missing:
        raise RewardError(f"terminal {min(missing)} missing from rewards")
    return dag, table


def build_chain(length: int, reward: float) -> tuple[Dag, RewardTable]:
    """A line s0 -> s1 -> ... -> s_length with one terminal of the given reward."""
    if length < 1:
        raise SchemaError(f"chain length must be >= 1, got {length}")
    edges = [(i, i + 1) for i in range(length)]
    return build_dag(length + 1, 0, edges, {length: reward})


def build_fan(rewards: Sequence[float]) -> tuple[Dag, RewardTable]:
    """Source with k terminal children: s0 -> t_i, R(t_i) = rewards[i].

    build_fan([1, 3]) is the smallest branching environment: two edges, two
    terminals, z_r = 4.
    """
    if len(rewards) < 1:
        raise SchemaError("fan needs at least one terminal")
    edges = [(0, i + 1) for i in range(len(rewards))]
    return build_dag(len(rewards) + 1, 0, edges, {i + 1: r for i, r in enumerate(rewards)})


def build_diamond(reward: float = 1.0) -> tuple[Dag, RewardTable]:
    """Two equal-length paths to one terminal: s0 -> {a, b} -> t.

    States are s0=0, a=1, b=2, t=3; edges in order
    (s0,a), (s0,b), (a,t), (b,t).
    """
    edges = [(0, 1), (0, 2), (1, 3), (2, 3)]
    return build_dag(4, 0, edges, {3: reward})


def build_asym_diamond() -> tuple[Dag, RewardTable]:
    """Diamond plus a side exit a -> t2; the flow system gains one degree
    of freedom.

    States are s0=0, a=1, b=2, t=3, t2=4; edges in order
    (s0,a), (s0,b), (a,t), (b,t), (a,t2); R(t) = R(t2) = 1.
    """
    edges = [(0, 1), (0, 2), (1, 3), (2, 3), (1, 4)]
    return build_dag(5, 0, edges, {3: 1.0, 4: 1.0})


def _grid_reward(reward_fn_id: str, coords: tuple[int, ...], side: int) -> float:
    if reward_fn_id == "uniform":
        return 1.0
    if reward_fn_id == "corner":
        return 0.1 + 2.0 * all(c == side - 1 for c in coords)
    if reward_fn_id == "center":
        return 0.1 + 2.0 * all(c == (side - 1) // 2 for c in coords)
    raise SchemaError(f"unknown reward_fn_id {reward_fn_id!r}")


def build_grid(
    dimension: int, side: int, reward_fn_id: str = "uniform"
) -> tuple[Dag, RewardTable]:
    """Hypergrid with an explicit stop edge per lattice point.

    Lattice points are {0..side-1}^dimension; moves increment one coordinate.
    Every lattice point x also has a stop edge to a dedicated terminal copy
    of x, so stopping is an ordinary edge and terminals have out-degree 0.
    Ids: lattice points come first, ordered by (coordinate sum, lexicographic),
    then their terminal copies in the same order.  reward_fn_id is one of
    "uniform", "corner" (0.1 everywhere, 2.1 at the all-max corner) or
    "center" (analog, peak at the floor-midpoint cell).

    Longest trajectory has dimension*(side-1) moves plus the stop edge.
    """
    if dimension < 1 or side < 1:
        raise SchemaError(f"need dimension >= 1 and side >= 1, got ({dimension}, {side})")
    n_lattice = side**dimension
    if 2 * n_lattice > MAX_STATES:
        raise ResourceLimitError(
            f"grid({dimension}, {side}) needs {2 * n_lattice} states, cap is {MAX_STATES}"
        )
    points = sorted(np.ndindex(*([side] * dimension)), key=lambda c: (sum(c), c))
    index = {c: i for i, c in enumerate(points)}
    edges: list[tuple[int, int]] = []
    rewards: dict[int, float] = {}
    for i, c in enumerate(points):
        for axis in range(dimension):
            if c[axis] + 1 < side:
                step = c[:axis] + (c[axis] + 1,) + c[axis + 1 :]
                edges.append((i, index[step]))
        edges.append((i, n_lattice + i))
        rewards[n_lattice + i] = _grid_reward(reward_fn_id, c, side)
    return build_dag(2 * n_lattice, 0, edges, rewards)


def save_dag(dag: Dag, rewards: RewardTable, path: str) -> None:
    """Write the JSON form; load_dag(path) reproduces both objects exactly."""
    doc = {
        "states": dag.n_states,
        "source": dag.source,
        "edges": [[t, h] for t, h in dag.edges],
        "rewards": {str(s): rewards.rewards[s] for s in dag.terminals},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_dag(path: str) -> tuple[Dag, RewardTable]:
    """Read and fully validate a DAG file.

    The file is a JSON object with keys "states" (count), "source" (id),
    "edges" (array of [tail, head]) and "rewards" (object mapping the id of
    each out-degree-0 state, as a string, to a positive number).
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top level must be an object")
    for key in ("states", "source", "edges", "rewards"):
        if key not in doc:
            raise SchemaError(f"{path}: missing key {key!r}")
    if not isinstance(doc["states"], int) or isinstance(doc["states"], bool):
        raise SchemaError(f"{path}: 'states' must be an integer")
    if not isinstance(doc["edges"], list):
        raise SchemaError(f"{path}: 'edges' must be an array")
    edges = []
    for item in doc["edges"]:
        if not (isinstance(item, list) and len(item) == 2):
            raise SchemaError(f"{path}: bad edge entry {item!r}")
        edges.append((int(item[0]), int(item[1])))
    if not isinstance(doc["rewards"], dict):
        raise SchemaError(f"{path}: 'rewards' must be an object")
    rewards: dict[int, float] = {}
    for key, val in doc["rewards"].items():
        try:
            s = int(key)
        except ValueError:
            raise SchemaError(f"{path}: reward key {key!r} is not a state id") from None
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise SchemaError(f"{path}: reward for state {key} must be a number")
        rewards[s] = float(val)
    return build_dag(doc["states"], int(doc["source"]), edges, rewards)
