"""Shared fixtures and strategies.

Hypothesis runs derandomized so the suite is reproducible; property tests
draw environments from a layered-DAG strategy that is valid by construction
(every interior state keeps an outgoing edge, every state stays reachable).
"""

from __future__ import annotations

import hypothesis.strategies as st
import pytest
from hypothesis import HealthCheck, settings

from theorylab.graph import (
    build_asym_diamond,
    build_chain,
    build_dag,
    build_diamond,
    build_fan,
    build_grid,
)

settings.register_profile(
    "ci",
    derandomize=True,
    max_examples=25,
    deadline=None,
    suppress_health_check=(HealthCheck.too_slow,),
)
settings.load_profile("ci")


@pytest.fixture
def chain4():
    return build_chain(4, 2.0)


@pytest.fixture
def fan13():
    return build_fan([1.0, 3.0])


@pytest.fixture
def diamond():
    return build_diamond(1.0)


@pytest.fixture
def asym_diamond():
    return build_asym_diamond()


@pytest.fixture
def grid22():
    return build_grid(2, 2)


@pytest.fixture
def grid23():
    return build_grid(2, 3)


def bundled_envs():
    """Name -> (dag, rewards) for every stock environment."""
    return {
        "chain4": build_chain(4, 2.0),
        "fan13": build_fan([1.0, 3.0]),
        "diamond": build_diamond(1.0),
        "asym_diamond": build_asym_diamond(),
        "grid22": build_grid(2, 2),
        "grid23": build_grid(2, 3),
        "grid22_corner": build_grid(2, 2, "corner"),
    }


@st.composite
def layered_dags(draw):
    """A random small layered DAG with rewards on the last layer.

    Edges only cross consecutive layers; each right-layer state gets at least
    one incoming edge and each left-layer state at least one outgoing edge,
    which makes the result pass full validation by construction.
    """
    n_layers = draw(st.integers(2, 4))
    sizes = [1] + [draw(st.integers(1, 3)) for _ in range(n_layers - 1)]
    offsets = [0]
    for s in sizes:
        offsets.append(offsets[-1] + s)
    edges: list[tuple[int, int]] = []
    for li in range(n_layers - 1):
        left = list(range(offsets[li], offsets[li + 1]))
        right = list(range(offsets[li + 1], offsets[li + 2]))
        pairs = {(draw(st.sampled_from(left)), r) for r in right}
        for l in left:
            if all(p[0] != l for p in pairs):
                pairs.add((l, draw(st.sampled_from(right))))
        for _ in range(draw(st.integers(0, 3))):
            pairs.add((draw(st.sampled_from(left)), draw(st.sampled_from(right))))
        edges.extend(sorted(pairs))
    terminals = list(range(offsets[-2], offsets[-1]))
    rewards = {
        t: draw(st.floats(0.1, 3.0, allow_nan=False, allow_infinity=False))
        for t in terminals
    }
    return build_dag(offsets[-1], 0, edges, rewards)
