"""Shared fixtures: two tiny hand-checkable graphs.

`chain_graph` is a 5-entity funnel (a feeds b and c, which feed d/e), small
enough that every query result can be enumerated on paper.  `triangle_graph`
plants exactly one negation-gated triangle: the only (x1, x2) pair with
g(x1, y), m(x2, y) and no g(x1, x2) edge is (e0, e1) targeting y = e4.
"""

import numpy as np
import pytest

from symquery import ExactProvider, KnowledgeGraph


@pytest.fixture
def chain_graph():
    return KnowledgeGraph(
        ["a", "b", "c", "d", "e"],
        ["r", "s"],
        [(0, 0, 1), (0, 0, 2), (1, 1, 3), (2, 1, 3), (2, 1, 4)],
    )


@pytest.fixture
def chain_provider(chain_graph):
    return ExactProvider(chain_graph)


@pytest.fixture
def triangle_graph():
    return KnowledgeGraph(
        ["e0", "e1", "e2", "e3", "e4", "e5"],
        ["g", "m"],
        [(0, 0, 4), (2, 0, 5), (2, 0, 3), (1, 1, 4), (3, 1, 5)],
    )


@pytest.fixture
def triangle_provider(triangle_graph):
    return ExactProvider(triangle_graph)


@pytest.fixture
def random_scores():
    """Deterministic raw score tensor factory for calibrated providers."""

    def make(graph, seed=42):
        rng = np.random.default_rng(seed)
        return rng.normal(
            size=(graph.num_relations, graph.num_entities, graph.num_entities)
        ).astype(np.float32)

    return make
