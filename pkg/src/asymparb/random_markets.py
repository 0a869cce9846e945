"""Random event-tree markets and measure families for property suites."""
from __future__ import annotations

import numpy as np

from .market import EventTree, FiniteMarket


def random_tree(rng: np.random.Generator, max_depth: int = 3, max_branching: int = 3) -> EventTree:
    depth = int(rng.integers(1, max_depth + 1))
    parents = [None]
    frontier = [0]
    for _ in range(depth):
        nxt = []
        for node in frontier:
            for _ in range(int(rng.integers(1, max_branching + 1))):
                parents.append(node)
                nxt.append(len(parents) - 1)
        frontier = nxt
    return EventTree.from_parents(parents)


def random_market(rng: np.random.Generator, max_depth: int = 3, max_branching: int = 3,
                  lam: float = 0.0, price_range: tuple[float, float] = (0.5, 2.0)) -> FiniteMarket:
    tree = random_tree(rng, max_depth, max_branching)
    p = rng.dirichlet(np.ones(tree.n_leaves))
    p = np.maximum(p, 1e-3)
    p /= p.sum()
    price = rng.uniform(*price_range, size=tree.n_nodes)
    return FiniteMarket(tree, p, price, lam)


def random_family(rng: np.random.Generator, max_outcomes: int = 10, max_generators: int = 5):
    """(P, generators) with Dirichlet-sampled rows."""
    k = int(rng.integers(2, max_outcomes + 1))
    g = int(rng.integers(1, max_generators + 1))
    p = rng.dirichlet(np.ones(k))
    gens = rng.dirichlet(np.ones(k), size=g)
    return p, gens
