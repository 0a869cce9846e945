"""Finite event-tree markets: one bond (identically 1) and one stock.

Nodes are dense integer ids; node ``i`` at time ``t`` is an atom of the
time-``t`` partition. Leaves (all at the horizon) are the outcomes, ordered by
ascending node id.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

PROB_TOL = 1e-12
EQUIV_TOL = 1e-9
CONTAIN_TOL = 1e-10
MARTINGALE_TOL = 1e-9
MAX_NODES = 2**16
MAX_ENUM_LEAVES = 20


class TreeError(ValueError):
    """Structurally malformed event tree."""


class InvalidMarketError(ValueError):
    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DegenerateConditioningError(ZeroDivisionError):
    pass


@dataclass(frozen=True, eq=False)
class EventTree:
    parent: np.ndarray  # -1 marks the root
    time: np.ndarray

    def __post_init__(self):
        parent = np.asarray(self.parent, dtype=int)
        time = np.asarray(self.time, dtype=int)
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "time", time)
        n = parent.size
        if n == 0:
            raise TreeError("tree has no nodes")
        if n > MAX_NODES:
            raise TreeError(f"tree has {n} nodes, cap is {MAX_NODES}")
        if time.shape != parent.shape:
            raise TreeError("parent and time arrays differ in length")
        roots = np.flatnonzero(parent < 0)
        if roots.size != 1:
            raise TreeError(f"expected exactly one root, found {roots.size}")
        if time[roots[0]] != 0:
            raise TreeError(f"root {roots[0]} has time {time[roots[0]]}, expected 0")
        for i in range(n):
            p = parent[i]
            if p < 0:
                continue
            if p >= n:
                raise TreeError(f"node {i}: parent {p} does not exist")
            if time[i] != time[p] + 1:
                raise TreeError(f"node {i}: time {time[i]} is not parent time {time[p]} + 1")
        horizon = int(time.max())
        if horizon < 1:
            raise TreeError("horizon must be at least 1")
        has_child = np.zeros(n, dtype=bool)
        has_child[parent[parent >= 0]] = True
        for i in np.flatnonzero(~has_child):
            if time[i] != horizon:
                raise TreeError(f"node {i}: leaf at time {time[i]}, horizon is {horizon}")

    @classmethod
    def from_parents(cls, parents: Sequence[Optional[int]]) -> "EventTree":
        """Build from a parent list; times follow from depth."""
        par = np.array([-1 if p is None else p for p in parents], dtype=int)
        time = np.zeros(par.size, dtype=int)
        for i in range(par.size):
            d, j = 0, i
            while par[j] >= 0:
                j = par[j]
                d += 1
                if d > par.size:
                    raise TreeError("parent links contain a cycle")
            time[i] = d
        return cls(par, time)

    @property
    def n_nodes(self) -> int:
        return self.parent.size

    @cached_property
    def horizon(self) -> int:
        return int(self.time.max())

    @cached_property
    def root(self) -> int:
        return int(np.flatnonzero(self.parent < 0)[0])

    @cached_property
    def children(self) -> list[list[int]]:
        kids: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for i, p in enumerate(self.parent):
            if p >= 0:
                kids[p].append(i)
        return kids

    @cached_property
    def leaves(self) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.children) if not k], dtype=int)

    @property
    def n_leaves(self) -> int:
        return self.leaves.size

    @cached_property
    def interior(self) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.children) if k], dtype=int)

    @cached_property
    def descendants(self) -> np.ndarray:
        """0/1 matrix D with D[v, l] = 1 iff leaf l lies below (or is) node v."""
        D = np.zeros((self.n_nodes, self.n_leaves))
        for l, leaf in enumerate(self.leaves):
            v = leaf
            while v >= 0:
                D[v, l] = 1.0
                v = self.parent[v]
        return D

    @cached_property
    def topological(self) -> np.ndarray:
        return np.argsort(self.time, kind="stable")

    def path_sum(self, increments: np.ndarray) -> np.ndarray:
        """Cumulative sum of per-node increments along root-to-node paths."""
        out = np.asarray(increments, dtype=float).copy()
        for v in self.topological:
            p = self.parent[v]
            if p >= 0:
                out[v] += out[p]
        return out

    def same_shape(self, other: "EventTree") -> bool:
        return self is other or (
            np.array_equal(self.parent, other.parent) and np.array_equal(self.time, other.time)
        )


@dataclass(frozen=True, eq=False)
class FiniteMarket:
    tree: EventTree
    leaf_prob: np.ndarray  # indexed like tree.leaves
    price: np.ndarray  # per node
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "leaf_prob", np.asarray(self.leaf_prob, dtype=float))
        object.__setattr__(self, "price", np.asarray(self.price, dtype=float))

    @property
    def bid(self) -> np.ndarray:
        return (1.0 - self.lam) * self.price

    def with_lambda(self, lam: float) -> "FiniteMarket":
        return FiniteMarket(self.tree, self.leaf_prob, self.price, lam)


def binomial_market(s0: float, su: float, sd: float, pu: float = 0.5, pd: Optional[float] = None,
                    lam: float = 0.0) -> FiniteMarket:
    """One-period two-state market; node 0 is the root, 1 is up, 2 is down."""
    pd = 1.0 - pu if pd is None else pd
    tree = EventTree.from_parents([None, 0, 0])
    return FiniteMarket(tree, np.array([pu, pd]), np.array([s0, su, sd]), lam)


def validate_market(market: FiniteMarket) -> list[str]:
    """Human-readable invariant violations; empty when the market is well formed."""
    out = []
    tree = market.tree
    p = market.leaf_prob
    if p.shape != (tree.n_leaves,):
        out.append(f"leaf_prob has {p.size} entries for {tree.n_leaves} leaves")
    else:
        for l, leaf in enumerate(tree.leaves):
            if not p[l] > 0:
                out.append(f"non-positive probability {p[l]:g} at leaf node {leaf}")
        total = float(p.sum())
        if abs(total - 1.0) > PROB_TOL:
            out.append(f"leaf probabilities sum {total:g} != 1")
    s = market.price
    if s.shape != (tree.n_nodes,):
        out.append(f"price has {s.size} entries for {tree.n_nodes} nodes")
    else:
        for v in range(tree.n_nodes):
            if not (s[v] > 0 and np.isfinite(s[v])):
                out.append(f"non-positive price {s[v]:g} at node {v}")
    if not (0.0 <= market.lam < 1.0):
        out.append(f"lambda {market.lam:g} outside [0, 1)")
    return out


def require_valid(market: FiniteMarket) -> None:
    problems = validate_market(market)
    if problems:
        raise InvalidMarketError(problems)


# -- measures ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PricingMeasure:
    tree: EventTree
    leaf_weight: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "leaf_weight", np.asarray(self.leaf_weight, dtype=float))

    @cached_property
    def node_mass(self) -> np.ndarray:
        return self.tree.descendants @ self.leaf_weight

    def is_equivalent(self, tol: float = EQUIV_TOL) -> bool:
        return bool(np.all(self.leaf_weight >= tol))

    def mass(self, leaves) -> float:
        """Measure of a set of outcomes given as leaf indices."""
        return float(self.leaf_weight[list(leaves)].sum())


def conditional_expectation(process: np.ndarray, measure: PricingMeasure, node: int) -> float:
    z = measure.node_mass
    kids = measure.tree.children[node]
    if not kids:
        raise ValueError(f"node {node} is a leaf; there is no next step to condition on")
    if z[node] <= 0:
        raise DegenerateConditioningError(f"node {node} has zero mass")
    return float(sum(z[c] * process[c] for c in kids) / z[node])


def supermartingale_excess(process: np.ndarray, measure: PricingMeasure) -> float:
    """max over charged interior nodes of E[X_next | node] - X_node (<= 0 for a supermartingale)."""
    worst = -np.inf
    z = measure.node_mass
    for v in measure.tree.interior:
        if z[v] > 0:
            worst = max(worst, conditional_expectation(process, measure, v) - process[v])
    return float(worst)


@dataclass(frozen=True, eq=False)
class ConsistentPriceSystem:
    measure: PricingMeasure
    shadow: np.ndarray  # per node

    def __post_init__(self):
        object.__setattr__(self, "shadow", np.asarray(self.shadow, dtype=float))

    def martingale_residual(self) -> float:
        z = self.measure.node_mass
        res = 0.0
        for v in self.measure.tree.interior:
            if z[v] > 0:
                res = max(res, abs(conditional_expectation(self.shadow, self.measure, v) - self.shadow[v]))
        return res

    def containment_violation(self, market: FiniteMarket, lam: Optional[float] = None) -> float:
        lam = market.lam if lam is None else lam
        lo = (1.0 - lam) * market.price - self.shadow
        hi = self.shadow - market.price
        return float(max(lo.max(), hi.max(), 0.0))

    def violations(self, market: FiniteMarket, lam: Optional[float] = None,
                   require_equivalent: bool = True) -> list[str]:
        out = []
        if not self.measure.tree.same_shape(market.tree):
            return ["CPS tree differs from market tree"]
        w = self.measure.leaf_weight
        if abs(w.sum() - 1.0) > PROB_TOL * 10 or np.any(w < -PROB_TOL):
            out.append(f"measure weights sum {w.sum():.12g} or are negative")
        if require_equivalent and not self.measure.is_equivalent():
            out.append(f"measure not equivalent: min leaf weight {w.min():.3g}")
        c = self.containment_violation(market, lam)
        if c > CONTAIN_TOL:
            out.append(f"shadow price leaves bid-ask spread by {c:.3g}")
        r = self.martingale_residual()
        if r > MARTINGALE_TOL:
            out.append(f"shadow price martingale residual {r:.3g}")
        return out

    def is_valid(self, market: FiniteMarket, lam: Optional[float] = None) -> bool:
        return not self.violations(market, lam)


# -- strategies ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TradingStrategy:
    """Holdings after the trade at each node, with the trades that produced them.

    The pre-time-0 state is ``(initial_bond, 0)``; zero-endowment strategies
    keep ``initial_bond = 0``.
    """

    tree: EventTree
    buy1: np.ndarray
    sell1: np.ndarray
    delta0: np.ndarray
    initial_bond: float = 0.0

    def __post_init__(self):
        for name in ("buy1", "sell1", "delta0"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @classmethod
    def zero(cls, tree: EventTree) -> "TradingStrategy":
        z = np.zeros(tree.n_nodes)
        return cls(tree, z, z, z)

    @classmethod
    def tight(cls, market: FiniteMarket, buy1, sell1, initial_bond: float = 0.0,
              lam: Optional[float] = None) -> "TradingStrategy":
        """Trades financed exactly at bid/ask (no disposal)."""
        lam = market.lam if lam is None else lam
        buy1 = np.asarray(buy1, dtype=float)
        sell1 = np.asarray(sell1, dtype=float)
        delta0 = (1.0 - lam) * market.price * sell1 - market.price * buy1
        return cls(market.tree, buy1, sell1, delta0, initial_bond)

    @cached_property
    def phi1(self) -> np.ndarray:
        return self.tree.path_sum(self.buy1 - self.sell1)

    @cached_property
    def phi0(self) -> np.ndarray:
        return self.initial_bond + self.tree.path_sum(self.delta0)

    def self_financing_excess(self, market: FiniteMarket, lam: Optional[float] = None) -> float:
        """max(delta0 - (bid * sell - ask * buy), negative trades); <= 0 when self-financing."""
        lam = market.lam if lam is None else lam
        budget = (1.0 - lam) * market.price * self.sell1 - market.price * self.buy1
        return float(max((self.delta0 - budget).max(), -self.buy1.min(), -self.sell1.min()))

    def is_self_financing(self, market: FiniteMarket, lam: Optional[float] = None,
                          tol: float = 1e-9) -> bool:
        scale = max(1.0, float(np.abs(self.delta0).max(initial=0.0)))
        return self.self_financing_excess(market, lam) <= tol * scale


def _check_shape(strategy: TradingStrategy, market: FiniteMarket) -> None:
    if not strategy.tree.same_shape(market.tree):
        raise TreeError("strategy and market are defined on different trees")


def liquidation_value(strategy: TradingStrategy, market: FiniteMarket,
                      lam: Optional[float] = None) -> np.ndarray:
    """Bond holdings plus the proceeds of closing the stock position at bid/ask."""
    _check_shape(strategy, market)
    lam = market.lam if lam is None else lam
    phi1 = strategy.phi1
    s = market.price
    return strategy.phi0 + np.maximum(phi1, 0.0) * (1.0 - lam) * s - np.maximum(-phi1, 0.0) * s


def frictionless_value(strategy: TradingStrategy, shadow: np.ndarray) -> np.ndarray:
    return strategy.phi0 + strategy.phi1 * np.asarray(shadow)


def is_admissible(strategy: TradingStrategy, market: FiniteMarket, bound: float,
                  lam: Optional[float] = None) -> bool:
    if bound < 0:
        raise ValueError("admissibility bound must be nonnegative")
    if np.isinf(bound):
        return True
    return bool(np.all(liquidation_value(strategy, market, lam) >= -bound))
