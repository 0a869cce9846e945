"""Consistent price systems, arbitrage and superreplication as linear programs.

The bilinear pair (measure, shadow price) is linearized through leaf weights
``q`` and measure-weighted shadow prices ``m = Z * S~`` summed over leaves;
martingale constraints then hold by construction and the bid-ask band becomes
two linear rows per node.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .lp import UNBOUNDED, LinearProgram, LPError, Simplex
from .market import (
    EQUIV_TOL,
    ConsistentPriceSystem,
    FiniteMarket,
    PricingMeasure,
    TradingStrategy,
    liquidation_value,
    require_valid,
)

ATTAIN_TOL = 1e-9
SCHACH_TOL = 1e-9


class HypothesisError(ValueError):
    """A theorem's hypothesis fails on the supplied instance."""


def _lam(market: FiniteMarket, lam: Optional[float]) -> float:
    lam = market.lam if lam is None else float(lam)
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"lambda {lam} outside [0, 1)")
    return lam


def _polytope_lp(market: FiniteMarket, lam: float, extra: int = 0) -> LinearProgram:
    """Rows of the closed CPS polytope over x = [q, m, extra...]."""
    tree = market.tree
    L = tree.n_leaves
    D = tree.descendants
    s = market.price[:, None]
    lp = LinearProgram(2 * L + extra)
    ones = np.zeros(2 * L + extra)
    ones[:L] = 1.0
    lp.add_constraints(ones, "==", 1.0)
    pad = np.zeros((tree.n_nodes, extra))
    if lam == 0.0:
        lp.add_constraints(np.hstack([-s * D, D, pad]), "==", 0.0)
    else:
        lp.add_constraints(np.hstack([-(1.0 - lam) * s * D, D, pad]), ">=", 0.0)
        lp.add_constraints(np.hstack([s * D, -D, pad]), ">=", 0.0)
    return lp


def _cps_from_solution(market: FiniteMarket, q: np.ndarray, m_leaf: np.ndarray) -> ConsistentPriceSystem:
    tree = market.tree
    q = np.maximum(q, 0.0)
    q = q / q.sum()
    measure = PricingMeasure(tree, q)
    z = measure.node_mass
    m = tree.descendants @ m_leaf
    with np.errstate(divide="ignore", invalid="ignore"):
        shadow = np.where(z > 0, m / np.where(z > 0, z, 1.0), market.price)
    return ConsistentPriceSystem(measure, shadow)


class CpsPolytope:
    """The closed polytope of linearized CPS for one (market, lambda).

    Phase 1 is solved once; every ``extreme_mass`` call is a phase-2 run from
    that basis with a new objective.
    """

    def __init__(self, market: FiniteMarket, lam: Optional[float] = None):
        require_valid(market)
        self.market = market
        self.lam = _lam(market, lam)
        self.lp = _polytope_lp(market, self.lam)

    @cached_property
    def simplex(self) -> Simplex:
        return Simplex(self.lp)

    @property
    def nonempty(self) -> bool:
        return self.simplex.feasible

    def optimize(self, leaf_payoff, maximize: bool = True):
        L = self.market.tree.n_leaves
        c = np.zeros(2 * L)
        c[:L] = leaf_payoff
        return self.simplex.optimize(c, maximize=maximize)

    def extreme_mass(self, leaves: Sequence[int], maximize: bool = True) -> float:
        """max (or min) of Q(A) over the polytope, A given as leaf indices."""
        payoff = np.zeros(self.market.tree.n_leaves)
        payoff[list(leaves)] = 1.0
        res = self.optimize(payoff, maximize)
        if not res.optimal:
            raise HypothesisError(f"CPS polytope is {res.status}")
        return min(max(res.value, 0.0), 1.0)


def find_cps(market: FiniteMarket, lam: Optional[float] = None,
             objective: Optional[Sequence[float]] = None) -> Optional[ConsistentPriceSystem]:
    """An equivalent lambda-CPS, or None.

    By default the one maximizing the smallest leaf weight. With
    ``objective`` (weights on ``[q, m]``, length 2 * leaves) the maximizer of
    that objective among CPS whose leaf weights are at least half the
    attainable smallest weight, so different objectives give different
    equivalent systems.
    """
    require_valid(market)
    lam = _lam(market, lam)
    L = market.tree.n_leaves
    lp = _polytope_lp(market, lam, extra=1)
    rows = np.zeros((L, 2 * L + 1))
    rows[:, :L] = np.eye(L)
    rows[:, -1] = -1.0
    lp.add_constraints(rows, ">=", 0.0)
    c = np.zeros(2 * L + 1)
    c[-1] = 1.0
    lp.set_objective(c, maximize=True)
    res = lp.solve()
    if not res.optimal or res.value <= EQUIV_TOL:
        return None
    if objective is not None:
        obj = np.asarray(objective, dtype=float)
        if obj.shape != (2 * L,):
            raise ValueError(f"objective needs {2 * L} entries, got {obj.size}")
        lp.set_bounds(2 * L, lower=res.value / 2, upper=res.value / 2)
        lp.set_objective(np.concatenate([obj, [0.0]]), maximize=True)
        res = lp.solve()
        if not res.optimal:
            raise LPError(f"CPS objective LP is {res.status}")
    cps = _cps_from_solution(market, res.x[:L], res.x[L:2 * L])
    problems = cps.violations(market, lam)
    if problems:
        raise LPError("CPS recovered from LP fails verification: " + "; ".join(problems))
    return cps


def _trade_lp(market: FiniteMarket, lam: float, with_endowment: bool) -> tuple[LinearProgram, np.ndarray]:
    """Variables [x?, buy (N), sell (N)]; returns the LP with the stock-ends-flat
    rows and the matrix mapping variables to terminal bond holdings."""
    tree = market.tree
    N = tree.n_nodes
    D = tree.descendants
    s = market.price
    off = 1 if with_endowment else 0
    lp = LinearProgram(off + 2 * N)
    if with_endowment:
        lp.set_bounds(0, lower=-np.inf)
    # terminal bond after closing: x + sum_path(bid*sell - ask*buy); stock ends flat
    value = np.hstack([np.ones((tree.n_leaves, off)), -(D.T * s), D.T * ((1.0 - lam) * s)])
    flat = np.hstack([np.zeros((tree.n_leaves, off)), D.T, -D.T])
    lp.add_constraints(flat, "==", 0.0)
    return lp, value


def find_arbitrage(market: FiniteMarket, lam: Optional[float] = None) -> Optional[TradingStrategy]:
    """Zero-endowment strategy with nonnegative terminal value and E_P[V_T] >= 1."""
    require_valid(market)
    lam = _lam(market, lam)
    N = market.tree.n_nodes
    lp, value = _trade_lp(market, lam, with_endowment=False)
    lp.add_constraints(value, ">=", 0.0)
    lp.add_constraints(market.leaf_prob @ value, ">=", 1.0)
    lp.set_objective(np.ones(2 * N))
    res = lp.solve()
    if not res.optimal:
        return None
    return TradingStrategy.tight(market, res.x[:N], res.x[N:], lam=lam)


@dataclass
class SuperrepResult:
    dual_value: float
    primal_value: float
    strategy: Optional[TradingStrategy]
    cps: Optional[ConsistentPriceSystem]

    @property
    def gap(self) -> float:
        if np.isinf(self.dual_value) and self.dual_value == self.primal_value:
            return 0.0
        return abs(self.dual_value - self.primal_value)


def _claim(market: FiniteMarket, claim) -> np.ndarray:
    f = np.asarray(claim, dtype=float)
    if f.shape != (market.tree.n_leaves,):
        raise ValueError(f"claim has {f.size} entries for {market.tree.n_leaves} leaves")
    if not np.all(np.isfinite(f)):
        raise ValueError("claim must be finite")
    return f


def superreplicate(market: FiniteMarket, claim, lam: Optional[float] = None) -> SuperrepResult:
    """Superhedging price two ways: max E_Q[f] over the CPS polytope, and the
    cheapest initial bond endowment whose strategy ends at or above ``f``."""
    require_valid(market)
    lam = _lam(market, lam)
    f = _claim(market, claim)
    L, N = market.tree.n_leaves, market.tree.n_nodes

    dual = CpsPolytope(market, lam)
    dres = dual.optimize(f, maximize=True)
    if dres.optimal:
        dual_value = dres.value
        cps = _cps_from_solution(market, dres.x[:L], dres.x[L:])
    else:
        dual_value, cps = -np.inf, None

    lp, value = _trade_lp(market, lam, with_endowment=True)
    lp.add_constraints(value, ">=", f)
    c = np.zeros(1 + 2 * N)
    c[0] = 1.0
    lp.set_objective(c)
    pres = lp.solve()
    if pres.status == UNBOUNDED:
        primal_value, strategy = -np.inf, None
    elif pres.optimal:
        primal_value = pres.value
        x = pres.x
        strategy = TradingStrategy.tight(market, x[1:1 + N], x[1 + N:], initial_bond=x[0], lam=lam)
    else:
        raise LPError(f"superreplication primal is {pres.status}")
    return SuperrepResult(dual_value, primal_value, strategy, cps)


def attain_claim(market: FiniteMarket, claim, lam: Optional[float] = None) -> Optional[TradingStrategy]:
    """Zero-endowment strategy whose terminal liquidation value equals ``f`` exactly."""
    lam = _lam(market, lam)
    f = _claim(market, claim)
    price = superreplicate(market, f, lam).dual_value
    if price > ATTAIN_TOL:
        return None
    tree = market.tree
    N = tree.n_nodes
    lp, value = _trade_lp(market, lam, with_endowment=True)
    lp.set_bounds(0, upper=max(price, 0.0))
    lp.add_constraints(value, ">=", f)
    lp.set_objective(np.concatenate([[0.0], np.ones(2 * N)]))
    res = lp.solve()
    if not res.optimal:
        raise LPError(f"attainment LP is {res.status} although the superhedging price is {price:.3g}")
    x = res.x
    hedge = TradingStrategy.tight(market, x[1:1 + N], x[1 + N:], initial_bond=x[0], lam=lam)
    delta0 = hedge.delta0.copy()
    delta0[tree.root] += x[0]
    surplus = hedge.phi0[tree.leaves] - f
    delta0[tree.leaves] -= surplus  # free disposal of the excess bond
    return TradingStrategy(tree, hedge.buy1, hedge.sell1, delta0)


@dataclass(frozen=True)
class SchachFlag:
    strategy: int
    node: int
    value: float
    floor: float


def schach_scan(market: FiniteMarket, lambda_grid: Sequence[float],
                strategies: Sequence[TradingStrategy], lam: Optional[float] = None) -> list[SchachFlag]:
    """Interior liquidation values that dip below the terminal floor."""
    require_valid(market)
    lam = _lam(market, lam)
    for lp_ in lambda_grid:
        if find_cps(market, lp_) is None:
            raise HypothesisError(f"no consistent price system at lambda {lp_:g}")
    flags = []
    tree = market.tree
    for k, strat in enumerate(strategies):
        v = liquidation_value(strat, market, lam)
        floor = min(float(v[tree.leaves].min()), 0.0)
        for node in tree.interior:
            if v[node] < floor - SCHACH_TOL:
                flags.append(SchachFlag(k, int(node), float(v[node]), floor))
    return flags
