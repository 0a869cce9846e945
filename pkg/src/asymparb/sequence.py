"""Diagnostics across a finite sequence of markets.

Event-level profiles (how much mass the consistent measures must or can put
on sets of given physical probability), separating-set scans, mixing of
consistent price systems, and the row-by-row report for the drifted
lognormal sequence.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .cps import CpsPolytope, HypothesisError, SuperrepResult, find_cps, superreplicate
from .halmos_savage import mask_to_set, subset_sums
from .market import (
    MAX_ENUM_LEAVES,
    ConsistentPriceSystem,
    FiniteMarket,
    InvalidMarketError,
    PricingMeasure,
    validate_market,
)
from .parallel import map_ordered
from .sde import (
    ExampleSixParams,
    TerminalEstimates,
    closed_form_row,
    ClosedFormRow,
    lambda_threshold,
    mc_terminal,
    zeta_limit,
)

MASS_TOL = 1e-12
SUP = "sup"
INF = "inf"


# -- mixing -------------------------------------------------------------------

def mix_cps(market: FiniteMarket, cps_list: Sequence[ConsistentPriceSystem],
            weights: Sequence[float]) -> ConsistentPriceSystem:
    """Convex combination: Z = sum a_m Z^m, S~ = sum a_m S~^m Z^m / Z."""
    w = np.asarray(weights, dtype=float)
    if len(cps_list) == 0 or w.shape != (len(cps_list),):
        raise ValueError(f"{w.size} weights for {len(cps_list)} price systems")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"weights must be nonnegative and sum to 1, got sum {w.sum():.12g}")
    for c in cps_list:
        if not c.measure.tree.same_shape(market.tree):
            raise ValueError("price system lives on a different tree")
    q = sum(a * c.measure.leaf_weight for a, c in zip(w, cps_list))
    weighted = sum(a * c.measure.node_mass * c.shadow for a, c in zip(w, cps_list))
    z = market.tree.descendants @ q
    fallback = sum(a * c.shadow for a, c in zip(w, cps_list))
    with np.errstate(divide="ignore", invalid="ignore"):
        shadow = np.where(z > 0, weighted / np.where(z > 0, z, 1.0), fallback)
    return ConsistentPriceSystem(PricingMeasure(market.tree, q), shadow)


# -- sequences and profiles ---------------------------------------------------

@dataclass
class MarketSequence:
    markets: list[FiniteMarket]
    lambdas: list[float]
    labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.markets) != len(self.lambdas):
            raise ValueError(f"{len(self.markets)} markets but {len(self.lambdas)} cost levels")
        if not self.labels:
            self.labels = [str(i + 1) for i in range(len(self.markets))]
        problems = []
        for label, m, lam in zip(self.labels, self.markets, self.lambdas):
            problems += [f"entry {label}: {msg}" for msg in validate_market(m.with_lambda(lam))]
            if m.tree.n_leaves > MAX_ENUM_LEAVES:
                problems.append(f"entry {label}: {m.tree.n_leaves} leaves exceeds the enumeration cap {MAX_ENUM_LEAVES}")
        if problems:
            raise InvalidMarketError(problems)

    def __len__(self) -> int:
        return len(self.markets)

    @classmethod
    def single(cls, market: FiniteMarket, lam: Optional[float] = None) -> "MarketSequence":
        return cls([market], [market.lam if lam is None else lam])


@dataclass
class ContiguityProfile:
    """deltas[n, k] = delta_n(epsilons[k]); witnesses[n][k] is the deciding event."""

    direction: str
    epsilons: np.ndarray
    deltas: np.ndarray
    witnesses: list[list[Optional[tuple[int, ...]]]]

    @property
    def delta_star(self) -> np.ndarray:
        return self.deltas.min(axis=0)

    def rows(self):
        for n in range(self.deltas.shape[0]):
            for k, eps in enumerate(self.epsilons):
                yield n + 1, float(eps), float(self.deltas[n, k])


class _EventOracle:
    """max/min of Q(A) over one market's closed CPS polytope, memoized by event mask."""

    def __init__(self, market: FiniteMarket, lam: float):
        if find_cps(market, lam) is None:
            raise HypothesisError(f"no equivalent consistent price system at lambda {lam:g}")
        self.poly = CpsPolytope(market, lam)
        self.p_sums = subset_sums(market.leaf_prob)
        self._cache: dict[tuple[int, bool], float] = {}

    def mass(self, mask: int, maximize: bool) -> float:
        key = (mask, maximize)
        if key not in self._cache:
            self._cache[key] = 0.0 if mask == 0 else self.poly.extreme_mass(mask_to_set(mask), maximize)
        return self._cache[key]


def _smallest_member(p: np.ndarray) -> np.ndarray:
    out = np.full(1, np.inf)
    for x in p:
        out = np.concatenate([out, np.minimum(out, x)])
    return out


def _epsilons(epsilon) -> np.ndarray:
    eps = np.atleast_1d(np.asarray(epsilon, dtype=float))
    if np.any(eps <= 0):
        raise ValueError("epsilon must be positive")
    return eps


def _oracles(seq: MarketSequence) -> list[_EventOracle]:
    return map_ordered(lambda i: _EventOracle(seq.markets[i], seq.lambdas[i]), range(len(seq)))


def sup_profile(seq: MarketSequence, epsilon: Union[float, Sequence[float]]) -> ContiguityProfile:
    """delta_n(eps) = min over A with P(A) >= eps of max_Q Q(A).

    Only inclusion-minimal qualifying events are solved, since max_Q Q(A)
    grows with A. No qualifying event gives +inf.
    """
    eps = _epsilons(epsilon)
    oracles = _oracles(seq)

    def one(i):
        orc = oracles[i]
        pa = orc.p_sums
        smallest = _smallest_member(seq.markets[i].leaf_prob)
        row, wit = [], []
        for e in eps:
            qualifies = pa >= e - MASS_TOL
            minimal = np.flatnonzero(qualifies & (pa - smallest < e - MASS_TOL))
            best, arg = np.inf, None
            for mask in minimal:
                v = orc.mass(int(mask), True)
                if v < best:
                    best, arg = v, mask_to_set(int(mask))
            row.append(best)
            wit.append(arg)
        return row, wit

    out = map_ordered(one, range(len(seq)))
    return ContiguityProfile(SUP, eps, np.array([r for r, _ in out], dtype=float), [w for _, w in out])


def inf_profile(seq: MarketSequence, epsilon: Union[float, Sequence[float]]) -> ContiguityProfile:
    """delta_n(eps) = largest delta such that P(A) < delta forces min_Q Q(A) < eps.

    Equals the smallest P(A) over events with min_Q Q(A) >= eps, capped at 1.
    Events are visited in increasing P order, so the first offender decides.
    """
    eps = _epsilons(epsilon)
    oracles = _oracles(seq)

    def one(i):
        orc = oracles[i]
        order = np.argsort(orc.p_sums, kind="stable")
        row, wit = [], []
        for e in eps:
            best, arg = 1.0, None
            for mask in order:
                pm = float(orc.p_sums[mask])
                if pm >= best:
                    break
                if orc.mass(int(mask), False) >= e - MASS_TOL:
                    best, arg = pm, mask_to_set(int(mask))
                    break
            row.append(best)
            wit.append(arg)
        return row, wit

    out = map_ordered(one, range(len(seq)))
    return ContiguityProfile(INF, eps, np.array([r for r, _ in out], dtype=float), [w for _, w in out])


@dataclass(frozen=True)
class SeparatingSet:
    leaves: tuple[int, ...]
    p_mass: float
    q_max: float


def separability_scan(seq: MarketSequence, eta: float) -> list[SeparatingSet]:
    """Per market, the event of largest P whose mass under every consistent measure is <= eta."""
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    oracles = _oracles(seq)

    def one(i):
        orc = oracles[i]
        order = np.argsort(-orc.p_sums, kind="stable")
        for mask in order:
            q = orc.mass(int(mask), True)
            if q <= eta + MASS_TOL:
                return SeparatingSet(mask_to_set(int(mask)), float(orc.p_sums[mask]), q)
        raise AssertionError("the empty event always separates")

    return map_ordered(one, range(len(seq)))


def aa1_payoff(market: FiniteMarket, leaves: Sequence[int], delta: float) -> np.ndarray:
    """1/sqrt(delta) on the event, -2 sqrt(delta) off it."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    f = np.full(market.tree.n_leaves, -2.0 * math.sqrt(delta))
    f[list(leaves)] = 1.0 / math.sqrt(delta)
    return f


def aa1_check(market: FiniteMarket, lam: float, leaves: Sequence[int],
              delta: Optional[float] = None) -> SuperrepResult:
    """Superhedging price of the payoff built on ``leaves``.

    With delta = max_Q Q(A) <= 1/2 the price is <= 0: the payoff is reachable
    from nothing, loses at most 2 sqrt(delta) and gains 1/sqrt(delta) on A.
    """
    if delta is None:
        delta = CpsPolytope(market, lam).extreme_mass(leaves, maximize=True)
    return superreplicate(market, aa1_payoff(market, leaves, delta), lam)


# -- cost-level rules and the lognormal sequence report ---------------------------

@dataclass(frozen=True)
class LambdaRule:
    kind: str  # zero | threshold_multiple | fixed | schedule
    value: float = 0.0
    schedule: tuple[float, ...] = ()

    KINDS = ("zero", "threshold_multiple", "fixed", "schedule")

    @classmethod
    def parse(cls, text: str) -> "LambdaRule":
        kind, _, arg = text.strip().partition(":")
        if kind not in cls.KINDS:
            raise ValueError(f"unknown lambda rule {kind!r}; expected one of {', '.join(cls.KINDS)}")
        if kind == "zero":
            if arg:
                raise ValueError("rule 'zero' takes no argument")
            return cls("zero")
        if not arg:
            raise ValueError(f"rule {kind!r} needs an argument, e.g. {kind}:0.3")
        if kind == "schedule":
            return cls(kind, schedule=tuple(float(x) for x in arg.split(",")))
        return cls(kind, float(arg))

    def __str__(self) -> str:
        if self.kind == "zero":
            return "zero"
        if self.kind == "schedule":
            return "schedule:" + ",".join(f"{x:g}" for x in self.schedule)
        return f"{self.kind}:{self.value:g}"

    def lambda_for(self, params: ExampleSixParams, index: int) -> float:
        if self.kind == "zero":
            lam = 0.0
        elif self.kind == "threshold_multiple":
            lam = self.value * lambda_threshold(params)
        elif self.kind == "fixed":
            lam = self.value
        else:
            if index >= len(self.schedule):
                raise ValueError(f"schedule has {len(self.schedule)} entries, row {index + 1} requested")
            lam = self.schedule[index]
        if not 0.0 <= lam < 1.0:
            raise ValueError(f"rule {self} gives lambda {lam:g} outside [0, 1) at row {index + 1}")
        return lam


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 100_000
    seed: int = 42


@dataclass
class SequenceRow:
    n: int
    params: ExampleSixParams
    closed: ClosedFormRow
    mc: Optional[TerminalEstimates]

    @property
    def lambda_used(self) -> float:
        return self.params.lam

    @property
    def shadow_active(self) -> bool:
        """Whether the cost exceeds the threshold that certifies the shadow construction."""
        return self.params.lam > self.closed.lambda_threshold


CSV_COLUMNS = (
    "n", "T", "eps", "gamma", "log_alpha", "novikov", "gamma_n", "lambda_threshold",
    "lambda_used", "c_lambda", "zeta_n", "zeta_gap", "pA_closed", "pA_mc", "pA_se",
    "qA_closed", "qA_mc", "qA_se", "qA_bound", "containment_margin",
)


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


@dataclass
class SequenceReport:
    rule: LambdaRule
    rows: list[SequenceRow]

    @property
    def separation_trend(self) -> bool:
        """P(A_n) strictly increasing and Q(A_n) strictly decreasing along the rows."""
        pa = [r.closed.pA_closed for r in self.rows]
        qa = [r.closed.qA_closed for r in self.rows]
        return all(b > a for a, b in zip(pa, pa[1:])) and all(b < a for a, b in zip(qa, qa[1:]))

    @property
    def zeta_bounded(self) -> bool:
        return all(r.closed.zeta_n <= math.e**2 for r in self.rows)

    @property
    def contiguity_trend(self) -> bool:
        """Second moments bounded and every shadow price certified inside its spread."""
        return self.zeta_bounded and all(r.closed.containment_margin > 0 for r in self.rows)

    def verdicts(self) -> dict[str, bool]:
        return {
            "separation_trend": self.separation_trend,
            "zeta_bounded": self.zeta_bounded,
            "contiguity_trend": self.contiguity_trend,
        }

    def csv_rows(self) -> list[list[str]]:
        limit = zeta_limit()
        out = []
        for r in self.rows:
            p, c = r.params, r.closed
            nan = float("nan")
            pa_mc, pa_se, qa_mc, qa_se = (
                (r.mc.p_A.value, r.mc.p_A.standard_error, r.mc.q_A.value, r.mc.q_A.standard_error)
                if r.mc else (nan, nan, nan, nan)
            )
            values = [
                p.T, p.eps, p.gamma, p.log_alpha, c.novikov, c.gamma_n, c.lambda_threshold,
                p.lam, c.c_lambda, c.zeta_n, abs(c.zeta_n - limit), c.pA_closed, pa_mc, pa_se,
                c.qA_closed, qa_mc, qa_se, c.qA_bound, c.containment_margin,
            ]
            out.append([str(r.n)] + [_fmt(v) for v in values])
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(self.csv_rows())
        return buf.getvalue()


def section6_report(params_list: Sequence[ExampleSixParams], lambda_rule: LambdaRule,
                    mc_config: Optional[McConfig] = McConfig(), grid_points: int = 10_000) -> SequenceReport:
    """Closed forms (and optionally Monte Carlo) for each horizon, with the cost level set by the rule.

    Row n draws its Monte Carlo streams from ``(seed, n)`` so rows are
    independent of one another and of the row order.
    """
    if not params_list:
        raise ValueError("need at least one parameter set")
    rows = []
    for i, base in enumerate(params_list):
        params = base.with_lambda(lambda_rule.lambda_for(base, i))
        closed = closed_form_row(params, grid_points)
        mc = None
        if mc_config is not None:
            mc = mc_terminal(params, mc_config.n_paths, mc_config.seed, stream=(i + 1,))
        rows.append(SequenceRow(i + 1, params, closed, mc))
    return SequenceReport(lambda_rule, rows)
