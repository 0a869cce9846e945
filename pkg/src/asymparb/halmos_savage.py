"""Quantitative Halmos-Savage bounds on finite outcome spaces.

The convex set of measures is the hull of finitely many generator vectors, so
"some Q in the set charges A" is decided by scanning generators, and the
mixture Q0 is the solution of a max-min (or min-max) LP over simplex weights.
Events are bitmasks over at most 20 outcomes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lp import LinearProgram, LPError

MAX_OUTCOMES = 20
SET_TOL = 1e-12  # P(A) comparisons closer than this count as ties
CUT_TOL = 1e-12


class FamilyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FiniteMeasureFamily:
    p: np.ndarray
    generators: np.ndarray  # shape (G, K)

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        gens = np.atleast_2d(np.asarray(self.generators, dtype=float))
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "generators", gens)
        k = p.size
        if k > MAX_OUTCOMES:
            raise FamilyError(f"{k} outcomes exceeds the enumeration cap of {MAX_OUTCOMES}")
        if gens.shape[1] != k:
            raise FamilyError(f"generators have {gens.shape[1]} outcomes, base measure has {k}")
        for name, vec in [("p", p)] + [(f"generator {g}", row) for g, row in enumerate(gens)]:
            if np.any(vec < 0) or abs(vec.sum() - 1.0) > 1e-12:
                raise FamilyError(f"{name} is not a probability vector")
        if np.any(gens[:, p == 0] > 0):
            raise FamilyError("generators must be absolutely continuous with respect to p")

    @property
    def k(self) -> int:
        return self.p.size

    def add_generator(self, q) -> "FiniteMeasureFamily":
        return FiniteMeasureFamily(self.p, np.vstack([self.generators, q]))


@dataclass
class HsCertificate:
    """Mixture weights over generators, the measure they produce, and the
    achieved worst-case event mass (``witness`` attains it)."""

    weights: np.ndarray
    q0: np.ndarray
    value: float
    threshold: float
    witness: Optional[tuple[int, ...]]
    passed: bool


def subset_sums(v: np.ndarray) -> np.ndarray:
    """sums[mask] = sum of v[i] over bits i of mask, for all 2^len(v) masks."""
    out = np.zeros(1)
    for x in v:
        out = np.concatenate([out, out + x])
    return out


def mask_to_set(mask: int) -> tuple[int, ...]:
    return tuple(i for i in range(mask.bit_length()) if mask >> i & 1)


@dataclass
class HsCheck:
    holds: bool
    counterexample: Optional[tuple[int, ...]] = None

    def __bool__(self) -> bool:
        return self.holds


def _gen_sums(family: FiniteMeasureFamily) -> np.ndarray:
    return np.vstack([subset_sums(g) for g in family.generators])


def verify_hs1(family: FiniteMeasureFamily, epsilon: float, delta: float) -> HsCheck:
    """Every A with P(A) > epsilon has max_g Q_g(A) > delta."""
    pa = subset_sums(family.p)
    best = _gen_sums(family).max(axis=0)
    bad = np.flatnonzero((pa > epsilon + SET_TOL) & ~(best > delta))
    if bad.size:
        return HsCheck(False, mask_to_set(int(bad[np.argmin(best[bad])])))
    return HsCheck(True)


def verify_hs2(family: FiniteMeasureFamily, epsilon: float, delta: float) -> HsCheck:
    """Every A with P(A) < delta has min_g Q_g(A) < epsilon."""
    pa = subset_sums(family.p)
    worst = _gen_sums(family).min(axis=0)
    bad = np.flatnonzero((pa < delta - SET_TOL) & ~(worst < epsilon))
    if bad.size:
        return HsCheck(False, mask_to_set(int(bad[np.argmax(worst[bad])])))
    return HsCheck(True)


def _minimax(sums: np.ndarray, masks: np.ndarray, maximize_min: bool) -> tuple[np.ndarray, float, int]:
    """Optimal simplex weights for max_w min_A (or min_w max_A) of w . sums[:, A].

    Cutting planes: solve the LP on a working set of events, add the event the
    current weights do worst on, stop once that event is no worse than the LP
    bound. Both problems are handled as max-min after a sign flip.
    """
    G = sums.shape[0]
    sign = 1.0 if maximize_min else -1.0
    vals = sign * sums[:, masks]  # (G, n_sets)
    c = np.zeros(G + 1)
    c[G] = 1.0
    simplex_row = np.concatenate([np.ones(G), [0.0]])
    active = [int(np.argmin(vals.mean(axis=0)))]
    for _ in range(len(masks) + 1):
        lp = LinearProgram(G + 1)
        lp.set_bounds(G, lower=-np.inf)
        lp.add_constraints(np.hstack([vals[:, active].T, -np.ones((len(active), 1))]), ">=", 0.0)
        lp.add_constraints(simplex_row, "==", 1.0)
        lp.set_objective(c, maximize=True)
        res = lp.solve()
        if not res.optimal:
            raise LPError(f"minimax LP is {res.status}")
        w = np.maximum(res.x[:G], 0.0)
        w /= w.sum()
        mix = w @ vals
        k = int(np.argmin(mix))
        if mix[k] >= res.value - CUT_TOL or k in active:
            return w, float(sign * mix[k]), int(masks[k])
        active.append(k)
    raise LPError("cutting-plane minimax did not converge")


def _certificate(family, masks, maximize_min, threshold, passes) -> HsCertificate:
    G = family.generators.shape[0]
    if masks.size == 0:
        w = np.full(G, 1.0 / G)
        value = np.inf if maximize_min else -np.inf
        return HsCertificate(w, w @ family.generators, float(value), threshold, None, True)
    w, value, mask = _minimax(_gen_sums(family), masks, maximize_min)
    return HsCertificate(w, w @ family.generators, value, threshold, mask_to_set(mask), bool(passes(value)))


def hs1_find_q0(family: FiniteMeasureFamily, epsilon: float, delta: float) -> HsCertificate:
    """Mixture maximizing min Q0(A) over events with P(A) > 4 epsilon."""
    pa = subset_sums(family.p)
    masks = np.flatnonzero(pa > 4 * epsilon + SET_TOL)
    threshold = epsilon**2 * delta / 2
    return _certificate(family, masks, True, threshold, lambda v: v > threshold)


def hs2_find_q0(family: FiniteMeasureFamily, epsilon: float, delta: float) -> HsCertificate:
    """Mixture minimizing max Q0(A) over nonempty events with P(A) < 2 epsilon delta."""
    pa = subset_sums(family.p)
    masks = np.flatnonzero(pa < 2 * epsilon * delta - SET_TOL)
    masks = masks[masks != 0]
    threshold = 8 * epsilon
    return _certificate(family, masks, False, threshold, lambda v: v < threshold)
