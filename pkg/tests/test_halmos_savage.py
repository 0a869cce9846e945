from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from asymparb.halmos_savage import (
    FamilyError,
    FiniteMeasureFamily,
    hs1_find_q0,
    hs2_find_q0,
    subset_sums,
    verify_hs1,
    verify_hs2,
)
from asymparb.random_markets import random_family

FAMILY = FiniteMeasureFamily([0.25] * 4, [[0.4, 0.2, 0.2, 0.2], [0.2, 0.4, 0.2, 0.2]])


def events(k):
    for r in range(1, k + 1):
        yield from combinations(range(k), r)


def full_minimax(family, sets, maximize_min):
    """Minimax over simplex weights with every qualifying event as a row (HiGHS)."""
    G = family.generators.shape[0]
    vals = np.array([[g[list(a)].sum() for a in sets] for g in family.generators])
    sign = 1.0 if maximize_min else -1.0
    # max t  s.t.  sign * w.vals[:, a] >= t,  sum w = 1
    c = np.zeros(G + 1)
    c[-1] = -1
    A_ub = np.hstack([-sign * vals.T, np.ones((len(sets), 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(len(sets)), A_eq=[[1] * G + [0]], b_eq=[1],
                  bounds=[(0, None)] * G + [(None, None)], method="highs")
    return sign * -res.fun


def test_subset_sums_bit_order():
    np.testing.assert_allclose(subset_sums(np.array([1.0, 2.0, 4.0])), np.arange(8))


def test_family_validation():
    with pytest.raises(FamilyError, match="cap"):
        FiniteMeasureFamily(np.full(21, 1 / 21), [np.full(21, 1 / 21)])
    with pytest.raises(FamilyError, match="probability"):
        FiniteMeasureFamily([0.5, 0.5], [[0.7, 0.7]])
    with pytest.raises(FamilyError, match="absolutely continuous"):
        FiniteMeasureFamily([1.0, 0.0], [[0.5, 0.5]])


def test_verify_examples():
    assert verify_hs1(FAMILY, 0.2, 0.1)
    bad = verify_hs1(FAMILY, 0.2, 0.25)
    assert not bad and bad.counterexample == (2,)
    single = FiniteMeasureFamily([0.1, 0.2, 0.3, 0.4], [[0.1, 0.2, 0.3, 0.4]])
    assert verify_hs1(single, 0.3, 0.15)
    assert verify_hs2(FAMILY, 0.45, 0.3)
    bad = verify_hs2(FAMILY, 0.15, 0.3)
    assert not bad and len(bad.counterexample) == 1
    assert verify_hs2(FAMILY, 1.0, 0.9)


def test_hs1_examples():
    cert = hs1_find_q0(FAMILY, 0.05, 0.3)
    assert cert.value == pytest.approx(0.2)
    assert cert.threshold == pytest.approx(0.000375)
    assert cert.passed
    cert = hs1_find_q0(FAMILY, 0.2, 0.1)
    assert cert.value == pytest.approx(1.0) and cert.witness == (0, 1, 2, 3)
    assert cert.threshold == pytest.approx(0.002)
    cert = hs1_find_q0(FAMILY, 0.25, 0.1)
    assert cert.value == np.inf and cert.passed and cert.witness is None


def test_hs2_examples():
    cert = hs2_find_q0(FAMILY, 0.45, 0.3)
    assert cert.value == pytest.approx(0.3)
    np.testing.assert_allclose(cert.weights, [0.5, 0.5], atol=1e-9)
    assert cert.threshold == pytest.approx(3.6) and cert.passed
    cert = hs2_find_q0(FAMILY, 0.1, 0.3)  # 2 eps delta = 0.06 < every atom
    assert cert.value == -np.inf and cert.passed
    single = FiniteMeasureFamily([0.25] * 4, [[0.25] * 4])
    cert = hs2_find_q0(single, 0.3, 0.5)
    assert cert.value == pytest.approx(0.25) and cert.passed


def _family(seed):
    rng = np.random.default_rng(seed)
    p, gens = random_family(rng, max_outcomes=8, max_generators=4)
    return FiniteMeasureFamily(p, gens), rng


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.05, 0.1, 0.2]), st.sampled_from([0.05, 0.1, 0.2]))
def test_minimax_matches_full_lp_and_witness(seed, eps, delta):
    fam, _ = _family(seed)
    for find, keep, maximize in (
        (hs1_find_q0, lambda pa: pa > 4 * eps, True),
        (hs2_find_q0, lambda pa: pa < 2 * eps * delta, False),
    ):
        sets = [a for a in events(fam.k) if keep(fam.p[list(a)].sum())]
        cert = find(fam, eps, delta)
        if not sets:
            assert np.isinf(cert.value)
            continue
        assert cert.value == pytest.approx(full_minimax(fam, sets, maximize), abs=1e-9)
        assert cert.q0[list(cert.witness)].sum() == pytest.approx(cert.value, abs=1e-10)
        masses = [cert.q0[list(a)].sum() for a in sets]
        worst = min(masses) if maximize else max(masses)
        assert worst == pytest.approx(cert.value, abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.05, 0.1, 0.2]), st.sampled_from([0.05, 0.1, 0.2]))
def test_certificates_sound_whenever_hypothesis_holds(seed, eps, delta):
    fam, _ = _family(seed)
    if verify_hs1(fam, eps, delta):
        assert hs1_find_q0(fam, eps, delta).passed
    if verify_hs2(fam, eps, delta):
        assert hs2_find_q0(fam, eps, delta).passed


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_extra_generator_is_monotone(seed):
    fam, rng = _family(seed)
    bigger = fam.add_generator(rng.dirichlet(np.ones(fam.k)))
    assert hs1_find_q0(bigger, 0.05, 0.1).value >= hs1_find_q0(fam, 0.05, 0.1).value - 1e-12
    assert hs2_find_q0(bigger, 0.2, 0.2).value <= hs2_find_q0(fam, 0.2, 0.2).value + 1e-12


def test_verify_agrees_with_combinations():
    fam, _ = _family(11)
    for eps, delta in [(0.1, 0.1), (0.2, 0.05), (0.3, 0.3)]:
        hs1 = all(fam.generators[:, list(a)].sum(axis=1).max() > delta
                  for a in events(fam.k) if fam.p[list(a)].sum() > eps)
        hs2 = all(fam.generators[:, list(a)].sum(axis=1).min() < eps
                  for a in events(fam.k) if fam.p[list(a)].sum() < delta)
        assert bool(verify_hs1(fam, eps, delta)) == hs1
        assert bool(verify_hs2(fam, eps, delta)) == hs2
