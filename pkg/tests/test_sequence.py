import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asymparb.cps import CpsPolytope, HypothesisError, find_cps
from asymparb.market import EventTree, FiniteMarket, InvalidMarketError, binomial_market
from asymparb.random_markets import random_market
from asymparb.sde import ExampleSixParams, lambda_threshold
from asymparb.sequence import (
    CSV_COLUMNS,
    LambdaRule,
    MarketSequence,
    McConfig,
    aa1_check,
    aa1_payoff,
    inf_profile,
    mix_cps,
    section6_report,
    separability_scan,
    sup_profile,
)

BINOMIAL = binomial_market(1, 2, 0.5)


def test_mix_degenerate_and_fixed_point():
    m = binomial_market(1, 2, 1.5, lam=0.4)
    a = find_cps(m)
    b = find_cps(m, objective=[0, 1, 0, 0])
    first = mix_cps(m, [a, b], [1.0, 0.0])
    np.testing.assert_allclose(first.measure.leaf_weight, a.measure.leaf_weight)
    np.testing.assert_allclose(first.shadow, a.shadow)
    same = mix_cps(m, [a, a], [0.3, 0.7])
    np.testing.assert_allclose(same.shadow, a.shadow, atol=1e-15)


def test_mix_lp_found_pair():
    m = binomial_market(1, 2, 1.5, lam=0.4)
    a = find_cps(m)
    np.testing.assert_allclose(a.shadow, [1, 1.2, 0.9], atol=1e-9)
    b = find_cps(m, objective=[0, 1, 0, 0])
    mixed = mix_cps(m, [a, b], [0.5, 0.5])
    assert mixed.martingale_residual() <= 1e-10
    assert mixed.violations(m) == []


def test_mix_rejects_bad_input():
    m = binomial_market(1, 2, 0.5)
    a = find_cps(m)
    with pytest.raises(ValueError, match="sum to 1"):
        mix_cps(m, [a, a], [0.5, 0.6])
    with pytest.raises(ValueError):
        mix_cps(m, [a], [0.5, 0.5])
    other = FiniteMarket(EventTree.from_parents([None, 0, 0, 0]), [1 / 3] * 3, [1, 2, 1, 0.5])
    with pytest.raises(ValueError, match="different tree"):
        mix_cps(m, [find_cps(other)], [1.0])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.0, 0.05, 0.2, 0.5]))
def test_mix_of_random_cps_is_cps(seed, lam):
    rng = np.random.default_rng(seed)
    m = random_market(rng, lam=lam)
    cps = [find_cps(m)]
    if cps[0] is None:
        return
    for _ in range(2):
        cps.append(find_cps(m, objective=rng.normal(size=2 * m.tree.n_leaves)))
    mixed = mix_cps(m, cps, rng.dirichlet(np.ones(3)))
    assert mixed.martingale_residual() <= 1e-9
    assert mixed.containment_violation(m) <= 1e-10
    assert mixed.violations(m) == []


def test_sequence_validation():
    with pytest.raises(InvalidMarketError, match="entry 1"):
        MarketSequence([binomial_market(1, 2, 0.5, pu=0.6, pd=0.6)], [0.0])
    with pytest.raises(ValueError):
        MarketSequence([BINOMIAL], [0.0, 0.1])


def test_sup_profile_binomial():
    prof = sup_profile(MarketSequence.single(BINOMIAL), [0.4, 1.1])
    assert prof.deltas[0, 0] == pytest.approx(1 / 3)
    assert prof.witnesses[0][0] == (0,)
    assert prof.deltas[0, 1] == np.inf
    assert prof.delta_star[0] == pytest.approx(1 / 3)


def test_sup_profile_saturates_with_wide_spread():
    prof = sup_profile(MarketSequence.single(BINOMIAL, 0.9), 0.4)
    assert prof.deltas[0, 0] == pytest.approx(1.0)


def test_sup_profile_matches_direct_lp_and_is_monotone():
    rng = np.random.default_rng(5)
    m = random_market(rng, max_depth=2, lam=0.3)
    while find_cps(m) is None:
        m = random_market(rng, max_depth=2, lam=0.3)
    poly = CpsPolytope(m)
    p = m.leaf_prob
    L = m.tree.n_leaves
    for eps in (0.2, 0.5, 0.8):
        direct = min(poly.extreme_mass([i for i in range(L) if mask >> i & 1], True)
                     for mask in range(1, 2**L) if sum(p[i] for i in range(L) if mask >> i & 1) >= eps)
        assert sup_profile(MarketSequence.single(m), eps).deltas[0, 0] == pytest.approx(direct, abs=1e-12)
    eps = np.array([0.1, 0.3, 0.6, 0.9])
    narrow = sup_profile(MarketSequence.single(m), eps).delta_star
    wide = sup_profile(MarketSequence.single(m, 0.6), eps).delta_star
    assert np.all(wide >= narrow - 1e-12)
    assert np.all(np.diff(narrow) >= -1e-12)  # nonincreasing as eps decreases


def test_inf_profile_binomial():
    prof = inf_profile(MarketSequence.single(BINOMIAL), [0.4, 1.0])
    assert prof.deltas[0, 0] == pytest.approx(0.5)
    assert prof.witnesses[0][0] == (1,)
    assert prof.deltas[0, 1] == 1.0


def test_inf_profile_grows_with_costs():
    m = binomial_market(1, 2, 0.5, pu=0.3)
    narrow = inf_profile(MarketSequence.single(m, 0.0), 0.5).deltas[0, 0]
    wide = inf_profile(MarketSequence.single(m, 0.5), 0.5).deltas[0, 0]
    assert wide >= narrow


def test_profiles_require_a_cps():
    with pytest.raises(HypothesisError):
        sup_profile(MarketSequence.single(binomial_market(1, 2, 1.5)), 0.5)


def test_separability_scan_binomial():
    seq = MarketSequence.single(BINOMIAL)
    best = separability_scan(seq, 0.34)[0]
    assert best.leaves == (0,) and best.p_mass == 0.5 and best.q_max == pytest.approx(1 / 3)
    assert separability_scan(seq, 1.0)[0].leaves == (0, 1)
    empty = separability_scan(seq, 0.0)[0]
    assert empty.leaves == () and empty.p_mass == 0.0


def test_profile_rows_cover_every_entry():
    seq = MarketSequence([BINOMIAL, BINOMIAL], [0.0, 0.9])
    prof = sup_profile(seq, [0.4, 0.6])
    assert list(prof.rows()) == [(1, 0.4, pytest.approx(1 / 3)), (1, 0.6, 1.0), (2, 0.4, 1.0), (2, 0.6, 1.0)]


def test_aa1_payoff_has_nonpositive_price():
    # a market where the up state is nearly unreachable for consistent measures
    m = binomial_market(1, 10.0, 0.9, pu=0.5)
    delta = CpsPolytope(m).extreme_mass([0], True)
    assert delta < 0.5
    f = aa1_payoff(m, [0], delta)
    np.testing.assert_allclose(f, [1 / math.sqrt(delta), -2 * math.sqrt(delta)])
    res = aa1_check(m, 0.0, [0])
    assert res.dual_value <= 1e-12
    assert res.gap <= 1e-9


def test_lambda_rule_parsing():
    assert LambdaRule.parse("zero") == LambdaRule("zero")
    assert LambdaRule.parse("threshold_multiple:1.01").value == 1.01
    assert LambdaRule.parse("fixed:0.3") == LambdaRule("fixed", 0.3)
    assert LambdaRule.parse("schedule:0.3,0.2").schedule == (0.3, 0.2)
    assert str(LambdaRule.parse("threshold_multiple:1.01")) == "threshold_multiple:1.01"
    for bad in ("linear", "fixed", "zero:1"):
        with pytest.raises(ValueError):
            LambdaRule.parse(bad)
    with pytest.raises(ValueError):
        LambdaRule.parse("fixed:1.5").lambda_for(ExampleSixParams(2, 0.5), 0)
    with pytest.raises(ValueError):
        LambdaRule.parse("schedule:0.1").lambda_for(ExampleSixParams(2, 0.5), 1)


HORIZONS = [ExampleSixParams(T, 0.5, 0.4) for T in (2, 4, 8, 16)]


def test_report_under_zero_rule():
    rep = section6_report(HORIZONS, LambdaRule.parse("zero"), None)
    assert rep.separation_trend
    assert all(r.lambda_used == 0 for r in rep.rows)
    assert not rep.contiguity_trend  # no costs, no shadow price


def test_report_above_threshold():
    rep = section6_report(HORIZONS, LambdaRule.parse("threshold_multiple:1.01"), None)
    assert all(r.closed.containment_margin > 0 for r in rep.rows)
    assert rep.zeta_bounded and rep.contiguity_trend
    assert all(r.shadow_active for r in rep.rows)


def test_fixed_rule_activates_at_first_horizon():
    rep = section6_report(HORIZONS[:1], LambdaRule.parse("fixed:0.3"), None)
    assert lambda_threshold(HORIZONS[0]) < 0.3
    assert rep.rows[0].shadow_active and rep.rows[0].closed.containment_margin > 0


def test_report_csv_layout_and_determinism():
    rule = LambdaRule.parse("threshold_multiple:1.01")
    mc = McConfig(n_paths=20_000, seed=42)
    text = section6_report(HORIZONS[:3], rule, mc).to_csv()
    assert text == section6_report(HORIZONS[:3], rule, mc).to_csv()
    lines = text.split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[-1] == "" and len(lines) == 5
    first = dict(zip(CSV_COLUMNS, lines[1].split(",")))
    assert first["n"] == "1" and first["T"] == "2" and first["log_alpha"] == "-5.65685425"
    assert first["pA_closed"] == "0.550139325"
    no_mc = section6_report(HORIZONS[:1], rule, None).to_csv().split("\n")[1].split(",")
    assert no_mc[CSV_COLUMNS.index("pA_mc")] == "nan"
