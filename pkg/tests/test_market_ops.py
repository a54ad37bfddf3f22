import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hetmarket import (
    InvariantError,
    MarketConfig,
    PairAgent,
    RefAgent,
    StrategyPair,
    WealthLedger,
    encode_change,
    init_market,
    maybe_redraw_reference,
    pair_decide,
    ref_decide,
    settle,
    update_price,
    update_virtual_scores,
)
from hetmarket.market import code_to_pattern, pattern_to_code


def rng_of(seed=0):
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# history encoding
# ---------------------------------------------------------------------------

def test_encode_change_examples():
    assert encode_change(100, 101) == 1
    assert encode_change(100, 99) == 0
    assert encode_change(100, 100) == 1  # ties count as rises


@pytest.mark.parametrize("prev,curr", [(0, 100), (100, 0), (-1, 100), (100, -5)])
def test_encode_change_rejects_nonpositive(prev, curr):
    with pytest.raises(ValueError):
        encode_change(prev, curr)


@given(st.lists(st.integers(min_value=0, max_value=1), min_size=1, max_size=20))
def test_pattern_code_roundtrip(bits):
    code = pattern_to_code(bits)
    assert code_to_pattern(code, len(bits)) == tuple(bits)


def test_pattern_rejects_non_bits():
    with pytest.raises(ValueError):
        pattern_to_code([0, 2, 1])


# ---------------------------------------------------------------------------
# pair_decide
# ---------------------------------------------------------------------------

def one_pair_agent(holdings=0, scores=(0.0, 0.0)):
    return PairAgent(
        strategies=[
            StrategyPair((1, 1, 0), (1, 0, 1), scores[0]),
            StrategyPair((0, 0, 1), (0, 1, 0), scores[1]),
        ],
        holdings=holdings,
    )


def test_pair_decide_buy_on_match():
    agent = one_pair_agent(scores=(1.0, 0.0))
    assert pair_decide(agent, (1, 1, 0), 1, -1, rng_of()) == 1


def test_pair_decide_sell_on_match():
    agent = one_pair_agent(scores=(1.0, 0.0))
    assert pair_decide(agent, (1, 0, 1), 1, -1, rng_of()) == -1


def test_pair_decide_no_match_does_nothing():
    agent = one_pair_agent(scores=(1.0, 0.0))
    assert pair_decide(agent, (0, 0, 0), 1, -1, rng_of()) == 0


def test_pair_decide_respects_holdings_caps():
    agent = one_pair_agent(holdings=1, scores=(1.0, 0.0))
    assert pair_decide(agent, (1, 1, 0), 1, -1, rng_of()) == 0
    agent = one_pair_agent(holdings=-1, scores=(1.0, 0.0))
    assert pair_decide(agent, (1, 0, 1), 1, -1, rng_of()) == 0


def test_pair_decide_highest_score_wins():
    # second strategy dominant: only its patterns act
    agent = one_pair_agent(scores=(0.0, 5.0))
    rng = rng_of(3)
    for _ in range(50):
        assert pair_decide(agent, (0, 0, 1), 1, -1, rng) == 1
        assert pair_decide(agent, (1, 1, 0), 1, -1, rng) == 0


def test_pair_decide_ties_break_uniformly():
    agent = one_pair_agent(scores=(1.0, 1.0))
    rng = rng_of(7)
    n = 4000
    # pattern matches only strategy 0's buy side; frequency ~ 1/2
    hits = sum(pair_decide(agent, (1, 1, 0), 1, -1, rng) == 1 for _ in range(n))
    p = hits / n
    sd = math.sqrt(0.25 / n)
    assert abs(p - 0.5) < 4 * sd


def test_pair_decide_consumes_one_uniform():
    agent = one_pair_agent(scores=(1.0, 0.0))
    r1, r2 = rng_of(11), rng_of(11)
    pair_decide(agent, (0, 0, 0), 1, -1, r1)
    r2.random()
    assert r1.random() == r2.random()


# ---------------------------------------------------------------------------
# ref_decide
# ---------------------------------------------------------------------------

def test_ref_decide_buy_frequency_matches_mispricing():
    agent = RefAgent(gene=0, ref_point=110.0)
    rng = rng_of(17)
    n = 10_000
    acts = [ref_decide(agent, 100.0, 1, -1, rng) for _ in range(n)]
    assert set(acts) <= {0, 1}
    p = sum(a == 1 for a in acts) / n
    sd = math.sqrt(0.1 * 0.9 / n)
    assert abs(p - 0.10) < 4 * sd


def test_ref_decide_sell_frequency_matches_mispricing():
    agent = RefAgent(gene=0, ref_point=90.0)
    rng = rng_of(19)
    n = 10_000
    acts = [ref_decide(agent, 100.0, 1, -1, rng) for _ in range(n)]
    assert set(acts) <= {-1, 0}
    p = sum(a == -1 for a in acts) / n
    sd = math.sqrt(0.1 * 0.9 / n)
    assert abs(p - 0.10) < 4 * sd


def test_ref_decide_at_reference_point_never_trades():
    agent = RefAgent(gene=0, ref_point=100.0)
    rng = rng_of(23)
    assert all(ref_decide(agent, 100.0, 1, -1, rng) == 0 for _ in range(1000))


def test_ref_decide_probability_clamps_to_one():
    # (ref - P)/P = 1.5: every draw buys while capacity remains
    agent = RefAgent(gene=0, ref_point=250.0)
    rng = rng_of(29)
    assert all(ref_decide(agent, 100.0, 1, -1, rng) == 1 for _ in range(10_000))


def test_ref_decide_respects_holdings_caps():
    rng = rng_of(31)
    agent = RefAgent(gene=0, ref_point=250.0, holdings=1)
    assert all(ref_decide(agent, 100.0, 1, -1, rng) == 0 for _ in range(100))
    agent = RefAgent(gene=0, ref_point=10.0, holdings=-1)
    assert all(ref_decide(agent, 100.0, 1, -1, rng) == 0 for _ in range(100))


# ---------------------------------------------------------------------------
# update_price
# ---------------------------------------------------------------------------

def test_update_price_examples():
    assert update_price(100.0, 0, 10.0, 1000) == 100.0
    assert update_price(100.0, 100, 10.0, 1000) == pytest.approx(100.0 * math.e, rel=1e-12)
    assert update_price(100.0, -100, 10.0, 1000) == pytest.approx(100.0 / math.e, rel=1e-12)


@given(
    p=st.floats(min_value=1e-6, max_value=1e6),
    a=st.integers(min_value=-1000, max_value=1000),
)
def test_update_price_stays_positive(p, a):
    assert update_price(p, a, 10.0, 1000) > 0


def test_update_price_validates():
    with pytest.raises(ValueError):
        update_price(-1.0, 0, 10.0, 100)
    with pytest.raises(ValueError):
        update_price(100.0, 101, 10.0, 100)


# ---------------------------------------------------------------------------
# virtual scores
# ---------------------------------------------------------------------------

def test_update_virtual_scores_all_three_cases():
    agent = PairAgent(
        strategies=[
            StrategyPair((1, 1, 0), (1, 0, 1)),   # buy side matches
            StrategyPair((0, 1, 1), (1, 1, 0)),   # sell side matches
            StrategyPair((0, 0, 0), (1, 1, 1)),   # inactive
        ]
    )
    update_virtual_scores(agent, (1, 1, 0), 0.05)
    assert agent.strategies[0].score == pytest.approx(0.05)
    assert agent.strategies[1].score == pytest.approx(-0.05)
    assert agent.strategies[2].score == 0.0


def test_scores_update_regardless_of_active_choice():
    # both strategies move even though only one could have been active
    agent = PairAgent(
        strategies=[StrategyPair((1, 0), (0, 1)), StrategyPair((1, 0), (1, 1))]
    )
    update_virtual_scores(agent, (1, 0), 0.02)
    assert agent.strategies[0].score == pytest.approx(0.02)
    assert agent.strategies[1].score == pytest.approx(0.02)


# ---------------------------------------------------------------------------
# reference redraw
# ---------------------------------------------------------------------------

def test_redraw_keeps_in_band_point():
    agent = RefAgent(gene=100, ref_point=105.0)
    before = agent.ref_point
    maybe_redraw_reference(agent, 100.0, 10.0, 1000, rng_of())
    assert agent.ref_point == before


def test_redraw_gene_zero_pins_to_mean():
    agent = RefAgent(gene=0, ref_point=123.0)
    maybe_redraw_reference(agent, 100.0, 10.0, 1000, rng_of())
    assert agent.ref_point == 100.0


def test_redraw_lands_inside_band():
    rng = rng_of(5)
    alpha, n = 10.0, 1000
    for _ in range(500):
        agent = RefAgent(gene=300, ref_point=1e9)
        maybe_redraw_reference(agent, 100.0, alpha, n, rng)
        w = alpha * 300 / n
        assert 100.0 * math.exp(-w) <= agent.ref_point <= 100.0 * math.exp(w)


def test_redraw_log_uniform_distribution():
    # gene = N makes log(ref/pbar) uniform on [-alpha, alpha]
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = rng_of(37)
    alpha, n = 10.0, 1000
    vals = []
    for _ in range(10_000):
        agent = RefAgent(gene=1000, ref_point=1e30)  # always out of band
        maybe_redraw_reference(agent, 100.0, alpha, n, rng)
        vals.append(math.log(agent.ref_point / 100.0))
    res = scipy_stats.kstest(vals, "uniform", args=(-10.0, 20.0))
    assert res.pvalue > 0.01


def test_redraw_never_touches_gene():
    rng = rng_of(41)
    agent = RefAgent(gene=77, ref_point=1e9)
    for _ in range(100):
        maybe_redraw_reference(agent, 100.0, 10.0, 1000, rng)
        agent.ref_point = 1e9
        assert agent.gene == 77


# ---------------------------------------------------------------------------
# settlement
# ---------------------------------------------------------------------------

def test_settle_round_trip_profit():
    agent = PairAgent(strategies=[StrategyPair((0,), (1,))])
    settle(agent, 1, 100.0, 1, -1)
    settle(agent, -1, 110.0, 1, -1)
    assert agent.ledger.realized == pytest.approx(10.0)
    assert (agent.ledger.n_buys, agent.ledger.n_sells) == (1, 1)
    assert agent.holdings == 0


def test_settle_short_round_trip_loss():
    agent = RefAgent(gene=0, ref_point=100.0)
    settle(agent, -1, 100.0, 1, -1)
    settle(agent, 1, 110.0, 1, -1)
    assert agent.ledger.realized == pytest.approx(-10.0)


def test_settle_no_action_is_noop():
    agent = RefAgent(gene=0, ref_point=100.0)
    settle(agent, 0, 100.0, 1, -1)
    assert agent.ledger == WealthLedger()
    assert agent.holdings == 0


def test_settle_bound_violation_aborts():
    agent = RefAgent(gene=0, ref_point=100.0, holdings=1)
    with pytest.raises(InvariantError):
        settle(agent, 1, 100.0, 1, -1)


# ---------------------------------------------------------------------------
# init_market
# ---------------------------------------------------------------------------

def test_init_population_split():
    cfg = MarketConfig(n_agents=1000, ratio_ref=1.0)
    state = init_market(cfg)
    assert (state.n_ref, state.n_pair) == (1000, 0)
    cfg = MarketConfig(n_agents=1000, ratio_ref=0.5)
    state = init_market(cfg)
    assert (state.n_ref, state.n_pair) == (500, 500)


def test_init_strategies_distinct_and_in_range():
    cfg = MarketConfig(n_agents=400, ratio_ref=0.0, memory=2, n_strategies=3, seed=5)
    state = init_market(cfg)
    assert np.all(state.pair_buy != state.pair_sell)
    for arr in (state.pair_buy, state.pair_sell):
        assert arr.min() >= 0 and arr.max() < 4
    # with 4 patterns and many draws every code should appear
    assert set(np.unique(state.pair_buy)) == {0, 1, 2, 3}


def test_init_genes_and_reference_points_in_band():
    cfg = MarketConfig(n_agents=500, ratio_ref=1.0, g_max=800, seed=6)
    state = init_market(cfg)
    assert state.ref_gene.min() >= 0 and state.ref_gene.max() <= 800
    lo = cfg.p0 * state.ref_lo_f
    hi = cfg.p0 * state.ref_hi_f
    assert np.all(state.ref_point >= lo) and np.all(state.ref_point <= hi)


def test_init_zero_holdings_and_scores():
    state = init_market(MarketConfig(n_agents=100, ratio_ref=0.3, seed=7))
    assert not state.pair_hold.any() and not state.ref_hold.any()
    assert not state.pair_score.any()
    assert state.price == state.pbar == 100.0
    assert state.tick == 0


def test_init_deterministic():
    cfg = MarketConfig(n_agents=300, ratio_ref=0.5, seed=123)
    a, b = init_market(cfg), init_market(cfg)
    assert np.array_equal(a.pair_buy, b.pair_buy)
    assert np.array_equal(a.pair_sell, b.pair_sell)
    assert np.array_equal(a.ref_gene, b.ref_gene)
    assert np.array_equal(a.ref_point, b.ref_point)
    assert a.pattern == b.pattern


def test_agent_snapshots_expose_domain_view():
    cfg = MarketConfig(n_agents=10, ratio_ref=0.5, memory=3, seed=8)
    state = init_market(cfg)
    pa = state.pair_agent(0)
    assert len(pa.strategies) == cfg.n_strategies
    assert all(
        s.buy_pattern != s.sell_pattern and len(s.buy_pattern) == 3
        for s in pa.strategies
    )
    ra = state.ref_agent(0)
    assert 0 <= ra.gene <= cfg.g_max
