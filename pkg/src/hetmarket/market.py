"""Core market model: agent populations, decision rules, and the tick cycle.

The market advances in discrete ticks. Within one tick:

1. every pair-pattern investor activates its highest-scoring strategy pair
   and matches the current price-change history against it,
2. every reference-point investor compares the latest price with its private
   reference point and trades with probability given by the relative
   mispricing,
3. the pooled order imbalance ``A`` moves the price by ``exp(alpha*A/N)``,
4. all trades settle at the post-move price,
5. every strategy pair is credited the log return it would have captured,
6. the change history and the rolling mean price shift forward,
7. reference points outside their admissible band are redrawn.

Population state lives in flat numpy arrays on :class:`MarketState` so the
tick loop can run either in the compiled kernel or in the numpy fallback.
The dataclass views (:class:`PairAgent`, :class:`RefAgent`, ...) are
snapshots for inspection and tests, not live handles.

Price-change histories are encoded as integers: one bit per change, rise=1,
drop=0, the most recent change in the least significant bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, MarketConfig
from .errors import InvariantError
from . import engine as _engine_mod


# ---------------------------------------------------------------------------
# history patterns
# ---------------------------------------------------------------------------

def pattern_to_code(bits) -> int:
    """Pack a bit sequence (most recent change last) into an integer."""
    code = 0
    for b in bits:
        if b not in (0, 1):
            raise ValueError(f"pattern bits must be 0 or 1, got {b!r}")
        code = (code << 1) | b
    return code


def code_to_pattern(code: int, memory: int):
    """Unpack an integer code into a bit tuple of length ``memory``."""
    return tuple((code >> (memory - 1 - i)) & 1 for i in range(memory))


def encode_change(p_prev, p_curr) -> int:
    """Classify a price change as rise (1) or drop (0); ties count as rises."""
    if not (p_prev > 0 and p_curr > 0):
        raise ValueError("prices must be positive")
    return 1 if p_curr >= p_prev else 0


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass
class WealthLedger:
    """Realized cash flow of one agent: sell proceeds minus buy costs."""

    realized: float = 0.0
    n_buys: int = 0
    n_sells: int = 0


@dataclass
class StrategyPair:
    """A (buy pattern, sell pattern) pair with its running virtual score."""

    buy_pattern: tuple
    sell_pattern: tuple
    score: float = 0.0

    def __post_init__(self):
        if self.buy_pattern == self.sell_pattern:
            raise ValueError("buy and sell patterns must differ")


@dataclass
class PairAgent:
    strategies: list
    holdings: int = 0
    ledger: WealthLedger = field(default_factory=WealthLedger)


@dataclass
class RefAgent:
    gene: int
    ref_point: float
    holdings: int = 0
    ledger: WealthLedger = field(default_factory=WealthLedger)


@dataclass
class TickRecord:
    """Observables of one completed tick."""

    tick: int
    price: float
    excess_demand: int
    pattern: tuple
    pair_buys: int
    pair_sells: int
    ref_buys: int
    ref_sells: int


@dataclass
class TickArrays:
    """Column-oriented tick records, filled in place by the engines."""

    price: np.ndarray
    excess: np.ndarray
    pattern: np.ndarray
    pair_buys: np.ndarray
    pair_sells: np.ndarray
    ref_buys: np.ndarray
    ref_sells: np.ndarray

    @classmethod
    def empty(cls, n: int) -> "TickArrays":
        return cls(
            price=np.zeros(n),
            excess=np.zeros(n, dtype=np.int64),
            pattern=np.zeros(n, dtype=np.int64),
            pair_buys=np.zeros(n, dtype=np.int64),
            pair_sells=np.zeros(n, dtype=np.int64),
            ref_buys=np.zeros(n, dtype=np.int64),
            ref_sells=np.zeros(n, dtype=np.int64),
        )


@dataclass(eq=False)
class MarketState:
    """Mutable simulation state, owned by exactly one run.

    Agent populations are stored as parallel arrays (one row per agent;
    strategy arrays have one column per strategy slot). ``window`` is a ring
    buffer of the last ``delta_t`` prices, indexed by ``tick % delta_t``.
    ``ref_width`` holds ``alpha*gene/N`` per agent and ``ref_lo_f``/
    ``ref_hi_f`` the precomputed band factors ``exp(-width)``/``exp(width)``,
    so the tick loop never recomputes transcendentals that are fixed for the
    whole run.
    """

    config: MarketConfig
    price: float
    pbar: float
    pattern: int
    tick: int
    window: np.ndarray
    pair_buy: np.ndarray
    pair_sell: np.ndarray
    pair_score: np.ndarray
    pair_hold: np.ndarray
    pair_cash: np.ndarray
    pair_nbuys: np.ndarray
    pair_nsells: np.ndarray
    ref_gene: np.ndarray
    ref_width: np.ndarray
    ref_lo_f: np.ndarray
    ref_hi_f: np.ndarray
    ref_point: np.ndarray
    ref_hold: np.ndarray
    ref_cash: np.ndarray
    ref_nbuys: np.ndarray
    ref_nsells: np.ndarray

    @property
    def n_pair(self) -> int:
        return self.pair_hold.shape[0]

    @property
    def n_ref(self) -> int:
        return self.ref_hold.shape[0]

    def history_pattern(self):
        return code_to_pattern(self.pattern, self.config.memory)

    def pair_agent(self, i: int) -> PairAgent:
        m = self.config.memory
        strategies = [
            StrategyPair(
                buy_pattern=code_to_pattern(int(self.pair_buy[i, s]), m),
                sell_pattern=code_to_pattern(int(self.pair_sell[i, s]), m),
                score=float(self.pair_score[i, s]),
            )
            for s in range(self.pair_buy.shape[1])
        ]
        return PairAgent(
            strategies=strategies,
            holdings=int(self.pair_hold[i]),
            ledger=WealthLedger(
                realized=float(self.pair_cash[i]),
                n_buys=int(self.pair_nbuys[i]),
                n_sells=int(self.pair_nsells[i]),
            ),
        )

    def ref_agent(self, j: int) -> RefAgent:
        return RefAgent(
            gene=int(self.ref_gene[j]),
            ref_point=float(self.ref_point[j]),
            holdings=int(self.ref_hold[j]),
            ledger=WealthLedger(
                realized=float(self.ref_cash[j]),
                n_buys=int(self.ref_nbuys[j]),
                n_sells=int(self.ref_nsells[j]),
            ),
        )

    def pair_agents(self):
        return [self.pair_agent(i) for i in range(self.n_pair)]

    def ref_agents(self):
        return [self.ref_agent(j) for j in range(self.n_ref)]


@dataclass(eq=False)
class RunOutput:
    """Tick records of one full run plus the final state.

    ``prices[0]`` is the initial price; ``prices[t]`` the price after tick t.
    The measured segment is everything after ``config.relax_steps`` ticks.
    """

    config: MarketConfig
    prices: np.ndarray
    ticks: TickArrays
    state: MarketState

    @property
    def n_ticks(self) -> int:
        return self.ticks.price.shape[0]

    @property
    def is_measured(self) -> np.ndarray:
        flags = np.zeros(self.n_ticks, dtype=np.int64)
        flags[self.config.relax_steps:] = 1
        return flags

    @property
    def measured_prices(self) -> np.ndarray:
        return self.ticks.price[self.config.relax_steps:]

    @property
    def measured_returns(self) -> np.ndarray:
        p = self.measured_prices
        return np.log(p[1:] / p[:-1])

    @property
    def measured_patterns(self) -> np.ndarray:
        return self.ticks.pattern[self.config.relax_steps:]

    @property
    def measured_excess(self) -> np.ndarray:
        return self.ticks.excess[self.config.relax_steps:]

    def record(self, i: int) -> TickRecord:
        t = self.ticks
        return TickRecord(
            tick=i + 1,
            price=float(t.price[i]),
            excess_demand=int(t.excess[i]),
            pattern=code_to_pattern(int(t.pattern[i]), self.config.memory),
            pair_buys=int(t.pair_buys[i]),
            pair_sells=int(t.pair_sells[i]),
            ref_buys=int(t.ref_buys[i]),
            ref_sells=int(t.ref_sells[i]),
        )

    def pair_ledgers(self):
        return [a.ledger for a in self.state.pair_agents()]

    def ref_ledgers(self):
        return [a.ledger for a in self.state.ref_agents()]


# ---------------------------------------------------------------------------
# single-agent operations
#
# These are the reference semantics for the array engines; tests replay them
# against engine output. Each decision consumes exactly one uniform draw.
# ---------------------------------------------------------------------------

def pair_decide(agent: PairAgent, pattern, k_max, k_min, rng) -> int:
    """Return +1/0/-1 for a pair investor facing ``pattern``.

    The strategy with the highest score is active; ties break uniformly at
    random. Holdings are not mutated.
    """
    u = rng.random()
    best = max(s.score for s in agent.strategies)
    tied = [s for s in agent.strategies if s.score == best]
    active = tied[int(u * len(tied))]
    pattern = tuple(pattern)
    if active.buy_pattern == pattern and agent.holdings < k_max:
        return 1
    if active.sell_pattern == pattern and agent.holdings > k_min:
        return -1
    return 0


def ref_buy_probability(ref_point, price) -> float:
    """Probability that a reference-point investor buys at ``price``."""
    if price >= ref_point:
        return 0.0
    return min(1.0, (ref_point - price) / price)


def ref_sell_probability(ref_point, price) -> float:
    if price <= ref_point:
        return 0.0
    return min(1.0, (price - ref_point) / price)


def ref_decide(agent: RefAgent, price, k_max, k_min, rng) -> int:
    """Return +1/0/-1 for a reference-point investor at ``price``.

    Buys (sells) with probability ``(ref-P)/P`` (``(P-ref)/P``), clamped to 1,
    when the price is below (above) the reference point and holdings allow.
    One uniform is consumed whether or not a trade can happen.
    """
    if not price > 0:
        raise ValueError("price must be positive")
    u = rng.random()
    r = agent.ref_point
    if price < r and agent.holdings < k_max:
        if u < (r - price) / price:
            return 1
    elif price > r and agent.holdings > k_min:
        if u < (price - r) / price:
            return -1
    return 0


def update_price(p_prev, excess_demand, alpha, n) -> float:
    """Move the price by ``exp(alpha * A / n)``."""
    if not p_prev > 0:
        raise ValueError("price must be positive")
    if abs(excess_demand) > n:
        raise ValueError("|excess demand| cannot exceed the population")
    x = alpha * excess_demand / n if n > 0 else 0.0
    return p_prev * math.exp(x)


def update_virtual_scores(agent: PairAgent, prev_pattern, log_return) -> PairAgent:
    """Credit every strategy the log return it would have captured.

    A strategy whose buy (sell) pattern matched the pre-tick history gains
    (loses) the realized log return; unmatched strategies are unchanged.
    """
    prev_pattern = tuple(prev_pattern)
    for s in agent.strategies:
        if s.buy_pattern == prev_pattern:
            s.score += log_return
        elif s.sell_pattern == prev_pattern:
            s.score -= log_return
    return agent


def reference_band(gene, p_bar, alpha, n):
    """Admissible reference-point band ``[p_bar*e^-w, p_bar*e^w]``."""
    w = alpha * gene / n
    return p_bar * math.exp(-w), p_bar * math.exp(w)


def maybe_redraw_reference(agent: RefAgent, p_bar, alpha, n, rng) -> RefAgent:
    """Redraw the reference point if it left its band around ``p_bar``.

    Redrawn values are uniform in log price over the band (consumes one
    uniform); in-band agents are untouched and consume nothing. The gene
    never changes.
    """
    if not p_bar > 0:
        raise ValueError("p_bar must be positive")
    w = alpha * agent.gene / n
    lo = p_bar * math.exp(-w)
    hi = p_bar * math.exp(w)
    if lo <= agent.ref_point <= hi:
        return agent
    u = rng.random()
    val = p_bar * math.exp((2.0 * u - 1.0) * w)
    if val < lo:
        val = lo
    elif val > hi:
        val = hi
    agent.ref_point = val
    return agent


def settle(agent, action, price, k_max, k_min):
    """Apply one trade at ``price`` to an agent's holdings and ledger."""
    if action == 0:
        return agent
    ledger = agent.ledger
    if action == 1:
        agent.holdings += 1
        ledger.realized -= price
        ledger.n_buys += 1
    elif action == -1:
        agent.holdings -= 1
        ledger.realized += price
        ledger.n_sells += 1
    else:
        raise ValueError(f"action must be -1, 0 or +1, got {action!r}")
    if not (k_min <= agent.holdings <= k_max):
        raise InvariantError(
            f"holdings {agent.holdings} left bounds [{k_min}, {k_max}]"
        )
    return agent


# ---------------------------------------------------------------------------
# initialization and run loop
# ---------------------------------------------------------------------------

def init_market(config: MarketConfig, rng=None) -> MarketState:
    """Create the initial market state.

    Pair strategies sample buy/sell patterns uniformly over ordered distinct
    pairs; genes are uniform integers on [0, g_max]; each initial reference
    point is log-uniform inside its band around p0. Holdings and scores start
    at zero, the initial history is uniform random bits.
    """
    if not isinstance(config, MarketConfig):
        raise ConfigError("config", f"expected MarketConfig, got {type(config)!r}")
    if rng is None:
        rng = np.random.default_rng(config.seed)

    n_pair = config.n_pair
    n_ref = config.n_ref
    n_pats = config.n_patterns

    bits = rng.integers(0, 2, size=config.memory)
    pattern = pattern_to_code(int(b) for b in bits)

    buy = rng.integers(0, n_pats, size=(n_pair, config.n_strategies))
    # distinct sell pattern via the shifted-draw trick: uniform over the
    # n_pats-1 codes that differ from buy
    sell = rng.integers(0, n_pats - 1, size=(n_pair, config.n_strategies))
    sell = sell + (sell >= buy)

    genes = rng.integers(0, config.g_max + 1, size=n_ref)
    width = config.alpha * genes / config.n_agents if config.n_agents else np.zeros(0)
    lo_f = np.empty(n_ref)
    hi_f = np.empty(n_ref)
    for j in range(n_ref):
        lo_f[j] = math.exp(-width[j])
        hi_f[j] = math.exp(width[j])

    u = rng.random(n_ref)
    ref_point = np.empty(n_ref)
    p0 = config.p0
    for j in range(n_ref):
        val = p0 * math.exp((2.0 * u[j] - 1.0) * width[j])
        lo = p0 * lo_f[j]
        hi = p0 * hi_f[j]
        if val < lo:
            val = lo
        elif val > hi:
            val = hi
        ref_point[j] = val

    window = np.zeros(config.delta_t)
    window[0] = p0

    return MarketState(
        config=config,
        price=p0,
        pbar=p0,
        pattern=pattern,
        tick=0,
        window=window,
        pair_buy=np.ascontiguousarray(buy, dtype=np.int64),
        pair_sell=np.ascontiguousarray(sell, dtype=np.int64),
        pair_score=np.zeros((n_pair, config.n_strategies)),
        pair_hold=np.zeros(n_pair, dtype=np.int64),
        pair_cash=np.zeros(n_pair),
        pair_nbuys=np.zeros(n_pair, dtype=np.int64),
        pair_nsells=np.zeros(n_pair, dtype=np.int64),
        ref_gene=np.ascontiguousarray(genes, dtype=np.int64),
        ref_width=np.asarray(width, dtype=np.float64),
        ref_lo_f=lo_f,
        ref_hi_f=hi_f,
        ref_point=ref_point,
        ref_hold=np.zeros(n_ref, dtype=np.int64),
        ref_cash=np.zeros(n_ref),
        ref_nbuys=np.zeros(n_ref, dtype=np.int64),
        ref_nsells=np.zeros(n_ref, dtype=np.int64),
    )


def tick(state: MarketState, rng, engine=None) -> TickRecord:
    """Advance the market by one tick in place and return its record."""
    kernel = _engine_mod.resolve(engine)
    block = TickArrays.empty(1)
    kernel.advance(state, rng, 1, block, 0)
    return TickRecord(
        tick=state.tick,
        price=float(block.price[0]),
        excess_demand=int(block.excess[0]),
        pattern=code_to_pattern(int(block.pattern[0]), state.config.memory),
        pair_buys=int(block.pair_buys[0]),
        pair_sells=int(block.pair_sells[0]),
        ref_buys=int(block.ref_buys[0]),
        ref_sells=int(block.ref_sells[0]),
    )


def run(config: MarketConfig, rng=None, engine=None) -> RunOutput:
    """Execute relax_steps + measure_steps ticks from a fresh state.

    With the default ``rng=None`` the stream is seeded from ``config.seed``,
    making the output a pure function of the config.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    kernel = _engine_mod.resolve(engine)
    state = init_market(config, rng)
    total = config.total_steps
    ticks = TickArrays.empty(total)
    kernel.advance(state, rng, total, ticks, 0)
    prices = np.empty(total + 1)
    prices[0] = config.p0
    prices[1:] = ticks.price
    return RunOutput(config=config, prices=prices, ticks=ticks, state=state)
