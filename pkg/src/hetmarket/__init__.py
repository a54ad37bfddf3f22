"""Agent-based stock market with pair-pattern and reference-point investors.

The package couples a deterministic, seedable tick engine (compiled kernel
with a numpy fallback) with the estimators needed to characterise its output:
power-law tail exponents, DFA Hurst exponents, market predictability, price
volatility, and per-population wealth. A sweep harness and a CLI drive
replicated experiments over parameter grids.
"""

from .config import ConfigError, MarketConfig
from .errors import InvariantError, SimulationError
from .market import (
    MarketState,
    PairAgent,
    RefAgent,
    RunOutput,
    StrategyPair,
    TickRecord,
    WealthLedger,
    encode_change,
    init_market,
    maybe_redraw_reference,
    pair_decide,
    ref_decide,
    run,
    settle,
    tick,
    update_price,
    update_virtual_scores,
)
from .analysis import (
    AnalysisReport,
    DfaResult,
    TailFit,
    build_report,
    dfa,
    log_returns,
    predictability,
    price_stddev,
    tail_exponent,
    wealth_summary,
)
from .sweep import (
    SweepRow,
    SweepSpec,
    aggregate,
    derive_seed,
    execute_sweep,
)

__version__ = "0.1.0"
