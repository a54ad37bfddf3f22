"""Numpy tick kernel; fallback when the compiled extension is unavailable.

Both kernels must produce bit-identical output from the same random stream,
so the per-tick draw protocol is fixed:

* one uniform per pair investor (strategy tie-break, consumed every tick),
* one uniform per reference-point investor (trade draw, consumed every tick),
* one uniform per out-of-band reference point, in ascending agent order.

Everything element-wise (+, -, *, /, comparisons) is exactly rounded and so
matches the C loop bit for bit. The only per-tick transcendentals, the price
update exponential, the realized log return, and redraw exponentials, go
through libm (``math.exp``/``math.log``) on both sides. Quantities that are
fixed for a run (band factors ``exp(+-alpha*g/N)``) are precomputed once at
init and shared, never recomputed here.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import SimulationError

NAME = "python"


def advance(state, rng, n_ticks, ticks, offset):
    """Advance ``state`` by ``n_ticks``, recording into ``ticks[offset:]``."""
    cfg = state.config
    alpha = cfg.alpha
    n = cfg.n_agents
    k_max = cfg.k_max
    k_min = cfg.k_min
    delta_t = cfg.delta_t
    mask = (1 << cfg.memory) - 1

    buy = state.pair_buy
    sell = state.pair_sell
    score = state.pair_score
    p_hold = state.pair_hold
    p_cash = state.pair_cash
    p_nbuys = state.pair_nbuys
    p_nsells = state.pair_nsells
    n_pair = p_hold.shape[0]
    pair_idx = np.arange(n_pair)

    width = state.ref_width
    lo_f = state.ref_lo_f
    hi_f = state.ref_hi_f
    ref_point = state.ref_point
    r_hold = state.ref_hold
    r_cash = state.ref_cash
    r_nbuys = state.ref_nbuys
    r_nsells = state.ref_nsells
    n_ref = r_hold.shape[0]

    window = state.window
    rec_price = ticks.price
    rec_excess = ticks.excess
    rec_pattern = ticks.pattern
    rec_pb = ticks.pair_buys
    rec_ps = ticks.pair_sells
    rec_rb = ticks.ref_buys
    rec_rs = ticks.ref_sells

    price = state.price
    pattern = state.pattern
    t = state.tick
    pbar = state.pbar

    try:
        for step in range(n_ticks):
            tt = t + 1
            mu = pattern

            # phase 1: pair decisions on the pre-tick history
            u = rng.random(n_pair)
            if n_pair:
                best = score.max(axis=1)
                is_best = score == best[:, None]
                n_tied = is_best.sum(axis=1)
                pick = (u * n_tied).astype(np.int64)
                active = np.argmax(
                    np.cumsum(is_best, axis=1) > pick[:, None], axis=1
                )
                buys = (buy[pair_idx, active] == mu) & (p_hold < k_max)
                sells = (sell[pair_idx, active] == mu) & (p_hold > k_min)
                npb = int(buys.sum())
                nps = int(sells.sum())
            else:
                buys = sells = None
                npb = nps = 0

            # phase 2: reference-point decisions at the pre-tick price
            u = rng.random(n_ref)
            if n_ref:
                prob_up = (ref_point - price) / price
                rbuys = (price < ref_point) & (r_hold < k_max) & (u < prob_up)
                rsells = (price > ref_point) & (r_hold > k_min) & (u < -prob_up)
                nrb = int(rbuys.sum())
                nrs = int(rsells.sum())
            else:
                rbuys = rsells = None
                nrb = nrs = 0

            # phase 3: price impact of the pooled imbalance
            a_total = npb - nps + nrb - nrs
            x = alpha * a_total / n if n > 0 else 0.0
            new_price = price * math.exp(x)
            if not (math.isfinite(new_price) and new_price > 0.0):
                raise SimulationError(f"price update overflowed at tick {tt}")

            # phase 4: settle at the post-update price
            if n_pair:
                p_hold[buys] += 1
                p_hold[sells] -= 1
                p_cash[buys] -= new_price
                p_cash[sells] += new_price
                p_nbuys[buys] += 1
                p_nsells[sells] += 1
            if n_ref:
                r_hold[rbuys] += 1
                r_hold[rsells] -= 1
                r_cash[rbuys] -= new_price
                r_cash[rsells] += new_price
                r_nbuys[rbuys] += 1
                r_nsells[rsells] += 1

            # phase 5: virtual scores earn the realized log return
            r_log = math.log(new_price / price)
            if n_pair:
                v = (buy == mu).astype(np.float64)
                v -= sell == mu
                score += v * r_log

            # phase 6: shift history, refresh the rolling mean
            bit = 1 if new_price >= price else 0
            pattern = ((mu << 1) | bit) & mask
            window[tt % delta_t] = new_price
            c = tt if tt < delta_t else delta_t
            total = 0.0
            for q in range(tt - c + 1, tt + 1):
                total += window[q % delta_t]
            pbar = total / c

            # phase 7: redraw reference points that left their band
            if n_ref:
                lo = pbar * lo_f
                hi = pbar * hi_f
                out = np.flatnonzero((ref_point < lo) | (ref_point > hi))
                uo = rng.random(out.size)
                for q in range(out.size):
                    j = out[q]
                    val = pbar * math.exp((2.0 * uo[q] - 1.0) * width[j])
                    if val < lo[j]:
                        val = lo[j]
                    elif val > hi[j]:
                        val = hi[j]
                    ref_point[j] = val

            # record and commit
            k = offset + step
            rec_price[k] = new_price
            rec_excess[k] = a_total
            rec_pattern[k] = mu
            rec_pb[k] = npb
            rec_ps[k] = nps
            rec_rb[k] = nrb
            rec_rs[k] = nrs
            price = new_price
            t = tt
    finally:
        state.price = float(price)
        state.pattern = int(pattern)
        state.tick = int(t)
        state.pbar = float(pbar)
