# cython: language_level=3, boundscheck=False, wraparound=False
# cython: initializedcheck=False, cdivision=True
"""Compiled tick kernel; the default engine when built.

Mirrors hetmarket._engine_py draw for draw and IEEE-754 operation for
operation (see that module for the stream protocol). Uniform doubles come
straight from the run's numpy BitGenerator, so batch draws there and single
draws here consume the identical stream. Transcendentals go through libm on
both sides; the extension is compiled with -ffp-contract=off so no fused
multiply-adds sneak in. Output must be bit-identical to the fallback.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport exp, isfinite, log
from libc.stdint cimport int64_t

from numpy.random cimport bitgen_t

import numpy as np

from .errors import SimulationError

NAME = "compiled"

cdef const char* _CAPSULE_NAME = "BitGenerator"


def advance(state, rng, Py_ssize_t n_ticks, ticks, Py_ssize_t offset):
    """Advance ``state`` by ``n_ticks``, recording into ``ticks[offset:]``."""
    cfg = state.config
    cdef double alpha = cfg.alpha
    cdef int64_t n = cfg.n_agents
    cdef int64_t k_max = cfg.k_max
    cdef int64_t k_min = cfg.k_min
    cdef int64_t delta_t = cfg.delta_t
    cdef int64_t mask = (1 << cfg.memory) - 1

    cdef int64_t[:, ::1] buy = state.pair_buy
    cdef int64_t[:, ::1] sell = state.pair_sell
    cdef double[:, ::1] score = state.pair_score
    cdef int64_t[::1] p_hold = state.pair_hold
    cdef double[::1] p_cash = state.pair_cash
    cdef int64_t[::1] p_nbuys = state.pair_nbuys
    cdef int64_t[::1] p_nsells = state.pair_nsells
    cdef Py_ssize_t n_pair = p_hold.shape[0]
    cdef Py_ssize_t n_s = score.shape[1]

    cdef double[::1] width = state.ref_width
    cdef double[::1] lo_f = state.ref_lo_f
    cdef double[::1] hi_f = state.ref_hi_f
    cdef double[::1] ref_point = state.ref_point
    cdef int64_t[::1] r_hold = state.ref_hold
    cdef double[::1] r_cash = state.ref_cash
    cdef int64_t[::1] r_nbuys = state.ref_nbuys
    cdef int64_t[::1] r_nsells = state.ref_nsells
    cdef Py_ssize_t n_ref = r_hold.shape[0]

    cdef double[::1] window = state.window
    cdef double[::1] rec_price = ticks.price
    cdef int64_t[::1] rec_excess = ticks.excess
    cdef int64_t[::1] rec_pattern = ticks.pattern
    cdef int64_t[::1] rec_pb = ticks.pair_buys
    cdef int64_t[::1] rec_ps = ticks.pair_sells
    cdef int64_t[::1] rec_rb = ticks.ref_buys
    cdef int64_t[::1] rec_rs = ticks.ref_sells

    pair_action_arr = np.zeros(n_pair, dtype=np.int64)
    ref_action_arr = np.zeros(n_ref, dtype=np.int64)
    cdef int64_t[::1] pair_action = pair_action_arr
    cdef int64_t[::1] ref_action = ref_action_arr

    capsule = rng.bit_generator.capsule
    if not PyCapsule_IsValid(capsule, _CAPSULE_NAME):
        raise ValueError("rng does not expose a BitGenerator capsule")
    cdef bitgen_t* bg = <bitgen_t*> PyCapsule_GetPointer(capsule, _CAPSULE_NAME)

    cdef double price = state.price
    cdef int64_t pattern = state.pattern
    cdef int64_t t = state.tick
    cdef double pbar = state.pbar

    cdef Py_ssize_t step, i, s, j, k
    cdef int64_t tt, mu, a, npb, nps, nrb, nrs, a_total, bit, c, q
    cdef int64_t n_tied, pick, seen, active
    cdef double u, best, pr, x, new_price, r_log, v, total, lo, hi, val
    cdef int64_t err_tick = 0

    with nogil:
        for step in range(n_ticks):
            tt = t + 1
            mu = pattern

            # phase 1: pair decisions on the pre-tick history
            npb = 0
            nps = 0
            for i in range(n_pair):
                u = bg.next_double(bg.state)
                best = score[i, 0]
                for s in range(1, n_s):
                    if score[i, s] > best:
                        best = score[i, s]
                n_tied = 0
                for s in range(n_s):
                    if score[i, s] == best:
                        n_tied += 1
                pick = <int64_t>(u * n_tied)
                seen = 0
                active = 0
                for s in range(n_s):
                    if score[i, s] == best:
                        if seen == pick:
                            active = s
                            break
                        seen += 1
                a = 0
                if buy[i, active] == mu and p_hold[i] < k_max:
                    a = 1
                    npb += 1
                elif sell[i, active] == mu and p_hold[i] > k_min:
                    a = -1
                    nps += 1
                pair_action[i] = a

            # phase 2: reference-point decisions at the pre-tick price
            nrb = 0
            nrs = 0
            for j in range(n_ref):
                u = bg.next_double(bg.state)
                a = 0
                if price < ref_point[j]:
                    if r_hold[j] < k_max:
                        pr = (ref_point[j] - price) / price
                        if u < pr:
                            a = 1
                            nrb += 1
                elif price > ref_point[j]:
                    if r_hold[j] > k_min:
                        pr = (price - ref_point[j]) / price
                        if u < pr:
                            a = -1
                            nrs += 1
                ref_action[j] = a

            # phase 3: price impact of the pooled imbalance
            a_total = npb - nps + nrb - nrs
            x = alpha * a_total / n if n > 0 else 0.0
            new_price = price * exp(x)
            if (not isfinite(new_price)) or new_price <= 0.0:
                err_tick = tt
                break

            # phase 4: settle at the post-update price
            for i in range(n_pair):
                if pair_action[i] == 1:
                    p_hold[i] += 1
                    p_cash[i] -= new_price
                    p_nbuys[i] += 1
                elif pair_action[i] == -1:
                    p_hold[i] -= 1
                    p_cash[i] += new_price
                    p_nsells[i] += 1
            for j in range(n_ref):
                if ref_action[j] == 1:
                    r_hold[j] += 1
                    r_cash[j] -= new_price
                    r_nbuys[j] += 1
                elif ref_action[j] == -1:
                    r_hold[j] -= 1
                    r_cash[j] += new_price
                    r_nsells[j] += 1

            # phase 5: virtual scores earn the realized log return
            r_log = log(new_price / price)
            for i in range(n_pair):
                for s in range(n_s):
                    v = <double> ((buy[i, s] == mu) - (sell[i, s] == mu))
                    score[i, s] += v * r_log

            # phase 6: shift history, refresh the rolling mean
            bit = 1 if new_price >= price else 0
            pattern = ((mu << 1) | bit) & mask
            window[<Py_ssize_t> (tt % delta_t)] = new_price
            c = tt if tt < delta_t else delta_t
            total = 0.0
            for q in range(tt - c + 1, tt + 1):
                total += window[<Py_ssize_t> (q % delta_t)]
            pbar = total / c

            # phase 7: redraw reference points that left their band
            for j in range(n_ref):
                lo = pbar * lo_f[j]
                hi = pbar * hi_f[j]
                if ref_point[j] < lo or ref_point[j] > hi:
                    u = bg.next_double(bg.state)
                    val = pbar * exp((2.0 * u - 1.0) * width[j])
                    if val < lo:
                        val = lo
                    elif val > hi:
                        val = hi
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

    state.price = price
    state.pattern = int(pattern)
    state.tick = int(t)
    state.pbar = pbar
    if err_tick:
        raise SimulationError(f"price update overflowed at tick {err_tick}")
