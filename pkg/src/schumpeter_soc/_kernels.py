"""Compiled inner loops.

Each kernel consumes uniform doubles from ``buf`` starting at ``pos`` and
stops early when fewer than the per-step worst case remain, returning the
number of completed steps and the new buffer position.  The Python drivers
refill and call again, so the draw sequence is independent of block size.
"""

import numpy as np
from numba import njit

RANDOM_FLIP = 0
FITNESS_EXTINCTION = 1


@njit(cache=True)
def _delta(n, sigma, plus, minus, delta):
    for k in range(n):
        delta[k] = 0
    for r in range(plus.shape[0]):
        if sigma[plus[r, 0]] != 0 and sigma[plus[r, 1]] != 0:
            delta[plus[r, 2]] += 1
    for r in range(minus.shape[0]):
        if sigma[minus[r, 0]] != 0 and sigma[minus[r, 1]] != 0:
            delta[minus[r, 2]] -= 1


@njit(cache=True)
def thurner_steps(sigma, fitness, plus, minus, variant, p, track,
                  nsteps, buf, pos, out_div, out_track, out_off):
    """Advance up to ``nsteps`` steps in place, writing records at ``out_off``."""
    n = sigma.shape[0]
    delta = np.empty(n, dtype=np.int64)
    need = n + 3 if variant == FITNESS_EXTINCTION else 2
    size = buf.shape[0]
    t = 0
    div = 0
    for k in range(n):
        div += sigma[k]
    while t < nsteps and size - pos >= need:
        _delta(n, sigma, plus, minus, delta)
        for k in range(n):
            d = delta[k]
            if d > 0:
                if sigma[k] == 0:
                    sigma[k] = 1
                    div += 1
                    if variant == FITNESS_EXTINCTION:
                        fitness[k] = buf[pos]
                        pos += 1
            elif d < 0:
                if sigma[k] == 1:
                    sigma[k] = 0
                    div -= 1
        if variant == RANDOM_FLIP:
            u = buf[pos]
            pos += 1
            if u < p:
                j = min(int(buf[pos] * n), n - 1)
                pos += 1
                if sigma[j] == 1:
                    sigma[j] = 0
                    div -= 1
                else:
                    sigma[j] = 1
                    div += 1
        else:
            best = -1
            fbest = 2.0
            for k in range(n):
                if sigma[k] == 1 and fitness[k] < fbest:
                    fbest = fitness[k]
                    best = k
            if best >= 0:
                sigma[best] = 0
                div -= 1
            u = buf[pos]
            pos += 1
            if u < p:
                j = min(int(buf[pos] * n), n - 1)
                pos += 1
                fitness[j] = buf[pos]
                pos += 1
                if sigma[j] == 0:
                    sigma[j] = 1
                    div += 1
        out_div[out_off + t] = div
        out_track[out_off + t] = sigma[track]
        t += 1
    return t, pos


@njit(cache=True)
def bak_sneppen_steps(fitness, random_site, nsteps, buf, pos, out_val, out_site, out_off):
    """Extremal (or random-site) Bak-Sneppen updates on a ring.

    Records the pre-replacement fitness of the replaced site and its index.
    """
    n = fitness.shape[0]
    need = 4 if random_site else 3
    size = buf.shape[0]
    t = 0
    while t < nsteps and size - pos >= need:
        if random_site:
            i = min(int(buf[pos] * n), n - 1)
            pos += 1
        else:
            i = 0
            fmin = fitness[0]
            for s in range(1, n):
                if fitness[s] < fmin:
                    fmin = fitness[s]
                    i = s
        out_val[out_off + t] = fitness[i]
        out_site[out_off + t] = i
        fitness[i] = buf[pos]
        fitness[(i - 1) % n] = buf[pos + 1]
        fitness[(i + 1) % n] = buf[pos + 2]
        pos += 3
        t += 1
    return t, pos
