"""Compiled inner loops of the event-level simulator.

Every kernel takes preallocated output buffers and returns the number of
items written, or -1 when a buffer is too small; the caller grows the buffer
and replays the whole draw sequence from the same generator seed, so results
are independent of the buffer sizing.

Particles are laid out in discovery order: the root is 0 and each particle's
children are appended, in birth order, while the particle is processed.
Mothers therefore always precede their children, which lets the type
resolution run as a single forward pass.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# lifespan sampling modes
MODE_EXPONENTIAL = 0
MODE_IMMORTAL = 1
MODE_TABULATED = 2


@njit(cache=True, fastmath=True)
def grow_tree(rng, b, mode, d, tab_y, tab_f, t, parent, birth, death):
    """Grow one splitting tree up to horizon t.

    Each particle lives [birth, death) and births arrive at rate b on
    (birth, min(death, t)).  Lifespans: Exp(d) (mode 0), +inf (mode 1) or
    inverse-transform sampling of the tabulated lifetime cdf ``tab_f`` on the
    grid ``tab_y`` (mode 2; leftover cdf mass maps to +inf).

    Returns the particle count, or -1 if the buffers are full.
    """
    size = parent.size
    ib = 1.0 / b
    scale_d = 1.0 / d if mode == MODE_EXPONENTIAL and d > 0.0 else 0.0

    parent[0] = -1
    birth[0] = 0.0
    if mode == MODE_EXPONENTIAL:
        death[0] = rng.exponential(scale_d)
    elif mode == MODE_IMMORTAL:
        death[0] = np.inf
    else:
        u = rng.random()
        j = np.searchsorted(tab_f, u)
        if j >= tab_f.size:
            death[0] = np.inf
        else:
            j = max(j, 1)
            f0, f1 = tab_f[j - 1], tab_f[j]
            y0, y1 = tab_y[j - 1], tab_y[j]
            death[0] = y1 if f1 <= f0 else y0 + (y1 - y0) * (u - f0) / (f1 - f0)

    n = 1
    i = 0
    while i < n:
        end = death[i]
        if end > t:
            end = t
        s = birth[i] + rng.exponential(ib)
        while s < end:
            if n >= size:
                return -1
            parent[n] = i
            birth[n] = s
            if mode == MODE_EXPONENTIAL:
                death[n] = s + rng.exponential(scale_d)
            elif mode == MODE_IMMORTAL:
                death[n] = np.inf
            else:
                u = rng.random()
                j = np.searchsorted(tab_f, u)
                if j >= tab_f.size:
                    death[n] = np.inf
                else:
                    j = max(j, 1)
                    f0, f1 = tab_f[j - 1], tab_f[j]
                    y0, y1 = tab_y[j - 1], tab_y[j]
                    zeta = y1 if f1 <= f0 else y0 + (y1 - y0) * (u - f0) / (f1 - f0)
                    death[n] = s + zeta
            n += 1
            s += rng.exponential(ib)
        i += 1
    return n


@njit(cache=True, fastmath=True)
def overlay_birth_mutations(rng, p, n, parent, birth, type_at_birth,
                            mut_particle, mut_time):
    """Mutation-at-birth marking: each newborn is a mutant with probability p.

    Fills type_at_birth (progenitor type is 0, the g-th mutation event
    creates type g+1) and the mutation-event table.  Returns the number of
    mutation events, or -1 when the event buffers are full.
    """
    cap = mut_particle.size
    m = 0
    type_at_birth[0] = 0
    for i in range(1, n):
        if rng.random() < p:
            if m >= cap:
                return -1
            mut_particle[m] = i
            mut_time[m] = birth[i]
            m += 1
            type_at_birth[i] = m
        else:
            type_at_birth[i] = type_at_birth[parent[i]]
    return m


@njit(cache=True, fastmath=True)
def overlay_poisson_marks(rng, theta, t, n, parent, birth, death,
                          type_at_birth, current_type, mark_offset,
                          mut_particle, mut_time):
    """Poissonian lifeline marking at rate theta, truncated at the horizon.

    Children inherit the mother's current type at their birth time; each mark
    switches the carrier to a fresh type (the g-th mark overall creates type
    g+1).  ``mark_offset`` (length n+1) receives the per-particle slices of
    the event table, which is time-sorted within each particle.  Returns the
    mark count or -1 when the event buffers are full.
    """
    cap = mut_particle.size
    m = 0
    mark_offset[0] = 0
    for i in range(n):
        if i == 0:
            type_at_birth[0] = 0
        else:
            mo = parent[i]
            lo = mark_offset[mo]
            hi = mark_offset[mo + 1]
            # marks of the mother strictly before this birth
            j = np.searchsorted(mut_time[lo:hi], birth[i])
            if j > 0:
                type_at_birth[i] = lo + j  # global mark index lo+j-1 -> type lo+j
            else:
                type_at_birth[i] = type_at_birth[mo]
        end = death[i]
        if end > t:
            end = t
        span = end - birth[i]
        k = rng.poisson(theta * span) if span > 0.0 else 0
        if k > 0:
            if m + k > cap:
                return -1
            for q in range(k):
                mut_time[m + q] = birth[i] + rng.random() * span
                mut_particle[m + q] = i
            # insertion sort of the particle's own marks (k is small)
            for q in range(m + 1, m + k):
                key = mut_time[q]
                w = q - 1
                while w >= m and mut_time[w] > key:
                    mut_time[w + 1] = mut_time[w]
                    w -= 1
                mut_time[w + 1] = key
            m += k
        mark_offset[i + 1] = m
        current_type[i] = m if k > 0 else type_at_birth[i]
    return m


@njit(cache=True)
def family_table(alive, current_type, n_types, origin_of_type, t):
    """Group alive particles by current type.

    Returns (type_ids, sizes, ages) of the extant families, type-id sorted.
    """
    counts = np.zeros(n_types, np.int64)
    for idx in alive:
        counts[current_type[idx]] += 1
    n_fam = 0
    for k in range(n_types):
        if counts[k] > 0:
            n_fam += 1
    type_ids = np.empty(n_fam, np.int64)
    sizes = np.empty(n_fam, np.int64)
    ages = np.empty(n_fam, np.float64)
    w = 0
    for k in range(n_types):
        if counts[k] > 0:
            type_ids[w] = k
            sizes[w] = counts[k]
            ages[w] = t - origin_of_type[k]
            w += 1
    return type_ids, sizes, ages
