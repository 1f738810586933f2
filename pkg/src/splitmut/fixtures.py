"""Hand-scripted snapshots with known allelic partitions.

These are deterministic worked examples used by the test suite (and usable
as replay input): small trees whose spectrum, age filtering and old-family
counts can be read off by hand.
"""

from __future__ import annotations

import numpy as np

from .model import LifespanMeasure, ModelI, ModelII, ModelParams
from .simulate import TreeSnapshot

__all__ = [
    "scripted_snapshot",
    "birth_mutation_example",
    "lifeline_mutation_example",
    "extinct_progenitor_example",
]


def scripted_snapshot(params: ModelParams, t: float, particles, events) -> TreeSnapshot:
    """Build a snapshot from literal rows.

    ``particles``: (parent, birth, death, type_at_birth, current_type) per id;
    ``events``: (particle, time) per mutation event, event g creating type g+1.
    """
    particles = list(particles)
    n = len(particles)
    parent = np.array([row[0] for row in particles], np.int64)
    birth = np.array([row[1] for row in particles], np.float64)
    death = np.array([row[2] for row in particles], np.float64)
    tb = np.array([row[3] for row in particles], np.int64)
    cur = np.array([row[4] for row in particles], np.int64)
    events = list(events)
    mut_particle = np.array([e[0] for e in events], np.int64)
    mut_time = np.array([e[1] for e in events], np.float64)
    for i in range(1, n):
        mo = parent[i]
        if not (birth[mo] < birth[i] < death[mo]):
            raise ValueError(f"particle {i} born outside its mother's lifetime")
    alive = np.flatnonzero((birth <= t) & (death > t))
    return TreeSnapshot(params=params, horizon=float(t), seed=("scripted",),
                        parent=parent, birth=birth, death=death,
                        type_at_birth=tb, current_type=cur,
                        mut_particle=mut_particle, mut_time=mut_time,
                        alive_ids=alive)


def birth_mutation_example() -> TreeSnapshot:
    """Mutation-at-birth tree, horizon 10, ten alive particles.

    The extant partition has sizes (2, 3, 2, 1, 1, 1) across six types, so
    the spectrum reads (3, 2, 1); the progenitor type and the size-3 type
    originate before time 4 while everything else is younger, so an age
    cutoff of 6 reduces it to (3, 1) and leaves two families older than 6.
    A mutant branch dying at 1.5 exercises extinct-type removal.
    """
    inf = np.inf
    params = ModelParams(LifespanMeasure.exponential(2.0, 1.0), ModelI(0.25))
    particles = [
        (-1, 0.0, inf, 0, 0),   # progenitor, type 0
        (0, 0.5, 1.5, 1, 1),    # mutant, dies childless: type 1 extinct
        (0, 1.0, inf, 0, 0),    # clone of the progenitor
        (0, 2.0, inf, 2, 2),    # mutant: type 2
        (3, 3.0, inf, 2, 2),    # clone
        (3, 4.0, inf, 2, 2),    # clone
        (0, 5.0, inf, 3, 3),    # mutant: type 3
        (6, 5.5, inf, 3, 3),    # clone
        (0, 6.0, inf, 4, 4),    # mutant: type 4
        (4, 7.0, inf, 5, 5),    # mutant: type 5
        (0, 8.0, inf, 6, 6),    # mutant: type 6
    ]
    events = [(1, 0.5), (3, 2.0), (6, 5.0), (8, 6.0), (9, 7.0), (10, 8.0)]
    return scripted_snapshot(params, 10.0, particles, events)


def lifeline_mutation_example() -> TreeSnapshot:
    """Poissonian-marking tree, horizon 10, ten alive particles.

    The progenitor mutates twice (times 1 and 5), four more marks hit other
    lifelines; the extant partition has sizes (2, 2, 2, 1, 1, 1, 1) across
    seven types and spectrum (4, 3).  The progenitor's original type is
    still carried (by two descendants born before the first mark).
    """
    inf = np.inf
    params = ModelParams(LifespanMeasure.exponential(2.0, 1.0), ModelII(1.5))
    particles = [
        (-1, 0.0, inf, 0, 2),   # progenitor: marks at 1 -> 1 and 5 -> 2
        (0, 0.5, inf, 0, 0),    # born before the first mark
        (1, 3.0, inf, 0, 0),
        (0, 2.0, inf, 1, 1),    # inherits type 1
        (0, 6.0, inf, 2, 2),    # inherits type 2
        (3, 7.0, inf, 1, 1),
        (0, 6.5, inf, 2, 3),    # inherits type 2, own mark at 7 -> 3
        (2, 6.0, inf, 0, 5),    # inherits type 0, own mark at 9 -> 5
        (3, 8.0, inf, 1, 4),    # inherits type 1, own mark at 8.5 -> 4
        (7, 9.5, inf, 5, 6),    # inherits type 5, own mark at 9.7 -> 6
    ]
    events = [(0, 1.0), (0, 5.0), (6, 7.0), (8, 8.5), (7, 9.0), (9, 9.7)]
    return scripted_snapshot(params, 10.0, particles, events)


def extinct_progenitor_example() -> TreeSnapshot:
    """Tiny marked tree whose progenitor type is no longer carried."""
    inf = np.inf
    params = ModelParams(LifespanMeasure.exponential(2.0, 1.0), ModelII(1.5))
    particles = [
        (-1, 0.0, inf, 0, 1),   # progenitor marked at 1 -> type 1
        (0, 2.0, inf, 1, 1),    # born after the mark
    ]
    events = [(0, 1.0)]
    return scripted_snapshot(params, 10.0, particles, events)
