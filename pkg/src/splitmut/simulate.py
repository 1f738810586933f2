"""Event-level forward simulation of splitting trees with neutral mutations.

The simulator is exact: per particle, a lifespan is drawn from the lifespan
law and children arrive as a rate-b Poisson process on the alive interval
truncated at the horizon.  Mutation marking is overlaid from a random stream
separate from the tree stream, so coupling the two models (or switching
mutation parameters) leaves the underlying tree untouched for a fixed seed.

Buffers are process-local and reused across replicas; when one overflows the
replica is replayed from its seed into a larger buffer, which keeps results
bit-identical regardless of buffer sizing, replica ordering or worker count
(replica k's generators depend only on (master seed, k, attempt)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import LifespanMeasure, ModelI, ModelII, ModelParams

__all__ = [
    "Caps",
    "PopulationCapExceeded",
    "MaxAttemptsExceeded",
    "TreeSnapshot",
    "AllelicPartition",
    "SnapshotStatistics",
    "simulate_tree",
    "simulate_conditioned",
    "allelic_partition",
    "snapshot_statistics",
    "compact_snapshot",
    "export_snapshot",
    "load_snapshot",
]


class PopulationCapExceeded(RuntimeError):
    """The particle or event cap was hit; lower the horizon or raise the cap."""


class MaxAttemptsExceeded(RuntimeError):
    """Rejection sampling found no surviving tree within the attempt budget."""


@dataclass(frozen=True)
class Caps:
    """Explosion guards for one simulated tree."""

    max_particles: int = 10_000_000
    max_events: int = 50_000_000

    def __post_init__(self):
        if self.max_particles <= 0 or self.max_events <= 0:
            raise ValueError("caps must be positive")


@dataclass(eq=False)
class TreeSnapshot:
    """One simulated tree at its horizon.

    Particle ids are dense, in discovery order (root 0, children appended in
    birth order while their mother is processed).  ``type_at_birth`` and
    ``current_type`` use type id 0 for the progenitor's type and id g+1 for
    the type created by the g-th mutation event.  ``mut_particle`` /
    ``mut_time`` form the mutation-event table (event g creates type g+1);
    for mutation-at-birth the event time is the mutant's birth time.
    """

    params: ModelParams
    horizon: float
    seed: tuple
    parent: np.ndarray
    birth: np.ndarray
    death: np.ndarray
    type_at_birth: np.ndarray
    current_type: np.ndarray
    mut_particle: np.ndarray
    mut_time: np.ndarray
    alive_ids: np.ndarray
    attempts: int = 1

    @property
    def n_particles(self) -> int:
        return self.parent.size

    @property
    def n_types(self) -> int:
        return self.mut_time.size + 1

    @property
    def z(self) -> int:
        """Number of particles alive at the horizon."""
        return self.alive_ids.size

    def type_origin_times(self) -> np.ndarray:
        """Origin time of every type id (0 for the progenitor's type)."""
        out = np.empty(self.n_types)
        out[0] = 0.0
        out[1:] = self.mut_time
        return out


@dataclass(eq=False)
class AllelicPartition:
    """Extant families at the horizon: one row per type carried by >= 1
    particle, with its origin time and number of carriers."""

    horizon: float
    type_ids: np.ndarray
    origin_times: np.ndarray
    sizes: np.ndarray

    @property
    def ages(self) -> np.ndarray:
        return self.horizon - self.origin_times

    @property
    def n_families(self) -> int:
        return self.type_ids.size

    @property
    def z(self) -> int:
        return int(self.sizes.sum())


@dataclass(eq=False)
class SnapshotStatistics:
    """Spectrum and family-count summaries of one allelic partition.

    ``spectrum[i-1, j]`` counts families of size exactly i with age < age_grid[j];
    when age_grid[j] equals the horizon the progenitor's type (age exactly t)
    is included.  ``old_counts[j]`` counts families strictly older than
    age_grid[j] (0 for negative entries), ``large_counts[k]`` families of
    size >= ceil(size_grid[k]).  Ranked sequences are decreasing, ties broken
    by type id.
    """

    horizon: float
    i_max: int
    age_grid: np.ndarray
    size_grid: np.ndarray
    spectrum: np.ndarray
    total_types: int
    old_counts: np.ndarray
    large_counts: np.ndarray
    ranked_ages: np.ndarray
    ranked_sizes: np.ndarray


# ---------------------------------------------------------------------------
# workspace and seeding

class _Workspace:
    """Reusable per-process simulation buffers (grown on demand)."""

    def __init__(self):
        self.cap = 0
        self.mcap = 0

    def ensure_particles(self, n: int):
        if self.cap < n:
            self.cap = n
            self.parent = np.empty(n, np.int64)
            self.birth = np.empty(n, np.float64)
            self.death = np.empty(n, np.float64)
            self.type_at_birth = np.empty(n, np.int64)
            self.current_type = np.empty(n, np.int64)
            self.mark_offset = np.empty(n + 1, np.int64)

    def ensure_marks(self, m: int):
        if self.mcap < m:
            self.mcap = m
            self.mut_particle = np.empty(m, np.int64)
            self.mut_time = np.empty(m, np.float64)


_WS = _Workspace()

_TREE_STREAM = 0
_MUT_STREAM = 1


def _stream(seed: int, replica: int, attempt: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), int(replica), int(attempt), stream])
    return np.random.Generator(np.random.PCG64(ss))


def _lifespan_mode(measure: LifespanMeasure):
    empty = np.empty(0, np.float64)
    if measure.kind == "exponential":
        return _kernels.MODE_EXPONENTIAL, measure.d, empty, empty
    if measure.kind == "immortal":
        return _kernels.MODE_IMMORTAL, 0.0, empty, empty
    grid = np.arange(measure.tail_values.size) * measure.grid_step
    cdf = 1.0 - measure.tail_values / measure.b
    return _kernels.MODE_TABULATED, 0.0, grid, cdf


def _grow(params: ModelParams, t: float, caps: Caps, seed, replica, attempt) -> int:
    """Run the tree kernel into the workspace, replaying on buffer overflow."""
    mode, d, tab_y, tab_f = _lifespan_mode(params.lifespan)
    _WS.ensure_particles(min(1 << 16, caps.max_particles))
    while True:
        rng = _stream(seed, replica, attempt, _TREE_STREAM)
        n = _kernels.grow_tree(rng, params.b, mode, d, tab_y, tab_f, float(t),
                               _WS.parent, _WS.birth, _WS.death)
        if n >= 0:
            return n
        if _WS.cap >= caps.max_particles:
            raise PopulationCapExceeded(
                f"more than {caps.max_particles} particles before t={t}; "
                "reduce the horizon or raise max_particles")
        _WS.ensure_particles(min(_WS.cap * 2, caps.max_particles))


def _overlay(params: ModelParams, t: float, caps: Caps, n: int,
             seed, replica, attempt) -> int:
    """Run the mutation kernel for the n-particle tree in the workspace."""
    mut = params.mutation
    event_budget = caps.max_events - 2 * n
    _WS.ensure_marks(min(max(1 << 12, n), max(event_budget, 1)))
    while True:
        rng = _stream(seed, replica, attempt, _MUT_STREAM)
        if isinstance(mut, ModelI):
            m = _kernels.overlay_birth_mutations(
                rng, mut.p, n, _WS.parent, _WS.birth, _WS.type_at_birth,
                _WS.mut_particle, _WS.mut_time)
            if m >= 0:
                _WS.current_type[:n] = _WS.type_at_birth[:n]
                return m
        else:
            m = _kernels.overlay_poisson_marks(
                rng, mut.theta, float(t), n, _WS.parent, _WS.birth, _WS.death,
                _WS.type_at_birth, _WS.current_type, _WS.mark_offset,
                _WS.mut_particle, _WS.mut_time)
            if m >= 0:
                return m
        if _WS.mcap >= event_budget:
            raise PopulationCapExceeded(
                f"more than {caps.max_events} events before t={t}; "
                "reduce the horizon or raise max_events")
        _WS.ensure_marks(min(_WS.mcap * 2, event_budget))


def _simulate_views(params: ModelParams, t: float, seed: int, caps: Caps,
                    replica: int = 0, attempt: int = 0):
    """One replica into the shared workspace.

    Returns (n, m, alive_ids); array views into the workspace stay valid only
    until the next simulation call.
    """
    if t <= 0:
        raise ValueError("horizon t must be positive")
    n = _grow(params, t, caps, seed, replica, attempt)
    if 2 * n > caps.max_events:
        raise PopulationCapExceeded(
            f"more than {caps.max_events} birth/death events before t={t}")
    m = _overlay(params, t, caps, n, seed, replica, attempt)
    alive = np.flatnonzero(_WS.death[:n] > t)
    return n, m, alive


def _snapshot_from_workspace(params, t, seed_tuple, n, m, alive, attempts) -> TreeSnapshot:
    return TreeSnapshot(
        params=params, horizon=float(t), seed=seed_tuple,
        parent=_WS.parent[:n].copy(), birth=_WS.birth[:n].copy(),
        death=_WS.death[:n].copy(), type_at_birth=_WS.type_at_birth[:n].copy(),
        current_type=_WS.current_type[:n].copy(),
        mut_particle=_WS.mut_particle[:m].copy(), mut_time=_WS.mut_time[:m].copy(),
        alive_ids=alive.copy(), attempts=attempts)


def simulate_tree(params: ModelParams, t: float, seed: int, caps: Caps = Caps(),
                  *, replica: int = 0) -> TreeSnapshot:
    """Simulate one splitting tree with mutations up to horizon ``t``.

    Identical (params, t, seed, caps-independent) inputs give bit-identical
    snapshots.  ``replica`` offsets the random streams so that batches are
    pure functions of (seed, replica).
    """
    n, m, alive = _simulate_views(params, t, seed, caps, replica=replica)
    return _snapshot_from_workspace(params, t, (seed, replica, 0), n, m, alive, 1)


def simulate_conditioned(params: ModelParams, t: float, seed: int,
                         caps: Caps = Caps(), max_attempts: int = 10_000,
                         *, replica: int = 0) -> TreeSnapshot:
    """Rejection-sample trees until one is alive at ``t``.

    This conditions on {Z(t) > 0}, not on ultimate survival; for limit-law
    checks at large t the two differ by an exponentially small mass.  The
    attempt count is recorded on the snapshot (rejected attempts all had
    Z(t) = 0, which is what unconditional averages need).
    """
    for attempt in range(max_attempts):
        n, m, alive = _simulate_views(params, t, seed, caps,
                                      replica=replica, attempt=attempt)
        if alive.size > 0:
            return _snapshot_from_workspace(params, t, (seed, replica, attempt),
                                            n, m, alive, attempt + 1)
    raise MaxAttemptsExceeded(
        f"no surviving tree in {max_attempts} attempts (t={t}); "
        "is the population deeply subcritical?")


# ---------------------------------------------------------------------------
# partitions and statistics

def allelic_partition(snapshot: TreeSnapshot) -> AllelicPartition:
    """Group the alive particles by current type.

    Each extant type becomes one family with its origin time (the creating
    mutation's time; 0 for the progenitor's type) and its carrier count.
    """
    origins = snapshot.type_origin_times()
    type_ids, sizes, ages = _kernels.family_table(
        snapshot.alive_ids, snapshot.current_type, snapshot.n_types,
        origins, snapshot.horizon)
    return AllelicPartition(horizon=snapshot.horizon, type_ids=type_ids,
                            origin_times=snapshot.horizon - ages, sizes=sizes)


def snapshot_statistics(partition: AllelicPartition, i_max: int,
                        age_grid, size_grid) -> SnapshotStatistics:
    """Spectrum, old/large-family counts and ranked sequences of a partition."""
    age_grid = np.atleast_1d(np.asarray(age_grid, dtype=float))
    size_grid = np.atleast_1d(np.asarray(size_grid, dtype=float))
    if i_max < 1:
        raise ValueError("i_max must be >= 1")
    t = partition.horizon
    ages = partition.ages
    sizes = partition.sizes
    is_progenitor = partition.type_ids == 0

    spectrum = np.zeros((i_max, age_grid.size), np.int64)
    for j, a in enumerate(age_grid):
        mask = ages < a
        if a == t:
            mask = mask | is_progenitor
        if mask.any():
            counts = np.bincount(sizes[mask], minlength=i_max + 1)[1:i_max + 1]
            spectrum[:counts.size, j] = counts

    old_counts = np.array([(ages > a).sum() if a >= 0 else 0 for a in age_grid],
                          np.int64)
    large_counts = np.array([(sizes >= math.ceil(x)).sum() for x in size_grid],
                            np.int64)
    by_age = np.lexsort((partition.type_ids, -ages))
    by_size = np.lexsort((partition.type_ids, -sizes))
    return SnapshotStatistics(
        horizon=t, i_max=i_max, age_grid=age_grid, size_grid=size_grid,
        spectrum=spectrum, total_types=partition.n_families,
        old_counts=old_counts, large_counts=large_counts,
        ranked_ages=ages[by_age], ranked_sizes=sizes[by_size])


def compact_snapshot(snapshot: TreeSnapshot) -> TreeSnapshot:
    """Drop dead particles without alive descendants.

    Keeps the alive particles and their ancestor chains (which carry the
    genealogy and the full type history of every extant lineage); ids are
    re-densified preserving order.  Mutation events survive iff their
    particle does, which covers every type id referenced by the kept
    particles since types are inherited along ancestor chains.
    """
    n = snapshot.n_particles
    keep = np.zeros(n, bool)
    keep[snapshot.alive_ids] = True
    parent = snapshot.parent
    # ids decrease along ancestor chains, one backward sweep suffices
    for i in range(n - 1, 0, -1):
        if keep[i]:
            keep[parent[i]] = True
    keep[0] = True
    new_id = np.cumsum(keep) - 1
    idx = np.flatnonzero(keep)
    mkeep = np.flatnonzero(keep[snapshot.mut_particle])
    # dropped events leave type-id gaps; remap so kept event k creates type k+1
    type_map = np.full(snapshot.n_types, -1, np.int64)
    type_map[0] = 0
    type_map[mkeep + 1] = np.arange(mkeep.size) + 1
    kept_parent = parent[idx]
    new_parent = np.where(kept_parent >= 0, new_id[np.maximum(kept_parent, 0)], -1)
    return TreeSnapshot(
        params=snapshot.params, horizon=snapshot.horizon, seed=snapshot.seed,
        parent=new_parent, birth=snapshot.birth[idx], death=snapshot.death[idx],
        type_at_birth=type_map[snapshot.type_at_birth[idx]],
        current_type=type_map[snapshot.current_type[idx]],
        mut_particle=new_id[snapshot.mut_particle[mkeep]],
        mut_time=snapshot.mut_time[mkeep],
        alive_ids=new_id[snapshot.alive_ids], attempts=snapshot.attempts)


# ---------------------------------------------------------------------------
# snapshot export / replay

def _header_lines(header: dict) -> list[str]:
    return [f"# {k}={v}" for k, v in header.items()]


def export_snapshot(snapshot: TreeSnapshot, particles_path, mutations_path,
                    header: dict | None = None) -> None:
    """Write the particle and mutation-event tables as commented CSV.

    Particle rows: id,parent,birth,death,type_at_birth,current_type,alive
    (parent -1 for the root, death 'inf' for immortal particles).
    Mutation rows: event,particle,time,new_type.
    """
    head = dict(header or {})
    head.setdefault("horizon", repr(snapshot.horizon))
    alive = np.zeros(snapshot.n_particles, np.int64)
    alive[snapshot.alive_ids] = 1
    with open(particles_path, "w") as fh:
        for line in _header_lines(head):
            fh.write(line + "\n")
        fh.write("id,parent,birth,death,type_at_birth,current_type,alive\n")
        for i in range(snapshot.n_particles):
            fh.write(f"{i},{int(snapshot.parent[i])},{float(snapshot.birth[i])!r},"
                     f"{float(snapshot.death[i])!r},{int(snapshot.type_at_birth[i])},"
                     f"{int(snapshot.current_type[i])},{int(alive[i])}\n")
    with open(mutations_path, "w") as fh:
        for line in _header_lines(head):
            fh.write(line + "\n")
        fh.write("event,particle,time,new_type\n")
        for g in range(snapshot.mut_time.size):
            fh.write(f"{g},{int(snapshot.mut_particle[g])},"
                     f"{float(snapshot.mut_time[g])!r},{g + 1}\n")


def load_snapshot(particles_path, mutations_path, params: ModelParams | None = None,
                  horizon: float | None = None) -> TreeSnapshot:
    """Rebuild a snapshot from exported tables (scripted-fixture replay)."""
    header: dict[str, str] = {}
    rows = []
    with open(particles_path) as fh:
        for raw in fh:
            line = raw.strip()
            if line.startswith("#"):
                if "=" in line:
                    k, v = line[1:].split("=", 1)
                    header[k.strip()] = v.strip()
                continue
            if not line or line.startswith("id,"):
                continue
            rows.append(line.split(","))
    if horizon is None:
        horizon = float(header["horizon"])
    n = len(rows)
    parent = np.empty(n, np.int64)
    birth = np.empty(n, np.float64)
    death = np.empty(n, np.float64)
    tb = np.empty(n, np.int64)
    cur = np.empty(n, np.int64)
    for r in rows:
        i = int(r[0])
        parent[i] = int(r[1])
        birth[i] = float(r[2])
        death[i] = float(r[3])
        tb[i] = int(r[4])
        cur[i] = int(r[5])
    mrows = []
    with open(mutations_path) as fh:
        for raw in fh:
            line = raw.strip()
            if line.startswith("#") or not line or line.startswith("event,"):
                continue
            mrows.append(line.split(","))
    m = len(mrows)
    mut_particle = np.empty(m, np.int64)
    mut_time = np.empty(m, np.float64)
    for r in mrows:
        g = int(r[0])
        mut_particle[g] = int(r[1])
        mut_time[g] = float(r[2])
    alive = np.flatnonzero((birth <= horizon) & (death > horizon))
    return TreeSnapshot(params=params, horizon=float(horizon), seed=("replay",),
                        parent=parent, birth=birth, death=death,
                        type_at_birth=tb, current_type=cur,
                        mut_particle=mut_particle, mut_time=mut_time,
                        alive_ids=alive)
