"""Model parameters: lifespan measures, mutation mechanisms, derived scalars.

The population model is a binary homogeneous branching process: every
particle gives birth singly at constant Poisson rate ``b`` during a lifetime
drawn from the lifespan law.  The lifespan law is carried around as a finite
measure of total mass ``b`` on (0, inf], represented by its tail
``tail(y) = mass of (y, inf]``; the tail is exactly what the renewal
equation for the scale function consumes, and what the sampler inverts.

Mutations are neutral and follow the infinitely-many-alleles rule (every
mutation creates a brand-new type).  Two mechanisms are supported:

* ``ModelI(p)``  -- at each birth the newborn is a mutant with probability
  ``p`` and a clone of her mother with probability ``1 - p``;
* ``ModelII(theta)`` -- each particle mutates at constant rate ``theta``
  along her lifeline, births are always clonal.

The "clonal" process counts the particles still carrying the progenitor's
type; it is again a splitting tree whose lifespan measure is a cheap
transform of the original one (implemented in :func:`clonal_lifespan`).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.integrate import simpson

__all__ = [
    "Criticality",
    "LifespanMeasure",
    "ModelI",
    "ModelII",
    "MutationMechanism",
    "ModelParams",
    "ClonalParams",
    "mean_offspring",
    "classify",
    "clonal_params",
    "clonal_lifespan",
    "params_from_config",
    "parse_config_file",
]

# Relative tail mass below which a truncated tabulated tail is considered to
# carry no genuine atom at +infinity (pure truncation residue): moments stay
# finite, while the sampler still faithfully maps the residual cdf mass to
# +inf.
_RESIDUAL_RTOL = 1e-8


class Criticality(enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


@dataclass(frozen=True, eq=False)
class LifespanMeasure:
    """Finite measure of mass ``b`` on (0, inf], stored through its tail.

    kind is one of ``"exponential"`` (rate ``d`` > 0), ``"immortal"``
    (all mass at +infinity; also what ``exponential`` degenerates to when
    ``d == 0``) and ``"tabulated"`` (tail values on the uniform grid
    ``0, h, 2h, ...``; any mass remaining beyond the grid is treated as an
    atom at +infinity).
    """

    b: float
    kind: str
    d: float = 0.0
    tail_values: np.ndarray | None = None
    grid_step: float = 0.0

    @classmethod
    def exponential(cls, b: float, d: float) -> "LifespanMeasure":
        """Lifespans Exp(d); ``d == 0`` gives immortal particles (Yule)."""
        if b <= 0:
            raise ValueError(f"birth rate must be positive, got {b}")
        if d < 0:
            raise ValueError(f"death rate must be nonnegative, got {d}")
        if d == 0:
            return cls(b=b, kind="immortal")
        return cls(b=b, kind="exponential", d=d)

    @classmethod
    def immortal(cls, b: float) -> "LifespanMeasure":
        """All mass at +infinity: a pure-birth (Yule) population."""
        if b <= 0:
            raise ValueError(f"birth rate must be positive, got {b}")
        return cls(b=b, kind="immortal")

    @classmethod
    def tabulated(cls, tail: np.ndarray, grid_step: float) -> "LifespanMeasure":
        """Tail values on the uniform grid ``0, h, 2h, ...``; ``tail[0]`` is b."""
        tail = np.asarray(tail, dtype=float)
        if tail.ndim != 1 or tail.size < 2:
            raise ValueError("tabulated tail needs a 1-d grid of at least 2 values")
        if grid_step <= 0:
            raise ValueError(f"grid step must be positive, got {grid_step}")
        b = float(tail[0])
        if b <= 0:
            raise ValueError("tail[0] (total mass b) must be positive")
        if np.any(np.diff(tail) > 1e-12 * b) or np.any(tail < -1e-12 * b):
            raise ValueError("tabulated tail must be non-increasing and nonnegative")
        return cls(b=b, kind="tabulated", tail_values=np.maximum(tail, 0.0),
                   grid_step=float(grid_step))

    @property
    def is_exponential(self) -> bool:
        """True when closed forms in (b, d) apply (exponential or Yule)."""
        return self.kind in ("exponential", "immortal")

    @property
    def death_rate(self) -> float:
        if self.kind == "exponential":
            return self.d
        if self.kind == "immortal":
            return 0.0
        raise ValueError("tabulated lifespan measure has no scalar death rate")

    @property
    def grid_horizon(self) -> float:
        if self.kind != "tabulated":
            raise ValueError("grid horizon only defined for tabulated measures")
        return (self.tail_values.size - 1) * self.grid_step

    def tail(self, y):
        """Tail mass of (y, inf], vectorised; constant beyond the grid."""
        y = np.asarray(y, dtype=float)
        if self.kind == "exponential":
            out = self.b * np.exp(-self.d * y)
        elif self.kind == "immortal":
            out = np.full_like(y, self.b)
        else:
            grid = np.arange(self.tail_values.size) * self.grid_step
            out = np.interp(y, grid, self.tail_values)
        return out if out.ndim else float(out)

    def mean(self) -> float:
        """Mean lifetime weighted by the measure: integral of the tail.

        This is the mean number of children per particle.  Returns +inf for
        immortal particles or a tabulated tail with genuine residual mass.
        """
        if self.kind == "exponential":
            return self.b / self.d
        if self.kind == "immortal":
            return math.inf
        if self.tail_values[-1] > _RESIDUAL_RTOL * self.b:
            return math.inf
        return float(simpson(self.tail_values, dx=self.grid_step))

    def has_residual_mass(self) -> bool:
        """True when genuine mass sits at +infinity (not truncation residue)."""
        return self.residual_mass() > _RESIDUAL_RTOL * self.b

    def residual_mass(self) -> float:
        """Mass sitting at +infinity (beyond the grid, for tabulated tails)."""
        if self.kind == "exponential":
            return 0.0
        if self.kind == "immortal":
            return self.b
        return float(self.tail_values[-1])


@dataclass(frozen=True)
class ModelI:
    """Mutation at birth: newborn is a mutant with probability ``p``."""

    p: float

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"mutation probability p must be in [0, 1), got {self.p}")


@dataclass(frozen=True)
class ModelII:
    """Poissonian mutation at rate ``theta`` along lifelines; clonal births."""

    theta: float

    def __post_init__(self):
        if self.theta < 0.0:
            raise ValueError(f"mutation rate theta must be >= 0, got {self.theta}")


MutationMechanism = Union[ModelI, ModelII]


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Full experiment configuration: lifespan measure plus mutation mechanism."""

    lifespan: LifespanMeasure
    mutation: MutationMechanism

    @property
    def b(self) -> float:
        return self.lifespan.b

    @property
    def is_exponential(self) -> bool:
        return self.lifespan.is_exponential


@dataclass(frozen=True)
class ClonalParams:
    """Scalars of the clonal (progenitor-type) process, exponential case.

    ``r_star = b_star - d_star`` is the clonal growth exponent; it is
    negative, zero or positive exactly when the clonal process is
    subcritical, critical or supercritical.
    """

    b_star: float
    d_star: float
    r_star: float
    criticality: Criticality


def mean_offspring(params: ModelParams | LifespanMeasure) -> float:
    """Mean number of children per particle (may be +inf)."""
    measure = params.lifespan if isinstance(params, ModelParams) else params
    return measure.mean()


def classify(params: ModelParams | LifespanMeasure) -> Criticality:
    """Sub/super/criticality of the whole population: mean offspring vs 1."""
    m = mean_offspring(params)
    if m > 1.0:
        return Criticality.SUPERCRITICAL
    if m == 1.0:
        return Criticality.CRITICAL
    return Criticality.SUBCRITICAL


def _classify_rate(r_star: float) -> Criticality:
    if r_star > 0:
        return Criticality.SUPERCRITICAL
    if r_star == 0:
        return Criticality.CRITICAL
    return Criticality.SUBCRITICAL


def clonal_params(params: ModelParams) -> ClonalParams:
    """Clonal birth/death rates and growth exponent, exponential case only.

    Model I keeps the death rate and thins births to ``b (1 - p)``; Model II
    keeps births and kills lineages (as type carriers) at rate ``d + theta``.
    For general lifespans only the measure transform is available, see
    :func:`clonal_lifespan`.
    """
    if not params.is_exponential:
        raise ValueError("clonal (b*, d*) scalars require an exponential lifespan; "
                         "use clonal_lifespan() for the general transform")
    b = params.lifespan.b
    d = params.lifespan.death_rate
    mut = params.mutation
    if isinstance(mut, ModelI):
        b_star, d_star = b * (1.0 - mut.p), d
    else:
        b_star, d_star = b, d + mut.theta
    r_star = b_star - d_star
    return ClonalParams(b_star=b_star, d_star=d_star, r_star=r_star,
                        criticality=_classify_rate(r_star))


def clonal_lifespan(params: ModelParams) -> LifespanMeasure:
    """Lifespan measure of the clonal process (any lifespan law).

    Model I: the measure scaled by ``1 - p`` (clonal births only).
    Model II: the lifetime as a type carrier is min(lifetime, Exp(theta)),
    i.e. the tail picks up a factor ``exp(-theta y)``.
    """
    measure = params.lifespan
    mut = params.mutation
    if isinstance(mut, ModelI):
        q = 1.0 - mut.p
        if measure.kind == "exponential":
            return LifespanMeasure(b=measure.b * q, kind="exponential", d=measure.d)
        if measure.kind == "immortal":
            return LifespanMeasure.immortal(measure.b * q)
        return LifespanMeasure.tabulated(measure.tail_values * q, measure.grid_step)
    theta = mut.theta
    if theta == 0.0:
        return measure
    if measure.kind == "exponential":
        return LifespanMeasure.exponential(measure.b, measure.d + theta)
    if measure.kind == "immortal":
        return LifespanMeasure.exponential(measure.b, theta)
    grid = np.arange(measure.tail_values.size) * measure.grid_step
    return LifespanMeasure.tabulated(measure.tail_values * np.exp(-theta * grid),
                                     measure.grid_step)


def mutation_intensity(params: ModelParams) -> float:
    """Rate at which new types enter: ``b p`` in Model I, ``theta`` in Model II.

    Equals the gap between the population growth exponent and the clonal one
    in the exponential case.
    """
    if isinstance(params.mutation, ModelI):
        return params.lifespan.b * params.mutation.p
    return params.mutation.theta


# ---------------------------------------------------------------------------
# config plumbing

def parse_config_file(path) -> dict:
    """Read a ``key = value`` config file; '#' starts a comment."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def params_from_config(cfg: dict) -> ModelParams:
    """Build ModelParams from a flat config mapping.

    Recognised keys: ``b``, ``d`` (or ``lifespan = tabulated`` with
    ``tail_file`` pointing at a one-column grid file and ``tail_step``),
    ``model`` ("I" or "II"), ``p`` or ``theta``.  All rates are per unit time.
    """
    if str(cfg.get("lifespan", "")).lower() == "tabulated":
        tail = np.loadtxt(cfg["tail_file"], dtype=float).ravel()
        measure = LifespanMeasure.tabulated(tail, float(cfg["tail_step"]))
    else:
        b = float(cfg["b"])
        d = float(cfg.get("d", 0.0))
        measure = LifespanMeasure.exponential(b, d)
    model = str(cfg.get("model", "")).strip().upper()
    if model == "I":
        if "p" not in cfg:
            raise ValueError("model I requires the mutation probability 'p'")
        mutation: MutationMechanism = ModelI(float(cfg["p"]))
    elif model == "II":
        if "theta" not in cfg:
            raise ValueError("model II requires the mutation rate 'theta'")
        mutation = ModelII(float(cfg["theta"]))
    else:
        raise ValueError(f"config key 'model' must be 'I' or 'II', got {cfg.get('model')!r}")
    return ModelParams(lifespan=measure, mutation=mutation)
