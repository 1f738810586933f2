"""Splitting-tree birth-death processes with neutral mutations.

Simulation (event-level, exact), closed-form expectations for the allelic
frequency spectrum, limit constants for small/old/large families, and a
Monte-Carlo validation harness.
"""

__version__ = "0.1.0"

from .model import (
    Criticality,
    LifespanMeasure,
    ModelI,
    ModelII,
    ModelParams,
    ClonalParams,
    mean_offspring,
    classify,
    clonal_params,
    clonal_lifespan,
)

__all__ = [
    "__version__",
    "Criticality",
    "LifespanMeasure",
    "ModelI",
    "ModelII",
    "ModelParams",
    "ClonalParams",
    "mean_offspring",
    "classify",
    "clonal_params",
    "clonal_lifespan",
]
