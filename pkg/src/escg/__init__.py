"""Evolutionary spatial cyclic game simulation on periodic lattices."""

from .engine import (
    DensityTrace,
    EngineAbort,
    Hooks,
    RunState,
    StepDraw,
    densities,
    elementary_step,
    new_run,
    run,
    run_max_step,
    run_parallel_mcs,
    run_serial,
    stasis,
)
from .model import (
    ActionRates,
    DominanceKind,
    DominanceModel,
    Lattice,
    Neighbourhood,
    NeighborhoodSpec,
    SimParams,
    action_rates,
    default_dominance,
    dominates,
    init_lattice,
    make_circulant,
    neighbor_index,
    win_rate,
)

__version__ = "0.1.0"

__all__ = [
    "ActionRates", "DensityTrace", "DominanceKind", "DominanceModel", "EngineAbort", "Hooks",
    "Lattice", "NeighborhoodSpec", "Neighbourhood", "RunState", "SimParams", "StepDraw",
    "action_rates", "default_dominance", "densities", "dominates", "elementary_step",
    "init_lattice", "make_circulant", "neighbor_index", "new_run", "run", "run_max_step",
    "run_parallel_mcs", "run_serial", "stasis", "win_rate",
]
