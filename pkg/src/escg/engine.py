"""Elementary-step kernels and the three run loops.

``run_serial`` is the deterministic oracle: one MT19937 stream drawn inline,
one step at a time. ``run_parallel_mcs`` and ``run_max_step`` consume
pre-generated batches and split each dispatch across worker threads that
share the lattice. Workers touch the lattice only through single-cell
aligned int32 loads and stores, which are indivisible on the hardware we
target; there is no cross-site ordering and a migration swap is two
independent stores, so concurrent steps may interleave. That disorder is
accepted as part of the stochastic model rather than locked away.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .model import (
    ActionRates,
    DominanceModel,
    Lattice,
    SimParams,
    action_rates,
    init_lattice,
    neighbour_of,
)
from .rng import (
    BatchSource,
    MTBatchSource,
    MtState,
    RandomBatch,
    _extract,
    _to_unit,
    align_num_randoms,
    chunk_bounds,
    make_streams,
)

log = logging.getLogger(__name__)

OK = 0
CORRUPT = 1


class EngineAbort(RuntimeError):
    """A run stopped abnormally. ``state`` holds the last completed MCS."""

    def __init__(self, message: str, state: "RunState | None" = None):
        super().__init__(message)
        self.state = state


@dataclass
class StepDraw:
    cell: int
    direction: int
    action: float  # uniform in [0, 1]; scaled by the total action weight
    roll: float = 0.0  # extra uniform used by rated dominance


@dataclass
class DensityTrace:
    steps: list[int] = field(default_factory=list)
    counts: list[np.ndarray] = field(default_factory=list)
    alive: set[int] = field(default_factory=set)

    def record(self, mcs: int, counts: np.ndarray) -> None:
        self.steps.append(int(mcs))
        self.counts.append(np.asarray(counts, dtype=np.int64).copy())
        self.alive = {int(s) for s in np.flatnonzero(counts[1:]) + 1}

    def as_array(self) -> np.ndarray:
        """Rows of (mcs, count_0, ..., count_S)."""
        if not self.steps:
            return np.zeros((0, 0), dtype=np.int64)
        return np.column_stack([np.array(self.steps), np.vstack(self.counts)])

    def first_absent(self, species: int) -> int | None:
        """Earliest recorded MCS at which ``species`` has zero count."""
        for mcs, c in zip(self.steps, self.counts):
            if c[species] == 0:
                return mcs
        return None


@dataclass
class RunState:
    lattice: Lattice
    current_mcs: int
    trace: DensityTrace
    rates: ActionRates
    model: DominanceModel
    params: SimParams


@dataclass
class Hooks:
    """Optional callbacks. ``stop`` sees each new count vector and may end the run."""

    on_record: Callable[[RunState], None] | None = None
    on_save: Callable[[RunState], None] | None = None
    stop: Callable[[np.ndarray], bool] | None = None


# ---------------------------------------------------------------- kernels


@njit(cache=True, nogil=True, inline="always")
def _step(grid, dom, size, rated, cell, direction, action, roll,
          length, height, flux, eps, mu, total):
    species = grid[cell]
    ni = neighbour_of(cell, direction, length, height, flux)
    neighbour = grid[ni]
    if species == neighbour:
        return OK
    if species > size or neighbour > size or species < 0 or neighbour < 0:
        return CORRUPT
    r = action * total
    if r < eps:
        grid[cell] = neighbour
        grid[ni] = species
    elif r < eps + mu:
        if neighbour != 0 and species != 0:
            w = dom[(species - 1) * size + neighbour - 1]
            if w > 0.0:
                if not rated or roll < w or w >= 1.0:
                    grid[ni] = 0
            else:
                w = dom[(neighbour - 1) * size + species - 1]
                if w > 0.0 and (not rated or roll < w or w >= 1.0):
                    grid[cell] = 0
    else:
        # r == total is reachable with a closed [0, 1] action draw; it reproduces
        if neighbour == 0:
            grid[ni] = species
        elif species == 0:
            grid[cell] = neighbour
    return OK


@njit(cache=True, nogil=True)
def _apply_draws(grid, dom, size, rated, cells, dirs, acts, rolls, lo, hi,
                 length, height, flux, eps, mu, total):
    for j in range(lo, hi):
        roll = rolls[j] if rated else np.float32(0.0)
        if _step(grid, dom, size, rated, cells[j], dirs[j], acts[j], roll,
                 length, height, flux, eps, mu, total) != OK:
            return CORRUPT
    return OK


@njit(cache=True, nogil=True)
def _serial_steps(grid, dom, size, rated, mt, pos, n_steps, n_cells, arity,
                  length, height, flux, eps, mu, total):
    for _ in range(n_steps):
        cell = _extract(mt, pos) % np.uint64(n_cells)
        direction = _extract(mt, pos) % np.uint64(arity)
        act = _to_unit(_extract(mt, pos))
        roll = _to_unit(_extract(mt, pos)) if rated else np.float32(0.0)
        if _step(grid, dom, size, rated, np.int64(cell), np.int64(direction), act, roll,
                 length, height, flux, eps, mu, total) != OK:
            return CORRUPT
    return OK


@njit(cache=True, nogil=True)
def _count(grid, lo, hi, counts):
    for i in range(lo, hi):
        v = grid[i]
        if v < 0 or v >= counts.size:
            return CORRUPT
        counts[v] += 1
    return OK


# ---------------------------------------------------------------- public ops


def densities(lattice: Lattice, species: int, executor: ThreadPoolExecutor | None = None,
              workers: int = 1) -> np.ndarray:
    """Counts per cell value 0..S. With an executor, per-worker tallies are summed."""
    grid = lattice.cells
    bounds = chunk_bounds(grid.size, max(1, workers))
    partial = np.zeros((len(bounds), species + 1), dtype=np.int64)
    if executor is None or len(bounds) == 1:
        status = [_count(grid, lo, hi, partial[k]) for k, (lo, hi) in enumerate(bounds)]
    else:
        futs = [executor.submit(_count, grid, lo, hi, partial[k])
                for k, (lo, hi) in enumerate(bounds)]
        status = [f.result() for f in futs]
    if any(s != OK for s in status):
        raise ValueError(f"lattice holds values outside [0, {species}]")
    return partial.sum(axis=0)


def stasis(trace: DensityTrace) -> bool:
    """At most one species alive. An all-empty lattice counts as stasis."""
    if not trace.steps:
        raise ValueError("stasis needs at least one density record")
    return len(trace.alive) <= 1


def _geometry(state: RunState):
    p = state.params
    m = state.model
    return (m.entries, m.size, m.is_rated, p.length, p.height, p.flux,
            state.rates.epsilon, state.rates.mu, state.rates.total)


def elementary_step(state: RunState, draw: StepDraw) -> None:
    p = state.params
    n = state.lattice.size
    arity = int(p.neighbourhood)
    if not 0 <= draw.cell < n or not 0 <= draw.direction < arity:
        raise ValueError("draw out of range")
    dom, size, rated, length, height, flux, eps, mu, total = _geometry(state)
    status = _step(state.lattice.cells, dom, size, rated, draw.cell, draw.direction,
                   np.float32(draw.action), np.float32(draw.roll),
                   length, height, flux, eps, mu, total)
    if status != OK:
        raise EngineAbort("corrupt lattice value", state)


def save_intervals(limit: int) -> set[int]:
    """{0, 1, 2, 5, 10, 20, 50, ...} up to ``limit``, plus ``limit`` itself."""
    out = {limit}
    base = 1
    out.add(0)
    while base <= limit:
        for m in (1, 2, 5):
            if m * base <= limit:
                out.add(m * base)
        base *= 10
    return out


def new_run(params: SimParams, model: DominanceModel, lattice: Lattice | None = None,
            current_mcs: int = 0) -> RunState:
    """Fresh or resumed run state. Draws a seed into ``params`` when none is set."""
    params = params.validate()
    if params.seed is None:
        params.seed = int(np.random.SeedSequence().entropy % 2**64)
    if model.size != params.species:
        raise ValueError(f"dominance has {model.size} species, params say {params.species}")
    if lattice is None:
        lattice = init_lattice(params, np.random.default_rng(params.seed))
    if (lattice.length, lattice.height) != (params.length, params.height):
        raise ValueError("lattice dimensions do not match params")
    return RunState(lattice, current_mcs, DensityTrace(),
                    action_rates(params.mobility, params.cells), model, params)


class _Recorder:
    def __init__(self, state: RunState, hooks: Hooks | None, executor=None, workers=1):
        self.state = state
        self.hooks = hooks or Hooks()
        self.saves = save_intervals(state.params.mcs_limit)
        self.executor = executor
        self.workers = workers

    def record(self) -> bool:
        """Record densities at the current MCS; True if the run should stop."""
        s = self.state
        counts = densities(s.lattice, s.model.size, self.executor, self.workers)
        s.trace.record(s.current_mcs, counts)
        h = self.hooks
        if h.on_record:
            h.on_record(s)
        if h.on_save and s.params.save and s.current_mcs in self.saves:
            h.on_save(s)
        if stasis(s.trace):
            return True
        if h.stop and h.stop(counts):
            return True
        return s.current_mcs >= s.params.mcs_limit


def run_serial(state: RunState, streams: list[MtState] | None = None,
               hooks: Hooks | None = None) -> RunState:
    """N inline-drawn elementary steps per MCS on one thread; bit-reproducible."""
    p = state.params
    if streams is None:
        streams = make_streams(p.seed, 1)
    mt = streams[0]
    n = state.lattice.size
    arity = int(p.neighbourhood)
    dom, size, rated, length, height, flux, eps, mu, total = _geometry(state)
    rec = _Recorder(state, hooks)
    while not rec.record():
        status = _serial_steps(state.lattice.cells, dom, size, rated, mt.state, mt.pos, n, n,
                               arity, length, height, flux, eps, mu, total)
        if status != OK:
            raise EngineAbort("corrupt lattice value", state)
        state.current_mcs += 1
    return state


class BatchPipeline:
    """Two batch buffers; the next one is generated while the current one is consumed."""

    def __init__(self, source: BatchSource, length: int, n_cells: int, arity: int,
                 rated: bool):
        self.source = source
        self.args = (n_cells, arity)
        self.buffers = [RandomBatch.allocate(length, rated), RandomBatch.allocate(length, rated)]
        self.gen = ThreadPoolExecutor(1, thread_name_prefix="escg-rng")
        self.current = 0
        self.pending = self.gen.submit(self.source.fill, self.buffers[0], *self.args)

    def acquire(self) -> RandomBatch:
        """Wait for the pending batch and start regenerating the other buffer."""
        self.pending.result()
        batch = self.buffers[self.current]
        self.current ^= 1
        self.pending = self.gen.submit(self.source.fill, self.buffers[self.current], *self.args)
        return batch

    def close(self) -> None:
        try:
            self.pending.result()
        finally:
            self.gen.shutdown(wait=True)


class _Dispatcher:
    """Splits a draw range across workers that share the lattice."""

    def __init__(self, state: RunState, workers: int):
        self.state = state
        self.workers = workers
        self.pool = ThreadPoolExecutor(workers, thread_name_prefix="escg-step") if workers > 1 else None
        self.geom = _geometry(state)
        self.backup = state.lattice.cells.copy()

    def run(self, batch: RandomBatch, lo: int, hi: int) -> None:
        dom, size, rated, length, height, flux, eps, mu, total = self.geom
        grid = self.state.lattice.cells
        np.copyto(self.backup, grid)

        def work(a, b):
            return _apply_draws(grid, dom, size, rated, batch.cells, batch.directions,
                                batch.actions, batch.rolls, a, b,
                                length, height, flux, eps, mu, total)

        try:
            if self.pool is None:
                status = [work(lo, hi)]
            else:
                futs = [self.pool.submit(work, lo + a, lo + b)
                        for a, b in chunk_bounds(hi - lo, self.workers)]
                status = [f.result() for f in futs]
        except Exception as exc:
            np.copyto(grid, self.backup)
            raise EngineAbort(f"worker failed: {exc}", self.state) from exc
        if any(s != OK for s in status):
            np.copyto(grid, self.backup)
            raise EngineAbort("corrupt lattice value", self.state)

    def close(self):
        if self.pool is not None:
            self.pool.shutdown(wait=True)


def _batched_setup(state, workers, source):
    p = state.params
    n = state.lattice.size
    workers = max(1, int(workers))
    length = align_num_randoms(p.num_randoms, n)
    if source is None:
        gen_pool = ThreadPoolExecutor(workers, thread_name_prefix="escg-gen") if workers > 1 else None
        source = MTBatchSource.seeded(p.seed, workers, gen_pool)
    pipe = BatchPipeline(source, length, n, int(p.neighbourhood), state.model.is_rated)
    return workers, length, pipe


def _close(pipe, disp, source_executor):
    pipe.close()
    disp.close()
    if source_executor is not None:
        source_executor.shutdown(wait=True)


def run_parallel_mcs(state: RunState, workers: int = 1, source: BatchSource | None = None,
                     hooks: Hooks | None = None) -> RunState:
    """One dispatch of N pre-generated draws per MCS; densities every MCS."""
    n = state.lattice.size
    workers, length, pipe = _batched_setup(state, workers, source)
    disp = _Dispatcher(state, workers)
    rec = _Recorder(state, hooks, disp.pool, workers)
    batch, index = None, length
    try:
        while not rec.record():
            if index >= length:
                batch, index = pipe.acquire(), 0
            disp.run(batch, index, index + n)
            index += n
            state.current_mcs += 1
    finally:
        _close(pipe, disp, getattr(pipe.source, "executor", None) if source is None else None)
    return state


def run_max_step(state: RunState, workers: int = 1, source: BatchSource | None = None,
                 hooks: Hooks | None = None) -> RunState:
    """Consume a whole batch (numRandoms / N MCS) per dispatch.

    Densities, saves and stasis are observed only at batch boundaries. The
    last dispatch is truncated so the run never passes ``mcs_limit``.
    """
    n = state.lattice.size
    workers, length, pipe = _batched_setup(state, workers, source)
    step = length // n
    disp = _Dispatcher(state, workers)
    rec = _Recorder(state, hooks, disp.pool, workers)
    try:
        while not rec.record():
            batch = pipe.acquire()
            todo = min(step, state.params.mcs_limit - state.current_mcs)
            disp.run(batch, 0, todo * n)
            state.current_mcs += todo
    finally:
        _close(pipe, disp, getattr(pipe.source, "executor", None) if source is None else None)
    return state


MODES = ("serial", "parallel", "maxstep")


def run(state: RunState, mode: str = "serial", workers: int | None = None,
        streams: list[MtState] | None = None, hooks: Hooks | None = None) -> RunState:
    """Dispatch to one of the three engines by name."""
    if workers is None:
        workers = os.cpu_count() or 1
    if mode == "serial":
        return run_serial(state, streams, hooks)
    source = MTBatchSource(streams) if streams is not None else None
    if mode == "parallel":
        return run_parallel_mcs(state, workers, source, hooks)
    if mode == "maxstep":
        return run_max_step(state, workers, source, hooks)
    raise ValueError(f"unknown engine mode {mode!r}; expected one of {MODES}")
