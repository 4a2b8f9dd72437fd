"""Per-stream MT19937 generation of aligned random batches.

Each worker owns one Mersenne Twister stream. Streams are seeded with a
hash of (global seed + stream id) and burned in before first use, since
early outputs of freshly seeded twisters are poorly dispersed and show up
as striping on the lattice.
"""

from __future__ import annotations

from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from numba import njit

STATE_VECTOR_LENGTH = 624
STATE_VECTOR_M = 397
MATRIX_A = 0x9908B0DF
UPPER_MASK = 0x80000000
LOWER_MASK = 0x7FFFFFFF
TEMPERING_MASK_B = 0x9D2C5680
TEMPERING_MASK_C = 0xEFC60000
MT_INIT_MULTIPLIER = 1812433253
MURMUR_CONST1 = 0x85EBCA6B
MURMUR_CONST2 = 0xC2B2AE35
DEFAULT_BURN_IN = 50_000

_MASK32 = 0xFFFFFFFF


def finalize(x: int) -> int:
    """32-bit avalanche finaliser (MurmurHash3 fmix32)."""
    x &= _MASK32
    x ^= x >> 16
    x = (x * MURMUR_CONST1) & _MASK32
    x ^= x >> 13
    x = (x * MURMUR_CONST2) & _MASK32
    x ^= x >> 16
    return x


def seed_mix(seed: int, stream_id: int) -> int:
    return finalize((seed ^ stream_id) & _MASK32)


@njit(cache=True, nogil=True)
def _twist(mt):
    n = STATE_VECTOR_LENGTH
    for i in range(n):
        y = (np.uint64(mt[i]) & np.uint64(UPPER_MASK)) | (
            np.uint64(mt[(i + 1) % n]) & np.uint64(LOWER_MASK)
        )
        v = np.uint64(mt[(i + STATE_VECTOR_M) % n]) ^ (y >> np.uint64(1))
        if y & np.uint64(1):
            v ^= np.uint64(MATRIX_A)
        mt[i] = np.uint32(v)


@njit(cache=True, nogil=True, inline="always")
def _extract(mt, pos):
    if pos[0] >= STATE_VECTOR_LENGTH:
        _twist(mt)
        pos[0] = 0
    y = np.uint64(mt[pos[0]])
    pos[0] += 1
    y ^= y >> np.uint64(11)
    y ^= (y << np.uint64(7)) & np.uint64(TEMPERING_MASK_B)
    y ^= (y << np.uint64(15)) & np.uint64(TEMPERING_MASK_C)
    y ^= y >> np.uint64(18)
    return y & np.uint64(_MASK32)


@njit(cache=True, nogil=True, inline="always")
def _to_unit(word):
    # float32 division by 2**32 - 1, matching the reference generator's closed [0, 1]
    return np.float32(word) / np.float32(4294967295.0)


@njit(cache=True, nogil=True)
def _init_state(mt, pos, seed):
    mt[0] = np.uint32(seed)
    for i in range(1, STATE_VECTOR_LENGTH):
        prev = np.uint64(mt[i - 1])
        mt[i] = np.uint32(
            (np.uint64(MT_INIT_MULTIPLIER) * (prev ^ (prev >> np.uint64(30))) + np.uint64(i))
            & np.uint64(_MASK32)
        )
    pos[0] = STATE_VECTOR_LENGTH


@njit(cache=True, nogil=True)
def _discard(mt, pos, n):
    for _ in range(n):
        _extract(mt, pos)


@njit(cache=True, nogil=True)
def _extract_many(mt, pos, out):
    for j in range(out.size):
        out[j] = _extract(mt, pos)


@njit(cache=True, nogil=True)
def _fill_chunk(mt, pos, cells, dirs, acts, rolls, start, stop, n_cells, arity):
    rated = rolls.size > 0
    for j in range(start, stop):
        cells[j] = _extract(mt, pos) % np.uint64(n_cells)
        dirs[j] = _extract(mt, pos) % np.uint64(arity)
        acts[j] = _to_unit(_extract(mt, pos))
        if rated:
            rolls[j] = _to_unit(_extract(mt, pos))


@dataclass(eq=False)
class MtState:
    """One MT19937 stream. ``pos`` is a 1-element array so kernels can advance it in place."""

    state: np.ndarray
    pos: np.ndarray

    @property
    def index(self) -> int:
        return int(self.pos[0])

    def copy(self) -> "MtState":
        return MtState(self.state.copy(), self.pos.copy())

    def __eq__(self, other):
        if not isinstance(other, MtState):
            return NotImplemented
        return self.index == other.index and np.array_equal(self.state, other.state)


def mt_init(seed: int) -> MtState:
    st = MtState(np.zeros(STATE_VECTOR_LENGTH, dtype=np.uint32), np.zeros(1, dtype=np.int64))
    _init_state(st.state, st.pos, seed & _MASK32)
    return st


def mt_extract(st: MtState) -> int:
    return int(_extract(st.state, st.pos))


def mt_extract_many(st: MtState, count: int) -> np.ndarray:
    out = np.empty(count, dtype=np.uint32)
    _extract_many(st.state, st.pos, out)
    return out


def burn_in(st: MtState, n: int = DEFAULT_BURN_IN) -> MtState:
    """Discard ``n`` outputs in place and return the same state."""
    if n < 0:
        raise ValueError("burn-in count must be non-negative")
    _discard(st.state, st.pos, n)
    return st


def align_num_randoms(requested: int, n_cells: int) -> int:
    """Round the batch length down to a whole number of Monte Carlo steps."""
    if requested < n_cells:
        raise ValueError(
            f"numRandoms={requested} is smaller than the lattice ({n_cells} cells); "
            "the aligned batch would be empty"
        )
    return (requested // n_cells) * n_cells


@dataclass(eq=False)
class RandomBatch:
    """Aligned draw buffers. ``rolls`` is empty unless the dominance model is rated."""

    cells: np.ndarray
    directions: np.ndarray
    actions: np.ndarray
    rolls: np.ndarray

    @classmethod
    def allocate(cls, length: int, rated: bool = False) -> "RandomBatch":
        if length <= 0:
            raise ValueError("batch length must be positive")
        return cls(
            np.empty(length, dtype=np.int32),
            np.empty(length, dtype=np.uint8),
            np.empty(length, dtype=np.float32),
            np.empty(length if rated else 0, dtype=np.float32),
        )

    def __len__(self) -> int:
        return self.cells.size

    @property
    def rated(self) -> bool:
        return self.rolls.size > 0

    def __eq__(self, other):
        if not isinstance(other, RandomBatch):
            return NotImplemented
        return all(
            np.array_equal(a, b)
            for a, b in zip(
                (self.cells, self.directions, self.actions, self.rolls),
                (other.cells, other.directions, other.actions, other.rolls),
            )
        )


def chunk_bounds(length: int, parts: int) -> list[tuple[int, int]]:
    edges = [length * k // parts for k in range(parts + 1)]
    return list(zip(edges[:-1], edges[1:]))


def fill_batch(
    streams: list[MtState],
    batch: RandomBatch,
    n_cells: int,
    arity: int,
    executor: Executor | None = None,
) -> RandomBatch:
    """Fill ``batch`` in place, stream k writing the k-th contiguous chunk.

    Each element takes its draws in the order cell, direction, action
    (then roll for rated models), so one stream reproduces a serial loop.
    """
    if len(batch) == 0:
        raise ValueError("cannot fill an empty batch")
    if not streams:
        raise ValueError("at least one stream is required")

    def fill(k, lo, hi):
        st = streams[k]
        _fill_chunk(
            st.state, st.pos, batch.cells, batch.directions, batch.actions, batch.rolls,
            lo, hi, n_cells, arity,
        )

    bounds = chunk_bounds(len(batch), len(streams))
    if executor is None or len(streams) == 1:
        for k, (lo, hi) in enumerate(bounds):
            fill(k, lo, hi)
    else:
        for fut in [executor.submit(fill, k, lo, hi) for k, (lo, hi) in enumerate(bounds)]:
            fut.result()
    return batch


def stream_seed(global_seed: int, stream_id: int) -> int:
    # XOR-ing stream_id into a fixed base keeps stream seeds distinct; hashing
    # (global_seed + k) ^ k would collide, e.g. 11+1 ^ 1 == 11+3 ^ 3
    x = int(global_seed)
    return seed_mix((x ^ (x >> 32)) & _MASK32, stream_id)


def make_streams(global_seed: int, count: int, burn: int = DEFAULT_BURN_IN) -> list[MtState]:
    """``count`` independent streams, each seeded by hash mixing and burned in once."""
    if count < 1:
        raise ValueError("stream count must be positive")
    return [burn_in(mt_init(stream_seed(global_seed, k)), burn) for k in range(count)]


class BatchSource(Protocol):
    """Anything that can refill a batch; lets the engine swap generators."""

    def fill(self, batch: RandomBatch, n_cells: int, arity: int) -> RandomBatch: ...


class MTBatchSource:
    """Default batch source backed by per-worker MT19937 streams."""

    def __init__(self, streams: list[MtState], executor: Executor | None = None):
        self.streams = streams
        self.executor = executor

    @classmethod
    def seeded(cls, global_seed: int, count: int, executor: Executor | None = None,
               burn: int = DEFAULT_BURN_IN) -> "MTBatchSource":
        return cls(make_streams(global_seed, count, burn), executor)

    def fill(self, batch: RandomBatch, n_cells: int, arity: int) -> RandomBatch:
        return fill_batch(self.streams, batch, n_cells, arity, self.executor)
