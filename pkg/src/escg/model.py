"""Configuration, lattice, dominance networks and neighbour geometry."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numba import njit

MAX_SPECIES = 64


class ConfigError(ValueError):
    """Raised for invalid simulation configuration."""


class Neighbourhood(enum.IntEnum):
    VON_NEUMANN = 4
    MOORE = 8


# (drow, dcol) per direction ordinal: up, down, left, right, then the diagonals
# up-left, up-right, down-left, down-right. Moore uses all eight.
DIRECTIONS = np.array(
    [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)],
    dtype=np.int64,
)
OPPOSITE = np.array([1, 0, 3, 2, 7, 6, 5, 4], dtype=np.int64)


@dataclass(frozen=True)
class NeighborhoodSpec:
    arity: int

    def __post_init__(self):
        if self.arity not in (4, 8):
            raise ConfigError(f"neighbourhood must be 4 or 8, got {self.arity}")

    @property
    def offsets(self) -> np.ndarray:
        return DIRECTIONS[: self.arity]


@dataclass
class SimParams:
    """Runtime configuration. Defaults follow the command-line table defaults."""

    length: int = 200
    height: int = 200
    mcs_limit: int = 100_000
    neighbourhood: Neighbourhood = Neighbourhood.VON_NEUMANN
    print_frequency: int = 200
    mobility: float = 3e-5
    species: int = 3
    flux: bool = True
    empty_prob: float = 0.0
    save: bool = False
    dominance_import: bool = False
    resume: bool = False
    num_randoms: int = 100_000_000
    max_step: bool = False
    seed: int | None = None

    @property
    def cells(self) -> int:
        return self.length * self.height

    def validate(self) -> "SimParams":
        if self.length < 2 or self.height < 2:
            raise ConfigError("lattice length and height must be >= 2")
        if self.cells > np.iinfo(np.int32).max:
            raise ConfigError("lattice does not fit a 32-bit index")
        if self.mcs_limit < 0:
            raise ConfigError("mcs must be non-negative")
        if self.print_frequency < 1:
            raise ConfigError("printFrequency must be positive")
        if not 0.0 <= self.empty_prob <= 1.0:
            raise ConfigError("empty probability must lie in [0, 1]")
        if self.mobility < 0:
            raise ConfigError("mobility must be non-negative")
        if not 1 <= self.species <= MAX_SPECIES:
            # S=1 is accepted so a run can terminate immediately in stasis.
            raise ConfigError(f"species must lie in [1, {MAX_SPECIES}]")
        if self.num_randoms < 1:
            raise ConfigError("numRandoms must be positive")
        if self.seed is not None and not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        NeighborhoodSpec(int(self.neighbourhood))
        return self

    def replace(self, **changes) -> "SimParams":
        return dataclasses.replace(self, **changes)


@dataclass
class Lattice:
    """Flat row-major occupancy array: index = row * length + col, 0 is empty."""

    cells: np.ndarray
    length: int
    height: int

    def __post_init__(self):
        self.cells = np.ascontiguousarray(self.cells, dtype=np.int32)
        if self.cells.shape != (self.length * self.height,):
            raise ValueError(
                f"expected {self.length * self.height} cells, got shape {self.cells.shape}"
            )

    @property
    def size(self) -> int:
        return self.length * self.height

    def grid(self) -> np.ndarray:
        return self.cells.reshape(self.height, self.length)

    def copy(self) -> "Lattice":
        return Lattice(self.cells.copy(), self.length, self.height)

    def __eq__(self, other):
        if not isinstance(other, Lattice):
            return NotImplemented
        return (
            self.length == other.length
            and self.height == other.height
            and np.array_equal(self.cells, other.cells)
        )


class DominanceKind(enum.Enum):
    BINARY = "binary"
    RATED = "rated"


@dataclass(frozen=True, eq=False)
class DominanceModel:
    """S x S directed edge weights, row = attacker, column = defender.

    Binary models hold 0/1 entries (1 = attacker always wins). Rated models
    hold the probability in [0, 1] that an attack along that edge succeeds.
    """

    size: int
    kind: DominanceKind
    entries: np.ndarray

    def __post_init__(self):
        entries = np.ascontiguousarray(self.entries, dtype=np.float64).ravel()
        if entries.shape != (self.size * self.size,):
            raise ValueError(f"dominance needs {self.size ** 2} entries, got {entries.size}")
        if np.any(entries < 0) or np.any(entries > 1) or not np.all(np.isfinite(entries)):
            raise ValueError("dominance entries must lie in [0, 1]")
        if self.kind is DominanceKind.BINARY and not np.all((entries == 0) | (entries == 1)):
            raise ValueError("binary dominance entries must be 0 or 1")
        if np.any(np.diag(entries.reshape(self.size, self.size)) != 0):
            raise ValueError("a species cannot dominate itself")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def matrix(self) -> np.ndarray:
        return self.entries.reshape(self.size, self.size)

    @property
    def is_rated(self) -> bool:
        return self.kind is DominanceKind.RATED

    @classmethod
    def from_matrix(cls, matrix, kind: DominanceKind | None = None) -> "DominanceModel":
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"dominance matrix must be square, got shape {m.shape}")
        if kind is None:
            kind = (
                DominanceKind.BINARY
                if np.all((m == 0) | (m == 1))
                else DominanceKind.RATED
            )
        return cls(m.shape[0], kind, m)

    def __eq__(self, other):
        if not isinstance(other, DominanceModel):
            return NotImplemented
        return (
            self.size == other.size
            and self.kind is other.kind
            and np.array_equal(self.entries, other.entries)
        )

    def without_edge(self, attacker: int, defender: int) -> "DominanceModel":
        """Copy with the attacker -> defender edge removed (1-indexed species)."""
        m = self.matrix.copy()
        m[attacker - 1, defender - 1] = 0
        return DominanceModel(self.size, self.kind, m)


@dataclass(frozen=True)
class ActionRates:
    mu: float
    sigma: float
    epsilon: float

    @property
    def total(self) -> float:
        return self.mu + self.sigma + self.epsilon


def make_circulant(species: int, offsets: Iterable[int]) -> DominanceModel:
    """Binary circulant network C(S, K): species i beats i + k (mod S) for k in K."""
    offsets = set(int(k) for k in offsets)
    if species < 2:
        raise ValueError("a circulant network needs at least 2 species")
    if not offsets:
        raise ValueError("offset set is empty; the network would have no interactions")
    bad = [k for k in offsets if not 1 <= k <= species - 1]
    if bad:
        raise ValueError(f"offsets must lie in [1, {species - 1}], got {sorted(bad)}")
    i = np.arange(species)[:, None]
    j = np.arange(species)[None, :]
    diff = (j - i + species) % species
    m = np.isin(diff, sorted(offsets)).astype(np.float64)
    return DominanceModel(species, DominanceKind.BINARY, m)


def _check_species(model: DominanceModel, a: int, b: int) -> None:
    for v in (a, b):
        if not 0 <= v <= model.size:
            raise ValueError(f"cell value {v} outside [0, {model.size}]")


def dominates(model: DominanceModel, a: int, b: int) -> bool:
    """Whether species ``a`` has a dominance edge over ``b``. Empty cells never dominate."""
    _check_species(model, a, b)
    if a == 0 or b == 0:
        return False
    return bool(model.entries[(a - 1) * model.size + (b - 1)] > 0)


def win_rate(model: DominanceModel, a: int, b: int) -> float:
    """Probability that an attack of ``a`` on ``b`` succeeds (0 when either is empty)."""
    _check_species(model, a, b)
    if a == 0 or b == 0:
        return 0.0
    return float(model.entries[(a - 1) * model.size + (b - 1)])


def action_rates(mobility: float, cells: int) -> ActionRates:
    """Interaction/reproduction weights of 1 and a migration weight of 2*M*N."""
    if mobility < 0:
        raise ValueError("mobility must be non-negative")
    if cells < 1:
        raise ValueError("cell count must be positive")
    return ActionRates(mu=1.0, sigma=1.0, epsilon=2.0 * mobility * cells)


@njit(cache=True, nogil=True, inline="always")
def _wrap_or_reflect(x, n, flux):
    if flux:
        if x < 0:
            return x + n
        if x >= n:
            return x - n
        return x
    if x < 0:
        return -x
    if x >= n:
        return 2 * (n - 1) - x
    return x


@njit(cache=True, nogil=True, inline="always")
def neighbour_of(i, direction, length, height, flux):
    row = i // length
    col = i - row * length
    r = _wrap_or_reflect(row + DIRECTIONS[direction, 0], height, flux)
    c = _wrap_or_reflect(col + DIRECTIONS[direction, 1], length, flux)
    return r * length + c


def neighbor_index(
    i: int, direction: int, spec: NeighborhoodSpec, length: int, height: int, flux: bool
) -> int:
    """Flat index of the neighbour of cell ``i`` in ``direction``.

    With ``flux`` the lattice is a torus; otherwise a step off the edge is
    mirrored one cell inward (row -1 maps to row 1).
    """
    if not 0 <= direction < spec.arity:
        raise ValueError(f"direction {direction} outside [0, {spec.arity})")
    if not 0 <= i < length * height:
        raise ValueError(f"cell index {i} outside lattice")
    return int(neighbour_of(i, direction, length, height, flux))


def init_lattice(params: SimParams, rng: np.random.Generator) -> Lattice:
    """Each cell empty with probability ``empty_prob``, else uniform over 1..S."""
    n = params.cells
    cells = rng.integers(1, params.species + 1, size=n, dtype=np.int32)
    cells[rng.random(n) < params.empty_prob] = 0
    return Lattice(cells, params.length, params.height)


def default_dominance(species: int) -> DominanceModel:
    """Balanced circulant C(S, {1..floor((S-1)/2)}): RPS for S=3, RPSLS for S=5.

    A single species has no interactions and gets an all-zero 1 x 1 model.
    """
    if species == 1:
        return DominanceModel(1, DominanceKind.BINARY, np.zeros(1))
    return make_circulant(species, range(1, max(1, (species - 1) // 2) + 1))
