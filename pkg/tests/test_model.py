import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from escg.model import (
    OPPOSITE,
    ConfigError,
    DominanceKind,
    DominanceModel,
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


def brute_circulant(s, ks):
    return [[1.0 if any((i + k) % s == j for k in ks) else 0.0 for j in range(s)]
            for i in range(s)]


def test_circulant_matches_formula_small():
    for s in range(2, 6):
        offsets = range(1, s)
        for r in range(1, s):
            for ks in itertools.combinations(offsets, r):
                assert make_circulant(s, ks).matrix.tolist() == brute_circulant(s, ks)


def test_rps_is_a_three_cycle():
    m = make_circulant(3, {1})
    assert dominates(m, 1, 2) and dominates(m, 2, 3) and dominates(m, 3, 1)
    assert not dominates(m, 2, 1)


def test_rpsls_each_beats_two():
    m = make_circulant(5, {1, 2})
    assert (m.matrix.sum(axis=1) == 2).all()
    assert (m.matrix.sum(axis=0) == 2).all()


@pytest.mark.parametrize("s,ks", [(3, set()), (3, {0}), (3, {3}), (5, {-1})])
def test_circulant_rejects_bad_offsets(s, ks):
    with pytest.raises(ValueError):
        make_circulant(s, ks)


def test_empty_never_dominates():
    m = default_dominance(3)
    assert not dominates(m, 0, 1)
    assert not dominates(m, 1, 0)
    assert win_rate(m, 0, 2) == 0.0


def test_species_out_of_range():
    with pytest.raises(ValueError):
        dominates(default_dominance(3), 4, 1)


def test_win_rate_rated():
    m = DominanceModel.from_matrix([[0, 0.3], [0, 0]])
    assert m.kind is DominanceKind.RATED
    assert win_rate(m, 1, 2) == pytest.approx(0.3)
    assert win_rate(m, 2, 1) == 0.0


@pytest.mark.parametrize("bad", [
    [[0, 1.5], [0, 0]],
    [[0, -0.1], [0, 0]],
    [[1, 0], [0, 0]],
])
def test_dominance_validation(bad):
    with pytest.raises(ValueError):
        DominanceModel.from_matrix(bad)


def test_binary_rejects_fractions():
    with pytest.raises(ValueError):
        DominanceModel(2, DominanceKind.BINARY, np.array([0, 0.5, 0, 0]))


def test_entries_are_read_only():
    m = default_dominance(3)
    with pytest.raises(ValueError):
        m.entries[1] = 0


def test_without_edge():
    m = make_circulant(5, {1, 2}).without_edge(1, 2)
    assert not dominates(m, 1, 2)
    assert dominates(m, 1, 3)
    assert m.matrix.sum() == 9


def test_default_dominance():
    assert default_dominance(3) == make_circulant(3, {1})
    assert default_dominance(5) == make_circulant(5, {1, 2})
    assert default_dominance(4) == make_circulant(4, {1})
    assert default_dominance(1).matrix.tolist() == [[0.0]]


def test_action_rates_reference_configuration():
    r = action_rates(3e-5, 200 * 200)
    assert (r.mu, r.sigma) == (1.0, 1.0)
    assert r.epsilon == pytest.approx(2.4)
    assert r.total == pytest.approx(4.4)


def test_action_rates_immobile():
    assert action_rates(0.0, 100).epsilon == 0.0
    with pytest.raises(ValueError):
        action_rates(-1e-5, 100)


VN = NeighborhoodSpec(4)
MOORE = NeighborhoodSpec(8)


def test_neighbours_torus():
    # 4 wide, 3 tall; cell 0 is the top-left corner
    assert neighbor_index(0, 0, VN, 4, 3, True) == 8  # up wraps to the last row
    assert neighbor_index(0, 2, VN, 4, 3, True) == 3  # left wraps to the last column
    assert neighbor_index(11, 1, VN, 4, 3, True) == 3
    assert neighbor_index(11, 7, MOORE, 4, 3, True) == 0


def test_neighbours_reflect():
    assert neighbor_index(0, 0, VN, 4, 3, False) == 4  # row -1 mirrors to row 1
    assert neighbor_index(0, 2, VN, 4, 3, False) == 1
    assert neighbor_index(11, 3, VN, 4, 3, False) == 10  # col 4 mirrors to col 2
    assert neighbor_index(11, 1, VN, 4, 3, False) == 7


def test_neighbour_argument_checks():
    with pytest.raises(ValueError):
        neighbor_index(0, 4, VN, 4, 3, True)
    with pytest.raises(ValueError):
        neighbor_index(12, 0, VN, 4, 3, True)
    with pytest.raises(ConfigError):
        NeighborhoodSpec(6)


@given(st.integers(2, 12), st.integers(2, 12), st.data())
def test_torus_opposite_round_trip(w, h, data):
    i = data.draw(st.integers(0, w * h - 1))
    d = data.draw(st.integers(0, 7))
    j = neighbor_index(i, d, MOORE, w, h, True)
    assert neighbor_index(j, int(OPPOSITE[d]), MOORE, w, h, True) == i


@given(st.integers(2, 12), st.integers(2, 12), st.data())
def test_reflect_stays_adjacent(w, h, data):
    i = data.draw(st.integers(0, w * h - 1))
    d = data.draw(st.integers(0, 7))
    j = neighbor_index(i, d, MOORE, w, h, False)
    assert 0 <= j < w * h and j != i
    assert abs(j // w - i // w) <= 1 and abs(j % w - i % w) <= 1


def test_init_lattice_empty_probability():
    p = SimParams(length=50, height=40, species=4)
    lat = init_lattice(p, np.random.default_rng(0))
    assert lat.cells.min() >= 1 and lat.cells.max() <= 4
    full = init_lattice(p.replace(empty_prob=1.0), np.random.default_rng(0))
    assert (full.cells == 0).all()
    some = init_lattice(p.replace(empty_prob=0.25), np.random.default_rng(0))
    assert abs((some.cells == 0).mean() - 0.25) < 0.03


def test_params_defaults():
    p = SimParams()
    assert (p.length, p.height, p.mcs_limit, p.neighbourhood) == (200, 200, 100_000, 4)
    assert (p.print_frequency, p.mobility, p.species, p.flux) == (200, 3e-5, 3, True)
    assert (p.empty_prob, p.num_randoms, p.max_step) == (0.0, 100_000_000, False)
    assert p.neighbourhood is Neighbourhood.VON_NEUMANN


@pytest.mark.parametrize("kw", [
    {"length": 1}, {"species": 0}, {"species": 65}, {"empty_prob": 1.5},
    {"mobility": -1.0}, {"print_frequency": 0}, {"mcs_limit": -1}, {"neighbourhood": 6},
])
def test_params_validation(kw):
    with pytest.raises(ConfigError):
        SimParams(**kw).validate()


def test_init_lattice_is_balanced():
    p = SimParams(length=1000, height=1000, species=3)
    counts = np.bincount(init_lattice(p, np.random.default_rng(4)).cells, minlength=4)
    sigma = np.sqrt(p.cells * (1 / 3) * (2 / 3))
    assert counts[0] == 0
    assert np.all(np.abs(counts[1:] - p.cells / 3) < 5 * sigma)
