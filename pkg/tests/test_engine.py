import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from conftest import make_state
from escg.engine import (
    EngineAbort,
    Hooks,
    StepDraw,
    densities,
    elementary_step,
    new_run,
    run,
    save_intervals,
    stasis,
)
from escg.experiments import ablated_rpsls, run_ablated_rpsls
from escg.model import DominanceModel, Lattice, SimParams, default_dominance
from escg.rng import make_streams

# with mobility 0 the weights are (eps, mu, sigma) = (0, 1, 1): actions below 0.5
# interact and the rest reproduce
INTERACT, REPRODUCE = 0.25, 0.75


def cells(state):
    return state.lattice.grid().tolist()


def test_same_species_is_a_no_op():
    s = make_state([[1, 1], [2, 3]])
    elementary_step(s, StepDraw(0, 3, INTERACT))
    assert cells(s) == [[1, 1], [2, 3]]


def test_attacker_wins():
    s = make_state([[1, 2], [3, 3]])
    elementary_step(s, StepDraw(0, 3, INTERACT))
    assert cells(s) == [[1, 0], [3, 3]]


def test_defender_wins():
    # 1 beats 2, so selecting the 2 and attacking the 1 empties the selected cell
    s = make_state([[2, 1], [3, 3]])
    elementary_step(s, StepDraw(0, 3, INTERACT))
    assert cells(s) == [[0, 1], [3, 3]]


def test_interaction_with_empty_does_nothing():
    s = make_state([[1, 0], [3, 3]])
    elementary_step(s, StepDraw(0, 3, INTERACT))
    assert cells(s) == [[1, 0], [3, 3]]


def test_reproduction_fills_either_side():
    s = make_state([[1, 0], [3, 3]])
    elementary_step(s, StepDraw(0, 3, REPRODUCE))
    assert cells(s) == [[1, 1], [3, 3]]
    s = make_state([[0, 2], [3, 3]])
    elementary_step(s, StepDraw(0, 3, REPRODUCE))
    assert cells(s) == [[2, 2], [3, 3]]


def test_reproduction_between_occupied_cells_does_nothing():
    s = make_state([[1, 2], [3, 3]])
    elementary_step(s, StepDraw(0, 3, REPRODUCE))
    assert cells(s) == [[1, 2], [3, 3]]


def test_top_of_action_range_reproduces():
    s = make_state([[1, 0], [3, 3]])
    elementary_step(s, StepDraw(0, 3, 1.0))
    assert cells(s) == [[1, 1], [3, 3]]


def test_migration_swaps():
    # 2x2 lattice, M=0.25 -> eps = 2 * 0.25 * 4 = 2, total 4: action < 0.5 migrates
    s = make_state([[1, 0], [3, 2]], mobility=0.25)
    elementary_step(s, StepDraw(0, 3, 0.1))
    assert cells(s) == [[0, 1], [3, 2]]
    elementary_step(s, StepDraw(1, 1, 0.4))
    assert cells(s) == [[0, 2], [3, 1]]


def test_moore_diagonal_step():
    s = make_state([[1, 3, 3], [3, 2, 3], [3, 3, 3]], neighbourhood=8)
    elementary_step(s, StepDraw(0, 7, INTERACT))
    assert s.lattice.grid()[1, 1] == 0


def test_reflecting_edge():
    s = make_state([[1, 2, 3], [3, 3, 3]], flux=False)
    elementary_step(s, StepDraw(0, 2, INTERACT))  # left of col 0 mirrors to col 1
    assert cells(s) == [[1, 0, 3], [3, 3, 3]]


@pytest.mark.parametrize("roll,expected", [(0.29, 0), (0.31, 2)])
def test_rated_attack_uses_roll(roll, expected):
    m = DominanceModel.from_matrix([[0, 0.3], [0, 0]])
    s = make_state([[1, 2], [1, 1]], model=m)
    elementary_step(s, StepDraw(0, 3, INTERACT, roll))
    assert s.lattice.grid()[0, 1] == expected


def test_rated_reverse_edge_empties_attacker():
    m = DominanceModel.from_matrix([[0, 0.3], [0, 0]])
    s = make_state([[2, 1], [1, 1]], model=m)
    elementary_step(s, StepDraw(0, 3, INTERACT, 0.1))
    assert s.lattice.grid()[0, 0] == 0


def test_rate_one_always_wins():
    m = DominanceModel.from_matrix([[0, 1.0], [0, 0]], kind=None)
    rated = DominanceModel(2, m.kind.RATED, m.matrix)
    s = make_state([[1, 2], [1, 1]], model=rated)
    elementary_step(s, StepDraw(0, 3, INTERACT, 1.0))
    assert s.lattice.grid()[0, 1] == 0


def test_corrupt_value_aborts():
    s = make_state([[1, 2], [3, 3]])
    s.lattice.cells[1] = 9
    with pytest.raises(EngineAbort):
        elementary_step(s, StepDraw(0, 3, INTERACT))


def test_draw_out_of_range():
    s = make_state([[1, 2], [3, 3]])
    with pytest.raises(ValueError):
        elementary_step(s, StepDraw(0, 4, INTERACT))


def test_save_intervals():
    assert save_intervals(100) == {0, 1, 2, 5, 10, 20, 50, 100}
    assert save_intervals(37) == {0, 1, 2, 5, 10, 20, 37}
    assert save_intervals(0) == {0}


def test_densities_with_workers():
    from concurrent.futures import ThreadPoolExecutor
    lat = Lattice(np.array([0, 1, 1, 2, 3, 3, 3, 0, 1], dtype=np.int32), 3, 3)
    with ThreadPoolExecutor(3) as ex:
        assert densities(lat, 3, ex, 3).tolist() == [2, 3, 1, 3]
    assert densities(lat, 3).tolist() == [2, 3, 1, 3]
    with pytest.raises(ValueError):
        densities(lat, 2)


def small_params(**kw):
    base = dict(length=24, height=16, mcs_limit=60, mobility=1e-3, species=3, seed=5,
                num_randoms=24 * 16 * 7)
    base.update(kw)
    return SimParams(**base)


@pytest.mark.parametrize("mode", ["serial", "parallel", "maxstep"])
def test_conservation(mode):
    p = small_params(empty_prob=0.2)
    seen = []
    s = new_run(p, default_dominance(3))
    run(s, mode, 3, hooks=Hooks(on_record=lambda st: seen.append(int(st.trace.counts[-1].sum()))))
    assert seen and all(c == p.cells for c in seen)


@settings(max_examples=15, deadline=None)
@given(
    st.integers(4, 20), st.integers(4, 20), st.sampled_from([3, 4, 5]),
    st.sampled_from([4, 8]), st.booleans(), st.floats(0, 0.4), st.floats(0, 1e-2),
    st.sampled_from(["serial", "parallel", "maxstep"]), st.integers(0, 2**32),
)
def test_conservation_fuzz(w, h, s, nb, flux, empty, mob, mode, seed):
    p = SimParams(length=w, height=h, mcs_limit=20, species=s, neighbourhood=nb, flux=flux,
                  empty_prob=empty, mobility=mob, seed=seed, num_randoms=w * h * 3)
    state = run(new_run(p, default_dominance(s)), mode, 2)
    for c in state.trace.counts:
        assert c.sum() == w * h


def test_extinct_species_stay_extinct():
    p = small_params(mcs_limit=400, length=12, height=12, species=5)
    s = run(new_run(p, ablated_rpsls()), "serial")
    gone = set()
    for c in s.trace.counts:
        now = {k for k in range(1, 6) if c[k] == 0}
        assert gone <= now
        gone = now


def test_serial_is_deterministic():
    p = small_params()
    a = run(new_run(p.replace(), default_dominance(3)), "serial")
    b = run(new_run(p.replace(), default_dominance(3)), "serial")
    assert a.lattice == b.lattice
    assert np.array_equal(a.trace.as_array(), b.trace.as_array())


@pytest.mark.parametrize("model", [default_dominance(3),
                                   DominanceModel.from_matrix([[0, .6, 0], [0, 0, .4], [.9, 0, 0]])])
def test_single_worker_engines_agree(model):
    p = small_params(num_randoms=24 * 16 * 5)
    out = [run(new_run(p.replace(), model), m, 1).lattice for m in ("serial", "parallel", "maxstep")]
    assert out[0] == out[1] == out[2]


def test_maxstep_truncates_last_batch():
    p = small_params(mcs_limit=25, num_randoms=24 * 16 * 10)
    s = run(new_run(p, default_dominance(3)), "maxstep", 1)
    assert s.current_mcs == 25
    assert s.trace.steps == [0, 10, 20, 25]


def test_parallel_records_every_mcs():
    s = run(new_run(small_params(mcs_limit=12), default_dominance(3)), "parallel", 2)
    assert s.trace.steps == list(range(13))


def test_single_species_stops_immediately():
    p = small_params(species=1)
    s = run(new_run(p, default_dominance(1)), "serial")
    assert s.current_mcs == 0 and stasis(s.trace)


def test_empty_lattice_is_stasis():
    s = make_state([[0, 0], [0, 0]])
    s.params.mcs_limit = 10
    run(s, "serial")
    assert s.current_mcs == 0


def test_stop_hook():
    hooks = Hooks(stop=lambda counts: True)
    s = run(new_run(small_params(), default_dominance(3)), "parallel", 1, hooks=hooks)
    assert s.current_mcs == 0


def test_serial_with_explicit_streams_advances_them():
    streams = make_streams(5, 1)
    before = streams[0].copy()
    run(new_run(small_params(mcs_limit=3), default_dominance(3)), "serial", streams=streams)
    assert streams[0] != before


def test_abort_restores_last_completed_mcs():
    p = small_params(mcs_limit=500, length=4, height=4, num_randoms=16)
    state = new_run(p, default_dominance(3))
    snap = {}

    def corrupt(st):
        if st.current_mcs == 3:
            st.lattice.cells[5] = 77
            snap["grid"] = st.lattice.cells.copy()

    with pytest.raises(EngineAbort) as info:
        run(state, "parallel", 2, hooks=Hooks(on_record=corrupt))
    assert info.value.state is state
    assert np.array_equal(state.lattice.cells, snap["grid"])
    assert state.current_mcs == state.trace.steps[-1]


def test_unknown_mode():
    with pytest.raises(ValueError):
        run(new_run(small_params(), default_dominance(3)), "gpu")


def test_new_run_checks_species():
    with pytest.raises(ValueError):
        new_run(small_params(species=4), default_dominance(3))


def test_new_run_draws_seed():
    s = new_run(small_params(seed=None), default_dominance(3))
    assert s.params.seed is not None


def test_multi_worker_matches_serial_in_distribution():
    kw = dict(length=24, trials=30, mcs=3000)
    a = run_ablated_rpsls(**kw, mode="serial", seed=100)
    b = run_ablated_rpsls(**kw, mode="parallel", workers=3, seed=900)
    ta = [t if t is not None else kw["mcs"] for t in a.times]
    tb = [t if t is not None else kw["mcs"] for t in b.times]
    assert stats.ks_2samp(ta, tb).pvalue > 0.01


def test_zero_mcs_limit_records_once():
    p = small_params(mcs_limit=0)
    s = new_run(p, default_dominance(3))
    before = s.lattice.copy()
    run(s, "serial")
    assert s.trace.steps == [0] and s.lattice == before


def test_immobile_rated_model_never_migrates():
    from escg.experiments import park8
    p = small_params(species=8, mobility=0.0, mcs_limit=30)
    s = new_run(p, park8(0.15, 0.75, 1.0))
    assert s.rates.epsilon == 0.0
    run(s, "serial")
    for c in s.trace.counts:
        assert c.sum() == p.cells
