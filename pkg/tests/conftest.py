import numpy as np
import pytest

from escg import Lattice, SimParams, default_dominance, new_run


def make_state(grid, model=None, mobility=0.0, flux=True, neighbourhood=4, seed=1, **kw):
    """RunState over an explicit grid (rows x cols)."""
    grid = np.asarray(grid, dtype=np.int32)
    h, w = grid.shape
    if model is None:
        model = default_dominance(3)
    p = SimParams(length=w, height=h, mobility=mobility, flux=flux,
                  neighbourhood=neighbourhood, species=model.size, seed=seed,
                  num_randoms=w * h, **kw)
    return new_run(p, model, Lattice(grid.ravel(), w, h))


@pytest.fixture
def tmp_out(tmp_path):
    return tmp_path / "out"


VERDICTS: list[str] = []


def verdict(number: int, ok: bool, detail: str) -> None:
    """Record one acceptance line; the terminal summary repeats them all."""
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {detail}"
    VERDICTS.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
