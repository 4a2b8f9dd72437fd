"""Replication and benchmarking harness.

Experiment families: ablated RPSLS extinction windows, mobility-driven
coexistence probes, survival sweeps on the eight-species rated network, and
wall-clock timing (engine-mode matrix and numRandoms tuning curve). Every
aggregate is reported as (mean, std, n); mean-only output hides bimodal
trial distributions.
"""

from __future__ import annotations

import csv
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .engine import Hooks, RunState, new_run, run
from .model import DominanceKind, DominanceModel, SimParams, make_circulant

# RPSLS species in circulant order: each beats the next two (mod 5).
ROCK, SCISSORS, LIZARD, PAPER, SPOCK = 1, 2, 3, 4, 5


def rpsls() -> DominanceModel:
    return make_circulant(5, {1, 2})


def ablated_rpsls() -> DominanceModel:
    """RPSLS with the Rock -> Scissors edge removed."""
    return rpsls().without_edge(ROCK, SCISSORS)


def park8(alpha: float, beta: float, gamma: float) -> DominanceModel:
    """Rated eight-species network with two four-species alliances.

    Species 1..8 sit on a ring; the odd species {1,3,5,7} form one alliance
    and the even species {2,4,6,8} the other. Edges (attacker -> defender):

    * ring, rate gamma:        i -> i+1 (mod 8), all eight species
    * alliance, rate alpha:    i -> i+2 (mod 8), i.e. 1->3->5->7->1 and 2->4->6->8->2
    * symmetry-breaking, beta: 1 -> 5, inside the odd alliance only

    Every other ordered pair is neutral (rate 0).
    """
    for name, v in (("alpha", alpha), ("beta", beta), ("gamma", gamma)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name}={v} outside [0, 1]")
    m = np.zeros((8, 8))
    for i in range(8):
        m[i, (i + 1) % 8] = gamma
        m[i, (i + 2) % 8] = alpha
    m[0, 4] = beta
    return DominanceModel(8, DominanceKind.RATED, m)


PRESETS = {
    "rps": lambda: make_circulant(3, {1}),
    "rpsls": rpsls,
    "ablated-rpsls": ablated_rpsls,
}


@dataclass
class Summary:
    mean: float
    std: float
    n: int

    @classmethod
    def of(cls, values: Sequence[float]) -> "Summary":
        vals = [float(v) for v in values]
        n = len(vals)
        if n == 0:
            return cls(float("nan"), float("nan"), 0)
        return cls(statistics.fmean(vals), statistics.stdev(vals) if n > 1 else 0.0, n)

    @property
    def single_sample(self) -> bool:
        return self.n == 1


def _run_trials(make_state, trials: int, mode: str, workers: int, concurrent: int,
                hooks_for=None) -> list[RunState]:
    """Run independent trials; ``make_state(k)`` builds trial k with its own seed."""

    def one(k):
        state = make_state(k)
        return run(state, mode, workers, hooks=hooks_for(k) if hooks_for else None)

    if concurrent <= 1:
        return [one(k) for k in range(trials)]
    with ThreadPoolExecutor(concurrent, thread_name_prefix="escg-trial") as pool:
        return list(pool.map(one, range(trials)))


# ------------------------------------------------------------ ablated RPSLS


@dataclass
class ExtinctionResult:
    times: list[int | None]  # None = censored (still alive at the horizon)
    horizon: int
    seeds: list[int]
    species: int = PAPER

    @property
    def uncensored(self) -> list[int]:
        return [t for t in self.times if t is not None]

    def summary(self) -> dict:
        t = self.uncensored
        return {
            "trials": len(self.times),
            "extinct": len(t),
            "censored": len(self.times) - len(t),
            "mean": statistics.fmean(t) if t else float("nan"),
            "std": statistics.stdev(t) if len(t) > 1 else 0.0,
            "min": min(t) if t else None,
            "max": max(t) if t else None,
        }

    def fraction_within(self, lo: int, hi: int) -> float:
        return sum(1 for t in self.times if t is not None and lo <= t <= hi) / len(self.times)


def run_ablated_rpsls(length: int = 200, trials: int = 20, mcs: int = 1000, *,
                      mode: str = "serial", workers: int = 1, seed: int = 0,
                      intact: bool = False, concurrent: int = 1,
                      base: SimParams | None = None) -> ExtinctionResult:
    """First MCS at which Paper is absent, per trial, censored at ``mcs``.

    ``intact=True`` runs the unablated RPSLS network as a control.
    """
    model = rpsls() if intact else ablated_rpsls()
    base = base or SimParams()
    seeds = [seed + k for k in range(trials)]

    def make(k):
        p = base.replace(length=length, height=length, mcs_limit=mcs, species=5,
                         seed=seeds[k], num_randoms=min(base.num_randoms, 10 * length * length))
        return new_run(p, model)

    stop = Hooks(stop=lambda counts: counts[PAPER] == 0)
    states = _run_trials(make, trials, mode, workers, concurrent, lambda k: stop)
    times = [s.trace.first_absent(PAPER) for s in states]
    return ExtinctionResult(times, mcs, seeds)


# ------------------------------------------------------------ coexistence


@dataclass
class CoexistenceResult:
    mobility: float
    length: int
    mcs: int
    alive_counts: list[int]
    seeds: list[int]

    @property
    def coexisting(self) -> list[bool]:
        return [a == 3 for a in self.alive_counts]

    @property
    def probability(self) -> Summary:
        return Summary.of([float(c) for c in self.coexisting])


def run_coexistence_probe(mobility: float, length: int = 200, mcs: int = 10_000,
                          trials: int = 10, *, mode: str = "serial", workers: int = 1,
                          seed: int = 0, empty_prob: float = 0.1, concurrent: int = 1,
                          num_randoms: int | None = None) -> CoexistenceResult:
    """Fraction of three-species RPS trials with all three species alive at ``mcs``."""
    model = make_circulant(3, {1})
    seeds = [seed + k for k in range(trials)]
    n = length * length

    def make(k):
        p = SimParams(length=length, height=length, mcs_limit=mcs, mobility=mobility,
                      species=3, empty_prob=empty_prob, seed=seeds[k],
                      num_randoms=num_randoms or 10 * n)
        return new_run(p, model)

    states = _run_trials(make, trials, mode, workers, concurrent)
    return CoexistenceResult(mobility, length, mcs, [len(s.trace.alive) for s in states], seeds)


# ------------------------------------------------------------ park sweep


@dataclass
class SweepSpec:
    alphas: list[float]
    beta: float = 0.75
    gamma: float = 1.0
    length: int = 100
    trials: int = 20
    mcs: int | None = None  # defaults to L**2
    mode: str = "serial"
    workers: int = 1
    seed: int = 0
    concurrent: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for v in [*self.alphas, self.beta, self.gamma]:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"rate {v} outside [0, 1]")

    @property
    def horizon(self) -> int:
        return self.length ** 2 if self.mcs is None else self.mcs


@dataclass
class SurvivalRow:
    alpha: float
    species: int
    survival: Summary

    @property
    def extinction_probability(self) -> float:
        return 1.0 - self.survival.mean


@dataclass
class SurvivalTable:
    spec: SweepSpec
    rows: list[SurvivalRow] = field(default_factory=list)
    alive: dict[float, list[set[int]]] = field(default_factory=dict)

    def get(self, alpha: float, species: int) -> SurvivalRow:
        for r in self.rows:
            if r.alpha == alpha and r.species == species:
                return r
        raise KeyError((alpha, species))

    def surviving_counts(self, alpha: float) -> dict[int, float]:
        """Probability of each number of surviving species at ``alpha``."""
        sizes = [len(a) for a in self.alive[alpha]]
        return {k: sizes.count(k) / len(sizes) for k in sorted(set(sizes))}


def run_park_sweep(spec: SweepSpec) -> SurvivalTable:
    """Immobile rated eight-species runs for each alpha; survival per species."""
    table = SurvivalTable(spec)
    n = spec.length ** 2
    for alpha in spec.alphas:
        model = park8(alpha, spec.beta, spec.gamma)

        def make(k, model=model, alpha=alpha):
            p = SimParams(length=spec.length, height=spec.length, mcs_limit=spec.horizon,
                          mobility=0.0, species=8, seed=spec.seed + k,
                          num_randoms=10 * n)
            return new_run(p, model)

        states = _run_trials(make, spec.trials, spec.mode, spec.workers, spec.concurrent)
        alive = [set(s.trace.alive) for s in states]
        table.alive[alpha] = alive
        for sp in range(1, 9):
            table.rows.append(SurvivalRow(alpha, sp, Summary.of([sp in a for a in alive])))
    return table


# ------------------------------------------------------------ benchmarks


@dataclass
class BenchRow:
    length: int
    mode: str
    workers: int
    seed: int
    mcs: int
    num_randoms: int
    times: list[float]

    @property
    def summary(self) -> Summary:
        return Summary.of(self.times)

    @property
    def median(self) -> float:
        return statistics.median(self.times)


def time_run(params: SimParams, model: DominanceModel, mode: str, workers: int) -> float:
    state = new_run(params.replace(), model)
    t0 = time.perf_counter()
    run(state, mode, workers)
    return time.perf_counter() - t0


def run_bench_matrix(sizes: Iterable[int], modes: Iterable[str] = ("serial", "parallel", "maxstep"),
                     mcs: int = 10_000, *, runs: int = 5, warmups: int = 2,
                     workers: int | None = None, seed: int = 0,
                     num_randoms: int | None = None) -> list[BenchRow]:
    """Wall-clock per (L, mode): ``warmups`` discarded runs then ``runs`` timed ones.

    All timed runs of one cell share a seed so they do identical work.
    """
    workers = workers or os.cpu_count() or 1
    model = make_circulant(3, {1})
    rows = []
    for length in sizes:
        n = length * length
        nr = num_randoms or 10 * n
        params = SimParams(length=length, height=length, mcs_limit=mcs, seed=seed,
                           num_randoms=nr)
        for mode in modes:
            for _ in range(warmups):
                time_run(params, model, mode, workers)
            times = [time_run(params, model, mode, workers) for _ in range(runs)]
            rows.append(BenchRow(length, mode, workers, seed, mcs, nr, times))
    return rows


def run_tuning_curve(length: int = 200, multiples: Iterable[int] = (1, 10, 100, 1000),
                     mcs: int = 1000, *, runs: int = 3, warmups: int = 1,
                     workers: int | None = None, seed: int = 0) -> list[BenchRow]:
    """maxStep wall-clock as a function of numRandoms = multiple * N."""
    workers = workers or os.cpu_count() or 1
    model = make_circulant(3, {1})
    n = length * length
    rows = []
    for mult in multiples:
        params = SimParams(length=length, height=length, mcs_limit=mcs, seed=seed,
                           num_randoms=mult * n, max_step=True)
        for _ in range(warmups):
            time_run(params, model, "maxstep", workers)
        times = [time_run(params, model, "maxstep", workers) for _ in range(runs)]
        rows.append(BenchRow(length, "maxstep", workers, seed, mcs, mult * n, times))
    return rows


# ------------------------------------------------------------ output files


def _write(path, header, rows, dat=False):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows([header, *rows])
    if dat:
        with open(path.with_suffix(".dat"), "w") as fh:
            fh.write("# " + " ".join(header) + "\n")
            for r in rows:
                fh.write(" ".join("nan" if v is None else str(v) for v in r) + "\n")
    return path


def write_sweep_csv(table: SurvivalTable, path, dat=False):
    rows = [(r.alpha, r.species, r.survival.mean, r.survival.std, r.survival.n)
            for r in table.rows]
    return _write(path, ["alpha", "species", "survival_prob", "std", "n"], rows, dat)


def write_extinction_csv(result: ExtinctionResult, path, dat=False):
    rows = [(k, s, "" if t is None else t, int(t is None))
            for k, (s, t) in enumerate(zip(result.seeds, result.times))]
    return _write(path, ["trial", "seed", "extinction_mcs", "censored"], rows, dat)


def write_coexistence_csv(results: Sequence[CoexistenceResult], path, dat=False):
    rows = [(r.mobility, r.length, r.mcs, r.probability.mean, r.probability.std,
             r.probability.n) for r in results]
    return _write(path, ["mobility", "L", "mcs", "coexistence_prob", "std", "n"], rows, dat)


def write_bench_csv(rows: Sequence[BenchRow], path, dat=False):
    out = [(r.length, r.mode, r.workers, r.seed, r.mcs, r.num_randoms, r.summary.mean,
            r.summary.std, r.median, r.summary.n) for r in rows]
    return _write(path, ["L", "mode", "workers", "seed", "mcs", "num_randoms", "mean_s",
                         "std_s", "median_s", "n"], out, dat)


def write_tuning_csv(rows: Sequence[BenchRow], path, dat=False):
    out = [(r.num_randoms, r.num_randoms // (r.length ** 2), r.length, r.workers, r.seed,
            r.summary.mean, r.summary.std, r.median, r.summary.n) for r in rows]
    return _write(path, ["num_randoms", "multiple", "L", "workers", "seed", "mean_s",
                         "std_s", "median_s", "n"], out, dat)
