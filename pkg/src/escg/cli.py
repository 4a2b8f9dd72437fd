"""Command-line entry point.

    escg [run] [--length 200 --height 200 --mcs 100000 ...]
    escg resume DIR [--mcs 200000]
    escg sweep {park,ablated,coexistence} [...]
    escg bench [--sizes 200 400 --modes serial parallel maxstep]
    escg tune [--length 200 --multiples 1 10 100 1000]

Exit codes: 0 success or stasis, 2 usage, 3 I/O, 4 file format, 5 engine abort.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path


from . import experiments as ex
from .engine import EngineAbort, Hooks, RunState, new_run, run, stasis
from .model import ConfigError, Neighbourhood, SimParams, default_dominance
from .persistence import (
    DENSITIES_FILE,
    Checkpoint,
    FormatError,
    export_densities,
    export_grid,
    import_dominance,
    load_checkpoint,
    output_dir_name,
    parse_bool,
    save_checkpoint,
    snapshot_name,
)
from .rng import align_num_randoms, make_streams

log = logging.getLogger("escg")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_FORMAT, EXIT_ENGINE = 0, 2, 3, 4, 5
SUBCOMMANDS = ("run", "resume", "sweep", "bench", "tune")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _bool(text):
    try:
        return parse_bool(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid boolean value: {text!r}") from None


def _neighbourhood(text):
    try:
        v = int(text)
    except ValueError:
        v = None
    if v not in (4, 8):
        raise argparse.ArgumentTypeError(f"neighbourhood must be 4 or 8, got {text!r}")
    return v


# flag -> (SimParams field, type)
SIM_FLAGS = {
    "--length": ("length", int),
    "--height": ("height", int),
    "--mcs": ("mcs_limit", int),
    "--neighbourhood": ("neighbourhood", _neighbourhood),
    "--printFrequency": ("print_frequency", int),
    "--mobility": ("mobility", float),
    "--species": ("species", int),
    "--flux": ("flux", _bool),
    "--empty": ("empty_prob", float),
    "--save": ("save", _bool),
    "--dominance": ("dominance_import", _bool),
    "--resume": ("resume", _bool),
    "--numRandoms": ("num_randoms", int),
    "--maxStep": ("max_step", _bool),
    "--seed": ("seed", int),
}


@dataclass
class Invocation:
    subcommand: str
    params: SimParams
    output: Path = Path("output")
    mode: str = "serial"
    workers: int = 1
    checkpoint: Path | None = None
    dominance_file: Path = Path("dominance.csv")
    sweep: ex.SweepSpec | None = None
    options: dict = field(default_factory=dict)
    explicit: frozenset = frozenset()  # SimParams fields given on the command line

    def __eq__(self, other):
        if not isinstance(other, Invocation):
            return NotImplemented
        a, b = dataclasses.asdict(self), dataclasses.asdict(other)
        a.pop("explicit"), b.pop("explicit")
        return a == b


def _add_sim_flags(p):
    for flag, (dest, typ) in SIM_FLAGS.items():
        p.add_argument(flag, dest=dest, type=typ, default=None)
    p.add_argument("--mode", choices=("serial", "parallel"), default="serial")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--output", type=Path, default=Path("output"))
    p.add_argument("--dominance-file", dest="dominance_file", type=Path,
                   default=Path("dominance.csv"))


def _floats(text):
    return [float(x) for x in text.split(",") if x]


def _ints(text):
    return [int(x) for x in text.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="escg", description="Evolutionary spatial cyclic game simulator")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)

    _add_sim_flags(sub.add_parser("run", help="run a simulation"))
    r = sub.add_parser("resume", help="continue from a saved checkpoint directory")
    r.add_argument("checkpoint", type=Path)
    _add_sim_flags(r)

    s = sub.add_parser("sweep", help="replication experiments")
    s.add_argument("kind", choices=("park", "ablated", "coexistence"))
    s.add_argument("--alphas", type=_floats, default=[0.15])
    s.add_argument("--beta", type=float, default=0.75)
    s.add_argument("--gamma", type=float, default=1.0)
    s.add_argument("--mobilities", type=_floats, default=[3e-5])
    s.add_argument("--length", type=int, default=None)
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--mcs", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mode", choices=("serial", "parallel", "maxstep"), default="serial")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--concurrent", type=int, default=1, help="trials run at once")
    s.add_argument("--dat", type=_bool, default=False)
    s.add_argument("--output", type=Path, default=Path("output"))

    b = sub.add_parser("bench", help="engine-mode timing matrix")
    b.add_argument("--sizes", type=_ints, default=[200, 400])
    b.add_argument("--modes", type=lambda t: t.split(","), default=["serial", "parallel", "maxstep"])
    b.add_argument("--mcs", type=int, default=10_000)
    b.add_argument("--runs", type=int, default=5)
    b.add_argument("--warmups", type=int, default=2)
    b.add_argument("--workers", type=int, default=None)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--dat", type=_bool, default=False)
    b.add_argument("--output", type=Path, default=Path("output"))

    t = sub.add_parser("tune", help="numRandoms tuning curve in maxStep mode")
    t.add_argument("--length", type=int, default=200)
    t.add_argument("--multiples", type=_ints, default=[1, 10, 100, 1000])
    t.add_argument("--mcs", type=int, default=1000)
    t.add_argument("--runs", type=int, default=3)
    t.add_argument("--warmups", type=int, default=1)
    t.add_argument("--workers", type=int, default=None)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--dat", type=_bool, default=False)
    t.add_argument("--output", type=Path, default=Path("output"))
    return parser


def parse_args(argv: list[str]) -> Invocation:
    """Parse argv into an Invocation. A missing subcommand means ``run``."""
    argv = list(argv)
    if not argv or argv[0] not in SUBCOMMANDS + ("-h", "--help"):
        argv = ["run", *argv]
    try:
        ns = build_parser().parse_args(argv)
    except argparse.ArgumentTypeError as exc:
        raise UsageError(str(exc)) from None
    cmd = ns.subcommand
    if cmd in ("run", "resume"):
        given = {dest: getattr(ns, dest) for dest, _ in SIM_FLAGS.values()
                 if getattr(ns, dest) is not None}
        params = SimParams(**given)
        if "neighbourhood" in given:
            params.neighbourhood = Neighbourhood(given["neighbourhood"])
        try:
            params.validate()
            params.num_randoms = align_num_randoms(params.num_randoms, params.cells)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if cmd == "run" and params.resume:
            cmd = "resume"
        workers = ns.workers if ns.workers is not None else (os.cpu_count() or 1)
        mode = ns.mode
        if mode == "serial" and ns.workers is None:
            workers = 1
        if workers < 1:
            raise UsageError(f"--workers must be positive, got {workers}")
        return Invocation(
            cmd, params, ns.output, mode, workers,
            getattr(ns, "checkpoint", None), ns.dominance_file,
            explicit=frozenset(given),
        )
    params = SimParams()
    if cmd == "sweep":
        spec = None
        opts = {"kind": ns.kind, "dat": ns.dat, "mobilities": ns.mobilities}
        if ns.kind == "park":
            try:
                spec = ex.SweepSpec(ns.alphas, ns.beta, ns.gamma, ns.length or 100, ns.trials,
                                    ns.mcs, ns.mode, ns.workers, ns.seed, ns.concurrent)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
        opts.update(length=ns.length, trials=ns.trials, mcs=ns.mcs, seed=ns.seed,
                    concurrent=ns.concurrent)
        return Invocation(cmd, params, ns.output, ns.mode, ns.workers, sweep=spec, options=opts)
    if cmd == "bench":
        bad = [m for m in ns.modes if m not in ("serial", "parallel", "maxstep")]
        if bad:
            raise UsageError(f"unknown mode {bad[0]!r}")
        opts = {"sizes": ns.sizes, "modes": ns.modes, "mcs": ns.mcs, "runs": ns.runs,
                "warmups": ns.warmups, "seed": ns.seed, "dat": ns.dat}
        return Invocation(cmd, params, ns.output, "bench", ns.workers or 0, options=opts)
    if cmd == "tune":
        opts = {"length": ns.length, "multiples": ns.multiples, "mcs": ns.mcs,
                "runs": ns.runs, "warmups": ns.warmups, "seed": ns.seed, "dat": ns.dat}
        return Invocation(cmd, params, ns.output, "maxstep", ns.workers or 0, options=opts)
    raise UsageError("no subcommand")


def format_args(inv: Invocation) -> list[str]:
    """Inverse of parse_args for run/resume invocations."""
    if inv.subcommand not in ("run", "resume"):
        raise ValueError("only run and resume invocations can be formatted")
    argv = [inv.subcommand]
    if inv.subcommand == "resume" and inv.checkpoint is not None:
        argv.append(str(inv.checkpoint))
    for flag, (dest, _) in SIM_FLAGS.items():
        v = getattr(inv.params, dest)
        if v is None:
            continue
        if isinstance(v, bool):
            text = "true" if v else "false"
        elif isinstance(v, float):
            text = repr(v)
        else:
            text = str(int(v))
        argv += [flag, text]
    argv += ["--mode", inv.mode, "--workers", str(inv.workers), "--output", str(inv.output),
             "--dominance-file", str(inv.dominance_file)]
    return argv


# ------------------------------------------------------------ orchestration


def _progress_printer(freq: int, out=None):
    last = {"bucket": None}

    def on_record(state: RunState):
        mcs = state.current_mcs
        bucket = mcs // freq
        if last["bucket"] is not None and bucket == last["bucket"]:
            return
        last["bucket"] = bucket
        counts = state.trace.counts[-1]
        dens = counts / counts.sum()
        print(",".join([str(mcs)] + [f"{d:.6g}" for d in dens]), file=out or sys.stdout,
              flush=True)

    return on_record


def _resolve_run(inv: Invocation):
    params = inv.params
    lattice, mcs, model, streams = None, 0, None, None
    if inv.subcommand == "resume":
        directory = inv.checkpoint or inv.output / output_dir_name(params)
        ckpt = load_checkpoint(directory)
        overrides = {k: getattr(params, k) for k in inv.explicit if k != "resume"}
        params = ckpt.params.replace(**overrides, resume=True)
        if "num_randoms" not in overrides:
            params.num_randoms = align_num_randoms(max(params.num_randoms, params.cells),
                                                   params.cells)
        lattice, mcs, model, streams = ckpt.lattice, ckpt.saved_mcs, ckpt.dominance, ckpt.streams
        outdir = Path(directory)
    else:
        outdir = inv.output / output_dir_name(params)
    if params.dominance_import:
        model = import_dominance(inv.dominance_file)
        params.species = model.size
    elif model is None:
        model = default_dominance(params.species)
    return params, lattice, mcs, model, streams, outdir


def _run_simulation(inv: Invocation) -> int:
    params, lattice, mcs, model, streams, outdir = _resolve_run(inv)
    state = new_run(params, model, lattice, mcs)
    params = state.params
    mode = "serial" if inv.mode == "serial" else ("maxstep" if params.max_step else "parallel")
    if mode == "serial":
        if streams is None or len(streams) != 1 or mcs == 0:
            streams = make_streams(params.seed, 1)
    else:
        streams = None

    if params.save:
        save_checkpoint(outdir, Checkpoint(params, state.lattice, model, state.current_mcs))

    def on_save(s: RunState):
        export_grid(s.lattice, s.current_mcs, outdir / snapshot_name(s.current_mcs))

    hooks = Hooks(on_record=_progress_printer(params.print_frequency), on_save=on_save)
    log.info("engine=%s workers=%d seed=%d", mode, inv.workers, params.seed)
    run(state, mode, inv.workers, streams=streams, hooks=hooks)

    outdir.mkdir(parents=True, exist_ok=True)
    export_densities(state.trace, outdir / DENSITIES_FILE)
    save_checkpoint(outdir, Checkpoint(params, state.lattice, model, state.current_mcs,
                                       streams if mode == "serial" else None))
    if stasis(state.trace):
        print(f"stasis at MCS {state.current_mcs}: alive species {sorted(state.trace.alive)}")
    return EXIT_OK


def _run_sweep(inv: Invocation) -> int:
    o = inv.options
    out = inv.output
    if o["kind"] == "park":
        table = ex.run_park_sweep(inv.sweep)
        path = ex.write_sweep_csv(table, out / "sweep.csv", o["dat"])
        for r in table.rows:
            print(f"alpha={r.alpha} species={r.species} survival={r.survival.mean:.3f} "
                  f"std={r.survival.std:.3f} n={r.survival.n}")
    elif o["kind"] == "ablated":
        res = ex.run_ablated_rpsls(o["length"] or 200, o["trials"], o["mcs"] or 1000,
                                   mode=inv.mode, workers=inv.workers, seed=o["seed"],
                                   concurrent=o["concurrent"])
        path = ex.write_extinction_csv(res, out / "extinction.csv", o["dat"])
        print(res.summary())
    else:
        results = [ex.run_coexistence_probe(m, o["length"] or 200, o["mcs"] or 10_000,
                                            o["trials"], mode=inv.mode, workers=inv.workers,
                                            seed=o["seed"], concurrent=o["concurrent"])
                   for m in o["mobilities"]]
        path = ex.write_coexistence_csv(results, out / "coexistence.csv", o["dat"])
        for r in results:
            p = r.probability
            print(f"M={r.mobility} coexistence={p.mean:.3f} std={p.std:.3f} n={p.n}")
    print(f"wrote {path}")
    return EXIT_OK


def _run_bench(inv: Invocation) -> int:
    o = inv.options
    rows = ex.run_bench_matrix(o["sizes"], o["modes"], o["mcs"], runs=o["runs"],
                               warmups=o["warmups"], workers=inv.workers or None, seed=o["seed"])
    for r in rows:
        s = r.summary
        print(f"L={r.length} mode={r.mode} workers={r.workers} seed={r.seed} "
              f"mean={s.mean:.3f}s std={s.std:.3f}s median={r.median:.3f}s n={s.n}")
    print(f"wrote {ex.write_bench_csv(rows, inv.output / 'bench.csv', o['dat'])}")
    return EXIT_OK


def _run_tune(inv: Invocation) -> int:
    o = inv.options
    rows = ex.run_tuning_curve(o["length"], o["multiples"], o["mcs"], runs=o["runs"],
                               warmups=o["warmups"], workers=inv.workers or None, seed=o["seed"])
    for r in rows:
        print(f"numRandoms={r.num_randoms} median={r.median:.3f}s")
    print(f"wrote {ex.write_tuning_csv(rows, inv.output / 'tuning.csv', o['dat'])}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        inv = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"escg: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if inv.subcommand in ("run", "resume"):
            return _run_simulation(inv)
        if inv.subcommand == "sweep":
            return _run_sweep(inv)
        if inv.subcommand == "bench":
            return _run_bench(inv)
        return _run_tune(inv)
    except (FormatError, ConfigError) as exc:
        print(f"escg: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except EngineAbort as exc:
        print(f"escg: engine abort: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    except OSError as exc:
        print(f"escg: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"escg: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
