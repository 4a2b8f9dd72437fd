"""CSV checkpoint and export formats.

grid.csv        H rows of L comma-separated cell values, then one line with the MCS
params.csv      key,value rows, one per configuration field
dominance.csv   S x S matrix; bare 0/1 tokens load as binary, any real (even "1.0") as rated
densities.csv   header mcs,count_0..count_S then one row per record
rng_state.csv   optional; one row per stream: pos then 624 state words
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .model import (
    DominanceKind,
    DominanceModel,
    Lattice,
    Neighbourhood,
    SimParams,
    default_dominance,
)
from .rng import STATE_VECTOR_LENGTH, MtState

GRID_FILE = "grid.csv"
PARAMS_FILE = "params.csv"
DOMINANCE_FILE = "dominance.csv"
DENSITIES_FILE = "densities.csv"
RNG_FILE = "rng_state.csv"


class FormatError(ValueError):
    """Malformed checkpoint or export file."""

    def __init__(self, path, line: int | None, message: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


@dataclass
class Checkpoint:
    params: SimParams
    lattice: Lattice
    dominance: DominanceModel
    saved_mcs: int
    streams: list[MtState] | None = None


def _fmt_real(x: float) -> str:
    return repr(float(x))


def _write_rows(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerows(rows)


def export_grid(lattice: Lattice, mcs: int, path) -> None:
    rows = lattice.grid().tolist()
    rows.append([int(mcs)])
    _write_rows(path, rows)


def import_grid(path, species: int | None = None) -> tuple[Lattice, int]:
    """Read a grid file; ``species`` bounds the allowed cell values when given."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh)]
    while rows and not rows[-1]:
        rows.pop()
    if len(rows) < 2:
        raise FormatError(path, len(rows) or None, "need at least one row and an MCS line")
    trailer = rows[-1]
    if len(trailer) != 1:
        raise FormatError(path, len(rows), f"MCS line must hold one value, got {len(trailer)}")
    try:
        mcs = int(trailer[0])
    except ValueError:
        raise FormatError(path, len(rows), f"MCS value {trailer[0]!r} is not an integer") from None
    body = rows[:-1]
    width = len(body[0])
    out = []
    for lineno, row in enumerate(body, start=1):
        if len(row) != width:
            raise FormatError(path, lineno, f"expected {width} values, got {len(row)}")
        try:
            vals = [int(v) for v in row]
        except ValueError:
            raise FormatError(path, lineno, "non-integer cell value") from None
        bad = [v for v in vals if v < 0 or (species is not None and v > species)]
        if bad:
            raise FormatError(path, lineno, f"cell value {bad[0]} out of range")
        out.append(vals)
    grid = np.array(out, dtype=np.int32)
    if width < 2 or len(body) < 2:
        raise FormatError(path, None, "lattice must be at least 2 x 2")
    return Lattice(grid.ravel(), width, len(body)), mcs


_PARAM_KEYS = {
    "length": "length",
    "height": "height",
    "mcs": "mcs_limit",
    "neighbourhood": "neighbourhood",
    "printFrequency": "print_frequency",
    "mobility": "mobility",
    "species": "species",
    "flux": "flux",
    "empty": "empty_prob",
    "save": "save",
    "dominance": "dominance_import",
    "resume": "resume",
    "numRandoms": "num_randoms",
    "maxStep": "max_step",
    "seed": "seed",
}
_FIELD_TO_KEY = {v: k for k, v in _PARAM_KEYS.items()}


def _param_text(name: str, value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return _fmt_real(value)
    return str(int(value))


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def export_params(params: SimParams, path) -> None:
    rows = [(_FIELD_TO_KEY[f.name], _param_text(f.name, getattr(params, f.name)))
            for f in fields(SimParams)]
    _write_rows(path, rows)


def import_params(path) -> SimParams:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    values = {}
    for lineno, row in enumerate(rows, start=1):
        if len(row) != 2:
            raise FormatError(path, lineno, "expected key,value")
        key, text = row
        if key not in _PARAM_KEYS:
            raise FormatError(path, lineno, f"unknown key {key!r}")
        name = _PARAM_KEYS[key]
        try:
            if name in ("flux", "save", "dominance_import", "resume", "max_step"):
                val = parse_bool(text)
            elif name in ("mobility", "empty_prob"):
                val = float(text)
            elif name == "neighbourhood":
                val = Neighbourhood(int(text))
            elif name == "seed":
                val = int(text) if text else None
            else:
                val = int(text)
        except ValueError as exc:
            raise FormatError(path, lineno, f"bad value for {key}: {exc}") from None
        values[name] = val
    # seed is optional
    missing = [_FIELD_TO_KEY[f.name] for f in fields(SimParams)
               if f.name not in values and f.name != "seed"]
    if missing:
        raise FormatError(path, None, f"missing key(s): {', '.join(missing)}")
    return SimParams(**values)


def export_dominance(model: DominanceModel, path) -> None:
    m = model.matrix
    if model.kind is DominanceKind.BINARY:
        rows = m.astype(int).tolist()
    else:
        rows = [[_fmt_real(x) for x in row] for row in m]
    _write_rows(path, rows)


def import_dominance(path) -> DominanceModel:
    """Load an S x S matrix; rated if any token is not a bare ``0`` or ``1``."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise FormatError(path, None, "empty dominance file")
    size = len(rows)
    vals = []
    integral = True
    for lineno, row in enumerate(rows, start=1):
        if len(row) != size:
            raise FormatError(path, lineno, f"matrix is not square: expected {size} values, got {len(row)}")
        try:
            vals.append([float(v) for v in row])
        except ValueError:
            raise FormatError(path, lineno, "non-numeric entry") from None
        integral &= all(v.strip() in ("0", "1") for v in row)
    m = np.array(vals)
    if np.any(m < 0) or np.any(m > 1) or not np.all(np.isfinite(m)):
        raise FormatError(path, None, "entries must lie in [0, 1]")
    kind = DominanceKind.BINARY if integral else DominanceKind.RATED
    try:
        return DominanceModel(size, kind, m)
    except ValueError as exc:
        raise FormatError(path, None, str(exc)) from None


def export_densities(trace, path) -> None:
    arr = trace.as_array()
    width = arr.shape[1] - 1 if arr.size else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mcs"] + [f"count_{k}" for k in range(width)])
        w.writerows(arr.tolist())


def export_streams(streams: list[MtState], path) -> None:
    _write_rows(path, [[st.index] + st.state.tolist() for st in streams])


def import_streams(path) -> list[MtState]:
    out = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != STATE_VECTOR_LENGTH + 1:
                raise FormatError(path, lineno, "stream row must hold pos and 624 words")
            pos, *words = (int(v) for v in row)
            if not 0 <= pos <= STATE_VECTOR_LENGTH:
                raise FormatError(path, lineno, f"stream position {pos} out of range")
            out.append(MtState(np.array(words, dtype=np.uint32), np.array([pos], dtype=np.int64)))
    return out


def output_dir_name(params: SimParams) -> str:
    """e.g. ``L200_H200_n4_m3e-05_flux1_s3`` for the defaults."""
    return (
        f"L{params.length}_H{params.height}_n{int(params.neighbourhood)}"
        f"_m{params.mobility!r}_flux{int(params.flux)}_s{params.species}"
    )


def snapshot_name(mcs: int) -> str:
    return f"grid_{mcs:08d}.csv"


def save_checkpoint(directory, ckpt: Checkpoint) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    export_params(ckpt.params, d / PARAMS_FILE)
    export_grid(ckpt.lattice, ckpt.saved_mcs, d / GRID_FILE)
    export_dominance(ckpt.dominance, d / DOMINANCE_FILE)
    if ckpt.streams is not None:
        export_streams(ckpt.streams, d / RNG_FILE)
    elif (d / RNG_FILE).exists():
        os.remove(d / RNG_FILE)
    return d


def load_checkpoint(directory) -> Checkpoint:
    d = Path(directory)
    if not (d / GRID_FILE).exists() or not (d / PARAMS_FILE).exists():
        raise FileNotFoundError(f"no checkpoint in {d}")
    params = import_params(d / PARAMS_FILE)
    dominance = import_dominance(d / DOMINANCE_FILE) if (d / DOMINANCE_FILE).exists() else None
    if dominance is not None:
        params.species = dominance.size
    lattice, mcs = import_grid(d / GRID_FILE, params.species)
    if (lattice.length, lattice.height) != (params.length, params.height):
        raise FormatError(d / GRID_FILE, None, "grid dimensions do not match params")
    streams = import_streams(d / RNG_FILE) if (d / RNG_FILE).exists() else None
    if dominance is None:
        dominance = default_dominance(params.species)
    return Checkpoint(params, lattice, dominance, mcs, streams)
