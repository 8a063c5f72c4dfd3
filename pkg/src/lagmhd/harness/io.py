"""Plain-text serialization of diagnostics streams and field snapshots."""
from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..diagnostics import DiagnosticsRecord
from ..evolve import SimState

SNAPSHOT_COLUMNS = ("r", "z", "R", "Z", "Theta_hat", "vr", "vtheta", "vz", "q")
FLOAT_FMT = "%.17g"


class OutputError(OSError):
    pass


@dataclass(frozen=True)
class Snapshot:
    t: float
    grid: dict
    config_hash: str
    columns: dict          # name -> (Nr, Nz) array


def write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_diagnostics(records, path) -> Path:
    """One JSON object per line, keys in record-field order."""
    path = Path(path)
    prev = -np.inf
    lines = []
    for rec in records:
        if rec.t < prev:
            raise ValueError(f"record stream not monotone in t ({rec.t} after {prev})")
        prev = rec.t
        lines.append(rec.to_json())
    write_text(path, "\n".join(lines) + ("\n" if lines else ""))
    return path


def read_diagnostics(path) -> list[DiagnosticsRecord]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return [DiagnosticsRecord.from_json(line) for line in text.splitlines() if line.strip()]


def snapshot_columns(state: SimState) -> dict:
    g = state.grid
    m, k = state.map, state.kin
    return {
        "r": g.r, "z": g.z, "R": m.R, "Z": g.z + m.Zd.values, "Theta_hat": m.Th.values,
        "vr": k.vr.values, "vtheta": k.vth.values, "vz": k.vz.values, "q": state.q.values,
    }


def format_snapshot(state: SimState, config_hash: str) -> str:
    g = state.grid
    cols = snapshot_columns(state)
    table = np.column_stack([cols[c].reshape(-1) for c in SNAPSHOT_COLUMNS])
    buf = io.StringIO()
    buf.write(f"# t = {state.t!r}\n")
    buf.write(f"# grid = {json.dumps(g.descriptor(), sort_keys=True)}\n")
    buf.write(f"# config_sha256 = {config_hash}\n")
    buf.write(f"# rows = {table.shape[0]}\n")
    np.savetxt(buf, table, fmt=FLOAT_FMT, delimiter=",", header=",".join(SNAPSHOT_COLUMNS),
               comments="# columns = ")
    return buf.getvalue()


def snapshot_path(directory, step: int, prefix: str = "snapshot") -> Path:
    return Path(directory) / f"{prefix}_{step:06d}.csv"


def write_snapshot(state: SimState, directory, step: int, config_hash: str) -> Path:
    path = snapshot_path(directory, step)
    write_text(path, format_snapshot(state, config_hash))
    return path


def read_snapshot(path) -> Snapshot:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    header = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            header[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    try:
        names = header["columns"].split(",")
        grid = json.loads(header["grid"])
        rows = int(header["rows"])
        t = float(header["t"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: malformed snapshot header ({exc})") from exc
    if tuple(names) != SNAPSHOT_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {names}")
    table = np.loadtxt(io.StringIO("\n".join(body)), delimiter=",", ndmin=2)
    if table.shape != (rows, len(names)) or rows != grid["Nr"] * grid["Nz"]:
        raise ValueError(f"{path}: table shape {table.shape} does not match header")
    shape = (grid["Nr"], grid["Nz"])
    cols = {n: table[:, i].reshape(shape) for i, n in enumerate(names)}
    return Snapshot(t, grid, header.get("config_sha256", ""), cols)
