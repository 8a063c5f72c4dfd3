"""End-to-end orchestration of a configured run."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..diagnostics import Flag, startup_flags, trajectory_records, wellposedness_monitor
from ..evolve import EvolveConfig, IterateTrajectory, picard_iterate, stable_dt
from .config import SimConfig
from .io import write_diagnostics, write_snapshot, write_text
from .presets import InitialData, build_initial_state


@dataclass
class RunResult:
    config: SimConfig
    initial: InitialData
    trajectory: IterateTrajectory
    records: list
    psi_history: list[float]
    converged: bool
    dt: float
    flags: list[Flag] = field(default_factory=list)
    files: list[Path] = field(default_factory=list)


def evolve_config(cfg: SimConfig, data: InitialData) -> EvolveConfig:
    st = data.state
    dt = cfg.time.dt
    if dt is None:
        dt = stable_dt(cfg.time.T, st.grid, data.b0, st.kin, cfg.time.cfl_safety)
    # the step bound itself stays at the fixed stability constant
    return EvolveConfig(st, cfg.time.T, dt, eps=cfg.physics.eps, source=data.source)


def run_simulation(cfg: SimConfig, out_dir=None, on_iterate=None) -> RunResult:
    """Validate, build, iterate to convergence, diagnose and (optionally) write files.

    ``out_dir`` overrides ``cfg.output.directory``; with neither set nothing is written.
    """
    data = build_initial_state(cfg)
    flags = startup_flags(data.state, data.b0, cfg.physics.delta_min)
    ecfg = evolve_config(cfg, data)
    it = cfg.iteration
    res = picard_iterate(ecfg, data.b0, it.n_max, it.psi_tol, on_iterate=on_iterate)
    psi = res.psi_history[-1] if res.psi_history else None
    records = trajectory_records(res.trajectory, data.b0, psi, it.norm_order)
    flags += wellposedness_monitor(records, records[0].E, cfg.physics.delta_min,
                                   seen={f.kind for f in flags})
    result = RunResult(cfg, data, res.trajectory, records, res.psi_history, res.converged,
                       ecfg.dt, flags)
    directory = out_dir if out_dir is not None else cfg.output.directory
    if directory is not None:
        result.files = emit(result, Path(directory))
    return result


def emit(result: RunResult, directory: Path) -> list[Path]:
    cfg = result.config
    h = cfg.provenance_hash()
    files = [write_diagnostics(result.records, directory / "diagnostics.jsonl")]
    every = cfg.output.snapshot_every
    if cfg.output.emit_fields and every > 0:
        snaps = result.trajectory.snapshots
        last = len(snaps) - 1
        for k, s in enumerate(snaps):
            if k % every == 0 or k == last:
                files.append(write_snapshot(s, directory, k, h))
    summary = {
        "config_sha256": h,
        "config": cfg.to_dict(),
        "dt": result.dt,
        "converged": result.converged,
        "psi_history": result.psi_history,
        "flags": [f.message for f in result.flags],
    }
    summary["config"]["output"]["directory"] = None
    path = directory / "summary.json"
    write_text(path, json.dumps(summary, indent=2) + "\n")
    files.append(path)
    return files
