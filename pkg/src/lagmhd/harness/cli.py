"""Command-line entry point: ``lagmhd {run,verify,mms,equilibrium}``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from ..evolve import PassError, PicardDivergence, StepSizeError
from ..geometry import GeometryError
from ..grid import Grid, GridError, interior_max
from ..magnetics import VacuumGeometryError
from ..pressure import AssemblyError, ConvergenceError
from . import checks
from .config import ConfigError, apply_overrides, load_text, parse_config
from .presets import SeedError, build_initial_state

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4
OUT_ENV = "LAGMHD_OUT"

NUMERICAL_ERRORS = (PassError, PicardDivergence, StepSizeError, GeometryError, AssemblyError,
                    ConvergenceError, VacuumGeometryError, FloatingPointError)


def _load(args):
    import yaml
    text = load_text(args.config) if args.config else "{}"
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError("<root>", f"not valid YAML/JSON: {exc}") from exc
    return parse_config(apply_overrides(raw, args.override))


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def cmd_run(args) -> int:
    from .runner import run_simulation
    cfg = _load(args)
    out = args.out or cfg.output.directory or os.environ.get(OUT_ENV)

    def progress(n, psi, _traj):
        _say(args, f"iterate {n}: Psi = {psi:.6e}")

    res = run_simulation(cfg, out_dir=out, on_iterate=progress)
    for f in res.flags:
        _say(args, f"FLAG {f.message}")
    _say(args, f"dt = {res.dt:.6g}, nodes = {len(res.trajectory)}, converged = {res.converged}")
    if out is not None:
        _say(args, f"wrote {len(res.files)} files to {out}")
    if not res.converged:
        print(f"Picard iteration did not reach psi_tol={cfg.iteration.psi_tol} "
              f"in {cfg.iteration.n_max} iterations", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _fmt(values) -> str:
    return ", ".join(f"{v:.3e}" for v in values)


def cmd_verify(args) -> int:
    ok = True
    geo = checks.geometry_identity_study()
    for mapname, rows in geo.items():
        for key, row in rows.items():
            good = min(row["orders"]) >= 1.9
            ok &= good
            _say(args, f"[{'PASS' if good else 'FAIL'}] {mapname} {key}: errors {_fmt(row['errors'])}"
                       f" orders {_fmt(row['orders'])}")
    hardy = checks.hardy_study()
    growth = max(v[-1] / v[0] for v in hardy.values())
    good = growth <= 1.1
    ok &= good
    _say(args, f"[{'PASS' if good else 'FAIL'}] hardy ratio over {len(hardy)} fields: "
               f"max {max(max(v) for v in hardy.values()):.4f}, growth {growth:.4f}")
    fr = checks.frozen_in_study()
    good = min(fr["orders"]) >= 1.9
    ok &= good
    _say(args, f"[{'PASS' if good else 'FAIL'}] frozen-in divergence: errors {_fmt(fr['errors'])}")
    spd = checks.spd_check(Grid(32, 32))
    good = spd["symmetry"] <= 1e-12 and spd["min_energy"] > 0
    ok &= good
    _say(args, f"[{'PASS' if good else 'FAIL'}] pressure operator: symmetry {spd['symmetry']:.2e}, "
               f"min energy {spd['min_energy']:.3e}")
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_mms(args) -> int:
    ok = True
    for name, row in checks.elliptic_mms_study().items():
        good = min(row["orders"]) >= 1.9
        ok &= good
        _say(args, f"[{'PASS' if good else 'FAIL'}] elliptic {name}: errors {_fmt(row['errors'])}"
                   f" orders {_fmt(row['orders'])}")
    for case in (1, 2):
        row = checks.temporal_mms_study(case)
        good = min(row["orders"]) >= 1.9
        ok &= good
        _say(args, f"[{'PASS' if good else 'FAIL'}] evolution mms({case}): errors {_fmt(row['total'])}"
                   f" orders {_fmt(row['orders'])}")
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_equilibrium(args) -> int:
    from ..evolve import IterateTrajectory, frozen_at, solve_state_pressure
    from ..pressure import momentum_source, pressure_gradient
    cfg = _load(args)
    data = build_initial_state(cfg)
    st, b0 = data.state, data.b0
    seed = IterateTrajectory((st,), 1.0)
    fr = frozen_at(seed, 0, b0, cfg.physics.eps)
    solved = solve_state_pressure(st, fr, b0)
    wR, wZ = momentum_source(fr, st.map, b0)
    gR, gZ = pressure_gradient(fr, solved.q.values)
    q_err = float(np.max(np.abs(solved.q.values - st.q.values)))
    bal = max(interior_max(wR - gR), interior_max(wZ - gZ))
    rep = data.seed_report
    _say(args, f"preset {cfg.preset}: seed admissible={rep['admissible']} "
               f"div={rep['div_residual']:.3e} delta={rep['delta']:.3e}")
    _say(args, f"pressure vs. radial balance: max |q - q_preset| = {q_err:.3e}")
    _say(args, f"momentum balance residual (interior): {bal:.3e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lagmhd", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (
        ("run", cmd_run, "run a configured simulation"),
        ("verify", cmd_verify, "identity and property suite"),
        ("mms", cmd_mms, "manufactured-solution convergence orders"),
        ("equilibrium", cmd_equilibrium, "construct a preset and report balance residuals"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", help="YAML or JSON configuration file")
        sp.add_argument("--out", help=f"output directory (default: config, then ${OUT_ENV})")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dot-path override, e.g. grid.Nr=32 (repeatable)")
        sp.add_argument("--quiet", action="store_true")
        sp.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SeedError, GridError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
