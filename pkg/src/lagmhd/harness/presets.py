"""Initial data: equilibria, perturbed equilibria and manufactured solutions."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..evolve import Kinematics, SimState, Source
from ..geometry import FlowMapState
from ..grid import Grid, Parity, ScalarField
from ..magnetics import MagneticSeed, VacuumState, boundary_pressure, vacuum_A, validate_seed
from .config import ConfigError, Preset, SimConfig


class SeedError(ValueError):
    """Seed field fails the admissibility checks."""

    def __init__(self, report: dict):
        bad = [k for k in ("div_ok", "boundary_ok") if not report[k]]
        super().__init__(f"inadmissible seed field ({', '.join(bad)}): "
                         f"div residual {report['div_residual']:.3e}, "
                         f"boundary b0r {report['boundary_br']:.3e}")
        self.report = report


@dataclass(frozen=True)
class InitialData:
    state: SimState
    b0: MagneticSeed
    seed_report: dict
    source: Source | None = None
    exact: Callable | None = None     # t -> dict of exact fields (manufactured cases)


def pinch_pressure(grid: Grid, c0: float, C0: float) -> np.ndarray:
    """Radial balance ``dq/dr = -c0^2 r`` with the interface value ``C0^2 / (2 R0^2)``."""
    R0 = grid.R0
    return C0 * C0 / (2 * R0 * R0) + 0.5 * c0 * c0 * (R0 * R0 - grid.r ** 2)


def rotation_pressure(grid: Grid, omega: float, C0: float) -> np.ndarray:
    """Centrifugal balance ``dq/dr = omega^2 r``."""
    R0 = grid.R0
    return C0 * C0 / (2 * R0 * R0) - 0.5 * omega * omega * (R0 * R0 - grid.r ** 2)


def screw_pinch_seed(grid: Grid, c0: float, c1: float) -> MagneticSeed:
    return MagneticSeed.from_functions(grid, bth=lambda r, z: c0 * r, bz=lambda r, z: c1 + 0.0 * r)


# manufactured-solution time profiles
def _spin(t):
    return 0.5 * (1.0 + math.sin(t)), 0.5 * math.cos(t), 0.5 * (t + 1.0 - math.cos(t))


def _shift(t):
    return 0.1 * math.sin(t), 0.1 * math.cos(t), -0.1 * math.sin(t)


def build_initial_state(cfg: SimConfig) -> InitialData:
    """Construct the preset fields, validate the seed, and fill q and C consistently."""
    gc = cfg.grid
    grid = Grid(gc.Nr, gc.Nz, gc.R0, gc.Lz)
    C0 = cfg.physics.C0
    p: Preset = cfg.preset
    r, z = grid.r, grid.z
    zero = np.zeros(grid.shape)
    vr = vth = vz = zero
    q = np.full(grid.shape, C0 * C0 / (2 * gc.R0 ** 2))
    source = exact = None
    kz = 2.0 * math.pi / gc.Lz

    if p.name == "rest":
        b0 = MagneticSeed.zero(grid)
    elif p.name == "screw_pinch":
        c0, c1 = p.params
        b0 = screw_pinch_seed(grid, c0, c1)
        q = pinch_pressure(grid, c0, C0)
    elif p.name == "rigid_rotation":
        (omega,) = p.params
        b0 = MagneticSeed.zero(grid)
        vth = omega * r
        q = rotation_pressure(grid, omega, C0)
    elif p.name == "perturbed_pinch":
        c0, c1, amp = p.params
        b0 = screw_pinch_seed(grid, c0, c1)
        q = pinch_pressure(grid, c0, C0)
        # divergence-free: d_r vr + vr/r + d_z vz = 0
        vr = amp * r * np.sin(kz * z)
        vz = (2.0 * amp / kz) * np.cos(kz * z)
    elif p.name == "mms":
        case = p.params[0]
        if case == 1:
            b0 = MagneticSeed.zero(grid)
            w0 = _spin(0.0)[0]
            vth = w0 * r
            q = rotation_pressure(grid, w0, C0)

            def source(t, _r=r):
                return zero, _spin(t)[1] * _r, zero

            def exact(t, _g=grid):
                w, _, th = _spin(t)
                return {"vth": w * _g.r, "Th": np.full(_g.shape, th), "vr": zero, "vz": zero,
                        "Rd": zero, "Zd": zero, "q": rotation_pressure(_g, w, C0)}
        else:
            c = 0.5
            b0 = screw_pinch_seed(grid, c, c)
            q = pinch_pressure(grid, c, C0)
            vz = np.full(grid.shape, _shift(0.0)[1])

            def source(t, _s=grid.shape):
                return zero, zero, np.full(_s, _shift(t)[2])

            def exact(t, _g=grid):
                g_, gp, _ = _shift(t)
                return {"vth": zero, "Th": zero, "vr": zero, "vz": np.full(_g.shape, gp),
                        "Rd": zero, "Zd": np.full(_g.shape, g_), "q": pinch_pressure(_g, c, C0)}
    elif p.name == "azimuthal_pinch":
        (c0,) = p.params
        b0 = MagneticSeed.from_functions(grid, bth=lambda r_, z_: c0 * r_)
        q = pinch_pressure(grid, c0, C0)
    elif p.name == "radial_seed":
        b0 = MagneticSeed.from_functions(grid, br=lambda r_, z_: r_)
    else:  # pragma: no cover - parse_preset rejects unknown names
        raise ConfigError("initial.preset", f"unknown preset {p.name!r}")

    report = validate_seed(b0, cfg.physics.delta_min)
    if not report["admissible"] and cfg.seed_check == "error":
        raise SeedError(report)

    m = FlowMapState.identity(grid)
    kin = Kinematics.from_arrays(grid, vr, vth, vz)
    A0 = vacuum_A(vr, vz, m, cfg.RS)
    vac = VacuumState.initial(C0, cfg.RS, A0)
    state = SimState(m, kin, ScalarField(grid, q, Parity.EVEN), boundary_pressure(C0, m.R_trace), vac)
    return InitialData(state, b0, report, source, exact)
