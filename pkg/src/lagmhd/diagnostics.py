"""Energy functional, per-node residual records and hypothesis monitors."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from .evolve import SimState
from .geometry import ASSUMPTION_BOUND, GeometryCache, assumption_monitor, build_geometry, piola_max
from .grid import Parity, ScalarField, d_r, d_z, interior_max, weighted_norm, weighted_norm_sq
from .magnetics import MagneticSeed, frozen_in, lagrangian_div_residual

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    E: float
    C: float
    A: float
    div_v: float
    piola: float
    curl_v: float
    frozen_div: float
    maxA_dev: float
    delta: float
    psi: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        # repr round-trips doubles exactly
        return json.dumps(self.to_dict(), sort_keys=False, allow_nan=True)

    @classmethod
    def from_dict(cls, d: dict) -> "DiagnosticsRecord":
        names = [f.name for f in fields(cls)]
        unknown = set(d) - set(names)
        if unknown:
            raise KeyError(f"unknown record keys {sorted(unknown)}")
        return cls(**{k: d.get(k) for k in names})

    @classmethod
    def from_json(cls, line: str) -> "DiagnosticsRecord":
        return cls.from_dict(json.loads(line))


def energy_functional(state: SimState, b0: MagneticSeed, k: int = 4) -> float:
    """Velocity, displacement and transported-field blocks, each as a squared order-k norm."""
    if k not in (2, 3, 4):
        raise ValueError(f"energy norm order must be 2, 3 or 4, got {k}")
    kin, m = state.kin, state.map
    total = sum(weighted_norm_sq(f, k) for f in (kin.vr, kin.vth, kin.vz))
    total += weighted_norm_sq(m.Rd, k) + weighted_norm_sq(m.Zd, k)
    total += sum(weighted_norm_sq(f, k) for f in frozen_in(b0, m))
    return float(total)


def divergence_relation(state: SimState, int_dA: np.ndarray | None, int_dR: np.ndarray | None) -> np.ndarray:
    """Eulerian divergence of the velocity corrected by the accumulated frozen-coefficient drift."""
    g = state.grid
    vr, vz = state.kin.vr.values, state.kin.vz.values
    grads = ((d_r(vr, g, Parity.ODD), d_z(vr, g)), (d_r(vz, g, Parity.EVEN), d_z(vz, g)))
    res = grads[0][0] + vr / g.r + grads[1][1]
    if int_dA is not None:
        for i in range(2):
            for j in range(2):
                res = res + int_dA[i, j] * grads[i][j]
    if int_dR is not None:
        res = res - int_dR * vr / g.r
    return res


def curl(state: SimState) -> ScalarField:
    g = state.grid
    vr, vz = state.kin.vr.values, state.kin.vz.values
    return ScalarField(g, d_z(vr, g) - d_r(vz, g, Parity.EVEN), Parity.ODD)


def residual_report(state: SimState, b0: MagneticSeed, int_dA=None, int_dR=None,
                    psi: float | None = None, norm_order: int = 4,
                    geom: GeometryCache | None = None) -> DiagnosticsRecord:
    """Fill every field of a :class:`DiagnosticsRecord` for one snapshot."""
    m = state.map
    geom = build_geometry(m) if geom is None else geom
    mon = assumption_monitor(geom)
    return DiagnosticsRecord(
        t=float(state.t),
        E=energy_functional(state, b0, norm_order),
        C=float(state.vacuum.C),
        A=float(state.vacuum.A),
        div_v=interior_max(divergence_relation(state, int_dA, int_dR)),
        piola=piola_max(m, "interior", geom),
        curl_v=weighted_norm(curl(state), 0),
        frozen_div=lagrangian_div_residual(frozen_in(b0, m), geom, m),
        maxA_dev=mon["maxA_dev"],
        delta=b0.delta,
        psi=None if psi is None else float(psi),
    )


def trajectory_records(traj, b0: MagneticSeed, psi: float | None = None,
                       norm_order: int = 4) -> list[DiagnosticsRecord]:
    out = []
    for k, s in enumerate(traj.snapshots):
        IA = traj.int_dA[k] if traj.int_dA else None
        IR = traj.int_dR[k] if traj.int_dR else None
        out.append(residual_report(s, b0, IA, IR, psi, norm_order))
    return out


# --- monitors -----------------------------------------------------------------

@dataclass(frozen=True)
class Flag:
    kind: str          # "energy" | "assumption" | "noncollinear"
    t: float
    value: float
    threshold: float

    @property
    def message(self) -> str:
        return f"{self.kind} flag at t={self.t:.6g}: value {self.value:.6g} vs threshold {self.threshold:.6g}"


class WellposednessViolation(RuntimeError):
    def __init__(self, flag: Flag):
        super().__init__(flag.message)
        self.flag = flag


def wellposedness_monitor(records, M0: float, delta_min: float = 1e-6, tol_margin: float = 0.0,
                          abort: bool = False, seen=()) -> list[Flag]:
    """Check the energy bound ``E <= 2 M0``, the cofactor bound and non-collinearity.

    Each kind of flag is reported once, at its first occurrence; kinds listed
    in ``seen`` were already reported (e.g. at startup).  Flags are logged as
    warnings; with ``abort`` the first one is raised.
    """
    flags = []
    seen = set(seen)
    e_cap = 2.0 * M0 * (1.0 + tol_margin)
    for rec in records:
        found = []
        if rec.E > e_cap:
            found.append(Flag("energy", rec.t, rec.E, e_cap))
        if rec.maxA_dev > ASSUMPTION_BOUND:
            found.append(Flag("assumption", rec.t, rec.maxA_dev, ASSUMPTION_BOUND))
        if not rec.delta >= delta_min or rec.delta == 0.0:
            found.append(Flag("noncollinear", rec.t, rec.delta, delta_min))
        for f in found:
            if f.kind in seen:
                continue
            seen.add(f.kind)
            log.warning(f.message)
            if abort:
                raise WellposednessViolation(f)
            flags.append(f)
    return flags


def startup_flags(state: SimState, b0: MagneticSeed, delta_min: float) -> list[Flag]:
    """Monitor flags available before any time step (seed and initial map)."""
    geom = build_geometry(state.map)
    mon = assumption_monitor(geom)
    flags = []
    dev = max(mon["maxF_dev"], mon["maxA_dev"])
    if not mon["ok"]:
        flags.append(Flag("assumption", state.t, dev, ASSUMPTION_BOUND))
    d = b0.delta
    if not d >= delta_min or d == 0.0:
        flags.append(Flag("noncollinear", state.t, d, delta_min))
    for f in flags:
        log.warning(f.message)
    return flags
