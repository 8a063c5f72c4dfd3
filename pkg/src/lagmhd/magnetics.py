"""Seed-field admissibility, frozen-in field reconstruction and the vacuum law."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import FlowMapState, GeometryCache, GeometryError
from .grid import Grid, Parity, ScalarField, boundary_trace, d_r, d_z, d_z_trace, interior_max

DENOMINATOR_FLOOR = 1e-12


class VacuumGeometryError(ValueError):
    """The vacuum-law quadrature degenerates (interface touching the wall)."""


@dataclass(frozen=True)
class MagneticSeed:
    """Time-independent seed field ``b0``; ``b0r`` odd, ``b0th`` odd, ``b0z`` even."""

    grid: Grid
    b0r: ScalarField
    b0th: ScalarField
    b0z: ScalarField

    @classmethod
    def from_functions(cls, grid: Grid, br=None, bth=None, bz=None) -> "MagneticSeed":
        def mk(f, par):
            if f is None:
                return ScalarField.zeros(grid, par)
            return ScalarField.from_function(grid, f, par)
        return cls(grid, mk(br, Parity.ODD), mk(bth, Parity.ODD), mk(bz, Parity.EVEN))

    @classmethod
    def zero(cls, grid: Grid) -> "MagneticSeed":
        return cls.from_functions(grid)

    @property
    def delta(self) -> float:
        """Measured ``min |b0z|`` on the boundary ``r = R0``."""
        return float(np.min(np.abs(boundary_trace(self.b0z.values))))

    @property
    def sup(self) -> float:
        return float(max(np.max(np.abs(f.values)) for f in (self.b0r, self.b0th, self.b0z)))

    def grad(self, f: np.ndarray, parity: Parity) -> np.ndarray:
        """Field-line derivative ``(b0r d_r + b0z d_z) f`` of an axisymmetric field."""
        return self.b0r.values * d_r(f, self.grid, parity) + self.b0z.values * d_z(f, self.grid)

    def grad_field(self, f: ScalarField) -> ScalarField:
        par = f.parity * Parity.EVEN if self.b0r.parity is Parity.ODD else Parity.NONE
        return ScalarField(self.grid, self.grad(f.values, f.parity), par)

    def theta_over_r(self) -> np.ndarray:
        """``b0th / r``: the ``(1/r) b0th d_theta`` part of ``b0 . grad Theta``."""
        return self.b0th.values / self.grid.r

    def divergence(self) -> np.ndarray:
        g = self.grid
        return (d_r(self.b0r.values, g, self.b0r.parity) + self.b0r.values / g.r
                + d_z(self.b0z.values, g))


def validate_seed(b0: MagneticSeed, delta_min: float, div_tol: float = 1e-8,
                  boundary_tol: float = 1e-12) -> dict:
    """Admissibility report for a seed field.

    Checks the weighted divergence constraint, the vanishing normal trace on
    the boundary, and the non-collinearity lower bound ``|b0z| >= delta_min``.
    """
    div = float(np.max(np.abs(b0.divergence())))
    trace = float(np.max(np.abs(boundary_trace(b0.b0r.values))))
    delta = b0.delta
    report = {
        "div_residual": div,
        "boundary_br": trace,
        "delta": delta,
        "delta_min": float(delta_min),
        "div_ok": div <= div_tol,
        "boundary_ok": trace <= boundary_tol,
        "noncollinear_ok": delta >= delta_min and delta > 0.0,
    }
    report["admissible"] = report["div_ok"] and report["boundary_ok"]
    report["ok"] = report["admissible"] and report["noncollinear_ok"]
    return report


def frozen_in(b0: MagneticSeed, m: FlowMapState) -> tuple[ScalarField, ScalarField, ScalarField]:
    """Transported field ``(b^r, b^theta, b^z)`` on the reference domain."""
    g = m.grid
    Rd, Zd, Th = m.Rd, m.Zd, m.Th
    br = b0.b0r.values * (1.0 + d_r(Rd.values, g, Rd.parity)) + b0.b0z.values * d_z(Rd.values, g)
    bz = b0.b0r.values * d_r(Zd.values, g, Zd.parity) + b0.b0z.values * (1.0 + d_z(Zd.values, g))
    ratio = 1.0 + Rd.values / g.r
    bth = m.R * b0.grad(Th.values, Th.parity) + ratio * b0.b0th.values
    par_r = Parity.ODD if Rd.parity is Parity.ODD else Parity.NONE
    par_z = Parity.EVEN if Zd.parity is Parity.EVEN else Parity.NONE
    return (ScalarField(g, br, par_r), ScalarField(g, bth, par_r), ScalarField(g, bz, par_z))


def lagrangian_div_residual(b, g: GeometryCache, m: FlowMapState, region: str = "interior") -> float:
    """Max of ``(1/R) [A_1j d_j(R b^r) + A_2j d_j(R b^z)]`` over the chosen nodes."""
    grid = m.grid
    R = m.R
    br, _, bz = b
    res = np.zeros(grid.shape)
    for i, comp in enumerate((br, bz)):
        f = R * comp.values
        par = m.R_parity * comp.parity
        res += g.A[i, 0] * d_r(f, grid, par) + g.A[i, 1] * d_z(f, grid)
    res /= R
    if region == "interior":
        return interior_max(res)
    return float(np.max(np.abs(res)))


def vacuum_A(vr: np.ndarray, vz: np.ndarray, m: FlowMapState, RS: float) -> float:
    """Growth rate of the vacuum amplitude from boundary traces.

    ``A = int (v^r dZ/dz - v^z dR/dz) dz / int (ln RS - ln R) dZ/dz dz`` at r = R0.
    """
    grid = m.grid
    R_tr = m.R_trace
    if RS <= float(np.max(R_tr)):
        raise VacuumGeometryError(f"wall radius RS={RS} must exceed max boundary R={np.max(R_tr)}")
    Zz = 1.0 + d_z_trace(m.Zd.trace(), grid)
    Rz = d_z_trace(m.Rd.trace(), grid)
    vr_tr = boundary_trace(np.asarray(vr))
    vz_tr = boundary_trace(np.asarray(vz))
    num = grid.hz * float(np.sum(vr_tr * Zz - vz_tr * Rz))
    den = grid.hz * float(np.sum((math.log(RS) - np.log(R_tr)) * Zz))
    if abs(den) < DENOMINATOR_FLOOR:
        raise VacuumGeometryError(f"vacuum denominator {den:.3e} below {DENOMINATOR_FLOOR}")
    return num / den


@dataclass(frozen=True)
class VacuumState:
    """Vacuum amplitude ``C(t) = C0 exp(int_0^t A)`` with its A history."""

    C0: float
    RS: float
    t: float = 0.0
    integral: float = 0.0
    A_history: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not self.RS > 0:
            raise ValueError(f"RS must be positive, got {self.RS}")

    @classmethod
    def initial(cls, C0: float, RS: float, A0: float = 0.0) -> "VacuumState":
        return cls(float(C0), float(RS), 0.0, 0.0, (float(A0),))

    @property
    def C(self) -> float:
        return self.C0 * math.exp(self.integral)

    @property
    def A(self) -> float:
        return self.A_history[-1] if self.A_history else 0.0


def advance_C(vs: VacuumState, A_new: float, dt: float) -> VacuumState:
    """Trapezoid update of ``int A dt`` and the amplitude."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    A_prev = vs.A_history[-1] if vs.A_history else float(A_new)
    return replace(vs, t=vs.t + dt, integral=vs.integral + 0.5 * dt * (A_prev + float(A_new)),
                   A_history=vs.A_history + (float(A_new),))


def boundary_pressure(C: float, R_trace: np.ndarray) -> np.ndarray:
    """Interface total pressure ``C^2 / (2 R^2)``."""
    R_trace = np.asarray(R_trace, dtype=float)
    if np.any(R_trace <= 0):
        raise GeometryError("boundary trace of R must be positive")
    return C * C / (2.0 * R_trace * R_trace)


