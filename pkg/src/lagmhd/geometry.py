"""Flow-map deformation tensor, cofactor matrix, Jacobian and identity residuals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, Parity, ScalarField, d_r, d_z, edge_max, interior_max

ASSUMPTION_BOUND = 1.0 / 8.0
JACOBIAN_FLOOR = 1e-12


class GeometryError(ValueError):
    """Degenerate or inadmissible flow-map geometry."""

    def __init__(self, message: str, node: tuple[int, int] | None = None):
        super().__init__(message if node is None else f"{message} at node {node}")
        self.node = node


@dataclass(frozen=True)
class FlowMapState:
    """Lagrangian map stored as periodic displacements.

    ``Rd = R - r`` (odd), ``Zd = Z - z`` (even), ``Th`` is the angle
    displacement ``Theta - theta`` (even).
    """

    grid: Grid
    Rd: ScalarField
    Zd: ScalarField
    Th: ScalarField
    t: float = 0.0

    @classmethod
    def identity(cls, grid: Grid, t: float = 0.0) -> "FlowMapState":
        return cls(grid, ScalarField.zeros(grid, Parity.ODD), ScalarField.zeros(grid, Parity.EVEN),
                   ScalarField.zeros(grid, Parity.EVEN), t)

    @classmethod
    def from_functions(cls, grid: Grid, R=None, Z=None, Th=None, *, t: float = 0.0,
                       Rd_parity=Parity.ODD, Zd_parity=Parity.EVEN) -> "FlowMapState":
        """Build from callables ``R(r, z)``, ``Z(r, z)``, ``Th(r, z)`` (full maps, not displacements)."""
        r, z = grid.r, grid.z
        Rd = np.zeros(grid.shape) if R is None else np.broadcast_to(R(r, z), grid.shape) - r
        Zd = np.zeros(grid.shape) if Z is None else np.broadcast_to(Z(r, z), grid.shape) - z
        T = np.zeros(grid.shape) if Th is None else np.broadcast_to(Th(r, z), grid.shape)
        return cls(grid, ScalarField(grid, Rd, Rd_parity), ScalarField(grid, Zd, Zd_parity),
                   ScalarField(grid, np.array(T, dtype=float), Parity.EVEN), t)

    @property
    def R(self) -> np.ndarray:
        return self.grid.r + self.Rd.values

    @property
    def R_parity(self) -> Parity:
        return Parity.ODD if self.Rd.parity is Parity.ODD else Parity.NONE

    @property
    def R_field(self) -> ScalarField:
        return ScalarField(self.grid, self.R, self.R_parity)

    @property
    def R_trace(self) -> np.ndarray:
        return self.grid.R0 + self.Rd.trace()

    def with_time(self, t: float) -> "FlowMapState":
        return FlowMapState(self.grid, self.Rd, self.Zd, self.Th, t)


@dataclass(frozen=True)
class GeometryCache:
    """``F[i, j] = d zeta^i / d a_j``, ``A = F^{-T}``, ``J = det F`` at every node."""

    grid: Grid
    F: np.ndarray
    A: np.ndarray
    J: np.ndarray
    F_parity: tuple
    A_parity: tuple
    J_parity: Parity

    def field(self, name: str, i: int, j: int) -> ScalarField:
        arr, par = {"F": (self.F, self.F_parity), "A": (self.A, self.A_parity)}[name]
        return ScalarField(self.grid, arr[i, j], par[i][j])

    @property
    def J_field(self) -> ScalarField:
        return ScalarField(self.grid, self.J, self.J_parity)

    def E(self) -> np.ndarray:
        """Pressure-operator tensor ``E_ij = J A_li A_lj``."""
        A = self.A
        return self.J[None, None] * np.einsum("lixy,ljxy->ijxy", A, A)


def deformation(m: FlowMapState) -> tuple[np.ndarray, tuple]:
    g = m.grid
    pR, pZ = m.Rd.parity, m.Zd.parity
    F = np.empty((2, 2) + g.shape)
    F[0, 0] = 1.0 + d_r(m.Rd.values, g, pR)
    F[0, 1] = d_z(m.Rd.values, g)
    F[1, 0] = d_r(m.Zd.values, g, pZ)
    F[1, 1] = 1.0 + d_z(m.Zd.values, g)
    par = ((_sum_parity(Parity.EVEN, pR.flip()), pR), (pZ.flip(), _sum_parity(Parity.EVEN, pZ)))
    return F, par


def _sum_parity(a: Parity, b: Parity) -> Parity:
    return a if a is b else Parity.NONE


def build_geometry(m: FlowMapState) -> GeometryCache:
    R = m.R
    if np.any(R <= 0):
        idx = np.unravel_index(int(np.argmin(R)), R.shape)
        raise GeometryError("flow map leaves the half-plane R > 0", tuple(int(i) for i in idx))
    F, fp = deformation(m)
    J = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
    bad = np.abs(J) < JACOBIAN_FLOOR
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        raise GeometryError("degenerate Jacobian", (int(idx[0]), int(idx[1])))
    # A = F^{-T} = cof(F) / J, closed-form 2x2 adjugate
    A = np.empty_like(F)
    A[0, 0] = F[1, 1] / J
    A[0, 1] = -F[1, 0] / J
    A[1, 0] = -F[0, 1] / J
    A[1, 1] = F[0, 0] / J
    jp = _sum_parity(fp[0][0] * fp[1][1], fp[0][1] * fp[1][0])
    cof_par = ((fp[1][1], fp[1][0]), (fp[0][1], fp[0][0]))
    ap = tuple(tuple(cof_par[i][j] * jp for j in range(2)) for i in range(2))
    return GeometryCache(m.grid, F, A, J, fp, ap, jp)


def incompressibility_residual(m: FlowMapState, g: GeometryCache | None = None) -> ScalarField:
    """``(R / r) J - 1``: zero for volume-preserving axisymmetric maps."""
    g = build_geometry(m) if g is None else g
    ratio = 1.0 + m.Rd.values / m.grid.r
    return ScalarField(m.grid, ratio * g.J - 1.0, g.J_parity)


def piola_residual(m: FlowMapState, g: GeometryCache | None = None) -> tuple[ScalarField, ScalarField]:
    """Row divergences ``d_r(J A_i1) + d_z(J A_i2)`` for i = 1, 2."""
    g = build_geometry(m) if g is None else g
    grid = m.grid
    out = []
    for i in range(2):
        c1 = g.J * g.A[i, 0]
        c2 = g.J * g.A[i, 1]
        p1 = g.A_parity[i][0] * g.J_parity
        res = d_r(c1, grid, p1) + d_z(c2, grid)
        out.append(ScalarField(grid, res, p1.flip()))
    return out[0], out[1]


def piola_max(m: FlowMapState, region: str = "interior", g: GeometryCache | None = None) -> float:
    return max(_region_max(p.values, region) for p in piola_residual(m, g))


def identity_dJ_check(m: FlowMapState, direction: str, region: str = "interior",
                      g: GeometryCache | None = None) -> float:
    """Max deviation between ``dJ`` and ``J A_ij dF_ij`` for ``d`` in {r, z}."""
    g = build_geometry(m) if g is None else g
    grid = m.grid
    if direction == "r":
        diff = lambda f, p: d_r(f, grid, p)
    elif direction == "z":
        diff = lambda f, p: d_z(f, grid)
    else:
        raise ValueError(f"direction must be 'r' or 'z', got {direction!r}")
    lhs = diff(g.J, g.J_parity)
    rhs = np.zeros_like(lhs)
    for i in range(2):
        for j in range(2):
            rhs += g.A[i, j] * diff(g.F[i, j], g.F_parity[i][j])
    return _region_max(lhs - g.J * rhs, region)


def assumption_monitor(g: GeometryCache) -> dict:
    eye = np.eye(2)[:, :, None, None]
    maxF = float(np.max(np.abs(g.F - eye)))
    maxA = float(np.max(np.abs(g.A - eye)))
    return {"maxF_dev": maxF, "maxA_dev": maxA,
            "ok": bool(maxF <= ASSUMPTION_BOUND and maxA <= ASSUMPTION_BOUND)}


def _region_max(values: np.ndarray, region: str) -> float:
    if region == "interior":
        return interior_max(values)
    if region == "boundary":
        return edge_max(values)
    if region == "all":
        return float(np.max(np.abs(values)))
    raise ValueError(f"unknown region {region!r}")
