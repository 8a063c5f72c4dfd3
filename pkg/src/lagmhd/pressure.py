"""Variable-coefficient elliptic pressure problem with Dirichlet interface data.

The operator ``L q = (1/Rb) d_i(Rb E_ij d_j q)`` is discretized as the
gradient of a discrete energy, so the matrix ``K = -diag(Rb hr hz) L`` is
symmetric; it is applied matrix-free and inverted by Jacobi-preconditioned CG.
Radial fluxes live on cell faces, the cross terms on cell corners; the
Dirichlet value at ``r = R0`` enters through a linear ghost row.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import FlowMapState, GeometryCache, build_geometry
from .grid import Grid, Parity, d_r, d_z
from .magnetics import MagneticSeed


class AssemblyError(ValueError):
    """The pressure operator is not symmetric positive definite."""


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


@dataclass
class EllipticSystem:
    grid: Grid
    coeff: np.ndarray        # (2, 2, Nr, Nz) nodal E
    weight: np.ndarray       # Rb at nodes
    rhs: np.ndarray          # f in L q = f
    bc: np.ndarray           # Dirichlet trace at r = R0
    face_r: np.ndarray = None
    face_z: np.ndarray = None
    corner: np.ndarray = None
    diag: np.ndarray = None

    def __post_init__(self):
        g = self.grid
        W = self.weight[None, None] * self.coeff
        W11 = _extend(W[0, 0])
        W12 = _extend(0.5 * (W[0, 1] + W[1, 0]))
        W22 = W[1, 1]
        self.face_r = 0.5 * (W11[:-1] + W11[1:])
        self.face_r[-1] *= 0.5
        self.face_z = 0.5 * (W22 + np.roll(W22, -1, axis=1))
        c = 0.5 * (W12[:-1] + W12[1:])
        self.corner = 0.5 * (c + np.roll(c, -1, axis=1))
        self.corner[-1] *= 0.5
        self.diag = _probe_diagonal(self)
        if np.any(self.diag <= 0):
            idx = np.argwhere(self.diag <= 0)[0]
            raise AssemblyError(f"non-positive pivot at node ({idx[0]}, {idx[1]})")
        self._vol = self.weight * (g.hr * g.hz)

    def energy_gradient(self, q: np.ndarray, bc: np.ndarray | None) -> np.ndarray:
        return _energy_gradient(self, q, bc)

    def apply(self, q: np.ndarray, bc: np.ndarray | None = None) -> np.ndarray:
        """``L q`` with the ghost row built from ``bc`` (homogeneous if None)."""
        return -self.energy_gradient(q, bc) / self._vol

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """Weighted inner product in which ``apply`` is symmetric."""
        return float(np.sum(self._vol * f * g))


def _extend(W: np.ndarray) -> np.ndarray:
    """Append a ghost row at ``R0 + hr/2`` by quadratic extrapolation."""
    ghost = 3.0 * W[-1] - 3.0 * W[-2] + W[-3]
    return np.vstack([W, ghost[None]])


def _energy_gradient(sys: EllipticSystem, q: np.ndarray, bc) -> np.ndarray:
    g = sys.grid
    N = g.Nr
    hr, hz = g.hr, g.hz
    qe = np.empty((N + 1, g.Nz))
    qe[:N] = q
    qe[N] = -q[N - 1] if bc is None else 2.0 * bc - q[N - 1]

    out = np.zeros_like(qe)
    Fr = sys.face_r * (qe[1:] - qe[:-1]) / hr
    out[1:] += Fr / hr
    out[:-1] -= Fr / hr

    Fz = sys.face_z * (np.roll(q, -1, axis=1) - q) / hz
    out[:N] += (np.roll(Fz, 1, axis=1) - Fz) / hz

    a, b = qe[:-1], qe[1:]
    a1, b1 = np.roll(a, -1, axis=1), np.roll(b, -1, axis=1)
    cr = (b + b1 - a - a1) / (2.0 * hr)
    cz = (a1 + b1 - a - b) / (2.0 * hz)
    t = sys.corner * cz / (2.0 * hr)
    t = t + np.roll(t, 1, axis=1)
    out[1:] += t
    out[:-1] -= t
    s = sys.corner * cr / (2.0 * hz)
    s = np.roll(s, 1, axis=1) - s
    out[1:] += s
    out[:-1] += s

    res = out[:N]
    res[N - 1] -= out[N]
    return res * (hr * hz)


def _probe_diagonal(sys: EllipticSystem) -> np.ndarray:
    g = sys.grid
    pz = next((p for p in (3, 4, 5, 6, 7) if g.Nz % p == 0), g.Nz)
    ii, jj = np.meshgrid(np.arange(g.Nr), np.arange(g.Nz), indexing="ij")
    diag = np.zeros(g.shape)
    for ci in range(3):
        for cj in range(pz):
            mask = (ii % 3 == ci) & (jj % pz == cj)
            y = _energy_gradient(sys, mask.astype(float), None)
            diag[mask] = y[mask]
    return diag


def check_spd(E: np.ndarray) -> None:
    bad = (E[0, 0] <= 0) | (E[0, 0] * E[1, 1] - E[0, 1] * E[1, 0] <= 0)
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        raise AssemblyError(f"coefficient tensor not positive definite at node ({idx[0]}, {idx[1]})")


def elliptic_system(geom: GeometryCache, Rbar: np.ndarray, rhs: np.ndarray, bc: np.ndarray) -> EllipticSystem:
    E = geom.E()
    check_spd(E)
    return EllipticSystem(geom.grid, E, np.asarray(Rbar, float), np.asarray(rhs, float),
                          np.asarray(bc, float))


def solve_pressure(sys: EllipticSystem, rel_tol: float = 1e-10, x0: np.ndarray | None = None,
                   max_iter: int | None = None) -> np.ndarray:
    """Solve ``L q = rhs`` with ``q = bc`` on ``r = R0`` by Jacobi-PCG."""
    if not 0.0 < rel_tol < 1.0:
        raise ValueError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    g = sys.grid
    if max_iter is None:
        max_iter = int(20 * math.sqrt(g.Nr * g.Nz))
    vol = sys._vol
    b = -vol * sys.rhs - sys.energy_gradient(np.zeros(g.shape), sys.bc)
    inv_vol = 1.0 / vol

    def wnorm(v):
        return math.sqrt(float(np.sum(v * v * inv_vol)))

    bnorm = wnorm(b)
    x = np.zeros(g.shape) if x0 is None else np.array(x0, dtype=float)
    r = b - sys.energy_gradient(x, None)
    history = [wnorm(r) / bnorm if bnorm > 0 else 0.0]
    if bnorm == 0.0:
        return np.zeros(g.shape)
    if history[0] <= rel_tol:
        return x
    z = r / sys.diag
    p = z.copy()
    rz = float(np.vdot(r, z))
    for _ in range(max_iter):
        Ap = sys.energy_gradient(p, None)
        alpha = rz / float(np.vdot(p, Ap))
        x += alpha * p
        r -= alpha * Ap
        rel = wnorm(r) / bnorm
        history.append(rel)
        if rel <= rel_tol:
            return x
        z = r / sys.diag
        rz_new = float(np.vdot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"PCG did not reach rel_tol={rel_tol} in {max_iter} iterations "
                           f"(last {history[-1]:.3e})", history)


# --- frozen coefficients and right-hand side ---------------------------------

@dataclass(frozen=True)
class FrozenCoefficients:
    """Coefficients taken from the previous iterate at one time level."""

    map: FlowMapState
    geom: GeometryCache
    vr: np.ndarray
    vth: np.ndarray
    vz: np.ndarray
    dR: np.ndarray           # d/dt of the frozen R
    dZ: np.ndarray
    dA: np.ndarray           # d/dt of the frozen cofactor matrix
    C: float
    t: float

    @property
    def R(self) -> np.ndarray:
        return self.map.R

    @property
    def q_gamma(self) -> np.ndarray:
        from .magnetics import boundary_pressure
        return boundary_pressure(self.C, self.map.R_trace)


def map_rates(m: FlowMapState, vr, vz, b0: MagneticSeed, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """``d zeta/dt = nu + eps (b0 . grad)^2 zeta`` for the (R, Z) components."""
    if eps == 0.0:
        return np.asarray(vr, float), np.asarray(vz, float)
    wR, wZ = field_line_second(m, b0)
    return vr + eps * wR, vz + eps * wZ


def field_line_first(m: FlowMapState, b0: MagneticSeed) -> tuple[np.ndarray, np.ndarray]:
    """``(b0 . grad R, b0 . grad Z)`` evaluated through the displacements."""
    g = m.grid
    bR = (b0.b0r.values * (1.0 + d_r(m.Rd.values, g, m.Rd.parity))
          + b0.b0z.values * d_z(m.Rd.values, g))
    bZ = (b0.b0r.values * d_r(m.Zd.values, g, m.Zd.parity)
          + b0.b0z.values * (1.0 + d_z(m.Zd.values, g)))
    return bR, bZ


def field_line_second(m: FlowMapState, b0: MagneticSeed) -> tuple[np.ndarray, np.ndarray]:
    bR, bZ = field_line_first(m, b0)
    return b0.grad(bR, m.Rd.parity), b0.grad(bZ, m.Zd.parity)


def freeze(m: FlowMapState, vr, vth, vz, b0: MagneticSeed, C: float, eps: float = 0.0,
           geom: GeometryCache | None = None) -> FrozenCoefficients:
    g = m.grid
    geom = build_geometry(m) if geom is None else geom
    dR, dZ = map_rates(m, vr, vz, b0, eps)
    dF = np.empty((2, 2) + g.shape)
    dF[0, 0] = d_r(dR, g, Parity.ODD)
    dF[0, 1] = d_z(dR, g)
    dF[1, 0] = d_r(dZ, g, Parity.EVEN)
    dF[1, 1] = d_z(dZ, g)
    A = geom.A
    dA = -np.einsum("ilxy,mlxy,mjxy->ijxy", A, dF, A)
    return FrozenCoefficients(m, geom, np.asarray(vr, float), np.asarray(vth, float),
                              np.asarray(vz, float), dR, dZ, dA, float(C), m.t)


def theta_gradient(m: FlowMapState, b0: MagneticSeed) -> np.ndarray:
    """``b0 . grad Theta`` including the ``b0th / r`` contribution of ``theta``."""
    return b0.grad(m.Th.values, m.Th.parity) + b0.theta_over_r()


def centrifugal_forcing(fr: FrozenCoefficients, b0: MagneticSeed) -> np.ndarray:
    """Radial forcing ``(vth)^2 / R - R (b0 . grad Theta)^2`` from frozen data."""
    R = fr.R
    bt = theta_gradient(fr.map, b0)
    return fr.vth * fr.vth / R - R * bt * bt


def momentum_source(fr: FrozenCoefficients, m: FlowMapState, b0: MagneticSeed,
                    extra=None) -> tuple[np.ndarray, np.ndarray]:
    """Everything on the momentum right-hand side except the pressure gradient."""
    wR, wZ = field_line_second(m, b0)
    wR = wR + centrifugal_forcing(fr, b0)
    if extra is not None:
        wR = wR + extra[0]
        wZ = wZ + extra[1]
    return wR, wZ


def divergence_a(fr: FrozenCoefficients, wR: np.ndarray, wZ: np.ndarray) -> np.ndarray:
    """``Div_a w = (1/R) a_ij d_j(R w_i)`` with frozen ``a`` and ``R``."""
    g = fr.map.grid
    R = fr.R
    A = fr.geom.A
    out = np.zeros(g.shape)
    for i, (w, par) in enumerate(((wR, Parity.EVEN), (wZ, Parity.ODD))):
        f = R * w
        out += A[i, 0] * d_r(f, g, par) + A[i, 1] * d_z(f, g)
    return out / R


def pressure_rhs(fr: FrozenCoefficients, m: FlowMapState, vr, vz, b0: MagneticSeed,
                 extra=None) -> np.ndarray:
    """``J Div_a`` of the momentum equation, moved to the right-hand side.

    Equals ``G1 + b0 . grad G2``: the transport terms from the time dependence
    of the frozen cofactor matrix, the centrifugal block, and the divergence
    of the field-line tension ``(b0 . grad)^2 zeta``.
    """
    g = m.grid
    J = fr.geom.J
    wR, wZ = momentum_source(fr, m, b0, extra)
    rhs = J * divergence_a(fr, wR, wZ)
    dA = fr.dA
    grads = ((d_r(vr, g, Parity.ODD), d_z(vr, g)), (d_r(vz, g, Parity.EVEN), d_z(vz, g)))
    transport = np.zeros(g.shape)
    for i in range(2):
        for j in range(2):
            transport += dA[i, j] * grads[i][j]
    R = fr.R
    rhs += J * transport - J * vr * fr.dR / (R * R)
    return rhs


def assemble_system(frozen: FrozenCoefficients, state, b0: MagneticSeed, q_gamma=None,
                    extra=None) -> EllipticSystem:
    """Pressure system for ``state`` (anything with ``.map`` and ``.kin``) against ``frozen``."""
    q_gamma = frozen.q_gamma if q_gamma is None else q_gamma
    rhs = pressure_rhs(frozen, state.map, state.kin.vr.values, state.kin.vz.values, b0, extra)
    return elliptic_system(frozen.geom, frozen.R, rhs, q_gamma)


def pressure_gradient(fr: FrozenCoefficients, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``grad_a q`` with frozen cofactor matrix."""
    g = fr.map.grid
    qr, qz = d_r(q, g, Parity.EVEN), d_z(q, g)
    A = fr.geom.A
    return A[0, 0] * qr + A[0, 1] * qz, A[1, 0] * qr + A[1, 1] * qz
