"""Linearized subsystem stepping and the outer Picard iteration.

Each Picard pass advances the two linear subsystems over ``[0, T]`` with
coefficients frozen from the previous iterate, which is stored at every time
node.  Stage coefficients at half steps are linear interpolants in time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .geometry import FlowMapState, build_geometry
from .grid import Grid, Parity, ScalarField, weighted_norm_sq
from .magnetics import MagneticSeed, VacuumState, advance_C, boundary_pressure, vacuum_A
from .pressure import (
    FrozenCoefficients,
    assemble_system,
    field_line_first,
    freeze,
    map_rates,
    momentum_source,
    pressure_gradient,
    solve_pressure,
    theta_gradient,
)

STABILITY_CFL = 0.4
PSI_ORDER_HIGH = 3
PSI_ORDER_LOW = 2
DIVERGENCE_WINDOW = 3

# source(t) -> (s_r, s_theta, s_z) arrays, or None
Source = Callable[[float], tuple]


class StepSizeError(ValueError):
    """Time step exceeds the explicit stability bound."""


class PassError(RuntimeError):
    """A linear pass failed at a given time node."""

    def __init__(self, node: int, t: float, cause: Exception):
        super().__init__(f"linear pass failed at node {node} (t={t:.6g}): {cause}")
        self.node = node
        self.t = t
        self.cause = cause


class PicardDivergence(RuntimeError):
    def __init__(self, message: str, psi_history: list[float]):
        super().__init__(message)
        self.psi_history = psi_history


@dataclass(frozen=True)
class Kinematics:
    vr: ScalarField
    vth: ScalarField
    vz: ScalarField

    @classmethod
    def rest(cls, grid: Grid) -> "Kinematics":
        return cls(ScalarField.zeros(grid, Parity.ODD), ScalarField.zeros(grid, Parity.ODD),
                   ScalarField.zeros(grid, Parity.EVEN))

    @classmethod
    def from_arrays(cls, grid: Grid, vr, vth, vz) -> "Kinematics":
        return cls(ScalarField(grid, vr, Parity.ODD), ScalarField(grid, vth, Parity.ODD),
                   ScalarField(grid, vz, Parity.EVEN))

    @property
    def sup(self) -> float:
        return float(max(np.max(np.abs(f.values)) for f in (self.vr, self.vth, self.vz)))


@dataclass(frozen=True)
class SimState:
    """State tuple at one time node.

    ``q_gamma`` is the Dirichlet datum the pressure was solved with; it is
    kept so the interface condition can be checked exactly.
    """

    map: FlowMapState
    kin: Kinematics
    q: ScalarField
    q_gamma: np.ndarray
    vacuum: VacuumState
    t: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.map.grid

    @classmethod
    def rest(cls, grid: Grid, C0: float, RS: float) -> "SimState":
        m = FlowMapState.identity(grid)
        vac = VacuumState.initial(C0, RS)
        qg = boundary_pressure(C0, m.R_trace)
        return cls(m, Kinematics.rest(grid), ScalarField(grid, np.full(grid.shape, qg[0])), qg, vac)


@dataclass(frozen=True)
class EvolveConfig:
    """Everything a linear pass needs besides the seed field."""

    initial: SimState
    T: float
    dt: float
    eps: float = 0.0
    source: Source | None = None
    rel_tol: float = 1e-10
    cfl: float = STABILITY_CFL

    @property
    def nsteps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass(frozen=True)
class IterateTrajectory:
    """One Picard iterate stored at every time node.

    ``int_dA`` and ``int_dR`` hold the running time integrals of the frozen
    cofactor rate and of ``r dR/dt / R^2`` that enter the divergence relation.
    """

    snapshots: tuple
    dt: float
    int_dA: tuple = field(default_factory=tuple)
    int_dR: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not self.snapshots:
            raise ValueError("trajectory needs at least the initial snapshot")
        for k, s in enumerate(self.snapshots):
            if not math.isclose(s.t, k * self.dt, rel_tol=1e-9, abs_tol=1e-12):
                raise ValueError(f"snapshot {k} at t={s.t} is off the uniform time grid")

    def __len__(self) -> int:
        return len(self.snapshots)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @classmethod
    def seed(cls, initial: SimState, nsteps: int, dt: float) -> "IterateTrajectory":
        """The startup iterate: zero velocity, identity map, zero pressure."""
        g = initial.grid
        vac = VacuumState.initial(initial.vacuum.C0, initial.vacuum.RS)
        snaps = []
        for k in range(nsteps + 1):
            t = k * dt
            snaps.append(SimState(FlowMapState.identity(g, t), Kinematics.rest(g),
                                  ScalarField.zeros(g), np.zeros(g.Nz),
                                  replace(vac, t=t), t))
        return cls(tuple(snaps), dt)


# --- frozen coefficients ------------------------------------------------------

def frozen_at(prev: IterateTrajectory, n: int, b0: MagneticSeed, eps: float) -> FrozenCoefficients:
    s = prev.snapshots[n]
    return freeze(s.map, s.kin.vr.values, s.kin.vth.values, s.kin.vz.values, b0, s.vacuum.C, eps)


def frozen_mid(prev: IterateTrajectory, n: int, b0: MagneticSeed, eps: float) -> FrozenCoefficients:
    """Coefficients at ``t_n + dt/2`` by linear interpolation of nodes n and n+1."""
    a, b = prev.snapshots[n], prev.snapshots[n + 1]
    g = a.grid
    t = 0.5 * (a.t + b.t)

    def mid(fa: ScalarField, fb: ScalarField) -> ScalarField:
        return ScalarField(g, 0.5 * (fa.values + fb.values), fa.parity)

    m = FlowMapState(g, mid(a.map.Rd, b.map.Rd), mid(a.map.Zd, b.map.Zd), mid(a.map.Th, b.map.Th), t)
    vr = 0.5 * (a.kin.vr.values + b.kin.vr.values)
    vth = 0.5 * (a.kin.vth.values + b.kin.vth.values)
    vz = 0.5 * (a.kin.vz.values + b.kin.vz.values)
    C = a.vacuum.C0 * math.exp(0.5 * (a.vacuum.integral + b.vacuum.integral))
    return freeze(m, vr, vth, vz, b0, C, eps)


def check_step(dt: float, grid: Grid, b0: MagneticSeed, kin: Kinematics, cfl: float = STABILITY_CFL) -> float:
    bound = cfl * min(grid.hr, grid.hz) / max(1.0, b0.sup, kin.sup)
    if dt > bound * (1.0 + 1e-12):
        raise StepSizeError(f"dt={dt:.6g} exceeds stability bound {bound:.6g}")
    return bound


def stable_dt(T: float, grid: Grid, b0: MagneticSeed, kin: Kinematics, cfl: float) -> float:
    """Largest uniform step dividing ``T`` below the CFL bound."""
    bound = cfl * min(grid.hr, grid.hz) / max(1.0, b0.sup, kin.sup)
    return T / math.ceil(T / bound - 1e-12)


# --- sources ------------------------------------------------------------------

def _split_source(source: Source | None, t: float):
    if source is None:
        return None, None
    sr, sth, sz = source(t)
    return (sr, sz), sth


# --- subsystem 1: (zeta, nu) ---------------------------------------------------

def _sub1_rates(m: FlowMapState, vr, vz, q, fr: FrozenCoefficients, b0, eps, extra):
    dR, dZ = map_rates(m, vr, vz, b0, eps)
    wR, wZ = momentum_source(fr, m, b0, extra)
    gR, gZ = pressure_gradient(fr, q)
    return dR, dZ, wR - gR, wZ - gZ


def solve_state_pressure(state: SimState, fr: FrozenCoefficients, b0: MagneticSeed,
                         extra=None, rel_tol: float = 1e-10) -> SimState:
    """Pressure for ``state`` against ``fr``; the returned state carries q and its datum."""
    sys = assemble_system(fr, state, b0, extra=extra)
    q = solve_pressure(sys, rel_tol, x0=state.q.values)
    return replace(state, q=ScalarField(state.grid, q, Parity.EVEN), q_gamma=sys.bc)


def step_sub1(state: SimState, frozen: tuple, b0: MagneticSeed, dt: float, eps: float = 0.0,
              extra: tuple = (None, None), rel_tol: float = 1e-10,
              cfl: float = STABILITY_CFL) -> SimState:
    """One explicit-midpoint step of the map/velocity subsystem.

    ``frozen`` is the pair (coefficients at t_n, coefficients at t_n + dt/2).
    ``state.q`` must already solve the stage-1 pressure problem.
    """
    g = state.grid
    check_step(dt, g, b0, state.kin, cfl)
    fr0, frh = frozen
    m0 = state.map
    vr0, vz0 = state.kin.vr.values, state.kin.vz.values
    k1 = _sub1_rates(m0, vr0, vz0, state.q.values, fr0, b0, eps, extra[0])

    h = 0.5 * dt
    m_mid = FlowMapState(g, ScalarField(g, m0.Rd.values + h * k1[0], m0.Rd.parity),
                         ScalarField(g, m0.Zd.values + h * k1[1], m0.Zd.parity), m0.Th, m0.t + h)
    kin_mid = Kinematics(ScalarField(g, vr0 + h * k1[2], Parity.ODD), state.kin.vth,
                         ScalarField(g, vz0 + h * k1[3], Parity.EVEN))
    mid = replace(state, map=m_mid, kin=kin_mid, t=state.t + h)
    mid = solve_state_pressure(mid, frh, b0, extra[1], rel_tol)
    k2 = _sub1_rates(m_mid, kin_mid.vr.values, kin_mid.vz.values, mid.q.values, frh, b0, eps, extra[1])

    m1 = FlowMapState(g, ScalarField(g, m0.Rd.values + dt * k2[0], m0.Rd.parity),
                      ScalarField(g, m0.Zd.values + dt * k2[1], m0.Zd.parity), m0.Th, m0.t + dt)
    kin1 = Kinematics(ScalarField(g, vr0 + dt * k2[2], Parity.ODD), state.kin.vth,
                      ScalarField(g, vz0 + dt * k2[3], Parity.EVEN))
    return replace(state, map=m1, kin=kin1, t=state.t + dt)


# --- subsystem 2: (Theta, v^theta) -------------------------------------------------

def swirl_forcing(fr: FrozenCoefficients, b0: MagneticSeed) -> np.ndarray:
    """``-vth vr / R + (b0 . grad R)(b0 . grad Theta)`` from frozen data."""
    bR, _ = field_line_first(fr.map, b0)
    return -fr.vth * fr.vr / fr.R + bR * theta_gradient(fr.map, b0)


def _sub2_rates(Th: np.ndarray, vth: np.ndarray, R: np.ndarray, m: FlowMapState, forcing, b0):
    g = m.grid
    tmp = FlowMapState(g, m.Rd, m.Zd, ScalarField(g, Th, Parity.EVEN), m.t)
    wave = b0.grad(R * theta_gradient(tmp, b0), Parity.ODD)
    return vth / R, wave + forcing


def step_sub2(state: SimState, frozen: tuple, b0: MagneticSeed, dt: float,
              R_next: np.ndarray | None = None, source: tuple = (None, None),
              cfl: float = STABILITY_CFL) -> SimState:
    """One explicit-midpoint step of the swirl subsystem.

    ``state.map`` supplies R at t_n; ``R_next`` is R at t_n + dt from the
    first subsystem (defaults to R at t_n).
    """
    g = state.grid
    check_step(dt, g, b0, state.kin, cfl)
    fr0, frh = frozen
    R0 = state.map.R
    R1 = R0 if R_next is None else np.asarray(R_next, float)
    Rh = 0.5 * (R0 + R1)
    f0 = swirl_forcing(fr0, b0)
    fh = swirl_forcing(frh, b0)
    if source[0] is not None:
        f0 = f0 + source[0]
    if source[1] is not None:
        fh = fh + source[1]

    Th0, v0 = state.map.Th.values, state.kin.vth.values
    k1 = _sub2_rates(Th0, v0, R0, state.map, f0, b0)
    h = 0.5 * dt
    Thh, vh = Th0 + h * k1[0], v0 + h * k1[1]
    k2 = _sub2_rates(Thh, vh, Rh, state.map, fh, b0)

    m = state.map
    m1 = FlowMapState(g, m.Rd, m.Zd, ScalarField(g, Th0 + dt * k2[0], Parity.EVEN), m.t + dt)
    kin1 = replace(state.kin, vth=ScalarField(g, v0 + dt * k2[1], Parity.ODD))
    return replace(state, map=m1, kin=kin1, t=state.t + dt)


# --- passes -------------------------------------------------------------------

def _fpe_rates(fr: FrozenCoefficients) -> tuple[np.ndarray, np.ndarray]:
    r = fr.map.grid.r
    return fr.dA, r * fr.dR / (fr.R * fr.R)


def run_linear_pass(prev: IterateTrajectory, b0: MagneticSeed, cfg: EvolveConfig) -> IterateTrajectory:
    """Produce the next iterate with coefficients frozen from ``prev``."""
    n_nodes = len(prev)
    dt = prev.dt
    init = cfg.initial
    g = init.grid
    RS = init.vacuum.RS

    def src(t):
        return _split_source(cfg.source, t)

    fr = frozen_at(prev, 0, b0, cfg.eps)
    ex0, sth0 = src(0.0)
    state = replace(init, t=0.0, map=init.map.with_time(0.0))
    try:
        state = solve_state_pressure(state, fr, b0, ex0, cfg.rel_tol)
    except Exception as exc:  # noqa: BLE001 - rewrapped with the node
        raise PassError(0, 0.0, exc) from exc
    A0 = vacuum_A(state.kin.vr.values, state.kin.vz.values, state.map, RS)
    state = replace(state, vacuum=VacuumState.initial(init.vacuum.C0, RS, A0))

    dA_rate, dR_rate = _fpe_rates(fr)
    IA = np.zeros_like(dA_rate)
    IR = np.zeros_like(dR_rate)
    snaps, int_dA, int_dR = [state], [IA.copy()], [IR.copy()]

    for n in range(n_nodes - 1):
        t = n * dt
        try:
            frh = frozen_mid(prev, n, b0, cfg.eps)
            fr1 = frozen_at(prev, n + 1, b0, cfg.eps)
            exh, sthh = src(t + 0.5 * dt)
            ex1, sth1 = src(t + dt)
            s1 = step_sub1(state, (fr, frh), b0, dt, cfg.eps, (ex0, exh), cfg.rel_tol, cfg.cfl)
            s2 = step_sub2(state, (fr, frh), b0, dt, s1.map.R, (sth0, sthh), cfg.cfl)
            new_map = FlowMapState(g, s1.map.Rd, s1.map.Zd, s2.map.Th, t + dt)
            new_kin = Kinematics(s1.kin.vr, s2.kin.vth, s1.kin.vz)
            nxt = replace(state, map=new_map, kin=new_kin, t=t + dt)
            nxt = solve_state_pressure(nxt, fr1, b0, ex1, cfg.rel_tol)
            A = vacuum_A(new_kin.vr.values, new_kin.vz.values, new_map, RS)
            nxt = replace(nxt, vacuum=advance_C(state.vacuum, A, dt))
        except Exception as exc:  # noqa: BLE001
            raise PassError(n + 1, t + dt, exc) from exc

        dA1, dR1 = _fpe_rates(fr1)
        IA = IA + 0.5 * dt * (dA_rate + dA1)
        IR = IR + 0.5 * dt * (dR_rate + dR1)
        dA_rate, dR_rate = dA1, dR1
        snaps.append(nxt)
        int_dA.append(IA)
        int_dR.append(IR)
        state, fr, ex0, sth0 = nxt, fr1, ex1, sth1
    return IterateTrajectory(tuple(snaps), dt, tuple(int_dA), tuple(int_dR))


# --- Picard -------------------------------------------------------------------

def _psi_fields(new: SimState, old: SimState, b0: MagneticSeed):
    g = new.grid
    d = lambda a, b: a.values - b.values  # noqa: E731
    bRn, bZn = field_line_first(new.map, b0)
    bRo, bZo = field_line_first(old.map, b0)
    dTh = d(new.map.Th, old.map.Th)
    high = [
        ScalarField(g, d(new.kin.vr, old.kin.vr), Parity.ODD),
        ScalarField(g, d(new.kin.vz, old.kin.vz), Parity.EVEN),
        ScalarField(g, d(new.map.Rd, old.map.Rd), Parity.ODD),
        ScalarField(g, d(new.map.Zd, old.map.Zd), Parity.EVEN),
        ScalarField(g, bRn - bRo, Parity.ODD),
        ScalarField(g, bZn - bZo, Parity.EVEN),
        ScalarField(g, d(new.kin.vth, old.kin.vth), Parity.ODD),
        ScalarField(g, new.map.R * b0.grad(dTh, Parity.EVEN), Parity.ODD),
    ]
    return high, ScalarField(g, dTh, Parity.EVEN)


def psi_norm(newer: IterateTrajectory, older: IterateTrajectory, lagged: tuple,
             b0: MagneticSeed) -> float:
    """Squared difference norm between consecutive iterates.

    ``lagged`` is the pair (iterate n, iterate n-1) whose cofactor matrices
    are differenced; ``newer``/``older`` are iterates n+1 and n.
    """
    if len(newer) != len(older):
        raise ValueError("iterates live on different time grids")
    high_sup = 0.0
    low_sup = 0.0
    a_n, a_m = lagged
    for k in range(len(newer)):
        high, dTh = _psi_fields(newer.snapshots[k], older.snapshots[k], b0)
        hi = sum(weighted_norm_sq(f, PSI_ORDER_HIGH) for f in high)
        lo = weighted_norm_sq(dTh, PSI_ORDER_LOW)
        g1 = build_geometry(a_n.snapshots[k].map)
        g0 = build_geometry(a_m.snapshots[k].map)
        for i in range(2):
            for j in range(2):
                par = g1.A_parity[i][j]
                lo += weighted_norm_sq(ScalarField(g1.grid, g1.A[i, j] - g0.A[i, j], par), PSI_ORDER_LOW)
        high_sup = max(high_sup, hi)
        low_sup = max(low_sup, lo)
    return high_sup + low_sup


@dataclass
class PicardResult:
    trajectory: IterateTrajectory
    psi_history: list[float]
    converged: bool
    iterations: int


def picard_iterate(cfg: EvolveConfig, b0: MagneticSeed, n_max: int = 12, psi_tol: float = 1e-8,
                   on_iterate: Callable | None = None) -> PicardResult:
    """Iterate linear passes from the startup iterates until ``Psi < psi_tol``.

    ``psi_history[k]`` is Psi^(k+1), the difference between iterates k+2 and
    k+1.  Raises :class:`PicardDivergence` when Psi fails to decrease over
    three consecutive iterations.
    """
    if n_max < 2:
        raise ValueError(f"n_max must be >= 2, got {n_max}")
    if cfg.nsteps < 1 or not math.isclose(cfg.nsteps * cfg.dt, cfg.T, rel_tol=1e-9):
        raise ValueError(f"T={cfg.T} is not a whole number of steps dt={cfg.dt}")
    seed = IterateTrajectory.seed(cfg.initial, cfg.nsteps, cfg.dt)
    iterates = [seed, seed]
    psi: list[float] = []
    for n in range(1, n_max + 1):
        nxt = run_linear_pass(iterates[n], b0, cfg)
        iterates.append(nxt)
        value = psi_norm(nxt, iterates[n], (iterates[n], iterates[n - 1]), b0)
        psi.append(value)
        if on_iterate is not None:
            on_iterate(n, value, nxt)
        iterates[n - 1] = None  # only the last two iterates are needed
        if value < psi_tol:
            return PicardResult(nxt, psi, True, n)
        if len(psi) > DIVERGENCE_WINDOW and all(
                psi[-k] >= psi[-k - 1] for k in range(1, DIVERGENCE_WINDOW + 1)):
            raise PicardDivergence(
                f"Psi non-decreasing over {DIVERGENCE_WINDOW} iterations "
                f"({psi[-DIVERGENCE_WINDOW - 1]:.3e} -> {psi[-1]:.3e}); try a smaller T", psi)
    return PicardResult(iterates[-1], psi, False, n_max)


def run_simulation(cfg, **kwargs):
    """Full run from a validated :class:`~lagmhd.harness.config.SimConfig`."""
    from .harness.runner import run_simulation as _run
    return _run(cfg, **kwargs)
