"""Verification studies shared by the CLI and the acceptance tests.

Each study returns plain dictionaries so callers can print or assert on them.
"""
from __future__ import annotations

import math

import numpy as np

from ..evolve import EvolveConfig, picard_iterate, stable_dt
from ..geometry import FlowMapState, build_geometry, identity_dJ_check, piola_max
from ..grid import Grid, Parity, ScalarField, hardy_ratio, interior_max, observed_orders
from ..magnetics import frozen_in, lagrangian_div_residual
from ..pressure import elliptic_system, solve_pressure
from .config import parse_config
from .presets import build_initial_state, screw_pinch_seed

ROUNDOFF_FLOOR = 1e-12
DEFAULT_LEVELS = (32, 64, 128)


# --- test maps ----------------------------------------------------------------

def shear_map(grid: Grid, amp: float = 0.1) -> FlowMapState:
    """``(R, Z) = (r, z + amp sin r)``; not axis-regular, so Z - z carries no parity."""
    return FlowMapState.from_functions(grid, Z=lambda r, z: z + amp * np.sin(r), Zd_parity=Parity.NONE)


def smooth_map(grid: Grid, a: float = 0.05, b: float = 0.05) -> FlowMapState:
    """Axis-regular map ``(r (1 + a cos z), z + b sin z (1 + r^2))``."""
    return FlowMapState.from_functions(grid, R=lambda r, z: r * (1 + a * np.cos(z)),
                                       Z=lambda r, z: z + b * np.sin(z) * (1 + r * r))


def incompressible_map(grid: Grid, b: float = 0.1) -> FlowMapState:
    """Volume-preserving map ``(r (1 + b cos z)^(-1/2), z + b sin z)``."""
    return FlowMapState.from_functions(grid, R=lambda r, z: r / np.sqrt(1 + b * np.cos(z)),
                                       Z=lambda r, z: z + b * np.sin(z) + 0 * r)


def _orders(errors, levels):
    return observed_orders(errors, [1.0 / n for n in levels], floor=ROUNDOFF_FLOOR)


# --- geometry -----------------------------------------------------------------

def geometry_identity_study(levels=DEFAULT_LEVELS) -> dict:
    """Piola and dJ residuals for the shear and smooth maps, plus the shear F21 stencil error."""
    out = {}
    for name, make in (("shear", shear_map), ("smooth", smooth_map)):
        rows = {"piola": [], "dJ_r": [], "dJ_z": []}
        for n in levels:
            m = make(Grid(n, n))
            g = build_geometry(m)
            rows["piola"].append(piola_max(m, "interior", g))
            rows["dJ_r"].append(identity_dJ_check(m, "r", "interior", g))
            rows["dJ_z"].append(identity_dJ_check(m, "z", "interior", g))
        out[name] = {k: {"errors": v, "orders": _orders(v, levels)} for k, v in rows.items()}
    f21 = []
    for n in levels:
        grid = Grid(n, n)
        g = build_geometry(shear_map(grid))
        f21.append(interior_max(g.F[1, 0] - 0.1 * np.cos(grid.r)))
    out["shear"]["F21"] = {"errors": f21, "orders": _orders(f21, levels)}
    return out


# --- elliptic manufactured solutions --------------------------------------------

def _mapped_case(grid: Grid, a=0.05, b=0.05, c=0.3):
    m = smooth_map(grid, a, b)
    r, z = grid.r, grid.z
    R = r * (1 + a * np.cos(z))
    Z = z + b * np.sin(z) * (1 + r * r)
    F11, F12 = 1 + a * np.cos(z), -a * r * np.sin(z)
    F21, F22 = 2 * b * r * np.sin(z), 1 + b * np.cos(z) * (1 + r * r)
    J = F11 * F22 - F12 * F21

    def Q(R_, Z_):
        return R_ * R_ * (1 + c * np.cos(Z_))

    # the operator equals J times the Eulerian cylindrical Laplacian
    rhs = J * (4 * (1 + c * np.cos(Z)) - c * R * R * np.cos(Z))
    zt = grid.z_nodes
    Rt, Zt = grid.R0 * (1 + a * np.cos(zt)), zt + b * np.sin(zt) * (1 + grid.R0 ** 2)
    return m, rhs, Q(Rt, Zt), Q(R, Z)


def elliptic_case(name: str, grid: Grid):
    """Return (map, rhs, bc, exact) for a manufactured elliptic problem."""
    r, z = grid.r, grid.z
    if name == "r2":
        return FlowMapState.identity(grid), np.full(grid.shape, 4.0), np.ones(grid.Nz), r * r
    if name == "r2cosz":
        zt = grid.z_nodes
        return (FlowMapState.identity(grid), 4 * np.cos(z) - r * r * np.cos(z),
                1 + grid.R0 ** 2 * np.cos(zt), 1 + r * r * np.cos(z))
    if name == "mapped":
        return _mapped_case(grid)
    raise ValueError(f"unknown elliptic case {name!r}")


ELLIPTIC_CASES = ("r2", "r2cosz", "mapped")


def elliptic_mms_study(levels=DEFAULT_LEVELS, cases=ELLIPTIC_CASES) -> dict:
    out = {}
    for name in cases:
        errs = []
        for n in levels:
            grid = Grid(n, n)
            m, rhs, bc, exact = elliptic_case(name, grid)
            sys = elliptic_system(build_geometry(m), m.R, rhs, bc)
            errs.append(float(np.max(np.abs(solve_pressure(sys) - exact))))
        out[name] = {"errors": errs, "orders": _orders(errs, levels)}
    return out


def spd_check(grid: Grid, trials: int = 100, seed: int = 0) -> dict:
    """Symmetry defect and minimum energy over random interior-supported vectors."""
    m = smooth_map(grid)
    sys = elliptic_system(build_geometry(m), m.R, np.zeros(grid.shape), np.zeros(grid.Nz))
    rng = np.random.default_rng(seed)
    sym = 0.0
    min_energy = math.inf
    for _ in range(trials):
        p = np.zeros(grid.shape)
        q = np.zeros(grid.shape)
        p[1:-1] = rng.standard_normal((grid.Nr - 2, grid.Nz))
        q[1:-1] = rng.standard_normal((grid.Nr - 2, grid.Nz))
        lhs = sys.inner(sys.apply(q), p)
        rhs = sys.inner(q, sys.apply(p))
        scale = math.sqrt(sys.inner(q, q) * sys.inner(p, p))
        sym = max(sym, abs(lhs - rhs) / scale)
        # -L is the positive operator
        min_energy = min(min_energy, -sys.inner(sys.apply(q), q) / sys.inner(q, q))
    return {"symmetry": sym, "min_energy": min_energy}


# --- Hardy ----------------------------------------------------------------------

def hardy_corpus():
    """At least twenty smooth odd-parity profiles ``g(r, z)``."""
    corpus = []
    for p in (1, 3, 5):
        for kz in (0, 1, 2):
            corpus.append((f"r^{p} cos({kz}z)", lambda r, z, p=p, k=kz: r ** p * np.cos(k * z)))
    for kz in (1, 2, 3):
        corpus.append((f"r sin({kz}z)", lambda r, z, k=kz: r * np.sin(k * z)))
    for a in (0.5, 1.0, 2.0):
        corpus.append((f"sin({a}r)", lambda r, z, a=a: np.sin(a * r)))
        corpus.append((f"tanh({a}r)(2+cos z)", lambda r, z, a=a: np.tanh(a * r) * (2 + np.cos(z))))
    corpus.append(("r exp(-r^2)", lambda r, z: r * np.exp(-r * r)))
    corpus.append(("r/(1+r^2) sin z", lambda r, z: r / (1 + r * r) * np.sin(z)))
    return corpus


def hardy_study(levels=(32, 64), s: int = 1) -> dict:
    out = {}
    for name, f in hardy_corpus():
        ratios = [hardy_ratio(ScalarField.from_function(Grid(n, n), f, Parity.ODD), s) for n in levels]
        out[name] = ratios
    return out


# --- frozen-in ------------------------------------------------------------------

def frozen_in_study(levels=DEFAULT_LEVELS) -> dict:
    errs = []
    for n in levels:
        grid = Grid(n, n)
        m = incompressible_map(grid)
        b0 = screw_pinch_seed(grid, 0.5, 0.5)
        errs.append(lagrangian_div_residual(frozen_in(b0, m), build_geometry(m), m))
    return {"errors": errs, "orders": _orders(errs, levels)}


# --- time-dependent manufactured solutions -----------------------------------------

def temporal_mms_study(case_id: int, levels=(16, 32, 64), T: float = 0.5, psi_tol: float = 1e-14) -> dict:
    """Final-time max error of a manufactured evolution against its exact fields."""
    errs = {"vth": [], "Th": [], "vr": [], "vz": [], "Rd": [], "Zd": []}
    dts = []
    for n in levels:
        cfg = parse_config({"Nr": n, "Nz": n, "T": T, "preset": f"mms({case_id})"})
        data = build_initial_state(cfg)
        st = data.state
        dt = stable_dt(T, st.grid, data.b0, st.kin, cfg.time.cfl_safety)
        res = picard_iterate(EvolveConfig(st, T, dt, source=data.source), data.b0, 12, psi_tol)
        final = res.trajectory.snapshots[-1]
        ex = data.exact(final.t)
        got = {"vth": final.kin.vth.values, "Th": final.map.Th.values, "vr": final.kin.vr.values,
               "vz": final.kin.vz.values, "Rd": final.map.Rd.values, "Zd": final.map.Zd.values}
        for k in errs:
            errs[k].append(float(np.max(np.abs(got[k] - ex[k]))))
        dts.append(dt)
    total = [max(v[i] for v in errs.values()) for i in range(len(levels))]
    return {"levels": list(levels), "dt": dts, "errors": errs, "total": total,
            "orders": observed_orders(total, dts, floor=ROUNDOFF_FLOOR)}
