import math
from dataclasses import replace

import numpy as np
import pytest

import lagmhd.evolve as ev
from lagmhd.evolve import (
    EvolveConfig,
    IterateTrajectory,
    Kinematics,
    PassError,
    PicardDivergence,
    SimState,
    StepSizeError,
    check_step,
    frozen_at,
    frozen_mid,
    picard_iterate,
    solve_state_pressure,
    stable_dt,
    step_sub1,
    step_sub2,
)
from lagmhd.geometry import FlowMapState
from lagmhd.grid import Grid, Parity, ScalarField, d_z
from lagmhd.harness.config import parse_config
from lagmhd.harness.presets import build_initial_state, screw_pinch_seed
from lagmhd.magnetics import MagneticSeed, boundary_pressure
from lagmhd.pressure import freeze

E = math.e


def state_with_map(grid, m):
    return replace(SimState.rest(grid, 1.0, E), map=m)


def frozen_pair(state, b0, eps=0.0):
    k = state.kin
    fr = freeze(state.map, k.vr.values, k.vth.values, k.vz.values, b0, state.vacuum.C, eps)
    return fr, fr


# --- subsystem 1 -------------------------------------------------------------------

@pytest.mark.parametrize("eps", [0.05, 0.1])
def test_sub1_dissipation_term(eps):
    # with b0 = c1 e_z the extra map rate is eps c1^2 d_z^2 Z
    grid = Grid(64, 64)
    c1, a, dt = 1.0, 0.05, 0.005
    b0 = screw_pinch_seed(grid, 0.0, c1)
    m = FlowMapState.from_functions(grid, Z=lambda r, z: z + a * np.sin(z) + 0 * r)
    st = state_with_map(grid, m)
    outs = {}
    for e in (0.0, eps):
        frs = frozen_pair(st, b0, e)
        s0 = solve_state_pressure(st, frs[0], b0)
        outs[e] = step_sub1(s0, frs, b0, dt, e)
    rate = (outs[eps].map.Zd.values - outs[0.0].map.Zd.values) / dt
    expected = eps * c1 * c1 * (-a * np.sin(grid.z))
    assert np.max(np.abs(rate - expected)) < 2e-2 * a * eps


def test_sub1_preserves_screw_pinch(grid32):
    cfg = parse_config({"Nr": 32, "Nz": 32, "preset": "screw_pinch(0.5, 0.5)"})
    data = build_initial_state(cfg)
    st, b0 = data.state, data.b0
    frs = frozen_pair(st, b0)
    s0 = solve_state_pressure(st, frs[0], b0)
    s1 = step_sub1(s0, frs, b0, 0.01)
    assert np.max(np.abs(s1.kin.vr.values)) < 1e-12
    assert np.max(np.abs(s1.kin.vz.values)) < 1e-12
    assert s1.t == pytest.approx(0.01)


def test_sub1_rejects_large_step(grid32):
    st = SimState.rest(grid32, 1.0, E)
    b0 = MagneticSeed.zero(grid32)
    with pytest.raises(StepSizeError):
        step_sub1(st, frozen_pair(st, b0), b0, 1.0)


# --- subsystem 2 ----------------------------------------------------------------------

def test_sub2_twist_drives_swirl():
    # Theta - theta = sin z, b0 = c1 e_z: v^theta gains dt c1^2 r (-sin z)
    grid = Grid(64, 64)
    c1, dt = 0.8, 0.005
    b0 = screw_pinch_seed(grid, 0.0, c1)
    m = FlowMapState.from_functions(grid, Th=lambda r, z: np.sin(z) + 0 * r)
    st = state_with_map(grid, m)
    s1 = step_sub2(st, frozen_pair(st, b0), b0, dt)
    gain = s1.kin.vth.values
    discrete = dt * c1 * d_z(grid.r * c1 * d_z(np.sin(grid.z), grid), grid)
    assert np.allclose(gain, discrete, rtol=0, atol=1e-15)
    exact = dt * c1 * c1 * grid.r * (-np.sin(grid.z))
    # composed centered differences: relative error (2 hz)^2 / 12
    assert np.max(np.abs(gain - exact)) < 1.1 * grid.hz ** 2 / 3 * dt * c1 * c1
    # the angle only moves at second order through v^theta / R
    assert np.max(np.abs(s1.map.Th.values - st.map.Th.values)) < dt * np.max(np.abs(gain))


def test_sub2_rigid_rotation_advances_angle(grid32):
    omega, dt = 0.7, 0.01
    kin = Kinematics.from_arrays(grid32, np.zeros(grid32.shape), omega * grid32.r, np.zeros(grid32.shape))
    st = replace(SimState.rest(grid32, 1.0, E), kin=kin)
    b0 = MagneticSeed.zero(grid32)
    s1 = step_sub2(st, frozen_pair(st, b0), b0, dt)
    assert np.allclose(s1.map.Th.values, omega * dt, atol=1e-15)
    assert np.allclose(s1.kin.vth.values, omega * grid32.r, atol=1e-15)


# --- pressure datum ------------------------------------------------------------------

def test_q_gamma_matches_boundary_pressure(grid32):
    b0 = screw_pinch_seed(grid32, 0.5, 0.5)
    m = FlowMapState.from_functions(grid32, R=lambda r, z: r * (1 + 0.02 * np.cos(z)))
    st = replace(state_with_map(grid32, m), vacuum=replace(SimState.rest(grid32, 1.3, E).vacuum))
    fr, _ = frozen_pair(st, b0)
    out = solve_state_pressure(st, fr, b0)
    assert np.array_equal(out.q_gamma, boundary_pressure(fr.C, fr.map.R_trace))


# --- step size --------------------------------------------------------------------------

def test_check_step_bound(grid32):
    b0 = screw_pinch_seed(grid32, 0.0, 2.0)
    kin = Kinematics.rest(grid32)
    bound = check_step(1e-4, grid32, b0, kin)
    assert bound == pytest.approx(0.4 * min(grid32.hr, grid32.hz) / 2.0)
    with pytest.raises(StepSizeError):
        check_step(1.01 * bound, grid32, b0, kin)


def test_stable_dt_divides_T(grid32):
    dt = stable_dt(0.25, grid32, MagneticSeed.zero(grid32), Kinematics.rest(grid32), 0.4)
    n = 0.25 / dt
    assert n == pytest.approx(round(n))
    check_step(dt, grid32, MagneticSeed.zero(grid32), Kinematics.rest(grid32))


# --- trajectories and frozen coefficients ------------------------------------------

def test_trajectory_rejects_off_grid_times(grid32):
    st = SimState.rest(grid32, 1.0, E)
    with pytest.raises(ValueError):
        IterateTrajectory((st, replace(st, t=0.3)), 0.1)
    with pytest.raises(ValueError):
        IterateTrajectory((), 0.1)


def test_seed_trajectory(grid32):
    tr = IterateTrajectory.seed(SimState.rest(grid32, 2.0, E), 4, 0.01)
    assert len(tr) == 5
    assert np.allclose(tr.times, 0.01 * np.arange(5))
    assert all(s.vacuum.C == 2.0 for s in tr.snapshots)


def test_frozen_mid_of_constant_trajectory(grid32):
    b0 = screw_pinch_seed(grid32, 0.5, 0.5)
    tr = IterateTrajectory.seed(SimState.rest(grid32, 1.0, E), 2, 0.01)
    a, m = frozen_at(tr, 0, b0, 0.0), frozen_mid(tr, 0, b0, 0.0)
    assert np.array_equal(a.geom.A, m.geom.A)
    assert a.C == m.C
    assert m.t == pytest.approx(0.005)


# --- Picard ----------------------------------------------------------------------------

def rest_config(grid, T=0.05):
    st = SimState.rest(grid, 1.0, E)
    dt = stable_dt(T, grid, MagneticSeed.zero(grid), st.kin, 0.4)
    return EvolveConfig(st, T, dt)


def test_rest_converges_immediately(grid32):
    res = picard_iterate(rest_config(grid32), MagneticSeed.zero(grid32))
    assert res.converged and res.iterations == 1
    assert res.psi_history == [0.0]


def test_picard_reports_each_iterate(grid32):
    seen = []
    picard_iterate(rest_config(grid32), MagneticSeed.zero(grid32), on_iterate=lambda n, p, t: seen.append((n, p)))
    assert seen == [(1, 0.0)]


def test_picard_divergence(grid32, monkeypatch):
    values = iter([1.0, 1.0, 2.0, 3.0, 4.0])
    monkeypatch.setattr(ev, "psi_norm", lambda *a: next(values))
    with pytest.raises(PicardDivergence) as ei:
        picard_iterate(rest_config(grid32), MagneticSeed.zero(grid32), n_max=10)
    assert ei.value.psi_history == [1.0, 1.0, 2.0, 3.0]


def test_picard_not_converged(grid32, monkeypatch):
    values = iter([4.0, 2.0, 1.0])
    monkeypatch.setattr(ev, "psi_norm", lambda *a: next(values))
    res = picard_iterate(rest_config(grid32), MagneticSeed.zero(grid32), n_max=3)
    assert not res.converged and res.iterations == 3


def test_picard_validates_inputs(grid32):
    cfg = rest_config(grid32)
    with pytest.raises(ValueError):
        picard_iterate(cfg, MagneticSeed.zero(grid32), n_max=1)
    with pytest.raises(ValueError):
        picard_iterate(replace(cfg, dt=0.03), MagneticSeed.zero(grid32))


def test_pass_error_names_node(grid32):
    cfg = replace(rest_config(grid32, T=1.0), dt=0.5)
    with pytest.raises(PassError) as ei:
        picard_iterate(cfg, MagneticSeed.zero(grid32))
    assert ei.value.node == 1
    assert isinstance(ei.value.__cause__, StepSizeError)


def test_perturbed_pinch_contracts():
    cfg = parse_config({"Nr": 32, "Nz": 32, "T": 0.05, "preset": "perturbed_pinch(0.5, 0.5, 0.01)"})
    data = build_initial_state(cfg)
    st = data.state
    dt = stable_dt(cfg.time.T, st.grid, data.b0, st.kin, 0.4)
    res = picard_iterate(EvolveConfig(st, cfg.time.T, dt), data.b0, 12, 1e-8)
    assert res.converged
    psi = res.psi_history
    assert all(b < 0.1 * a for a, b in zip(psi, psi[1:]))


def test_rest_step_unchanged(grid32):
    st = SimState.rest(grid32, 1.0, E)
    b0 = MagneticSeed.zero(grid32)
    frs = frozen_pair(st, b0)
    s0 = solve_state_pressure(st, frs[0], b0)
    assert np.allclose(s0.q.values, 0.5, atol=1e-12)
    s1 = step_sub1(s0, frs, b0, 0.005)
    s2 = step_sub2(s0, frs, b0, 0.005)
    assert s1.kin.sup < 1e-12 and np.max(np.abs(s1.map.Rd.values)) < 1e-14
    assert s2.kin.sup == 0.0 and np.all(s2.map.Th.values == 0.0)


def test_static_screw_pinch_is_fixed_point():
    cfg = parse_config({"Nr": 32, "Nz": 32, "T": 0.05, "preset": "screw_pinch(0.5, 0.5)"})
    data = build_initial_state(cfg)
    st = data.state
    dt = stable_dt(cfg.time.T, st.grid, data.b0, st.kin, 0.4)
    res = picard_iterate(EvolveConfig(st, cfg.time.T, dt), data.b0, 12, 1e-8)
    assert res.converged and res.iterations <= 4
    for s in res.trajectory.snapshots:
        assert s.kin.sup < 1e-10
        assert np.max(np.abs(s.map.Rd.values)) < 1e-10
