import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lagmhd.geometry import FlowMapState, GeometryError, build_geometry
from lagmhd.grid import Grid
from lagmhd.harness.checks import frozen_in_study, incompressible_map
from lagmhd.harness.presets import screw_pinch_seed
from lagmhd.magnetics import (
    MagneticSeed,
    VacuumGeometryError,
    VacuumState,
    advance_C,
    boundary_pressure,
    frozen_in,
    lagrangian_div_residual,
    vacuum_A,
    validate_seed,
)

E = math.e


# --- seed validation ------------------------------------------------------------

def test_screw_pinch_seed_admissible(grid32):
    rep = validate_seed(screw_pinch_seed(grid32, 0.5, 0.5), 1e-6)
    assert rep["ok"] and rep["admissible"]
    assert rep["div_residual"] < 1e-12
    assert rep["delta"] == pytest.approx(0.5)


def test_radial_seed_not_solenoidal(grid32):
    # div (r, 0, 0) = (1/r) d_r(r^2) = 2
    rep = validate_seed(MagneticSeed.from_functions(grid32, br=lambda r, z: r + 0 * z), 1e-6)
    assert rep["div_residual"] == pytest.approx(2.0, abs=1e-10)
    assert not rep["div_ok"] and not rep["boundary_ok"] and not rep["admissible"]


def test_zero_seed_collinear(grid32):
    rep = validate_seed(MagneticSeed.zero(grid32), 1e-6)
    assert rep["delta"] == 0.0
    assert rep["admissible"] and not rep["noncollinear_ok"] and not rep["ok"]


def test_azimuthal_seed_has_no_axial_part(grid32):
    b0 = MagneticSeed.from_functions(grid32, bth=lambda r, z: r + 0 * z)
    assert b0.delta == 0.0


# --- frozen-in field -----------------------------------------------------------------

def test_frozen_in_identity_returns_seed(grid32):
    b0 = screw_pinch_seed(grid32, 0.3, 0.7)
    br, bth, bz = frozen_in(b0, FlowMapState.identity(grid32))
    assert np.array_equal(br.values, b0.b0r.values)
    assert np.allclose(bth.values, b0.b0th.values)
    assert np.array_equal(bz.values, b0.b0z.values)


def test_frozen_in_radial_dilation(grid32):
    # R = 2r scales b^theta by R/r and leaves b^z alone
    b0 = screw_pinch_seed(grid32, 1.0, 1.0)
    m = FlowMapState.from_functions(grid32, R=lambda r, z: 2 * r + 0 * z)
    br, bth, bz = frozen_in(b0, m)
    assert np.allclose(bth.values, 2 * b0.b0th.values)
    assert np.allclose(bz.values, 1.0)
    assert np.allclose(br.values, 0.0)


def test_frozen_in_picks_up_angle_twist(grid32):
    # Theta - theta = sin z, b0 = e_z: b^theta = R d_z(sin z) = r cos z
    b0 = screw_pinch_seed(grid32, 0.0, 1.0)
    m = FlowMapState.from_functions(grid32, Th=lambda r, z: np.sin(z) + 0 * r)
    _, bth, _ = frozen_in(b0, m)
    assert np.max(np.abs(bth.values - grid32.r * np.cos(grid32.z))) < 1e-2


def test_frozen_in_unchanged_by_shear(grid32):
    # b0z d_z R = 0 and c1 d_z Z = c1 for (r, z + s(r))
    from lagmhd.harness.checks import shear_map
    b0 = screw_pinch_seed(grid32, 0.5, 0.5)
    br, bth, bz = frozen_in(b0, shear_map(grid32))
    assert np.allclose(br.values, 0.0, atol=1e-15)
    assert np.allclose(bth.values, 0.5 * grid32.r, atol=1e-15)
    assert np.allclose(bz.values, 0.5, atol=1e-15)


def test_frozen_in_uniform_rotation(grid32):
    # Theta - theta = omega t is uniform, so only c0 r survives in b^theta
    b0 = screw_pinch_seed(grid32, 0.5, 0.5)
    m = FlowMapState.from_functions(grid32, Th=lambda r, z: 0.3 + 0 * r * z)
    _, bth, _ = frozen_in(b0, m)
    assert np.allclose(bth.values, 0.5 * grid32.r, atol=1e-15)


def test_inadmissible_seed_residual_order_one(grid32):
    b0 = MagneticSeed.from_functions(grid32, br=lambda r, z: r + 0 * z)
    m = FlowMapState.identity(grid32)
    res = lagrangian_div_residual(frozen_in(b0, m), build_geometry(m), m)
    assert res == pytest.approx(2.0, abs=1e-10)


def test_frozen_in_divergence_second_order():
    res = frozen_in_study()
    assert min(res["orders"]) >= 1.9


def test_frozen_in_divergence_small_on_incompressible_map(grid64):
    m = incompressible_map(grid64)
    b0 = screw_pinch_seed(grid64, 0.5, 0.5)
    assert lagrangian_div_residual(frozen_in(b0, m), build_geometry(m), m) < 1e-3


# --- vacuum law -------------------------------------------------------------------------

@pytest.mark.parametrize("vr,expected", [
    (lambda r, z: 0 * r * z, 0.0),
    (lambda r, z: 0.1 + 0 * r * z, 0.1),       # 2 pi * 0.1 / (2 pi * ln e)
    (lambda r, z: 0.1 * r + 0 * z, 0.1),
    (lambda r, z: 0.1 * np.sin(z) + 0 * r, 0.0),  # mean-zero numerator
])
def test_vacuum_A_examples(grid32, vr, expected):
    m = FlowMapState.identity(grid32)
    v = vr(grid32.r, grid32.z) * np.ones(grid32.shape)
    assert vacuum_A(v, np.zeros(grid32.shape), m, E) == pytest.approx(expected, abs=1e-13)


def test_vacuum_A_wall_inside_interface(grid32):
    with pytest.raises(VacuumGeometryError):
        vacuum_A(np.zeros(grid32.shape), np.zeros(grid32.shape), FlowMapState.identity(grid32), 0.9)


def test_advance_C_constant_rate():
    vs = advance_C(VacuumState.initial(1.0, E, 0.1), 0.1, 1.0)
    assert vs.C == pytest.approx(math.exp(0.1), rel=1e-15)
    assert vs.A == 0.1


def test_advance_C_linear_rate():
    # A(t) = t: trapezoid is exact, C(1) = exp(1/2)
    vs = VacuumState.initial(1.0, E, 0.0)
    dt = 1e-3
    for n in range(1, 1001):
        vs = advance_C(vs, n * dt, dt)
    assert vs.C == pytest.approx(math.exp(0.5), abs=1e-6)


def test_advance_C_rejects_bad_dt():
    with pytest.raises(ValueError):
        advance_C(VacuumState.initial(1.0, E), 0.0, 0.0)


def test_vacuum_state_rejects_bad_wall():
    with pytest.raises(ValueError):
        VacuumState.initial(1.0, -1.0)


@pytest.mark.parametrize("C,R,expected", [(1.0, 1.0, 0.5), (0.0, 1.0, 0.0), (2.0, 2.0, 0.5)])
def test_boundary_pressure(C, R, expected):
    assert boundary_pressure(C, np.array([R]))[0] == pytest.approx(expected)


def test_boundary_pressure_rejects_nonpositive():
    with pytest.raises(GeometryError):
        boundary_pressure(1.0, np.array([0.0]))


@settings(max_examples=30, deadline=None)
@given(c0=st.floats(-2, 2), c1=st.floats(-2, 2))
def test_screw_pinch_seed_always_admissible(c0, c1):
    g = Grid(16, 16)
    rep = validate_seed(screw_pinch_seed(g, c0, c1), 0.0)
    assert rep["admissible"]
    assert rep["delta"] == pytest.approx(abs(c1))


@settings(max_examples=30, deadline=None)
@given(C=st.floats(0, 10), s=st.floats(0.1, 10))
def test_boundary_pressure_scaling(C, s):
    # C^2 / (2 R^2) is invariant under (C, R) -> (s C, s R)
    R = np.array([1.3])
    assert boundary_pressure(s * C, s * R)[0] == pytest.approx(boundary_pressure(C, R)[0], rel=1e-12, abs=1e-300)
