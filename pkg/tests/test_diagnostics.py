import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lagmhd.diagnostics import (
    DiagnosticsRecord,
    Flag,
    WellposednessViolation,
    curl,
    divergence_relation,
    energy_functional,
    residual_report,
    startup_flags,
    wellposedness_monitor,
)
from lagmhd.evolve import Kinematics, SimState
from lagmhd.geometry import FlowMapState
from lagmhd.grid import Grid
from lagmhd.harness.presets import screw_pinch_seed
from lagmhd.magnetics import MagneticSeed

PI2 = math.pi ** 2


def rest(grid):
    return SimState.rest(grid, 1.0, math.e)


def test_energy_of_rest_is_zero(grid32):
    assert energy_functional(rest(grid32), MagneticSeed.zero(grid32)) == 0.0


def test_energy_screw_pinch():
    # b^theta = r, b^z = 1: ||r||_4^2 + ||1||_4^2 = (pi^2 + 2 pi^2) + 2 pi^2
    g = Grid(128, 128)
    E = energy_functional(rest(g), screw_pinch_seed(g, 1.0, 1.0), 4)
    assert E == pytest.approx(5 * PI2, rel=1e-3)


def test_energy_rigid_rotation():
    # v^theta = r with no field: ||r||_4^2 = 3 pi^2
    g = Grid(128, 128)
    st_ = replace(rest(g), kin=Kinematics.from_arrays(g, np.zeros(g.shape), g.r.copy(), np.zeros(g.shape)))
    assert energy_functional(st_, MagneticSeed.zero(g), 4) == pytest.approx(3 * PI2, rel=1e-3)


@pytest.mark.parametrize("k", [0, 1, 5])
def test_energy_order_validated(grid32, k):
    with pytest.raises(ValueError):
        energy_functional(rest(grid32), MagneticSeed.zero(grid32), k)


def test_divergence_relation_solenoidal_flow():
    errs = []
    for n in (32, 64):
        g = Grid(n, n)
        vr = 0.01 * g.r * np.sin(g.z)
        vz = 0.02 * np.cos(g.z)
        st_ = replace(rest(g), kin=Kinematics.from_arrays(g, vr, np.zeros(g.shape), vz))
        errs.append(float(np.max(np.abs(divergence_relation(st_, None, None)[1:-1]))))
    # centered d_z of cos z: relative error hz^2 / 6
    assert errs[0] < 2e-4 and errs[1] < errs[0] / 3.5


def test_curl_of_rest(grid32):
    assert np.all(curl(rest(grid32)).values == 0.0)


def test_residual_report_rest(grid32):
    rec = residual_report(rest(grid32), MagneticSeed.zero(grid32), psi=0.0)
    assert rec.E == 0.0 and rec.div_v == 0.0 and rec.piola == 0.0
    assert rec.C == 1.0 and rec.A == 0.0 and rec.delta == 0.0 and rec.psi == 0.0


# --- records ------------------------------------------------------------------------------

def make_record(**kw):
    base = dict(t=0.0, E=1.0, C=1.0, A=0.0, div_v=0.0, piola=0.0, curl_v=0.0, frozen_div=0.0,
                maxA_dev=0.0, delta=0.5, psi=None)
    base.update(kw)
    return DiagnosticsRecord(**base)


@settings(max_examples=40, deadline=None)
@given(vals=st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=10, max_size=10),
       psi=st.none() | st.floats(0, 1e3))
def test_record_json_round_trip(vals, psi):
    keys = ["t", "E", "C", "A", "div_v", "piola", "curl_v", "frozen_div", "maxA_dev", "delta"]
    rec = DiagnosticsRecord(**dict(zip(keys, vals)), psi=psi)
    assert DiagnosticsRecord.from_json(rec.to_json()) == rec


def test_record_rejects_unknown_keys():
    d = make_record().to_dict()
    d["bogus"] = 1
    with pytest.raises(KeyError):
        DiagnosticsRecord.from_dict(d)


# --- monitors ------------------------------------------------------------------------------

def test_monitor_quiet_for_good_records():
    assert wellposedness_monitor([make_record(t=0.1 * k) for k in range(5)], 1.0) == []


def test_monitor_energy_flag_once():
    recs = [make_record(t=0.0, E=1.0), make_record(t=0.1, E=2.5), make_record(t=0.2, E=3.0)]
    flags = wellposedness_monitor(recs, 1.0)
    assert [(f.kind, f.t) for f in flags] == [("energy", 0.1)]
    assert flags[0].threshold == 2.0


def test_monitor_margin():
    assert wellposedness_monitor([make_record(E=2.1)], 1.0, tol_margin=0.1) == []


def test_monitor_kinds_and_seen():
    recs = [make_record(maxA_dev=0.2, delta=0.0)]
    assert {f.kind for f in wellposedness_monitor(recs, 1.0)} == {"assumption", "noncollinear"}
    assert [f.kind for f in wellposedness_monitor(recs, 1.0, seen={"noncollinear"})] == ["assumption"]


def test_monitor_abort():
    with pytest.raises(WellposednessViolation) as ei:
        wellposedness_monitor([make_record(E=10.0)], 1.0, abort=True)
    assert ei.value.flag.kind == "energy"


def test_flag_message():
    msg = Flag("energy", 0.5, 3.0, 2.0).message
    assert msg.startswith("energy flag at t=0.5")


def test_startup_flags():
    g = Grid(32, 32)
    assert startup_flags(rest(g), screw_pinch_seed(g, 0.5, 0.5), 1e-6) == []
    azim = MagneticSeed.from_functions(g, bth=lambda r, z: r + 0 * z)
    assert [f.kind for f in startup_flags(rest(g), azim, 1e-6)] == ["noncollinear"]
    stretched = replace(rest(g), map=FlowMapState.from_functions(g, R=lambda r, z: 1.5 * r + 0 * z))
    kinds = [f.kind for f in startup_flags(stretched, screw_pinch_seed(g, 0.5, 0.5), 1e-6)]
    assert kinds == ["assumption"]


def test_rigid_rotation_residuals_vanish(grid32):
    st_ = replace(rest(grid32), kin=Kinematics.from_arrays(grid32, np.zeros(grid32.shape),
                                                         grid32.r.copy(), np.zeros(grid32.shape)))
    rec = residual_report(st_, MagneticSeed.zero(grid32))
    assert rec.div_v == 0.0 and rec.curl_v == 0.0


@pytest.mark.parametrize("preset", ["screw_pinch(0.5, 0.5)", "rigid_rotation(1.0)"])
def test_static_equilibria_raise_no_flags(preset):
    from lagmhd.harness.config import parse_config
    from lagmhd.harness.runner import run_simulation
    res = run_simulation(parse_config({"Nr": 16, "Nz": 16, "T": 0.05, "preset": preset}))
    kinds = {f.kind for f in res.flags}
    assert "energy" not in kinds and "assumption" not in kinds
    E = [r.E for r in res.records]
    assert max(E) == pytest.approx(min(E), rel=1e-10)
    assert max(r.div_v for r in res.records) < 1e-10
