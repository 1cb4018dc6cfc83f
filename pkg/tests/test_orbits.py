import math

import numpy as np
import pytest

from reeblab import flow, jets, orbits
from reeblab.errors import InconclusiveError
from reeblab.gallery import builtin, infinity_cylinder_point
from reeblab.system import sample_points


def test_s3_zeros_are_poles():
    s = builtin("s3_b")
    rep = orbits.zero_set_report(s, orbits.z_seed_grid(s, 32, 0))
    assert rep["verdict"] == "isolated"
    zeros = sorted(rep["zeros"], key=lambda p: p[1])
    assert np.allclose(zeros, [[0, -1, 0, 0], [0, 1, 0, 0]], atol=1e-10)


def test_t3_zero_families():
    s = builtin("t3_bm")
    rep = orbits.zero_set_report(s, orbits.z_seed_grid(s, 64, 0))
    assert rep["verdict"] == "families" and rep["zeros"] == []
    fams = rep["families"]
    assert len(fams) == 4
    assert all(f["free"] == ["y"] for f in fams)
    got = sorted((round(f["fixed"]["x"] % (2 * math.pi), 8) % round(2 * math.pi, 8),
                  round(f["fixed"]["phi"], 8)) for f in fams)
    want = sorted((round(x, 8), round(phi, 8)) for x in (0.0, math.pi)
                  for phi in (math.pi / 2, 3 * math.pi / 2))
    assert got == want


def test_s2s1_is_degenerate():
    s = builtin("s2s1")
    rep = orbits.zero_set_report(s, orbits.z_seed_grid(s, 16, 0))
    assert rep["verdict"] == "degenerate-family"
    assert len(rep["all_zeros"]) == 16


@pytest.mark.parametrize("y1", [0.0, 0.5])
def test_s3_on_z_periods(y1):
    s = builtin("s3_b")
    r = math.sqrt(1 - y1 * y1)
    rec = orbits.periodic_from_seed(s, [0.0, y1, r, 0.0])
    assert rec.on_z
    assert rec.period == pytest.approx(math.pi * (1 + y1 * y1), abs=1e-6)
    assert rec.closure_residual <= 1e-6
    assert orbits.revalidate(s, rec) <= 1e-6


def test_cylinder_period():
    s = builtin("rpc3bp_infinity_cylinder", c=1.0)
    rec = orbits.periodic_from_seed(s, infinity_cylinder_point(0.0, 1.0, 1.0))
    assert rec.period == pytest.approx(3 * math.pi, abs=1e-6)


def test_t3_on_z_period_and_scan():
    s = builtin("t3_bm")
    rec = orbits.periodic_from_seed(s, [0.0, 0.5, 1.0])
    assert rec.period == pytest.approx(2 * math.pi / math.cos(1.0), abs=1e-6)
    sec = flow.SectionSpec(lambda x, y, phi: jets.sin(y - 1.0), "+", name="y = 1")
    grid = [[0.0, 1.0, phi] for phi in (0.3, 1.0, 5.0, 6.0)]
    found = orbits.scan_periodic(s, sec, grid, T_max=60.0, on_z=True)
    assert len(found) == 4
    periods = sorted(e["record"].period for e in found)
    want = sorted(2 * math.pi / abs(math.cos(phi)) for phi in (0.3, 1.0, 5.0, 6.0))
    assert periods == pytest.approx(want, abs=1e-6)


def test_s3_off_z_scan_is_empty():
    s = builtin("s3_b")
    sec = flow.SectionSpec(lambda x1, y1, x2, y2: x2, "+", name="x2 = 0")
    grid = sample_points(s, np.random.default_rng(0), 6)
    assert orbits.scan_periodic(s, sec, grid, T_max=10.0) == []


def test_trap_cylinders_have_no_returns():
    s = builtin("trap_chart", eps=0.1)
    sec = flow.SectionSpec(lambda t, xi, th: xi, "both", name="xi = 0")
    grid = [[t, -0.5, 0.0] for t in (0.02, 0.05, 0.3)]
    assert orbits.scan_periodic(s, sec, grid, T_max=5.0) == []


def test_s3_singular_orbit():
    rec = orbits.detect_singular_orbit(builtin("s3_b"), [1.0, 0.0, 0.0, 0.0])
    assert rec.confirmed_plus and rec.confirmed_minus
    assert sorted([rec.p_plus[1], rec.p_minus[1]]) == pytest.approx([-1.0, 1.0], abs=1e-10)
    assert max(rec.final_distance_plus, rec.final_distance_minus) <= 1e-3
    assert max(rec.field_norm_plus, rec.field_norm_minus) <= 1e-8


def test_t3_singular_orbit():
    rec = orbits.detect_singular_orbit(builtin("t3_bm"), [math.pi / 2, 0.0, math.pi / 2])
    assert rec.p_plus[0] == pytest.approx(math.pi, abs=1e-10)
    assert rec.p_minus[0] == pytest.approx(0.0, abs=1e-10)
    assert rec.p_plus[2] == rec.p_minus[2] == pytest.approx(math.pi / 2)


def test_t3_generic_start_is_inconclusive():
    with pytest.raises(InconclusiveError) as info:
        orbits.detect_singular_orbit(builtin("t3_bm"), [math.pi / 2, 0.0, math.pi / 4])
    assert info.value.diagnostics


def test_t3_witness():
    s = builtin("t3_bm")
    tr = flow.flow_system(s, [1.0, 0.0, 1.0], 3.0)
    rep = orbits.witness_check(s, tr, "log_tan")
    assert rep["verdict"] == "pass" and rep["monotone"]
    assert rep["max_rate_residual"] <= 1e-8


def test_s3_witness_monotone():
    s = builtin("s3_b")
    p0 = sample_points(s, np.random.default_rng(5), 1)[0]
    tr = flow.flow_system(s, p0, 2.0)
    rep = orbits.witness_check(s, tr, "y1")
    assert rep["verdict"] == "pass" and rep["monotone"]


def test_constant_field_witness():
    s = builtin("darboux")
    tr = flow.flow_system(s, [0.1, 0.2, 0.0], 2.0)
    rep = orbits.witness_check(s, tr, lambda x, y, z: z, expected_rate=lambda x, y, z: 1.0)
    assert rep["verdict"] == "pass"
    assert rep["max_rate_residual"] <= 1e-12


def test_trap_table():
    rows, summary = orbits.trap_diagnostics(builtin("trap_chart", eps=0.1), [0.01, 0.05, 0.2])
    assert [r["dtheta_per_xi"] for r in rows] == pytest.approx([9999, 399, 0], abs=1e-9)
    assert summary["entry_exit"] == "violated" and summary["blowup_toward_Z"]
    assert max(r["formula_error"] for r in rows) <= 1e-10


def test_trap_order_two():
    rows, _ = orbits.trap_diagnostics(builtin("trap_chart", eps=0.1, k=2), [0.01])
    assert rows[0]["dtheta_per_xi"] == pytest.approx(1e8 - 1, rel=1e-12)
