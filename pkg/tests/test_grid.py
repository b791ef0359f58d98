from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gridrm.grid import (
    BASE_MVA, DisconnectedNetwork, Topology, ValidationError, dc_opf, dc_power_flow, islands,
)
from gridrm.io import ParseError, case_from_dict, fixture_path, load_case

from conftest import make_case


def triangle():
    return make_case("123", [("L12", "1", "2", 10.0), ("L23", "2", "3", 10.0), ("L13", "1", "3", 10.0)],
                     [("G1", "1", 500, 10)], [("D3", "3", 100)])


def test_two_bus_flow_and_angle(bus2):
    sol = dc_power_flow(bus2, Topology.all_up(1), [BASE_MVA, -BASE_MVA])
    assert sol.flows[0] / BASE_MVA == pytest.approx(1.0, abs=1e-12)
    assert sol.angles[0] - sol.angles[1] == pytest.approx(0.1, abs=1e-12)


def test_triangle_split_matches_hand_solution():
    case = triangle()
    sol = dc_power_flow(case, Topology.all_up(3), [BASE_MVA, 0.0, -BASE_MVA])
    # direct path 1-3 carries 2/3, the detour 1-2-3 carries 1/3 on each leg
    np.testing.assert_allclose(sol.flows / BASE_MVA, [1 / 3, 1 / 3, 2 / 3], atol=1e-12)


def test_merit_order_single_bus():
    case = make_case("1", [], [("A", "1", 4, 10), ("B", "1", 4, 20)], [("D", "1", 5)])
    sol = dc_opf(case, Topology.all_up(0), allow_shed=False)
    np.testing.assert_allclose(sol.generation, [4, 1], atol=1e-9)
    assert sol.objective == pytest.approx(60)


def test_zero_load_gives_zero_dispatch():
    case = make_case("1", [], [("A", "1", 4, 10)], [("D", "1", 0)])
    sol = dc_opf(case, Topology.all_up(0))
    assert np.all(sol.generation == 0) and sol.objective == 0


def test_shed_remainder_at_voll():
    case = make_case("1", [], [("A", "1", 3, 10)], [("D", "1", 5)], voll=1000)
    sol = dc_opf(case, Topology.all_up(0), allow_shed=True)
    assert sol.total_shed == pytest.approx(2)
    assert sol.objective == pytest.approx(2030)


def test_islanded_load_is_shed_locally():
    case = make_case("12", [("L", "1", "2", 10.0)], [("A", "1", 50, 10)], [("D", "2", 10)])
    down = Topology.all_up(1).without([0])
    assert len(islands(case, down)) == 2
    sol = dc_opf(case, down, allow_shed=True)
    assert sol.total_shed == pytest.approx(10)
    with pytest.raises(DisconnectedNetwork):
        dc_power_flow(case, down, [10, -10])


def test_balance_residual_is_zero(pjm5):
    sol = dc_opf(pjm5, Topology.all_up(pjm5.n_lines))
    np.testing.assert_allclose(sol.balance_residual(pjm5), 0, atol=1e-6)


@given(st.floats(-5, 5), st.lists(st.floats(-100, 100), min_size=2, max_size=2))
def test_power_flow_is_linear(a, inj):
    case = triangle()
    P = np.array([inj[0], inj[1], -inj[0] - inj[1]])
    base = dc_power_flow(case, Topology.all_up(3), P).flows
    scaled = dc_power_flow(case, Topology.all_up(3), a * P).flows
    np.testing.assert_allclose(scaled, a * base, rtol=1e-9, atol=1e-9)


@given(st.floats(1, 100))
def test_removing_zero_flow_line_leaves_flows(mw):
    # L23 carries nothing when buses 2 and 3 sit at the same angle
    case = make_case("1234", [("L12", "1", "2", 10.0), ("L13", "1", "3", 10.0), ("L23", "2", "3", 5.0),
                              ("L24", "2", "4", 10.0), ("L34", "3", "4", 10.0)],
                     [("G", "1", 500, 1)], [("D", "4", 1)])
    P = [mw, 0, 0, -mw]
    full = dc_power_flow(case, Topology.all_up(5), P).flows
    assert abs(full[2]) < 1e-9
    cut = dc_power_flow(case, Topology.all_up(5).without([2]), P).flows
    np.testing.assert_allclose(np.delete(cut, 2), np.delete(full, 2), atol=1e-9)


@given(st.floats(0, 2000), st.floats(0, 2000))
def test_lower_voll_never_reduces_shed(v1, v2):
    # objective is concave in VOLL with slope = shed, so shed cannot grow with VOLL
    lo, hi = sorted((v1, v2))
    out = []
    for voll in (lo, hi):
        case = make_case("12", [("L", "1", "2", 10.0, 30)], [("A", "1", 100, 20), ("B", "2", 10, 900)],
                         [("D", "2", 60)], voll=voll)
        out.append(dc_opf(case, Topology.all_up(1), allow_shed=True))
    assert out[0].total_shed >= out[1].total_shed - 1e-6
    assert out[0].objective <= out[1].objective + 1e-6


def test_no_shed_when_capacity_suffices(pjm5):
    sol = dc_opf(pjm5, Topology.all_up(pjm5.n_lines), allow_shed=False)
    assert sol.total_shed == 0


def test_bus3_fixture_loads(bus3):
    assert bus3.n_buses == 3


def test_missing_bus_names_the_line():
    with pytest.raises(ValidationError) as err:
        make_case("12", [("Lbad", "1", "9", 10.0)], [("A", "1", 10, 1)], [("D", "2", 1)])
    assert any("Lbad" in v for v in err.value.violations)


def test_duplicate_generator_rejected():
    with pytest.raises(ValidationError) as err:
        make_case("1", [], [("A", "1", 10, 1), ("A", "1", 5, 2)], [("D", "1", 1)])
    assert any("duplicate generator" in v for v in err.value.violations)


def test_all_violations_reported_together():
    with pytest.raises(ValidationError) as err:
        make_case("12", [("L", "1", "7", -1.0)], [("A", "9", 10, 1)], [("D", "8", 1)])
    assert len(err.value.violations) >= 4


def test_parse_error_has_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n "buses": [1,\n}')
    with pytest.raises(ParseError) as err:
        load_case(p)
    assert err.value.line == 3


def test_strict_rejects_unknown_keys():
    data = {"buses": ["1"], "lines": [], "generators": [], "loads": [], "colour": "red"}
    case_from_dict(data)
    with pytest.raises(ValidationError):
        case_from_dict(data, strict=True)


def test_fixture_path_exists():
    assert fixture_path("pjm5.json").exists()
