from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import TWO_BUS, random_network, random_state
from gnnse.errors import ParseError
from gnnse.grid import Branch, branch_admittance, parse_network
from gnnse.measurements import (MeasurementSet, PhasorMeasurement, build_jacobian, bus_voltage,
                                current_from, current_to, exclude_phasors, format_measurements,
                                jacobian_for, measurement_rows, parse_measurements,
                                simulate_measurements)
from gnnse.powerflow import branch_terminal_currents, solve_power_flow


def _complex_rows(br, n, end):
    # real rows obtained from the complex row  I = a V_i + b V_j
    blk = branch_admittance(br)
    a, b = (blk[0, 0], blk[0, 1]) if end == "from" else (blk[1, 0], blk[1, 1])
    re, im = np.zeros(2 * n), np.zeros(2 * n)
    for c, bus in ((a, br.from_bus), (b, br.to_bus)):
        re[bus] += c.real
        re[n + bus] -= c.imag
        im[bus] += c.imag
        im[n + bus] += c.real
    return re, im


def _dense(row, n):
    out = np.zeros(2 * n)
    for k, v in row.items():
        out[k] = v
    return out


def test_voltage_rows(ieee30):
    re, im = measurement_rows(bus_voltage(3), ieee30)
    assert re == {3: 1.0} and im == {33: 1.0}


def test_line_current_rows():
    net = parse_network(TWO_BUS.replace("0.0, 1.0, 0.0\n", "0.02, 1.0, 0.0\n"))
    re, _ = measurement_rows(current_from(0), net)
    assert re == {0: 1.0, 1: -1.0, 2: -(-10.0 + 0.02), 3: -10.0}


def test_transformer_rows_two_ways():
    net = parse_network(TWO_BUS)
    br = Branch(0, 1, 1.0, -10.0, 0.0, 2.0, 0.1)
    net = replace(net, branches=[br])
    for kind, end in ((current_from(0), "from"), (current_to(0), "to")):
        re, im = measurement_rows(kind, net)
        want_re, want_im = _complex_rows(br, 2, end)
        np.testing.assert_allclose(_dense(re, 2), want_re, atol=1e-12, rtol=0)
        np.testing.assert_allclose(_dense(im, 2), want_im, atol=1e-12, rtol=0)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2 ** 32 - 1))
def test_jacobian_reproduces_currents(n, seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, n)
    state = random_state(rng, n)
    kinds = [current_from(k) for k in range(net.n_branch)] + [current_to(k) for k in range(net.n_branch)]
    z = jacobian_for(kinds, net) @ state.as_vector()
    i_from, i_to = branch_terminal_currents(net, state)
    want = np.concatenate([i_from, i_to])
    np.testing.assert_allclose(z[0::2], want.real, atol=1e-12)
    np.testing.assert_allclose(z[1::2], want.imag, atol=1e-12)


def test_fig1_jacobian_shape():
    net = parse_network(TWO_BUS)
    st_ = solve_power_flow(net)
    m = simulate_measurements(net, st_, [bus_voltage(0), current_from(0)], 0.0)
    H, R, z = build_jacobian(m)
    assert H.shape == (4, 4)


def test_full_placement_shape(ieee30, pmus30):
    m = simulate_measurements(ieee30, solve_power_flow(ieee30), pmus30, 1e-3, 0)
    H, R, z = build_jacobian(m)
    assert H.shape == (100, 60)
    np.testing.assert_array_equal(R, 1e-6)


def test_empty_set_rejected(ieee30):
    with pytest.raises(ValueError):
        build_jacobian(MeasurementSet(ieee30, []))


def test_noiseless_values_exact(ieee30, pmus30):
    state = solve_power_flow(ieee30)
    m = simulate_measurements(ieee30, state, pmus30, 0.0)
    H, R, z = build_jacobian(m)
    np.testing.assert_array_equal(z, H @ state.as_vector())
    assert np.all(R == 1.0)


def test_noise_statistics(ieee30, pmus30):
    state = solve_power_flow(ieee30)
    exact = build_jacobian(simulate_measurements(ieee30, state, pmus30, 0.0))[2]
    rng = np.random.default_rng(0)
    draws = np.array([build_jacobian(simulate_measurements(ieee30, state, pmus30, 1e-3, rng))[2]
                      for _ in range(100)]) - exact
    assert abs(draws.std() / 1e-3 - 1) < 0.05  # 10000 components
    a = simulate_measurements(ieee30, state, pmus30, 1e-3, 9).values()
    np.testing.assert_array_equal(a, simulate_measurements(ieee30, state, pmus30, 1e-3, 9).values())


def test_exclusions(ieee30, pmus30):
    m = simulate_measurements(ieee30, solve_power_flow(ieee30), pmus30, 1e-3, 0)
    assert exclude_phasors(m, []) == m
    keep = exclude_phasors(m, range(1, 50))
    assert len(keep) == 1 and keep[0] == m[0]
    volts = [p for p, k in enumerate(m.kinds) if k.kind.value == "V"]
    assert len(exclude_phasors(m, volts)) == 40
    with pytest.raises(ValueError):
        exclude_phasors(m, [50])


def test_csv_round_trip(ieee30, pmus30):
    m = simulate_measurements(ieee30, solve_power_flow(ieee30), pmus30, 1e-3, 4)
    text = format_measurements(m)
    assert parse_measurements(text, ieee30) == m


def test_csv_errors(ieee30):
    with pytest.raises(ParseError) as exc:
        parse_measurements("kind,elem_id,value_re,value_im,var_re,var_im\nV,1,1.0,0.0,1e-6\n", ieee30)
    assert exc.value.line == 2
    with pytest.raises(ParseError, match="branch"):
        parse_measurements("IF,42,1.0,0.0,1e-6,1e-6\n", ieee30)
    with pytest.raises(ParseError, match="positive"):
        parse_measurements("V,1,1.0,0.0,0.0,1e-6\n", ieee30)


def test_duplicate_rejected(ieee30):
    m = PhasorMeasurement(bus_voltage(0), 1.0, 0.0, 1.0, 1.0)
    with pytest.raises(ValueError, match="duplicate"):
        MeasurementSet(ieee30, [m, m])
