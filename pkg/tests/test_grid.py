import cmath
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import TWO_BUS, random_network
from gnnse.errors import ParseError, ValidationError
from gnnse.grid import (Branch, BusKind, branch_admittance, bus_admittance_matrix, parse_network,
                        to_native)


def test_ieee30_counts(ieee30):
    assert ieee30.n_bus == 30
    assert ieee30.n_branch == 41
    assert ieee30.buses[ieee30.slack].id == 1
    assert sum(b.kind is BusKind.PV for b in ieee30.buses) == 5


def test_ieee30_transformers(ieee30):
    taps = sorted(round(br.tau, 3) for br in ieee30.branches if br.tau != 1.0)
    assert taps == [0.932, 0.968, 0.969, 0.978]


def test_two_bus_native():
    net = parse_network(TWO_BUS)
    assert (net.n_bus, net.n_branch) == (2, 1)
    assert net.branches[0].y == complex(1, -10)


def test_dangling_branch_rejected():
    text = TWO_BUS + "1, 99, 1.0, -10.0, 0.0, 1.0, 0.0\n"
    with pytest.raises(ValidationError, match="99"):
        parse_network(text)


def test_parse_error_carries_line():
    text = TWO_BUS.replace("2, 0.0, 0.0, 0.0, 0.0, PQ", "2, 0.0, oops, 0.0, 0.0, PQ")
    with pytest.raises(ParseError) as exc:
        parse_network(text)
    assert exc.value.line == 4


def test_island_rejected():
    text = TWO_BUS.replace("[branches]", "3, 0.0, 0.0, 0.0, 0.0, PQ\n[branches]")
    with pytest.raises(ValidationError, match="islands"):
        parse_network(text)


def test_two_slacks_rejected():
    with pytest.raises(ValidationError, match="slack"):
        parse_network(TWO_BUS.replace("0.0, PQ", "1.0, Slack"))


def test_line_block_symmetric():
    y = complex(2, -7)
    blk = branch_admittance(Branch(0, 1, y.real, y.imag))
    np.testing.assert_array_equal(blk, [[y, -y], [-y, y]])


def test_transformer_block():
    blk = branch_admittance(Branch(0, 1, 1.0, 0.0, tau=2.0))
    np.testing.assert_allclose(blk, [[0.25, -0.5], [-0.5, 1.0]], atol=1e-15)


def test_phase_shifter_block():
    blk = branch_admittance(Branch(0, 1, 1.0, 0.0, phi=math.pi / 2))
    np.testing.assert_allclose(blk[0, 1], -cmath.exp(1j * math.pi / 2), atol=1e-15)
    np.testing.assert_allclose(blk[1, 0], -cmath.exp(-1j * math.pi / 2), atol=1e-15)


def test_two_bus_ybus():
    Y = bus_admittance_matrix(parse_network(TWO_BUS))
    np.testing.assert_array_equal(Y, [[1 - 10j, -1 + 10j], [-1 + 10j, 1 - 10j]])


def _scalar_currents(br, vi, vj):
    # each scalar of the pi-model written out separately
    y = complex(br.g, br.b)
    ys = complex(0.0, br.b_sh)
    a = cmath.exp(-1j * br.phi) / br.tau
    iij = vi * (y + ys) / (br.tau * br.tau) - vj * a.conjugate() * y
    iji = -a * y * vi + (y + ys) * vj
    return iij, iji


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 10), st.floats(-50, 50), st.floats(0, 0.5), st.floats(0.8, 1.2),
       st.floats(-0.5, 0.5), st.complex_numbers(max_magnitude=2), st.complex_numbers(max_magnitude=2))
def test_block_matches_scalar_pi_model(g, b, bsh, tau, phi, vi, vj):
    br = Branch(0, 1, g, b, bsh, tau, phi)
    got = branch_admittance(br) @ np.array([vi, vj])
    want = _scalar_currents(br, vi, vj)
    scale = max(1.0, abs(complex(g, b)) * 4)
    assert abs(got[0] - want[0]) <= 1e-12 * scale
    assert abs(got[1] - want[1]) <= 1e-12 * scale


def test_ybus_rows_sum_to_zero_without_shunts(ieee30):
    # drop charging, bus shunts and taps, then Y 1 = 0 row by row
    net = replace(ieee30, buses=[replace(b, shunt_g=0.0, shunt_b=0.0) for b in ieee30.buses],
                  branches=[replace(br, b_sh=0.0, tau=1.0, phi=0.0) for br in ieee30.branches])
    Y = bus_admittance_matrix(net)
    assert Y.shape == (30, 30)
    np.testing.assert_allclose(Y.sum(axis=1), 0, atol=1e-12)


def test_ybus_matches_per_branch_oracle(ieee30):
    Y = np.zeros((30, 30), complex)
    for br in ieee30.branches:
        y, ys = complex(br.g, br.b), complex(0, br.b_sh)
        a = cmath.exp(-1j * br.phi) / br.tau
        i, j = br.from_bus, br.to_bus
        Y[i, i] += (y + ys) / br.tau ** 2
        Y[j, j] += y + ys
        Y[i, j] -= a.conjugate() * y
        Y[j, i] -= a * y
    for k, b in enumerate(ieee30.buses):
        Y[k, k] += complex(b.shunt_g, b.shunt_b)
    np.testing.assert_allclose(bus_admittance_matrix(ieee30), Y, atol=1e-12)


def test_native_round_trip(ieee30):
    text = to_native(ieee30)
    again = parse_network(text)
    assert to_native(again) == text
    assert again == ieee30


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 15), st.integers(0, 2 ** 32 - 1))
def test_native_round_trip_random(n, seed):
    net = random_network(np.random.default_rng(seed), n)
    assert parse_network(to_native(net)) == net
