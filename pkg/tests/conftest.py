import math


import numpy as np
import pytest

from gnnse.cli import bundled
from gnnse.grid import Branch, Bus, BusKind, PowerNetwork, load_network
from gnnse.placement import Placement, load_placement
from gnnse.powerflow import StateVector

TWO_BUS = """\
base_mva = 100
[buses]
1, 0.0, 0.0, 0.0, 1.0, Slack
2, 0.0, 0.0, 0.0, 0.0, PQ
[branches]
1, 2, 1.0, -10.0, 0.0, 1.0, 0.0
"""


def pytest_addoption(parser):
    parser.addoption("--acceptance-cache", default=None,
                     help="directory for the trained acceptance models")


@pytest.fixture(scope="session")
def ieee30():
    return load_network(bundled("ieee30cdf.txt"))


@pytest.fixture(scope="session")
def pmus30(ieee30):
    return load_placement(bundled("ieee30_pmu.txt"), ieee30)


def random_network(rng, n, extra=None, taps=True):
    """Connected random network: a random tree plus a few chords."""
    buses = [Bus(i + 1, float(rng.uniform(0, 0.3)), float(rng.uniform(0, 0.1)), 0.0, 1.0,
                 BusKind.SLACK if i == 0 else BusKind.PQ) for i in range(n)]
    pairs = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    for _ in range(int(rng.integers(0, n)) if extra is None else extra):
        a, b = rng.choice(n, size=2, replace=False)
        if (min(a, b), max(a, b)) not in pairs and n > 1:
            pairs.append((int(min(a, b)), int(max(a, b))))
    branches = []
    for a, b in pairs:
        r, x = rng.uniform(0.01, 0.1), rng.uniform(0.05, 0.4)
        y = 1 / complex(r, x)
        tau, phi = 1.0, 0.0
        if taps and rng.random() < 0.2:
            tau, phi = float(rng.uniform(0.9, 1.1)), float(rng.uniform(-0.2, 0.2))
        branches.append(Branch(a, b, y.real, y.imag, float(rng.uniform(0, 0.05)), tau, phi))
    return PowerNetwork(buses, branches)


def random_state(rng, n):
    mag = rng.uniform(0.9, 1.1, n)
    ang = rng.uniform(-math.pi / 6, math.pi / 6, n)
    return StateVector.from_complex(mag * np.exp(1j * ang))


def random_placement(rng, net):
    """Random buses added until the placement is observable."""
    order = rng.permutation(net.n_bus)
    for k in range(1, net.n_bus + 1):
        pl = Placement(net, order[:k])
        if pl.is_observable():
            return pl
    raise AssertionError("full placement must be observable")


FOUR_BUS = """\
base_mva = 100
[buses]
1, 0.0, 0.0, 0.0, 1.02, Slack
2, 0.2, 0.1, 0.0, 0.0, PQ
3, 0.3, 0.1, 0.0, 0.0, PQ
4, 0.1, 0.05, 0.0, 0.0, PQ
[branches]
1, 2, 2.0, -12.0, 0.01, 1.0, 0.0
2, 3, 1.5, -9.0, 0.01, 1.0, 0.0
3, 4, 1.0, -8.0, 0.0, 0.98, 0.05
1, 4, 1.8, -11.0, 0.02, 1.0, 0.0
"""


@pytest.fixture(scope="session")
def four_bus():
    from gnnse.grid import parse_network
    return parse_network(FOUR_BUS)


def labelled_graphs(net, placement, count, seed=0, sigma=1e-3, augmented=True):
    """Graphs of freshly generated samples (power flow, noise, WLS label)."""
    from gnnse.pipeline.dataset import dataset_graphs, generate_dataset
    ds = generate_dataset(net, placement, count, sigma, (0.9, 1.1), seed)
    return dataset_graphs(ds, "augmented" if augmented else "plain")


# --------------------------------------------------------------------------- acceptance report

ACCEPTANCE = {}


@pytest.fixture(scope="session")
def verdict():
    """``verdict(n, ok, detail)`` records one acceptance line and returns ``ok``."""
    def record(n, ok, detail):
        ACCEPTANCE[n] = (bool(ok), detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
