"""PMU placement: pinned placement files and a greedy observability-driven search.

Placement files are plain text with one external bus id per line and ``#``
comments.
"""
from dataclasses import dataclass

from .errors import ParseError
from .measurements import bus_voltage, current_from, current_to, jacobian_for
from .wls import observability_rank


@dataclass(frozen=True)
class Placement:
    network: object
    pmu_buses: tuple  # internal indices, sorted

    def __post_init__(self):
        buses = tuple(sorted(set(int(b) for b in self.pmu_buses)))
        for b in buses:
            if not 0 <= b < self.network.n_bus:
                raise ValueError(f"PMU bus index {b} outside the network")
        object.__setattr__(self, "pmu_buses", buses)

    @property
    def phasors(self):
        """Voltage phasor then one current per incident branch (branch order), per PMU bus."""
        out = []
        for bus in self.pmu_buses:
            out.append(bus_voltage(bus))
            for k in self.network.incident_branches(bus):
                br = self.network.branches[k]
                out.append(current_from(k) if br.from_bus == bus else current_to(k))
        return out

    @property
    def bus_ids(self):
        return [self.network.buses[b].id for b in self.pmu_buses]

    def phasors_of(self, bus):
        """Positions (in :attr:`phasors`) of the phasors produced by the PMU at ``bus``."""
        if bus not in self.pmu_buses:
            raise ValueError(f"no PMU at bus index {bus}")
        pos = 0
        for b in self.pmu_buses:
            count = 1 + self.network.degree(b)
            if b == bus:
                return list(range(pos, pos + count))
            pos += count

    def jacobian(self):
        return jacobian_for(self.phasors, self.network)

    def rank(self):
        if not self.pmu_buses:
            return 0
        return observability_rank(self.jacobian())[0]

    def is_observable(self):
        return self.rank() == 2 * self.network.n_bus


def phasor_inventory(placement):
    """``(n_voltage, n_current)`` phasor counts."""
    n_v = len(placement.pmu_buses)
    n_i = sum(placement.network.degree(b) for b in placement.pmu_buses)
    return n_v, n_i


def greedy_place(network):
    """Add the PMU giving the largest rank gain until the system is observable.

    Ties go to the lowest external bus id.
    """
    chosen = []
    full = 2 * network.n_bus
    rank = 0
    order = sorted(range(network.n_bus), key=lambda i: network.buses[i].id)
    while rank < full:
        best, best_rank = None, rank
        for bus in order:
            if bus in chosen:
                continue
            r = Placement(network, chosen + [bus]).rank()
            if r > best_rank:
                best, best_rank = bus, r
        if best is None:
            # no single PMU helps; cannot happen on a connected network
            return Placement(network, range(network.n_bus))
        chosen.append(best)
        rank = best_rank
    return Placement(network, chosen)


def parse_placement(text, network):
    buses = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            bus_id = int(line)
        except ValueError:
            raise ParseError(f"bad bus id {line!r}", lineno) from None
        buses.append(network.index_of(bus_id))
    return Placement(network, buses)


def load_placement(path, network):
    with open(path) as fh:
        return parse_placement(fh.read(), network)


def format_placement(placement):
    return "".join(f"{b}\n" for b in placement.bus_ids)
