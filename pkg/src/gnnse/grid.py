"""Power network model: buses, unified pi-model branches, admittance assembly and I/O.

Two text formats are understood:

* IEEE Common Data Format (bus and branch sections only).
* A native line-oriented format::

      # comment
      base_mva = 100
      [buses]
      # id, load_p, load_q, gen_p, gen_v, kind[, shunt_g, shunt_b]
      1, 0.0, 0.0, 0.0, 1.06, Slack
      2, 0.217, 0.127, 0.4, 1.045, PV
      [branches]
      # from, to, g, b, b_sh, tau, phi
      1, 2, 5.22, -15.65, 0.0264, 1.0, 0.0

  Powers are per unit on ``base_mva``; ``b_sh`` is half the total charging
  susceptance; ``phi`` is in radians. Branch ends use external bus ids.
"""
import enum
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ParseError, ValidationError


class BusKind(enum.Enum):
    SLACK = "Slack"
    PV = "PV"
    PQ = "PQ"


@dataclass(frozen=True)
class Bus:
    id: int
    load_p: float = 0.0
    load_q: float = 0.0
    gen_p: float = 0.0
    gen_v: float = 0.0
    kind: BusKind = BusKind.PQ
    shunt_g: float = 0.0
    shunt_b: float = 0.0


@dataclass(frozen=True)
class Branch:
    """Unified branch model; ``from_bus``/``to_bus`` are internal 0-based indices.

    The off-nominal tap and phase shifter sit at ``from_bus``.
    """
    from_bus: int
    to_bus: int
    g: float
    b: float
    b_sh: float = 0.0
    tau: float = 1.0
    phi: float = 0.0

    @property
    def y(self):
        return complex(self.g, self.b)


@dataclass(frozen=True)
class PowerNetwork:
    buses: tuple
    branches: tuple
    base_mva: float = 100.0
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "_index", {b.id: i for i, b in enumerate(self.buses)})
        validate_network(self)

    @property
    def n_bus(self):
        return len(self.buses)

    @property
    def n_branch(self):
        return len(self.branches)

    @property
    def bus_ids(self):
        return [b.id for b in self.buses]

    @property
    def slack(self):
        return next(i for i, b in enumerate(self.buses) if b.kind is BusKind.SLACK)

    def index_of(self, bus_id):
        try:
            return self._index[bus_id]
        except KeyError:
            raise ValueError(f"unknown bus id {bus_id}") from None

    def incident_branches(self, bus):
        """Indices of branches touching internal bus ``bus``, in branch order."""
        return [k for k, br in enumerate(self.branches) if bus in (br.from_bus, br.to_bus)]

    def neighbors(self, bus):
        out = set()
        for br in self.branches:
            if br.from_bus == bus:
                out.add(br.to_bus)
            elif br.to_bus == bus:
                out.add(br.from_bus)
        return sorted(out)

    def degree(self, bus):
        return len(self.incident_branches(bus))

    def fingerprint(self):
        return hashlib.sha256(to_native(self).encode()).hexdigest()


def validate_network(net):
    n = len(net.buses)
    if n == 0:
        raise ValidationError("network has no buses")
    if len(net._index) != n:
        raise ValidationError("duplicate bus ids")
    n_slack = sum(b.kind is BusKind.SLACK for b in net.buses)
    if n_slack != 1:
        raise ValidationError(f"expected exactly one slack bus, found {n_slack}")
    for b in net.buses:
        vals = (b.load_p, b.load_q, b.gen_p, b.gen_v, b.shunt_g, b.shunt_b)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"bus {b.id}: non-finite data")
    if not net.branches:
        raise ValidationError("network has no branches")
    for k, br in enumerate(net.branches):
        if not (0 <= br.from_bus < n and 0 <= br.to_bus < n):
            raise ValidationError(f"branch {k + 1} references a bus outside the network")
        if br.from_bus == br.to_bus:
            raise ValidationError(f"branch {k + 1} is a self loop")
        if not br.tau > 0:
            raise ValidationError(f"branch {k + 1}: tap ratio must be positive")
        if not all(math.isfinite(v) for v in (br.g, br.b, br.b_sh, br.tau, br.phi)):
            raise ValidationError(f"branch {k + 1}: non-finite data")
    f = [br.from_bus for br in net.branches]
    t = [br.to_bus for br in net.branches]
    adj = coo_matrix((np.ones(len(f)), (f, t)), shape=(n, n))
    n_comp, _ = connected_components(adj, directed=False)
    if n_comp != 1:
        raise ValidationError(f"network is not connected ({n_comp} islands)")


def branch_admittance(branch):
    """2x2 block mapping (V_from, V_to) to (I_from_to, I_to_from)."""
    y = branch.y
    ys = 1j * branch.b_sh
    alpha = np.exp(-1j * branch.phi) / branch.tau
    return np.array([[(y + ys) / branch.tau ** 2, -np.conj(alpha) * y],
                     [-alpha * y, y + ys]], dtype=complex)


def bus_admittance_matrix(network):
    n = network.n_bus
    Y = np.zeros((n, n), dtype=complex)
    for br in network.branches:
        blk = branch_admittance(br)
        i, j = br.from_bus, br.to_bus
        Y[i, i] += blk[0, 0]
        Y[i, j] += blk[0, 1]
        Y[j, i] += blk[1, 0]
        Y[j, j] += blk[1, 1]
    for i, bus in enumerate(network.buses):
        Y[i, i] += complex(bus.shunt_g, bus.shunt_b)
    return Y


# --------------------------------------------------------------------------- parsing

def parse_network(text):
    """Parse CDF or native text into a :class:`PowerNetwork`."""
    if "BUS DATA FOLLOWS" in text:
        return _parse_cdf(text)
    return _parse_native(text)


def load_network(path):
    with open(path) as fh:
        return parse_network(fh.read())


def _num(tok, lineno, what):
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"bad {what} {tok!r}", lineno) from None


def _int(tok, lineno, what):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"bad {what} {tok!r}", lineno) from None


def _parse_cdf(text):
    lines = text.splitlines()
    base_mva = 100.0
    if lines and len(lines[0]) >= 37:
        try:
            base_mva = float(lines[0][31:37])
        except ValueError:
            pass
    buses, raw_branches = [], []
    section = None
    for lineno, line in enumerate(lines, start=1):
        if line.startswith("BUS DATA FOLLOWS"):
            section = "bus"
            continue
        if line.startswith("BRANCH DATA FOLLOWS"):
            section = "branch"
            continue
        if line.strip().startswith("-999") or line.strip().startswith("-99"):
            section = None
            continue
        if section is None or not line.strip():
            continue
        if section == "bus":
            bus_id = _int(line[0:4], lineno, "bus number")
            tok = line[18:].split()
            if len(tok) < 15:
                raise ParseError("bus record too short", lineno)
            typ = _int(tok[2], lineno, "bus type")
            v_final = _num(tok[3], lineno, "voltage")
            load_p, load_q = _num(tok[5], lineno, "load MW"), _num(tok[6], lineno, "load MVAr")
            gen_p = _num(tok[7], lineno, "generation MW")
            v_set = _num(tok[10], lineno, "desired volts")
            g_sh, b_sh = _num(tok[13], lineno, "shunt G"), _num(tok[14], lineno, "shunt B")
            kind = {3: BusKind.SLACK, 2: BusKind.PV}.get(typ, BusKind.PQ)
            if kind is BusKind.PQ:
                gen_v = 0.0
            else:
                gen_v = v_set if v_set > 0 else v_final
            buses.append(Bus(bus_id, load_p / base_mva, load_q / base_mva, gen_p / base_mva,
                             gen_v, kind, g_sh, b_sh))
        else:
            tok = line.split()
            if len(tok) < 9:
                raise ParseError("branch record too short", lineno)
            f, t = _int(tok[0], lineno, "tap bus"), _int(tok[1], lineno, "Z bus")
            r, x, b_tot = (_num(tok[k], lineno, name) for k, name in ((6, "R"), (7, "X"), (8, "B")))
            ratio = _num(tok[14], lineno, "tap ratio") if len(tok) > 14 else 0.0
            shift = _num(tok[15], lineno, "phase shift") if len(tok) > 15 else 0.0
            if r == 0 and x == 0:
                raise ParseError("branch with zero impedance", lineno)
            raw_branches.append((lineno, f, t, r, x, b_tot, ratio, shift))
    if not buses:
        raise ParseError("no bus data found")
    index = {b.id: i for i, b in enumerate(buses)}
    branches = []
    for lineno, f, t, r, x, b_tot, ratio, shift in raw_branches:
        if f not in index or t not in index:
            raise ValidationError(f"line {lineno}: branch {f}-{t} references an unknown bus")
        y = 1.0 / complex(r, x)
        branches.append(Branch(index[f], index[t], y.real, y.imag, b_tot / 2.0,
                               ratio if ratio != 0 else 1.0, math.radians(shift)))
    return PowerNetwork(buses, branches, base_mva)


def _parse_native(text):
    base_mva = 100.0
    section = None
    buses, raw_branches = [], []
    kinds = {k.value.lower(): k for k in BusKind}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("buses", "branches"):
                raise ParseError(f"unknown section [{section}]", lineno)
            continue
        if section is None:
            key, sep, value = line.partition("=")
            if not sep or key.strip() != "base_mva":
                raise ParseError(f"unexpected text {line!r}", lineno)
            base_mva = _num(value.strip(), lineno, "base_mva")
            continue
        tok = [t.strip() for t in line.split(",")]
        if section == "buses":
            if len(tok) not in (6, 8):
                raise ParseError(f"bus record needs 6 or 8 fields, got {len(tok)}", lineno)
            kind = kinds.get(tok[5].lower())
            if kind is None:
                raise ParseError(f"bad bus kind {tok[5]!r}", lineno)
            extra = [_num(t, lineno, "shunt") for t in tok[6:8]] or [0.0, 0.0]
            buses.append(Bus(_int(tok[0], lineno, "bus id"),
                             *(_num(t, lineno, "bus value") for t in tok[1:5]), kind, *extra))
        else:
            if len(tok) != 7:
                raise ParseError(f"branch record needs 7 fields, got {len(tok)}", lineno)
            vals = [_num(t, lineno, "branch value") for t in tok[2:]]
            raw_branches.append((lineno, _int(tok[0], lineno, "from bus"),
                                 _int(tok[1], lineno, "to bus"), vals))
    index = {b.id: i for i, b in enumerate(buses)}
    branches = []
    for lineno, f, t, vals in raw_branches:
        if f not in index or t not in index:
            missing = f if f not in index else t
            raise ValidationError(f"line {lineno}: branch references unknown bus {missing}")
        branches.append(Branch(index[f], index[t], *vals))
    return PowerNetwork(buses, branches, base_mva)


def to_native(network):
    """Serialize in the native format; floats use repr so parsing is exact."""
    out = [f"base_mva = {network.base_mva!r}", "[buses]",
           "# id, load_p, load_q, gen_p, gen_v, kind, shunt_g, shunt_b"]
    for b in network.buses:
        out.append(", ".join([str(b.id), repr(b.load_p), repr(b.load_q), repr(b.gen_p),
                              repr(b.gen_v), b.kind.value, repr(b.shunt_g), repr(b.shunt_b)]))
    out += ["[branches]", "# from, to, g, b, b_sh, tau, phi"]
    ids = network.bus_ids
    for br in network.branches:
        out.append(", ".join([str(ids[br.from_bus]), str(ids[br.to_bus]), repr(br.g), repr(br.b),
                              repr(br.b_sh), repr(br.tau), repr(br.phi)]))
    return "\n".join(out) + "\n"
