"""PMU phasor measurements, their linear measurement functions and simulation.

State-variable layout is ``[Re V_1..Re V_n, Im V_1..Im V_n]``. Each phasor
contributes two real rows (real part first).

CSV records are ``kind,elem_id,value_re,value_im,var_re,var_im`` with
``kind`` in ``V`` (bus voltage; ``elem_id`` is the external bus id), ``IF``
(current leaving the tap side of a branch) or ``IT`` (current leaving the
other end); for currents ``elem_id`` is the 1-based branch record number.
"""
import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix

from .errors import ParseError


class Kind(enum.Enum):
    V = "V"
    IF = "IF"
    IT = "IT"

    @property
    def code(self):
        return _KIND_CODE[self]


_KIND_CODE = {Kind.V: 0, Kind.IF: 1, Kind.IT: 2}


@dataclass(frozen=True)
class PhasorKind:
    """What a phasor measures; ``element`` is an internal bus or branch index."""
    kind: Kind
    element: int

    def __str__(self):
        return f"{self.kind.value}({self.element})"


def bus_voltage(bus):
    return PhasorKind(Kind.V, bus)


def current_from(branch):
    return PhasorKind(Kind.IF, branch)


def current_to(branch):
    return PhasorKind(Kind.IT, branch)


@dataclass(frozen=True)
class PhasorMeasurement:
    kind: PhasorKind
    value_re: float
    value_im: float
    var_re: float
    var_im: float

    def __post_init__(self):
        if not (self.var_re > 0 and self.var_im > 0):
            raise ValueError(f"{self.kind}: variances must be positive")
        if not (math.isfinite(self.value_re) and math.isfinite(self.value_im)):
            raise ValueError(f"{self.kind}: non-finite value")


@dataclass(frozen=True)
class MeasurementSet:
    network: object
    phasors: tuple

    def __post_init__(self):
        object.__setattr__(self, "phasors", tuple(self.phasors))
        seen = set()
        for m in self.phasors:
            _check_kind(m.kind, self.network)
            if m.kind in seen:
                raise ValueError(f"duplicate measurement {m.kind}")
            seen.add(m.kind)

    def __len__(self):
        return len(self.phasors)

    def __iter__(self):
        return iter(self.phasors)

    def __getitem__(self, i):
        return self.phasors[i]

    @property
    def kinds(self):
        return [m.kind for m in self.phasors]

    def values(self):
        """Measured components z, interleaved (re, im) per phasor."""
        return np.array([v for m in self.phasors for v in (m.value_re, m.value_im)])

    def variances(self):
        return np.array([v for m in self.phasors for v in (m.var_re, m.var_im)])


def _check_kind(kind, network):
    if kind.kind is Kind.V:
        if not 0 <= kind.element < network.n_bus:
            raise ValueError(f"{kind}: bus index out of range")
    elif not 0 <= kind.element < network.n_branch:
        raise ValueError(f"{kind}: branch index out of range")


def measurement_rows(kind, network):
    """Sparse Jacobian rows ``({col: coeff}, {col: coeff})`` for the real and imaginary part.

    Current rows always carry four structural entries, even if a coefficient
    happens to be zero (e.g. a lossless transformer).
    """
    _check_kind(kind, network)
    n = network.n_bus
    if kind.kind is Kind.V:
        i = kind.element
        return {i: 1.0}, {n + i: 1.0}

    br = network.branches[kind.element]
    g, b, bs, tau, phi = br.g, br.b, br.b_sh, br.tau, br.phi
    i, j = br.from_bus, br.to_bus
    r = g / tau * math.cos(phi)
    t = b / tau * math.sin(phi)
    u = b / tau * math.cos(phi)
    p = g / tau * math.sin(phi)
    if kind.kind is Kind.IF:
        q = g / tau ** 2
        w = (b + bs) / tau ** 2
        row_re = {i: q, n + i: -w, j: -(r - t), n + j: u + p}
        row_im = {i: w, n + i: q, j: -(u + p), n + j: -(r - t)}
    else:
        zc = g
        e = b + bs
        row_re = {j: zc, n + j: -e, i: -(r + t), n + i: u - p}
        row_im = {j: e, n + j: zc, i: -(u - p), n + i: -(r + t)}
    return dict(sorted(row_re.items())), dict(sorted(row_im.items()))


def jacobian_for(kinds, network):
    """Sparse H (2*len(kinds) x 2n) for a list of phasor kinds."""
    data, rows, cols = [], [], []
    for p, kind in enumerate(kinds):
        for part, row in enumerate(measurement_rows(kind, network)):
            for col, coeff in row.items():
                rows.append(2 * p + part)
                cols.append(col)
                data.append(coeff)
    return csr_matrix((data, (rows, cols)), shape=(2 * len(kinds), 2 * network.n_bus))


def build_jacobian(mset):
    """Return ``(H, R, z)``: sparse Jacobian, variance vector and measured values."""
    if len(mset) == 0:
        raise ValueError("measurement set is empty")
    return jacobian_for(mset.kinds, mset.network), mset.variances(), mset.values()


def simulate_measurements(network, state, kinds, sigma, rng=None):
    """Exact phasor values plus independent N(0, sigma^2) noise on each component.

    Reported variances equal sigma^2. Noiseless sets (sigma = 0) report unit
    variance, which leaves the WLS estimate unchanged.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if hasattr(kinds, "phasors"):
        kinds = kinds.phasors
    kinds = list(kinds)
    rng = np.random.default_rng(rng)
    exact = jacobian_for(kinds, network) @ state.as_vector()
    noisy = exact + rng.normal(0.0, sigma, size=exact.size) if sigma > 0 else exact
    var = sigma ** 2 if sigma > 0 else 1.0
    phasors = [PhasorMeasurement(k, float(noisy[2 * p]), float(noisy[2 * p + 1]), var, var)
               for p, k in enumerate(kinds)]
    return MeasurementSet(network, phasors)


def exclude_phasors(mset, indices):
    """Drop both components of each listed phasor; remaining order is kept."""
    indices = set(int(i) for i in indices)
    bad = [i for i in indices if not 0 <= i < len(mset)]
    if bad:
        raise ValueError(f"phasor indices out of range: {sorted(bad)}")
    return MeasurementSet(mset.network,
                          [m for p, m in enumerate(mset.phasors) if p not in indices])


# --------------------------------------------------------------------------- CSV

CSV_HEADER = "kind,elem_id,value_re,value_im,var_re,var_im"


def _elem_id(kind, network):
    if kind.kind is Kind.V:
        return network.buses[kind.element].id
    return kind.element + 1


def format_measurements(mset, header=True):
    out = [CSV_HEADER] if header else []
    for m in mset.phasors:
        out.append(f"{m.kind.kind.value},{_elem_id(m.kind, mset.network)},"
                   f"{m.value_re!r},{m.value_im!r},{m.var_re!r},{m.var_im!r}")
    return "\n".join(out) + "\n"


def parse_measurement_lines(lines, network, first_lineno=1):
    phasors = []
    for lineno, raw in enumerate(lines, start=first_lineno):
        line = raw.split("#", 1)[0].strip()
        if not line or line == CSV_HEADER:
            continue
        tok = [t.strip() for t in line.split(",")]
        if len(tok) != 6:
            raise ParseError(f"measurement record needs 6 fields, got {len(tok)}", lineno)
        try:
            kind = Kind(tok[0])
            elem = int(tok[1])
            vals = [float(t) for t in tok[2:]]
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if kind is Kind.V:
            try:
                element = network.index_of(elem)
            except ValueError:
                raise ParseError(f"unknown bus id {elem}", lineno) from None
        else:
            element = elem - 1
            if not 0 <= element < network.n_branch:
                raise ParseError(f"unknown branch number {elem}", lineno)
        try:
            phasors.append(PhasorMeasurement(PhasorKind(kind, element), *vals))
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    return MeasurementSet(network, phasors)


def parse_measurements(text, network):
    return parse_measurement_lines(text.splitlines(), network)
