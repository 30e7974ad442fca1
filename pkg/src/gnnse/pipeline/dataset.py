"""Labelled measurement datasets.

File layout (version 1, plain text)::

    GNNSE-DATASET 1
    {header JSON, sorted keys, one line}
    sample <index> seed <seed> attempt <attempt>
    load_p <n floats>
    load_q <n floats>
    kind,elem_id,value_re,value_im,var_re,var_im
    <one CSV record per phasor>
    label <2n floats: Re V_1..Re V_n, Im V_1..Im V_n>
    end
    ...

The header carries ``network`` (native network text), ``network_sha256``,
``placement`` (external bus ids), ``sigma``, ``bounds``, ``seed`` and
``count``. Floats are written with ``repr`` so files round-trip exactly and
identical inputs give byte-identical files.
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError, ParseError, SingularityError
from ..factor_graph import augment, build_factor_graph, remove_factors
from ..grid import parse_network, to_native
from ..measurements import (CSV_HEADER, build_jacobian, format_measurements,
                            parse_measurement_lines, simulate_measurements)
from ..placement import Placement
from ..powerflow import sample_load_profile, solve_power_flow
from ..wls import solve_wls

log = logging.getLogger(__name__)

MAGIC = "GNNSE-DATASET"
VERSION = 1
MAX_ATTEMPTS = 100


@dataclass(frozen=True)
class Sample:
    mset: object
    label: np.ndarray
    seed: int = 0
    attempt: int = 0
    load_p: np.ndarray = None
    load_q: np.ndarray = None


@dataclass
class Dataset:
    network: object
    placement: Placement
    sigma: float
    bounds: tuple
    seed: int
    samples: list = field(default_factory=list)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def labels(self):
        return np.array([s.label for s in self.samples])

    def header(self):
        text = to_native(self.network)
        return {
            "network": text,
            "network_sha256": hashlib.sha256(text.encode()).hexdigest(),
            "placement": [int(b) for b in self.placement.bus_ids],
            "sigma": float(self.sigma),
            "bounds": [float(self.bounds[0]), float(self.bounds[1])],
            "seed": int(self.seed),
            "count": len(self.samples),
        }


def sample_seed(seed, index, attempt):
    return np.random.SeedSequence([int(seed), int(index), int(attempt)])


def generate_sample(network, placement, sigma, bounds, seed, index):
    """One labelled sample; non-convergent power flows are redrawn."""
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng(sample_seed(seed, index, attempt))
        profile = sample_load_profile(network, bounds, rng)
        try:
            state = solve_power_flow(network, profile)
        except (DivergenceError, SingularityError) as exc:
            log.warning("sample %d attempt %d: power flow failed (%s); redrawing", index, attempt, exc)
            continue
        mset = simulate_measurements(network, state, placement, sigma, rng)
        label = solve_wls(*build_jacobian(mset)).state.as_vector()
        return Sample(mset, label, int(seed), attempt, profile.scale_p, profile.scale_q)
    raise DivergenceError(f"sample {index}: no convergent load profile", float("nan"), MAX_ATTEMPTS)


def generate_dataset(network, placement, count, sigma=1e-3, bounds=(0.9, 1.1), seed=0):
    if count < 0:
        raise ValueError("count must be non-negative")
    rank = placement.rank()
    if rank < 2 * network.n_bus:
        raise SingularityError("placement does not make the network observable",
                               rank=rank, expected=2 * network.n_bus)
    samples = [generate_sample(network, placement, sigma, bounds, seed, i) for i in range(count)]
    return Dataset(network, placement, sigma, tuple(bounds), seed, samples)


# --------------------------------------------------------------------------- text format

def _floats(values):
    return " ".join(repr(float(v)) for v in values)


def format_dataset(ds):
    out = [f"{MAGIC} {VERSION}", json.dumps(ds.header(), sort_keys=True)]
    for i, s in enumerate(ds.samples):
        out.append(f"sample {i} seed {s.seed} attempt {s.attempt}")
        if s.load_p is not None:
            out.append("load_p " + _floats(s.load_p))
            out.append("load_q " + _floats(s.load_q))
        out.append(format_measurements(s.mset).rstrip("\n"))
        out.append("label " + _floats(s.label))
        out.append("end")
    return "\n".join(out) + "\n"


def _vector(line, key, lineno, n):
    tok = line.split()
    if not tok or tok[0] != key:
        raise ParseError(f"expected '{key}'", lineno)
    try:
        vals = np.array([float(t) for t in tok[1:]])
    except ValueError as exc:
        raise ParseError(str(exc), lineno) from None
    if vals.size != n:
        raise ParseError(f"'{key}' needs {n} values, got {vals.size}", lineno)
    return vals


def parse_dataset(text):
    lines = text.splitlines()
    if not lines or lines[0].split()[:1] != [MAGIC]:
        raise ParseError("not a dataset file", 1)
    if lines[0].split()[1:] != [str(VERSION)]:
        raise ParseError(f"unsupported dataset version {lines[0]!r}", 1)
    try:
        header = json.loads(lines[1])
    except (IndexError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad header: {exc}", 2) from None
    network = parse_network(header["network"])
    if hashlib.sha256(to_native(network).encode()).hexdigest() != header["network_sha256"]:
        raise ParseError("network hash mismatch", 2)
    placement = Placement(network, [network.index_of(b) for b in header["placement"]])
    n = network.n_bus
    ds = Dataset(network, placement, header["sigma"], tuple(header["bounds"]), header["seed"])
    i = 2
    while i < len(lines):
        tok = lines[i].split()
        if not tok:
            i += 1
            continue
        if tok[0] != "sample" or len(tok) != 6:
            raise ParseError("expected 'sample <i> seed <s> attempt <a>'", i + 1)
        seed, attempt = int(tok[3]), int(tok[5])
        i += 1
        load_p = load_q = None
        if lines[i].startswith("load_p"):
            load_p = _vector(lines[i], "load_p", i + 1, n)
            load_q = _vector(lines[i + 1], "load_q", i + 2, n)
            i += 2
        start = i
        while i < len(lines) and not lines[i].startswith("label"):
            i += 1
        if i == len(lines):
            raise ParseError("sample without label", start + 1)
        mset = parse_measurement_lines(lines[start:i], network, first_lineno=start + 1)
        label = _vector(lines[i], "label", i + 1, 2 * n)
        if i + 1 >= len(lines) or lines[i + 1].strip() != "end":
            raise ParseError("expected 'end'", i + 2)
        ds.samples.append(Sample(mset, label, seed, attempt, load_p, load_q))
        i += 2
    if len(ds.samples) != header.get("count", len(ds.samples)):
        raise ParseError(f"header announces {header['count']} samples, found {len(ds.samples)}", 2)
    return ds


def write_dataset(path, ds):
    with open(path, "w", newline="\n") as fh:
        fh.write(format_dataset(ds))


def read_dataset(path):
    with open(path) as fh:
        return parse_dataset(fh.read())


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --------------------------------------------------------------------------- graphs

GRAPH_TYPES = ("plain", "augmented")


def sample_graph(ds, sample, graph="augmented", exclude=()):
    """Factor graph of one sample with the listed phasor positions removed."""
    if graph not in GRAPH_TYPES:
        raise ValueError(f"graph must be one of {GRAPH_TYPES}")
    g = build_factor_graph(ds.network, sample.mset, sample.label)
    if graph == "augmented":
        g = augment(g, ds.network)
    if len(exclude):
        g = remove_factors(g, exclude)
    return g


def dataset_graphs(ds, graph="augmented", exclusions=None):
    """Graphs for every sample; ``exclusions`` is an optional per-sample list of positions."""
    if exclusions is None:
        exclusions = [()] * len(ds)
    return [sample_graph(ds, s, graph, ex) for s, ex in zip(ds.samples, exclusions)]
