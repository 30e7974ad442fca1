import numpy as np
import pytest

from conftest import TWO_BUS
from gnnse.errors import ParseError, SingularityError
from gnnse.grid import parse_network
from gnnse.measurements import build_jacobian
from gnnse.pipeline.dataset import (dataset_graphs, format_dataset, generate_dataset,
                                    parse_dataset, read_dataset, sample_graph, write_dataset)
from gnnse.placement import Placement
from gnnse.powerflow import LoadProfile, solve_power_flow
from gnnse.wls import solve_wls


@pytest.fixture(scope="module")
def ds(ieee30, pmus30):
    return generate_dataset(ieee30, pmus30, 4, 1e-3, (0.9, 1.1), seed=5)


def test_sample_contents(ds, ieee30):
    s = ds.samples[2]
    assert len(s.mset) == 50 and s.label.shape == (60,)
    assert np.all((s.load_p >= 0.9) & (s.load_p <= 1.1))
    np.testing.assert_array_equal(s.label, solve_wls(*build_jacobian(s.mset)).state.as_vector())


def test_noiseless_label_is_power_flow(ieee30, pmus30):
    d = generate_dataset(ieee30, pmus30, 1, sigma=0.0, seed=1)
    s = d.samples[0]
    exact = solve_power_flow(ieee30, LoadProfile(s.load_p, s.load_q)).as_vector()
    np.testing.assert_allclose(s.label, exact, rtol=0, atol=1e-10)


def test_byte_identical(tmp_path, ds, ieee30, pmus30):
    again = generate_dataset(ieee30, pmus30, 4, 1e-3, (0.9, 1.1), seed=5)
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    write_dataset(a, ds)
    write_dataset(b, again)
    assert a.read_bytes() == b.read_bytes()
    other = generate_dataset(ieee30, pmus30, 4, 1e-3, (0.9, 1.1), seed=6)
    assert format_dataset(other) != format_dataset(ds)


def test_prefix_stable(ds, ieee30, pmus30):
    # sample i depends only on (seed, i)
    short = generate_dataset(ieee30, pmus30, 2, 1e-3, (0.9, 1.1), seed=5)
    assert all(np.array_equal(a.label, b.label) for a, b in zip(short.samples, ds.samples))


def test_round_trip(tmp_path, ds):
    path = tmp_path / "d.txt"
    write_dataset(path, ds)
    back = read_dataset(path)
    assert back.network == ds.network and back.placement.bus_ids == ds.placement.bus_ids
    assert back.sigma == ds.sigma and back.bounds == ds.bounds and back.seed == ds.seed
    for a, b in zip(ds.samples, back.samples):
        assert a.mset == b.mset and np.array_equal(a.label, b.label)
        assert np.array_equal(a.load_q, b.load_q)
    assert format_dataset(back) == path.read_text()


def test_header_line(ds):
    lines = format_dataset(ds).splitlines()
    assert lines[0] == "GNNSE-DATASET 1"
    assert '"network_sha256"' in lines[1] and '"placement": [1, 2, 6' in lines[1]


def test_parse_errors(ds):
    text = format_dataset(ds)
    with pytest.raises(ParseError, match="not a dataset"):
        parse_dataset("hello\n")
    with pytest.raises(ParseError, match="version"):
        parse_dataset(text.replace("GNNSE-DATASET 1", "GNNSE-DATASET 2", 1))
    lines = text.splitlines()
    label_at = next(i for i, l in enumerate(lines) if l.startswith("label"))
    cut = lines[:label_at] + ["label 1.0 2.0"] + lines[label_at + 1:]
    with pytest.raises(ParseError) as exc:
        parse_dataset("\n".join(cut))
    assert exc.value.line == label_at + 1
    with pytest.raises(ParseError, match="announces"):
        parse_dataset("\n".join(lines[:label_at + 2]))
    with pytest.raises(ParseError, match="hash"):
        parse_dataset(text.replace('"network_sha256": "', '"network_sha256": "0', 1))


def test_unobservable_refused(ieee30):
    with pytest.raises(SingularityError) as exc:
        generate_dataset(ieee30, Placement(ieee30, [0, 1]), 1)
    assert exc.value.expected == 60 and exc.value.rank < 60


def test_graphs_and_exclusions(ds):
    plain = dataset_graphs(ds, "plain")
    aug = dataset_graphs(ds, "augmented")
    assert plain[0].n_factor == 100 and not plain[0].augmented and aug[0].augmented
    cut = sample_graph(ds, ds.samples[0], "augmented", exclude=[0, 3])
    assert cut.n_factor == 96
    np.testing.assert_array_equal(cut.labels, ds.samples[0].label)
    with pytest.raises(ValueError):
        dataset_graphs(ds, "dense")


def test_resamples_non_convergent(caplog):
    # loads far beyond the line capacity make every draw diverge
    net = parse_network(TWO_BUS.replace("2, 0.0, 0.0, 0.0, 0.0, PQ", "2, 60.0, 30.0, 0.0, 0.0, PQ"))
    with pytest.raises(Exception, match="no convergent"):
        generate_dataset(net, Placement(net, [0]), 1, bounds=(0.9, 1.1))
    assert "redrawing" in caplog.text
