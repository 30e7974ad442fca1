"""Experiment drivers: evaluation, exclusion sweep, PMU failure, sample efficiency.

CSV outputs (all with a header row):

* sweep: ``excluded,mse_augmented,mse_plain``
* node dump: ``sample,node,bus_id,part,prediction,label,abs_error,lower,upper,marked``
* sample efficiency: ``train_size,epochs,best_epoch,val_mse,test_mse,test_pearson``

Exclusion sets at count ``j`` for sample ``i`` come from
``SeedSequence([seed, i, j])``; counts are drawn independently, not nested.
Derived test sets keep each sample's measurement noise and its label.
"""
import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from ..factor_graph import build_factor_graph
from ..gnn.model import init_model, predict
from ..gnn.train import mse_of, train
from .dataset import dataset_graphs, generate_dataset
from .metrics import Metrics, compute_metrics

log = logging.getLogger(__name__)

SWEEP_MAX = 49
DUMP_HEADER = ["sample", "node", "bus_id", "part", "prediction", "label", "abs_error",
               "lower", "upper", "marked"]


def exclusion_sets(ds, count, seed):
    """Per-sample phasor positions to drop."""
    out = []
    for i, s in enumerate(ds.samples):
        n = len(s.mset)
        if count > n:
            raise ValueError(f"cannot exclude {count} of {n} phasors")
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), i, int(count)]))
        out.append(tuple(sorted(int(p) for p in rng.choice(n, size=count, replace=False))))
    return out


def _run(model, graphs):
    if callable(model):
        return [np.asarray(p) for p in model(graphs)]
    return predict(model, graphs)


@dataclass
class Evaluation:
    metrics: Metrics
    predictions: list
    labels: list
    exclusions: list = field(default_factory=list)


def evaluate(model, ds, graph="augmented", exclude=0, seed=0, exclusions=None):
    """Metrics of ``model`` on ``ds``.

    ``model`` is a :class:`GnnModel` or any callable mapping a list of graphs
    to per-graph predictions. Either ``exclude`` random phasors per sample or
    explicit per-sample ``exclusions`` are removed from the inputs; labels are
    always the full-measurement WLS solutions.
    """
    if len(ds) == 0:
        raise ValueError("dataset is empty")
    if exclusions is None:
        exclusions = exclusion_sets(ds, exclude, seed) if exclude else [()] * len(ds)
    graphs = dataset_graphs(ds, graph, exclusions)
    preds = _run(model, graphs)
    labels = [s.label for s in ds.samples]
    return Evaluation(compute_metrics(preds, labels), preds, labels, list(exclusions))


def label_bounds(*datasets):
    labels = np.concatenate([d.labels() for d in datasets if len(d)])
    return labels.min(axis=0), labels.max(axis=0)


def node_rows(ds, ev, bounds=None, marked=()):
    """Per-node dump rows for every sample of an evaluation."""
    n = ds.network.n_bus
    lo, hi = bounds if bounds is not None else label_bounds(ds)
    marked = set(int(m) for m in marked)
    rows = []
    for i, (p, y) in enumerate(zip(ev.predictions, ev.labels)):
        for j in range(2 * n):
            rows.append([i, j, ds.network.buses[j % n].id, "re" if j < n else "im",
                         float(p[j]), float(y[j]), abs(float(p[j]) - float(y[j])),
                         float(lo[j]), float(hi[j]), int(j in marked)])
    return rows


def write_csv(path, header, rows, comments=()):
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


# --------------------------------------------------------------------------- sweep

def exclusion_sweep(model_aug, model_plain, ds, seed=0, counts=range(SWEEP_MAX + 1)):
    """``[(count, mse_augmented, mse_plain)]`` for each excluded count."""
    rows = []
    for c in counts:
        ex = exclusion_sets(ds, c, seed)
        a = evaluate(model_aug, ds, "augmented", exclusions=ex).metrics.mse
        p = evaluate(model_plain, ds, "plain", exclusions=ex).metrics.mse
        log.info("excluded %d: augmented %.3e plain %.3e", c, a, p)
        rows.append((int(c), a, p))
    return rows


SWEEP_HEADER = ["excluded", "mse_augmented", "mse_plain"]
SWEEP_NOTE = "derived test sets reuse each base sample's noise draw and full-measurement label"


def smooth(values, window=5):
    """Centered moving average; the window shrinks at the ends."""
    v = np.asarray(values, dtype=float)
    h = window // 2
    return np.array([v[max(0, i - h):i + h + 1].mean() for i in range(len(v))])


# --------------------------------------------------------------------------- PMU failure

def failed_phasors(placement, bus_ids):
    net = placement.network
    idx = [net.index_of(b) for b in bus_ids]
    for b, i in zip(bus_ids, idx):
        if i not in placement.pmu_buses:
            raise ValueError(f"bus {b} has no PMU")
    if len(idx) == 2 and idx[1] not in net.neighbors(idx[0]):
        raise ValueError(f"buses {bus_ids[0]} and {bus_ids[1]} are not adjacent")
    return sorted(p for i in idx for p in placement.phasors_of(i))


def one_hop_variables(ds, positions):
    """Variable nodes connected to a factor of any listed phasor."""
    g = build_factor_graph(ds.network, ds.samples[0].mset)
    hit = np.isin(g.factor_phasor, list(positions))
    fv = g.fv_edges
    return sorted(set(int(v) for v in fv[hit[fv[:, 0]], 1]))


@dataclass
class FailureResult:
    evaluation: Evaluation
    removed: list
    marked: list
    rows: list

    @property
    def metrics(self):
        return self.evaluation.metrics


def pmu_failure_scenario(model, ds, bus_ids, graph="augmented", bounds=None):
    """Remove every phasor of the listed PMUs from each sample and evaluate."""
    if len(bus_ids) != 2:
        raise ValueError("expected two PMU buses")
    removed = failed_phasors(ds.placement, list(bus_ids))
    ev = evaluate(model, ds, graph, exclusions=[tuple(removed)] * len(ds))
    marked = one_hop_variables(ds, removed)
    rows = node_rows(ds, ev, bounds, marked)
    return FailureResult(ev, removed, marked, rows)


def top_error_hits(ev, marked, top=10):
    """How many of the ``top`` nodes by mean absolute error lie in ``marked``."""
    err = np.mean(np.abs(np.array(ev.predictions, dtype=float) - np.array(ev.labels)), axis=0)
    order = np.argsort(-err, kind="stable")[:top]
    return int(np.isin(order, list(marked)).sum()), order


# --------------------------------------------------------------------------- sample efficiency

SIZE_HEADER = ["train_size", "epochs", "best_epoch", "val_mse", "test_mse", "test_pearson"]


def sample_efficiency(network, placement, cfg, progress=None):
    """Train one model per training-set size and test all on one shared set.

    Training sets are prefixes of one generated pool, so smaller sets are
    subsets of larger ones.
    """
    pool = generate_dataset(network, placement, max(cfg.sizes), cfg.sigma, cfg.bounds, cfg.seed)
    val = generate_dataset(network, placement, cfg.val_count, cfg.sigma, cfg.bounds, cfg.seed + 1)
    test = generate_dataset(network, placement, cfg.test_count, cfg.sigma, cfg.bounds, cfg.seed + 2)
    all_train = dataset_graphs(pool, cfg.graph)
    val_g = dataset_graphs(val, cfg.graph)
    rows = []
    for size, epochs in zip(cfg.sizes, cfg.size_epochs):
        hyper = cfg.hyperparams(epochs=epochs)
        model = init_model(hyper, network.n_bus, np.random.default_rng([cfg.seed, size]))
        res = train(model, all_train[:size], val_g, hyper, np.random.default_rng([cfg.seed, size, 1]),
                    progress)
        ev = evaluate(res.model, test, cfg.graph)
        rows.append([size, epochs, res.best_epoch, mse_of(res.model, val_g),
                     ev.metrics.mse, ev.metrics.pearson])
        log.info("size %d: test mse %.3e pearson %.6f", size, ev.metrics.mse, ev.metrics.pearson)
    return rows
