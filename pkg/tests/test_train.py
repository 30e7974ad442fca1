from dataclasses import replace

import numpy as np
import pytest

from conftest import labelled_graphs
from gnnse.errors import NumericError
from gnnse.gnn.model import Hyperparams, init_model
from gnnse.gnn.train import Adam, clip_by_global_norm, global_norm, mse_of, train
from gnnse.placement import Placement

SMALL = Hyperparams(s=8, K=2, batch=4, epochs=3)


@pytest.fixture(scope="module")
def data(four_bus):
    pl = Placement(four_bus, [0, 2])
    return labelled_graphs(four_bus, pl, 12, seed=1), labelled_graphs(four_bus, pl, 4, seed=2)


def test_zero_lr_keeps_parameters(data):
    model = init_model(replace(SMALL, lr=0.0), 4, 0)
    before = model.copy()
    train(model, *data, rng=0)
    assert all(np.array_equal(model.params[k], before.params[k]) for k in model.params)


def test_adam_matches_reference():
    p = {"w": np.array([1.0, -2.0])}
    opt = Adam(p, lr=0.1)
    m = v = np.zeros(2)
    ref = np.array([1.0, -2.0])
    for t, g in enumerate([np.array([0.5, -1.0]), np.array([0.1, 0.3]), np.array([-0.2, 0.0])], 1):
        opt.step(p, {"w": g})
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.1 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        np.testing.assert_allclose(p["w"], ref, rtol=1e-15)


def test_clipping():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert global_norm(g) == 5.0
    clipped, norm = clip_by_global_norm(g, 0.5)
    assert norm == 5.0 and global_norm(clipped) == pytest.approx(0.5)
    same, _ = clip_by_global_norm(g, 10.0)
    assert same is g


def test_history_and_best(data):
    model = init_model(SMALL, 4, 0)
    res = train(model, *data, rng=0)
    assert [r.epoch for r in res.history] == [1, 2, 3]
    assert res.best_val == min(r.val_loss for r in res.history)
    assert mse_of(res.model, data[1]) == res.best_val


def test_seeded_runs_identical(data):
    a = train(init_model(SMALL, 4, 0), *data, rng=7)
    b = train(init_model(SMALL, 4, 0), *data, rng=7)
    assert all(np.array_equal(a.model.params[k], b.model.params[k]) for k in a.model.params)
    assert [r.val_loss for r in a.history] == [r.val_loss for r in b.history]


def test_loss_decreases(data):
    res = train(init_model(replace(SMALL, epochs=30, lr=3e-3), 4, 0), *data, rng=0)
    assert res.history[-1].train_loss < 0.1 * res.history[0].train_loss


@pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
def test_numeric_error_keeps_history(data):
    train_set, val = data
    bad = list(train_set)
    feats = bad[5].factor_features.copy()
    feats[:, 0] = np.inf
    bad[5] = replace(bad[5], factor_features=feats)
    with pytest.raises(NumericError) as exc:
        train(init_model(replace(SMALL, batch=32), 4, 0), bad, val, rng=0)
    assert exc.value.graph_index == 5
    assert exc.value.history == []


def test_empty_sets_rejected(data):
    with pytest.raises(ValueError):
        train(init_model(SMALL, 4, 0), [], data[1])


def test_overfits_ten_samples(ieee30, pmus30):
    # capacity sanity run: default hyperparameters on 10 IEEE 30-bus samples
    graphs = labelled_graphs(ieee30, pmus30, 10, seed=9)
    hyper = Hyperparams(epochs=500)
    res = train(init_model(hyper, 30, 0), graphs, graphs, hyper, 0)
    assert res.history[-1].train_loss < 1e-6
