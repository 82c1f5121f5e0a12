import math

import numpy as np
import pytest

from thermomesh.evaluation import (
    cross_eval,
    rmse,
    size_sweep,
    weight_distance_diagnostics,
)
from thermomesh.models import ThermalDecayModel, fit_model


def test_rmse_identical_is_zero():
    assert rmse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0


def test_rmse_hand_value():
    assert rmse([1.0, 2.0], [0.0, 0.0]) == pytest.approx(math.sqrt(2.5))
    assert rmse([1.0, 2.0], [0.0, 0.0]) == pytest.approx(1.5811, abs=1e-4)


def test_rmse_pair_permutation_invariant():
    preds = np.array([3.0, -1.0, 0.5])
    truths = np.array([2.0, 1.0, 0.0])
    perm = [2, 0, 1]
    assert rmse(preds, truths) == pytest.approx(rmse(preds[perm], truths[perm]))


def test_rmse_empty_rejected():
    with pytest.raises(ValueError):
        rmse([], [])


def test_rmse_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        rmse([1.0], [1.0, 2.0])


def test_size_sweep_shapes_and_determinism(oracle_dataset, rings):
    ds = oracle_dataset(rings["mrr1"], n_samples=400, label_noise=0.15, seed=20)
    a = size_sweep(ds, "ridge", sizes=[20, 50, 100], n_subsets=5, seed=2)
    b = size_sweep(ds, "ridge", sizes=[20, 50, 100], n_subsets=5, seed=2)
    assert a.sizes == [20, 50, 100]
    assert a.test_mean == b.test_mean
    assert a.train_std == b.train_std
    assert all(s >= 0 for s in a.test_std)
    # more data: better generalization, tighter spread
    assert a.test_mean[0] > a.test_mean[-1]
    assert a.test_std[0] > a.test_std[-1]


def test_size_sweep_rejects_oversized(oracle_dataset, rings):
    ds = oracle_dataset(rings["mrr1"], n_samples=100, seed=21)
    with pytest.raises(ValueError, match="exceeds"):
        size_sweep(ds, "total-phase", sizes=[2000], n_subsets=2, seed=0)


def test_cross_eval_diagonal_equals_own_test_rmse(oracle_dataset, rings):
    datasets = {name: oracle_dataset(ring, n_samples=300, label_noise=0.1, seed=30 + i)
                for i, (name, ring) in enumerate(rings.items())}
    models = {}
    reports = {}
    for name, ds in datasets.items():
        models[name], reports[name] = fit_model("thermal-decay", ds)
    matrix = cross_eval(models, datasets)
    for name in datasets:
        assert matrix.entry(name, name) == pytest.approx(reports[name].test_rmse_pm)
    assert matrix.values.shape == (3, 3)


def test_cross_eval_handles_differing_cell_counts(oracle_dataset, rings):
    # mrr3 has 58 interfering cells vs 66; the distance-aware model must
    # still evaluate across placements
    datasets = {name: oracle_dataset(ring, n_samples=200, label_noise=0.1, seed=40 + i)
                for i, (name, ring) in enumerate(rings.items())}
    models = {name: fit_model("thermal-decay", ds)[0] for name, ds in datasets.items()}
    matrix = cross_eval(models, datasets)
    assert np.all(np.isfinite(matrix.values))
    trained_on_66 = matrix.entry("mrr3", "mrr1")
    assert trained_on_66 > 0


def test_cross_eval_missing_model_rejected(oracle_dataset, rings):
    datasets = {"mrr1": oracle_dataset(rings["mrr1"], n_samples=50, seed=50)}
    with pytest.raises(ValueError, match="no trained model"):
        cross_eval({}, datasets)


def test_weight_diagnostics_perfectly_anticorrelated():
    distances = np.array([1.0, 2.0, 3.0, 4.0])
    weights = np.array([0.6, 0.5, 0.3, 0.1])
    diag = weight_distance_diagnostics(weights, distances)
    assert diag["spearman_rho"] == pytest.approx(-1.0)
    assert [row[1] for row in diag["rows"]] == sorted(distances.tolist())


def test_weight_diagnostics_shuffled_weights_uncorrelated():
    rng = np.random.default_rng(60)
    distances = np.sort(rng.uniform(1, 6, 66))
    rhos = []
    for _ in range(20):
        weights = rng.permutation(np.linspace(0.1, 0.6, 66))
        rhos.append(weight_distance_diagnostics(weights, distances)["spearman_rho"])
    assert abs(np.mean(rhos)) < 0.3


def test_weight_diagnostics_alignment_required():
    with pytest.raises(ValueError):
        weight_distance_diagnostics(np.ones(3), np.ones(4))
