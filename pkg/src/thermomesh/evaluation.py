"""Model evaluation: error metrics, training-size sweeps and cross-ring tests."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.stats import spearmanr

from .models import ThermalDecayModel, fit_model, make_model
from .sampling import Dataset

DEFAULT_SWEEP_SIZES = (50, 100, 200, 500, 1000, 2000, 4000)
DEFAULT_SWEEP_SUBSETS = 20


def rmse(predictions, truths) -> float:
    """Root-mean-square difference between paired values."""
    predictions = np.asarray(predictions, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if predictions.shape != truths.shape:
        raise ValueError(f"shape mismatch: {predictions.shape} vs {truths.shape}")
    if predictions.size == 0:
        raise ValueError("rmse of empty sequences is undefined")
    diff = predictions - truths
    return float(np.sqrt(np.mean(diff * diff)))


@dataclass
class SizeSweepResult:
    """RMSE statistics over resampled training subsets of increasing size."""

    model_kind: str
    sizes: list[int]
    train_mean: list[float]
    train_std: list[float]
    test_mean: list[float]
    test_std: list[float]

    def to_rows(self) -> list[list]:
        return [
            [self.model_kind, s, tm, ts, vm, vs]
            for s, tm, ts, vm, vs in zip(self.sizes, self.train_mean, self.train_std,
                                         self.test_mean, self.test_std)
        ]


def size_sweep(dataset: Dataset, model_kind: str,
               sizes=DEFAULT_SWEEP_SIZES, n_subsets: int = DEFAULT_SWEEP_SUBSETS,
               seed: int = 0, **model_kwargs) -> SizeSweepResult:
    """Fit on with-replacement subsets of the train split, test on the fixed split.

    For each size, ``n_subsets`` subsets are drawn from the training split
    with replacement; the test split never changes, isolating the effect of
    training-set size.
    """
    sizes = sorted(int(s) for s in sizes)
    n_train = len(dataset.train_idx)
    if sizes[0] < 1:
        raise ValueError("subset sizes must be positive")
    if sizes[-1] > n_train:
        raise ValueError(f"subset size {sizes[-1]} exceeds train split ({n_train})")

    rng = np.random.default_rng(seed)
    result = SizeSweepResult(model_kind, sizes, [], [], [], [])
    for size in sizes:
        train_errs, test_errs = [], []
        for _ in range(n_subsets):
            pick = dataset.train_idx[rng.integers(0, n_train, size)]
            model = make_model(model_kind, **model_kwargs)
            X, y = dataset.phases[pick], dataset.shifts_pm[pick]
            if model_kind == "thermal-decay":
                model.fit(X, y, distances=dataset.distances_mm)
            else:
                model.fit(X, y)
            train_errs.append(rmse(model.predict(X), y))
            test_errs.append(rmse(model.predict(dataset.X_test), dataset.y_test))
        result.train_mean.append(float(np.mean(train_errs)))
        result.train_std.append(float(np.std(train_errs)))
        result.test_mean.append(float(np.mean(test_errs)))
        result.test_std.append(float(np.std(test_errs)))
    return result


def save_sweep_csv(path, results: list[SizeSweepResult]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model_kind", "train_size", "train_rmse_mean_pm",
                         "train_rmse_std_pm", "test_rmse_mean_pm", "test_rmse_std_pm"])
        for result in results:
            for row in result.to_rows():
                writer.writerow([row[0], row[1]] + [repr(float(v)) for v in row[2:]])


@dataclass
class CrossEvalMatrix:
    """Test RMSE of distance-aware models evaluated across ring placements.

    ``values[m][n]`` is the RMSE of the model trained on ring ``n`` applied
    to the test split of ring ``m`` using ring m's own distances.
    """

    ring_ids: list[str]
    values: np.ndarray

    def entry(self, evaluated: str, trained: str) -> float:
        return float(self.values[self.ring_ids.index(evaluated),
                                 self.ring_ids.index(trained)])

    def to_rows(self) -> list[list]:
        rows = []
        for i, evaluated in enumerate(self.ring_ids):
            for j, trained in enumerate(self.ring_ids):
                rows.append([evaluated, trained, float(self.values[i, j])])
        return rows


def cross_eval(models: dict[str, ThermalDecayModel],
               datasets: dict[str, Dataset]) -> CrossEvalMatrix:
    """Evaluate every trained model on every ring's test split.

    Predictions always use the evaluated ring's interfering-cell distances,
    so a model trained on one placement extrapolates to cell counts and
    distances it never saw.
    """
    ring_ids = list(datasets)
    missing = [r for r in ring_ids if r not in models]
    if missing:
        raise ValueError(f"no trained model for rings {missing}")
    values = np.empty((len(ring_ids), len(ring_ids)))
    for i, evaluated in enumerate(ring_ids):
        ds = datasets[evaluated]
        for j, trained in enumerate(ring_ids):
            pred = models[trained].predict(ds.X_test, distances=ds.distances_mm)
            values[i, j] = rmse(pred, ds.y_test)
    return CrossEvalMatrix(ring_ids=ring_ids, values=values)


def save_cross_eval_csv(path, matrix: CrossEvalMatrix) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["evaluated_ring", "trained_ring", "test_rmse_pm"])
        for evaluated, trained, value in matrix.to_rows():
            writer.writerow([evaluated, trained, repr(value)])


def weight_distance_diagnostics(weights, distances, puc_ids=None) -> dict:
    """Per-cell weights sorted by distance, with their rank correlation.

    Returns a dict with ``rows`` ([puc_id, distance_mm, weight_pm_per_pi],
    sorted by distance) and ``spearman_rho``.
    """
    weights = np.asarray(weights, dtype=float)
    distances = np.asarray(distances, dtype=float)
    if weights.shape != distances.shape:
        raise ValueError("weights and distances must align")
    if puc_ids is None:
        puc_ids = np.arange(len(weights))
    order = np.lexsort((np.asarray(puc_ids), distances))
    rows = [[int(np.asarray(puc_ids)[i]), float(distances[i]), float(weights[i])]
            for i in order]
    rho = spearmanr(distances, weights).statistic
    return {"rows": rows, "spearman_rho": float(rho)}


def fit_all_models(datasets: dict[str, Dataset], cv_seed: int = 0) -> dict:
    """Fit the three model kinds on every ring; returns models and reports."""
    fitted: dict[str, dict] = {}
    for ring_id, dataset in datasets.items():
        fitted[ring_id] = {}
        for kind in ("total-phase", "thermal-decay", "ridge"):
            kwargs = {"cv_seed": cv_seed} if kind == "ridge" else {}
            model, report = fit_model(kind, dataset, **kwargs)
            fitted[ring_id][kind] = {"model": model, "report": report}
    return fitted


def save_rmse_table_csv(path, fitted: dict) -> None:
    """Table of train/test RMSE per ring and model kind."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ring_id", "model_kind", "train_rmse_pm", "test_rmse_pm"])
        for ring_id, per_kind in fitted.items():
            for kind, entry in per_kind.items():
                report = entry["report"]
                writer.writerow([ring_id, kind, repr(report.train_rmse_pm),
                                 repr(report.test_rmse_pm)])
