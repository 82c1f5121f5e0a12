"""Predictive models mapping interfering-cell phases to resonance shift.

All three estimators follow the scikit-learn protocol (``fit`` /
``predict`` / ``get_params``) and share the same unit convention: inputs are
phases in radians, parameters are reported in pm per pi of driven phase, so
predictors divide phases by pi internally.  None of the models carries an
intercept; zero phases map to zero shift by construction of the measurement
protocol.

* :class:`TotalPhaseModel` - a single scale applied to the summed phase.
* :class:`ThermalDecayModel` - per-cell coefficient decaying exponentially
  with the cell's distance from the ring, plus a linear term and an offset.
* :class:`RidgePhaseModel` - one learned weight per cell, ridge-regularized
  with the penalty chosen by cross-validation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

PI = math.pi


class DegenerateDesignError(ValueError):
    """Raised when the training data cannot identify the model parameters."""


def _check_phases(X, min_samples: int = 1):
    X = check_array(X, dtype=float, ensure_min_samples=min_samples)
    return X


def _check_distances(distances, n_features: int) -> np.ndarray:
    d = np.asarray(distances, dtype=float)
    if d.shape != (n_features,):
        raise ValueError(
            f"distances must align with the {n_features} phase columns, "
            f"got shape {d.shape}"
        )
    return d


@dataclass
class FitReport:
    """Summary of one fit: parameters, errors and diagnostics."""

    model_kind: str
    params: dict
    train_rmse_pm: float
    test_rmse_pm: float | None
    n_train: int
    flags: list[str] = field(default_factory=list)
    cv_curve: list[list[float]] | None = None
    decay_profile: list[list[float]] | None = None
    ring_id: str | None = None

    def to_dict(self) -> dict:
        return {
            "model_kind": self.model_kind,
            "units": "pm_per_pi",
            "ring_id": self.ring_id,
            "params": self.params,
            "train_rmse_pm": self.train_rmse_pm,
            "test_rmse_pm": self.test_rmse_pm,
            "n_train": self.n_train,
            "flags": self.flags,
            "cv_curve": self.cv_curve,
            "decay_profile": self.decay_profile,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


class TotalPhaseModel(RegressorMixin, BaseEstimator):
    """Single-parameter baseline: shift = scale * (sum of phases) / pi."""

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        total = X.sum(axis=1) / PI
        denom = float(total @ total)
        if denom == 0.0:
            raise DegenerateDesignError("all total phases are zero; scale unidentifiable")
        self.scale_ = float(total @ y) / denom
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "scale_")
        X = _check_phases(X)
        return self.scale_ * X.sum(axis=1) / PI


class ThermalDecayModel(RegressorMixin, BaseEstimator):
    """Distance-aware model with an exponentially decaying per-cell coefficient.

    The coefficient of a cell at distance d (mm) is

        amplitude * exp(-decay_rate * d) + slope * d + offset      [pm/pi]

    and the predicted shift is the phase-weighted sum of coefficients.  The
    model is linear in (amplitude, slope, offset), so fitting projects those
    out with least squares on a logarithmic grid of decay rates and then
    refines the best rate by golden-section search.

    Because the coefficient curve depends only on distance, a fitted model
    transfers to a ring with a different interfering-cell set: pass that
    ring's distances to :meth:`predict`.
    """

    def __init__(self, decay_min: float = 0.01, decay_max: float = 10.0,
                 decay_points: int = 60, refine_rtol: float = 1e-4):
        self.decay_min = decay_min
        self.decay_max = decay_max
        self.decay_points = decay_points
        self.refine_rtol = refine_rtol

    def _solve_linear(self, p, d, y, decay_rate):
        features = np.column_stack([p @ np.exp(-decay_rate * d), p @ d, p.sum(axis=1)])
        coef, _, rank, _ = np.linalg.lstsq(features, y, rcond=None)
        residual = y - features @ coef
        return coef, float(residual @ residual), rank

    def fit(self, X, y, distances=None):
        X, y = check_X_y(X, y, dtype=float)
        if X.shape[0] < 4:
            raise DegenerateDesignError(
                f"need at least 4 samples to fit 4 parameters, got {X.shape[0]}"
            )
        if distances is None:
            raise ValueError("distances (mm, one per phase column) are required")
        d = _check_distances(distances, X.shape[1])
        p = X / PI

        flags: list[str] = []
        grid = np.geomspace(self.decay_min, self.decay_max, self.decay_points)
        sse = np.empty(grid.shape)
        min_rank = 3
        for i, rate in enumerate(grid):
            _, sse[i], rank = self._solve_linear(p, d, y, rate)
            min_rank = min(min_rank, rank)
        if min_rank < 3:
            flags.append("rank-deficient-linear-subproblem")
        best = int(np.argmin(sse))
        if best in (0, len(grid) - 1):
            flags.append("decay-scale-unresolved")

        lo = grid[max(best - 1, 0)]
        hi = grid[min(best + 1, len(grid) - 1)]
        rate = self._golden_section(lambda r: self._solve_linear(p, d, y, r)[1], lo, hi)
        coef, _, _ = self._solve_linear(p, d, y, rate)

        self.amplitude_ = float(coef[0])
        self.decay_rate_ = float(rate)
        self.slope_ = float(coef[1])
        self.offset_ = float(coef[2])
        self.distances_ = d
        self.flags_ = flags
        n = X.shape[0]
        self.decay_profile_ = [[float(r), float(math.sqrt(s / n))]
                               for r, s in zip(grid, sse)]
        self.n_features_in_ = X.shape[1]
        return self

    def _golden_section(self, objective, lo: float, hi: float) -> float:
        """Minimize over [lo, hi] in log space to the configured relative tol."""
        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = math.log(lo), math.log(hi)
        c = b - invphi * (b - a)
        e = a + invphi * (b - a)
        fc, fe = objective(math.exp(c)), objective(math.exp(e))
        while (b - a) > self.refine_rtol:
            if fc < fe:
                b, e, fe = e, c, fc
                c = b - invphi * (b - a)
                fc = objective(math.exp(c))
            else:
                a, c, fc = c, e, fe
                e = a + invphi * (b - a)
                fe = objective(math.exp(e))
        return math.exp(0.5 * (a + b))

    def coefficient_curve(self, distances) -> np.ndarray:
        """Per-cell coefficient (pm/pi) at the given distances (mm)."""
        check_is_fitted(self, "decay_rate_")
        d = np.asarray(distances, dtype=float)
        return self.amplitude_ * np.exp(-self.decay_rate_ * d) + self.slope_ * d + self.offset_

    def predict(self, X, distances=None):
        check_is_fitted(self, "decay_rate_")
        X = _check_phases(X)
        if distances is None:
            d = self.distances_
            if d is None:
                raise ValueError("model carries no training distances; pass distances")
            if X.shape[1] != d.shape[0]:
                raise ValueError(
                    f"X has {X.shape[1]} columns but the model was trained with "
                    f"{d.shape[0]} cells; pass this ring's distances explicitly"
                )
        else:
            d = _check_distances(distances, X.shape[1])
        return (X / PI) @ self.coefficient_curve(d)


class RidgePhaseModel(RegressorMixin, BaseEstimator):
    """One weight per interfering cell, fitted by ridge regression.

    ``alpha`` is a multiplier of the mean diagonal of the Gram matrix; when
    None it is selected from a logarithmic grid by k-fold cross-validation
    (seeded shuffle, contiguous folds), minimizing mean validation RMSE.
    """

    def __init__(self, alpha: float | None = None, alpha_min: float = 1e-6,
                 alpha_max: float = 1e3, alpha_points: int = 25,
                 cv_folds: int = 5, cv_seed: int = 0):
        self.alpha = alpha
        self.alpha_min = alpha_min
        self.alpha_max = alpha_max
        self.alpha_points = alpha_points
        self.cv_folds = cv_folds
        self.cv_seed = cv_seed

    @staticmethod
    def _solve(p: np.ndarray, y: np.ndarray, penalty: float) -> np.ndarray:
        n_features = p.shape[1]
        if penalty > 0:
            gram = p.T @ p + penalty * np.eye(n_features)
            return np.linalg.solve(gram, p.T @ y)
        return np.linalg.lstsq(p, y, rcond=None)[0]

    def _fold_slices(self, n: int) -> list[np.ndarray]:
        folds = self.cv_folds if n >= self.cv_folds else n
        order = np.random.default_rng(self.cv_seed).permutation(n)
        return [np.sort(block) for block in np.array_split(order, folds)]

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        n, n_features = X.shape
        p = X / PI
        flags: list[str] = []
        if np.ptp(y) == 0:
            self.weights_ = np.zeros(n_features)
            self.alpha_ = 0.0
            self.flags_ = ["constant-target"]
            self.cv_curve_ = None
            self.n_features_in_ = n_features
            return self

        scale = float(np.mean(np.sum(p * p, axis=0)))
        if self.alpha is not None:
            self.alpha_ = float(self.alpha)
            self.cv_curve_ = None
        else:
            if n < self.cv_folds:
                flags.append("leave-one-out-cv")
            grid = np.geomspace(self.alpha_min, self.alpha_max, self.alpha_points)
            identity = np.eye(n_features)
            prepared = []
            for fold in self._fold_slices(n):
                mask = np.ones(n, dtype=bool)
                mask[fold] = False
                p_fit = p[mask]
                prepared.append((p_fit.T @ p_fit, p_fit.T @ y[mask], p[fold], y[fold]))
            curve = []
            for rel in grid:
                errors = []
                for gram, moment, p_val, y_val in prepared:
                    w = np.linalg.solve(gram + rel * scale * identity, moment)
                    err = p_val @ w - y_val
                    errors.append(math.sqrt(float(np.mean(err * err))))
                curve.append([float(rel), float(np.mean(errors))])
            self.cv_curve_ = curve
            self.alpha_ = float(min(curve, key=lambda c: c[1])[0])

        self.weights_ = self._solve(p, y, self.alpha_ * scale)
        self.flags_ = flags
        self.n_features_in_ = n_features
        return self

    def predict(self, X):
        check_is_fitted(self, "weights_")
        X = _check_phases(X)
        if X.shape[1] != self.weights_.shape[0]:
            raise ValueError(
                f"X has {X.shape[1]} columns, model has {self.weights_.shape[0]} weights"
            )
        return (X / PI) @ self.weights_


MODEL_KINDS = ("total-phase", "thermal-decay", "ridge")


def make_model(kind: str, **kwargs):
    if kind == "total-phase":
        return TotalPhaseModel(**kwargs)
    if kind == "thermal-decay":
        return ThermalDecayModel(**kwargs)
    if kind == "ridge":
        return RidgePhaseModel(**kwargs)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def _model_params(model) -> dict:
    if isinstance(model, TotalPhaseModel):
        return {"scale": model.scale_}
    if isinstance(model, ThermalDecayModel):
        return {
            "amplitude": model.amplitude_,
            "decay_rate": model.decay_rate_,
            "slope": model.slope_,
            "offset": model.offset_,
        }
    if isinstance(model, RidgePhaseModel):
        return {"weights": [float(w) for w in model.weights_], "alpha": model.alpha_}
    raise TypeError(f"unsupported model {type(model)!r}")


def fit_model(kind: str, dataset, **kwargs):
    """Fit a model on a dataset's train split and report train/test RMSE."""
    model = make_model(kind, **kwargs)
    if kind == "thermal-decay":
        model.fit(dataset.X_train, dataset.y_train, distances=dataset.distances_mm)
    else:
        model.fit(dataset.X_train, dataset.y_train)
    train_err = model.predict(dataset.X_train) - dataset.y_train
    report = FitReport(
        model_kind=kind,
        params=_model_params(model),
        train_rmse_pm=float(np.sqrt(np.mean(train_err**2))),
        test_rmse_pm=None,
        n_train=int(dataset.X_train.shape[0]),
        flags=list(getattr(model, "flags_", [])),
        cv_curve=getattr(model, "cv_curve_", None),
        decay_profile=getattr(model, "decay_profile_", None),
        ring_id=dataset.ring_id,
    )
    if len(dataset.test_idx):
        test_err = model.predict(dataset.X_test) - dataset.y_test
        report.test_rmse_pm = float(np.sqrt(np.mean(test_err**2)))
    return model, report


def load_fitted_model(path):
    """Rebuild a fitted model from a saved FitReport JSON."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    kind = payload["model_kind"]
    params = payload["params"]
    if kind == "total-phase":
        model = TotalPhaseModel()
        model.scale_ = float(params["scale"])
    elif kind == "thermal-decay":
        model = ThermalDecayModel()
        model.amplitude_ = float(params["amplitude"])
        model.decay_rate_ = float(params["decay_rate"])
        model.slope_ = float(params["slope"])
        model.offset_ = float(params["offset"])
        model.distances_ = None
        model.flags_ = list(payload.get("flags", []))
    elif kind == "ridge":
        model = RidgePhaseModel()
        model.weights_ = np.asarray(params["weights"], dtype=float)
        model.alpha_ = float(params["alpha"])
        model.flags_ = list(payload.get("flags", []))
    else:
        raise ValueError(f"unknown model kind {kind!r} in {path}")
    return model, payload
