"""Experiment configuration: one JSON file holds every knob and seed.

The config is the reproducibility unit: identical configs produce
byte-identical artifacts.  Validation reports problems with their JSON path
so a bad value can be located directly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

from .mesh import DEFAULT_COLS, DEFAULT_FSR_PM, DEFAULT_ROWS, DEFAULT_UNIT_LENGTH_MM
from .simulator import (
    DEFAULT_COEFF_AMPLITUDE,
    DEFAULT_COEFF_DECAY,
    DEFAULT_COEFF_FLOOR,
    DEFAULT_PERTURBATION_STD,
    DEFAULT_ROUND_TRIP_AMPLITUDE,
)


class ConfigError(ValueError):
    """Invalid experiment configuration; message carries the field path."""


@dataclass
class ExperimentConfig:
    mesh: dict = field(default_factory=lambda: {
        "unit_length_mm": DEFAULT_UNIT_LENGTH_MM,
        "rows": DEFAULT_ROWS,
        "cols": DEFAULT_COLS,
    })
    rings: list = field(default_factory=lambda: ["mrr1", "mrr2", "mrr3"])
    ground_truth: dict = field(default_factory=lambda: {
        "amplitude_pm_per_pi": DEFAULT_COEFF_AMPLITUDE,
        "decay_per_mm": DEFAULT_COEFF_DECAY,
        "floor_pm_per_pi": DEFAULT_COEFF_FLOOR,
        "perturbation_std": DEFAULT_PERTURBATION_STD,
        "seed": 101,
    })
    noise: dict = field(default_factory=lambda: {
        "amplitude_std_db": 0.1,
        "drift_step_std_pm": 0.2,
        "seed": 202,
    })
    sampling: dict = field(default_factory=lambda: {
        "n_samples": 5000,
        "variance": 0.05,
        "n_portions": 20,
        "seed": 303,
        "split_seed": 404,
        "train_fraction": 0.8,
    })
    ring_physics: dict = field(default_factory=lambda: {
        "round_trip_amplitude": DEFAULT_ROUND_TRIP_AMPLITUDE,
        "fsr_pm": DEFAULT_FSR_PM,
    })
    models: dict = field(default_factory=lambda: {
        "cv_folds": 5,
        "cv_seed": 505,
    })
    sweep: dict = field(default_factory=lambda: {
        "sizes": [50, 100, 200, 500, 1000, 2000, 4000],
        "n_subsets": 20,
        "seed": 606,
    })
    compensation: dict = field(default_factory=lambda: {
        "n_samples": 6,
        "seed": 707,
    })
    output_dir: str = "out"

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = ("mesh", "rings", "ground_truth", "noise", "sampling",
             "ring_physics", "models", "sweep", "compensation", "output_dir")


def _require(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{path}: {message}")


def validate_config(config: ExperimentConfig) -> ExperimentConfig:
    mesh = config.mesh
    _require(mesh.get("unit_length_mm", 0) > 0, "mesh.unit_length_mm", "must be positive")
    _require(int(mesh.get("rows", 0)) >= 1, "mesh.rows", "must be at least 1")
    _require(int(mesh.get("cols", 0)) >= 1, "mesh.cols", "must be at least 1")

    _require(bool(config.rings), "rings", "at least one ring placement is required")
    _require(len(set(config.rings)) == len(config.rings), "rings", "duplicate ring names")

    gt = config.ground_truth
    _require(gt.get("decay_per_mm", 0) > 0, "ground_truth.decay_per_mm", "must be positive")
    _require(gt.get("perturbation_std", 0) >= 0, "ground_truth.perturbation_std",
             "must be non-negative")

    noise = config.noise
    _require(noise.get("amplitude_std_db", 0) >= 0, "noise.amplitude_std_db",
             "must be non-negative")
    _require(noise.get("drift_step_std_pm", 0) >= 0, "noise.drift_step_std_pm",
             "must be non-negative")

    sampling = config.sampling
    _require(int(sampling.get("n_samples", 0)) >= 1, "sampling.n_samples", "must be positive")
    variance = sampling.get("variance", 0)
    _require(0 < variance < 0.25, "sampling.variance",
             "must be in (0, 0.25): a beta mean of 0.5 requires variance < mean*(1-mean)")
    _require(int(sampling.get("n_portions", 0)) >= 1, "sampling.n_portions", "must be positive")
    _require(0 < sampling.get("train_fraction", 0) < 1, "sampling.train_fraction",
             "must be in (0, 1)")

    phys = config.ring_physics
    _require(0 < phys.get("round_trip_amplitude", 0) <= 1,
             "ring_physics.round_trip_amplitude", "must be in (0, 1]")
    _require(phys.get("fsr_pm", 0) > 0, "ring_physics.fsr_pm", "must be positive")

    _require(int(config.models.get("cv_folds", 0)) >= 2, "models.cv_folds", "must be >= 2")

    sweep = config.sweep
    sizes = sweep.get("sizes", [])
    _require(bool(sizes) and all(int(s) >= 1 for s in sizes), "sweep.sizes",
             "must be a non-empty list of positive integers")
    _require(list(sizes) == sorted(int(s) for s in sizes), "sweep.sizes",
             "must be increasing")
    n_train = int(round(sampling.get("train_fraction", 0.8) * sampling.get("n_samples", 0)))
    _require(max(int(s) for s in sizes) <= n_train, "sweep.sizes",
             f"largest size exceeds the train split ({n_train} samples)")
    _require(int(sweep.get("n_subsets", 0)) >= 1, "sweep.n_subsets", "must be positive")

    comp = config.compensation
    n_test = int(sampling.get("n_samples", 0)) - n_train
    _require(1 <= int(comp.get("n_samples", 0)) <= n_test, "compensation.n_samples",
             f"must be in [1, test split size = {n_test}]")

    for section in ("ground_truth", "noise", "sampling", "models", "sweep", "compensation"):
        payload = getattr(config, section)
        for key in payload:
            if key.endswith("seed"):
                _require(isinstance(payload[key], int), f"{section}.{key}",
                         "seeds must be explicit integers")
    return config


def config_from_dict(payload: dict) -> ExperimentConfig:
    unknown = set(payload) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    config = ExperimentConfig()
    merged = {}
    for section in _SECTIONS:
        default = getattr(config, section)
        if section not in payload:
            merged[section] = default
        elif isinstance(default, dict):
            extra = set(payload[section]) - set(default)
            if extra:
                raise ConfigError(f"{section}: unknown keys {sorted(extra)}")
            merged[section] = {**default, **payload[section]}
        else:
            merged[section] = payload[section]
    return validate_config(replace(config, **merged))


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return config_from_dict(payload)


def save_config(config: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def override_seeds(config: ExperimentConfig, master_seed: int) -> ExperimentConfig:
    """Replace every seed with one derived deterministically from a master seed."""
    return replace(
        config,
        ground_truth={**config.ground_truth, "seed": master_seed * 10 + 1},
        noise={**config.noise, "seed": master_seed * 10 + 2},
        sampling={**config.sampling, "seed": master_seed * 10 + 3,
                  "split_seed": master_seed * 10 + 4},
        models={**config.models, "cv_seed": master_seed * 10 + 5},
        sweep={**config.sweep, "seed": master_seed * 10 + 6},
        compensation={**config.compensation, "seed": master_seed * 10 + 7},
    )
