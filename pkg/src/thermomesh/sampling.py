"""Randomized phase protocols and dataset assembly.

Interfering-cell phases are drawn from beta distributions scaled to
[0, 2*pi].  To cover the whole range of total driven phase evenly, the range
is divided into portions and the beta mean is set to the centre of each
portion; an equal number of vectors is drawn per portion.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .extraction import extract_shift
from .mesh import MeshTopology, RingConfig, interfering_pucs, ring_distances
from .simulator import (
    GroundTruthCrosstalk,
    NoiseSpec,
    RingPhysics,
    drift_offsets,
    measure_spectrum,
)

TWO_PI = 2.0 * math.pi

DEFAULT_VARIANCE = 0.05
DEFAULT_PORTIONS = 20
DEFAULT_TRAIN_FRACTION = 0.8


def beta_params(mean: float, variance: float) -> tuple[float, float]:
    """Shape parameters (alpha, beta) from the mean/variance parameterization.

    The intermediate v = mean*(1-mean)/variance - 1 acts as the sample size;
    alpha = mean*v and beta = (1-mean)*v.
    """
    if not 0.0 < mean < 1.0:
        raise ValueError(f"mean must be in (0, 1), got {mean}")
    if variance <= 0:
        raise ValueError(f"variance must be positive, got {variance}")
    v = mean * (1.0 - mean) / variance - 1.0
    if v <= 0:
        raise ValueError(
            f"variance {variance} too large for mean {mean}: requires "
            f"variance < mean*(1-mean) = {mean * (1.0 - mean)}"
        )
    return mean * v, (1.0 - mean) * v


def sample_phase_vectors(n_samples: int, n_pucs: int,
                         variance: float = DEFAULT_VARIANCE,
                         n_portions: int = DEFAULT_PORTIONS,
                         total_range: tuple[float, float] | None = None,
                         seed: int = 0) -> np.ndarray:
    """Phase vectors (rad) covering the total-phase range evenly.

    For portion k the beta mean is the centre of the k-th slice of
    ``total_range`` (default [0, n_pucs * 2*pi]) expressed as a fraction of
    the maximum total phase; every cell's phase is drawn independently from
    that beta distribution scaled by 2*pi.  Sample counts split equally
    across portions, with any remainder assigned to the lowest-index
    portions.  If the requested variance is infeasible for an extreme
    portion mean, it is clamped to 0.9 * mean*(1-mean) and a warning is
    emitted.

    Returns an array of shape (n_samples, n_pucs), deterministic in ``seed``.
    """
    if n_samples < 1 or n_pucs < 1:
        raise ValueError("n_samples and n_pucs must be positive")
    if n_portions < 1:
        raise ValueError("n_portions must be positive")
    lo, hi = total_range if total_range is not None else (0.0, n_pucs * TWO_PI)
    max_total = n_pucs * TWO_PI
    if not 0.0 <= lo < hi <= max_total + 1e-9:
        raise ValueError(f"total range [{lo}, {hi}] outside [0, {max_total}]")

    rng = np.random.default_rng(seed)
    base, rem = divmod(n_samples, n_portions)
    blocks = []
    for k in range(n_portions):
        count = base + (1 if k < rem else 0)
        if count == 0:
            continue
        center = lo + (k + 0.5) * (hi - lo) / n_portions
        mean = center / max_total
        var_k = variance
        if var_k >= mean * (1.0 - mean):
            var_k = 0.9 * mean * (1.0 - mean)
            warnings.warn(
                f"portion {k}: variance {variance} infeasible for mean "
                f"{mean:.4f}; clamped to {var_k:.4f}",
                stacklevel=2,
            )
        alpha, beta = beta_params(mean, var_k)
        blocks.append(rng.beta(alpha, beta, size=(count, n_pucs)) * TWO_PI)
    return np.vstack(blocks)


@dataclass
class Dataset:
    """Extracted samples for one ring: phase vectors and measured shifts."""

    ring_id: str
    puc_ids: np.ndarray
    distances_mm: np.ndarray
    phases: np.ndarray
    shifts_pm: np.ndarray
    correlations: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.phases.shape != (len(self.shifts_pm), len(self.puc_ids)):
            raise ValueError("phases shape inconsistent with puc ids / shifts")
        if len(self.distances_mm) != len(self.puc_ids):
            raise ValueError("distances must align with puc ids")
        overlap = set(self.train_idx.tolist()) & set(self.test_idx.tolist())
        if overlap:
            raise ValueError(f"train/test overlap: {sorted(overlap)[:5]} ...")

    @property
    def n_samples(self) -> int:
        return self.phases.shape[0]

    @property
    def X_train(self) -> np.ndarray:
        return self.phases[self.train_idx]

    @property
    def y_train(self) -> np.ndarray:
        return self.shifts_pm[self.train_idx]

    @property
    def X_test(self) -> np.ndarray:
        return self.phases[self.test_idx]

    @property
    def y_test(self) -> np.ndarray:
        return self.shifts_pm[self.test_idx]


def split_indices(n_samples: int, train_fraction: float, split_seed: int):
    """Seeded random 80/20-style split; both index sets come back sorted."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train fraction must be in (0, 1)")
    rng = np.random.default_rng(split_seed)
    perm = rng.permutation(n_samples)
    n_train = int(round(train_fraction * n_samples))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def _simulate_batch(mesh, ring, phys, gt, noise, coefficients, drift,
                    phases_block, first_sample_index):
    rows = []
    n_pucs = coefficients.shape[0]
    zeros = np.zeros(n_pucs)
    for offset, phases in enumerate(phases_block):
        j = first_sample_index + offset
        ref_before = measure_spectrum(mesh, ring, phys, gt, zeros, noise, 3 * j,
                                      drift=drift, coefficients=coefficients)
        measurement = measure_spectrum(mesh, ring, phys, gt, phases, noise, 3 * j + 1,
                                       drift=drift, coefficients=coefficients)
        ref_after = measure_spectrum(mesh, ring, phys, gt, zeros, noise, 3 * j + 2,
                                     drift=drift, coefficients=coefficients)
        try:
            est = extract_shift(ref_before, measurement, ref_after, ring.fsr_pm)
        except Exception as exc:
            raise RuntimeError(f"sample {j}: extraction failed") from exc
        rows.append((est.delta_lambda_pm, est.correlation_1, est.correlation_2))
    return rows


def build_dataset(mesh: MeshTopology, ring: RingConfig, gt: GroundTruthCrosstalk,
                  noise: NoiseSpec, n_samples: int = 5000, seed: int = 0,
                  split_seed: int = 1, variance: float = DEFAULT_VARIANCE,
                  n_portions: int = DEFAULT_PORTIONS,
                  train_fraction: float = DEFAULT_TRAIN_FRACTION,
                  phys: RingPhysics | None = None, jobs: int = 1) -> Dataset:
    """Run the full measurement protocol for one ring.

    Every sample occupies three consecutive measurement slots (reference,
    measurement, reference); the shift is recovered through the spline +
    correlation pipeline, never from the ground truth directly.
    """
    if phys is None:
        phys = RingPhysics.from_ring(ring)
    pucs = interfering_pucs(mesh, ring)
    distances = ring_distances(mesh, ring, pucs)
    coefficients = gt.coefficients(mesh, ring)
    phases = sample_phase_vectors(n_samples, len(pucs), variance=variance,
                                  n_portions=n_portions, seed=seed)
    drift = drift_offsets(noise, 3 * n_samples)

    if jobs > 1:
        chunk = max(1, math.ceil(n_samples / (4 * jobs)))
        starts = list(range(0, n_samples, chunk))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_simulate_batch, mesh, ring, phys, gt, noise,
                            coefficients, drift, phases[s:s + chunk], s)
                for s in starts
            ]
            rows = [row for fut in futures for row in fut.result()]
    else:
        rows = _simulate_batch(mesh, ring, phys, gt, noise, coefficients, drift,
                               phases, 0)

    results = np.asarray(rows)
    train_idx, test_idx = split_indices(n_samples, train_fraction, split_seed)
    meta = {
        "ring_id": ring.ring_id,
        "n_samples": n_samples,
        "seed": seed,
        "split_seed": split_seed,
        "variance": variance,
        "n_portions": n_portions,
        "train_fraction": train_fraction,
        "noise": {
            "amplitude_std_db": noise.amplitude_std_db,
            "drift_step_std_pm": noise.drift_step_std_pm,
            "seed": noise.seed,
        },
        "fsr_pm": ring.fsr_pm,
    }
    return Dataset(
        ring_id=ring.ring_id,
        puc_ids=np.asarray(pucs),
        distances_mm=distances,
        phases=phases,
        shifts_pm=results[:, 0],
        correlations=results[:, 1:3],
        train_idx=train_idx,
        test_idx=test_idx,
        meta=meta,
    )


def save_dataset(dataset: Dataset, csv_path) -> None:
    """Persist samples as CSV plus a JSON sidecar with provenance."""
    csv_path = Path(csv_path)
    header = (["sample_id"]
              + [f"phi_{p:02d}" for p in dataset.puc_ids]
              + ["delta_lambda_pm", "correlation_1", "correlation_2"])
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(dataset.n_samples):
            row = [str(i)]
            row += [repr(float(v)) for v in dataset.phases[i]]
            row.append(repr(float(dataset.shifts_pm[i])))
            row += [repr(float(v)) for v in dataset.correlations[i]]
            writer.writerow(row)
    sidecar = dict(dataset.meta)
    sidecar["puc_ids"] = [int(p) for p in dataset.puc_ids]
    sidecar["distances_mm"] = [float(d) for d in dataset.distances_mm]
    sidecar["train_idx"] = [int(i) for i in dataset.train_idx]
    sidecar["test_idx"] = [int(i) for i in dataset.test_idx]
    with open(csv_path.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(csv_path) -> Dataset:
    csv_path = Path(csv_path)
    with open(csv_path.with_suffix(".json"), "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    with open(csv_path, "r", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n_pucs = len(sidecar["puc_ids"])
    expected = 1 + n_pucs + 3
    if len(header) != expected:
        raise ValueError(f"{csv_path}: expected {expected} columns, found {len(header)}")
    data = np.asarray([[float(v) for v in row[1:]] for row in body])
    meta = {k: v for k, v in sidecar.items()
            if k not in ("puc_ids", "distances_mm", "train_idx", "test_idx")}
    return Dataset(
        ring_id=sidecar["ring_id"],
        puc_ids=np.asarray(sidecar["puc_ids"]),
        distances_mm=np.asarray(sidecar["distances_mm"]),
        phases=data[:, :n_pucs],
        shifts_pm=data[:, n_pucs],
        correlations=data[:, n_pucs + 1:n_pucs + 3],
        train_idx=np.asarray(sidecar["train_idx"], dtype=int),
        test_idx=np.asarray(sidecar["test_idx"], dtype=int),
        meta=meta,
    )
