"""Closed-loop crosstalk compensation on the simulated bench.

A trained model predicts the crosstalk-induced shift for held-out phase
vectors; the counteracting phase, split equally over the six ring-loop
cells, is applied in the simulator and the residual shift is re-measured
through the full extraction pipeline with fresh reference bracketing.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .extraction import extract_shift
from .mesh import LOOP_EDGES, MeshTopology, RingConfig
from .sampling import Dataset
from .simulator import (
    GroundTruthCrosstalk,
    NoiseSpec,
    RingPhysics,
    drift_offsets,
    measure_spectrum,
)

PERCENTILE_RULE = "linear interpolation between closest ranks"
SUMMARY_PERCENTILES = (10, 25, 50, 75, 90)


def compensation_phase(delta_pred_pm: float, fsr_pm: float) -> float:
    """Round-trip phase (rad) that cancels a predicted shift: -2*pi*shift/fsr."""
    if fsr_pm <= 0:
        raise ValueError(f"fsr must be positive, got {fsr_pm}")
    return -2.0 * math.pi * delta_pred_pm / fsr_pm


@dataclass(frozen=True)
class CompensationRecord:
    """One held-out sample before and after applying the counteracting phase."""

    sample_id: int
    delta_meas_pm: float
    delta_pred_pm: float
    phi_comp_rad: float
    per_puc_phi_rad: float
    delta_post_comp_pm: float


def run_compensation(mesh: MeshTopology, ring: RingConfig, phys: RingPhysics,
                     gt: GroundTruthCrosstalk, dataset: Dataset, predict_fn,
                     noise: NoiseSpec, n_samples: int = 6, seed: int = 0,
                     time_offset: int | None = None) -> list[CompensationRecord]:
    """Compensate a few random test-split samples and re-measure the residual.

    Parameters
    ----------
    predict_fn : callable
        Maps a phase matrix (n, n_cells) to predicted shifts (pm).  Wrap a
        trained model's predict, binding this ring's distances if needed.
    time_offset : int, optional
        First measurement slot to use; defaults to just after the dataset's
        own slots so the drift walk continues seamlessly.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    if n_samples > len(dataset.test_idx):
        raise ValueError(
            f"requested {n_samples} samples but test split has {len(dataset.test_idx)}"
        )
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(dataset.test_idx, size=n_samples, replace=False))
    if time_offset is None:
        time_offset = 3 * dataset.n_samples
    drift = drift_offsets(noise, time_offset + 3 * n_samples)
    coefficients = gt.coefficients(mesh, ring)
    zeros = np.zeros_like(dataset.distances_mm)

    predictions = np.asarray(predict_fn(dataset.phases[chosen]), dtype=float)
    records = []
    for k, idx in enumerate(chosen):
        delta_pred = float(predictions[k])
        phi_comp = compensation_phase(delta_pred, ring.fsr_pm)
        t = time_offset + 3 * k
        ref_before = measure_spectrum(mesh, ring, phys, gt, zeros, noise, t,
                                      drift=drift, coefficients=coefficients)
        measurement = measure_spectrum(mesh, ring, phys, gt, dataset.phases[idx],
                                       noise, t + 1, loop_phase_rad=phi_comp,
                                       drift=drift, coefficients=coefficients)
        ref_after = measure_spectrum(mesh, ring, phys, gt, zeros, noise, t + 2,
                                     drift=drift, coefficients=coefficients)
        est = extract_shift(ref_before, measurement, ref_after, ring.fsr_pm)
        records.append(CompensationRecord(
            sample_id=int(idx),
            delta_meas_pm=float(dataset.shifts_pm[idx]),
            delta_pred_pm=delta_pred,
            phi_comp_rad=phi_comp,
            per_puc_phi_rad=phi_comp / LOOP_EDGES,
            delta_post_comp_pm=est.delta_lambda_pm,
        ))
    return records


def boxplot_summary(records: list[CompensationRecord]) -> dict:
    """Median, quartiles and 10/90 percentiles of the three shift columns."""
    if not records:
        raise ValueError("no compensation records to summarize")
    columns = {
        "delta_meas_pm": [r.delta_meas_pm for r in records],
        "delta_pred_pm": [r.delta_pred_pm for r in records],
        "delta_post_comp_pm": [r.delta_post_comp_pm for r in records],
    }
    summary: dict = {"n_records": len(records), "percentile_rule": PERCENTILE_RULE}
    for name, values in columns.items():
        stats = np.percentile(np.asarray(values), SUMMARY_PERCENTILES)
        summary[name] = {f"p{p}": float(v) for p, v in zip(SUMMARY_PERCENTILES, stats)}
    return summary


def save_compensation_csv(path, records_by_pair: dict[tuple[str, str], list[CompensationRecord]]) -> None:
    """One row per record, keyed by (trained ring, evaluated ring)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trained_ring", "evaluated_ring", "sample_id",
                         "delta_meas_pm", "delta_pred_pm", "phi_comp_rad",
                         "per_puc_phi_rad", "delta_post_comp_pm"])
        for (trained, evaluated), records in records_by_pair.items():
            for r in records:
                writer.writerow([
                    trained, evaluated, r.sample_id,
                    repr(r.delta_meas_pm), repr(r.delta_pred_pm),
                    repr(r.phi_comp_rad), repr(r.per_puc_phi_rad),
                    repr(r.delta_post_comp_pm),
                ])


def save_compensation_summary(path, records_by_pair: dict[tuple[str, str], list[CompensationRecord]]) -> None:
    payload = [
        {"trained_ring": trained, "evaluated_ring": evaluated,
         **boxplot_summary(records)}
        for (trained, evaluated), records in sorted(records_by_pair.items())
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
