import math

import numpy as np
import pytest

from thermomesh.extraction import (
    NoSignalError,
    bracketed_shift,
    correlation_shift,
    extract_shift,
    extract_spectra_dir,
    upsample,
)
from thermomesh.mesh import interfering_pucs
from thermomesh.simulator import NoiseSpec, Spectrum, drift_offsets, measure_spectrum


def _analytic_spectrum(shift_pm=0.0, n=313, step=1.6, fsr=118.4):
    x = np.arange(n) * step - 250.0
    phi = 2 * math.pi * (x - shift_pm) / fsr
    power = (0.1 + 0.22 - 2 * math.sqrt(0.1 * 0.22) * np.cos(phi)) / (
        1 + 0.1 * 0.22 - 2 * math.sqrt(0.1 * 0.22) * np.cos(phi))
    return Spectrum(1549.75, step, 10 * np.log10(power))


def test_upsample_constant_stays_constant():
    spec = Spectrum(1549.75, 1.6, np.full(313, -3.0))
    up = upsample(spec)
    assert np.allclose(up.power_db, -3.0)
    assert up.step_pm == 0.01


def test_upsample_preserves_knots():
    spec = _analytic_spectrum(shift_pm=4.0)
    up = upsample(spec)
    knots = up.power_db[::160]
    assert np.max(np.abs(knots - spec.power_db)) < 1e-9


def test_upsample_matches_analytic_sinusoid():
    n, step = 313, 1.6
    x = np.arange(n) * step
    spec = Spectrum(1549.75, step, np.sin(2 * math.pi * x / 40.0))
    up = upsample(spec)
    x_up = np.arange(len(up)) * 0.01
    assert np.max(np.abs(up.power_db - np.sin(2 * math.pi * x_up / 40.0))) < 0.01


def test_upsample_rejects_short_or_coarser():
    with pytest.raises(ValueError):
        upsample(Spectrum(1549.75, 1.6, np.array([1.0, 2.0, 3.0])))
    with pytest.raises(ValueError):
        upsample(_analytic_spectrum(), target_step_pm=2.0)


def test_identical_spectra_zero_shift():
    up = upsample(_analytic_spectrum())
    assert correlation_shift(up, up, 118.4) == 0.0


def test_constructed_shift_recovered():
    ref = upsample(_analytic_spectrum(0.0))
    shifted = upsample(_analytic_spectrum(3.47))
    assert correlation_shift(shifted, ref, 118.4) == pytest.approx(3.47, abs=0.0100001)


def test_shift_wraps_into_window():
    fsr = 118.4
    ref = upsample(_analytic_spectrum(0.0))
    shifted = upsample(_analytic_spectrum(fsr / 2 + 1.0))
    assert correlation_shift(shifted, ref, fsr) == pytest.approx(-(fsr / 2 - 1.0), abs=0.02)


def test_antisymmetry():
    a = upsample(_analytic_spectrum(0.0))
    b = upsample(_analytic_spectrum(7.3))
    forward = correlation_shift(b, a, 118.4)
    backward = correlation_shift(a, b, 118.4)
    assert forward == pytest.approx(-backward, abs=0.0100001)


def test_constant_spectrum_flagged_no_signal():
    flat = upsample(Spectrum(1549.75, 1.6, np.zeros(313)))
    ref = upsample(_analytic_spectrum())
    with pytest.raises(NoSignalError):
        correlation_shift(flat, ref, 118.4)


def test_mismatched_grids_rejected():
    a = upsample(_analytic_spectrum())
    b = upsample(_analytic_spectrum(), target_step_pm=0.02)
    with pytest.raises(ValueError, match="identical wavelength grid"):
        correlation_shift(a, b, 118.4)


def test_bracketed_no_drift():
    ref = upsample(_analytic_spectrum(0.0))
    meas = upsample(_analytic_spectrum(5.5))
    est = bracketed_shift(ref, meas, ref, 118.4)
    assert est.delta_1_pm == est.delta_2_pm == pytest.approx(5.5, abs=0.0100001)
    assert est.delta_lambda_pm == pytest.approx(5.5, abs=0.0100001)
    assert -1 <= est.correlation_1 <= 1
    assert est.delta_lambda_pm == pytest.approx((est.delta_1_pm + est.delta_2_pm) / 2)


def test_bracketed_cancels_linear_drift():
    delta, rate = 6.0, 0.8
    ref_before = upsample(_analytic_spectrum(0.0))
    meas = upsample(_analytic_spectrum(delta + rate))
    ref_after = upsample(_analytic_spectrum(2 * rate))
    est = bracketed_shift(ref_before, meas, ref_after, 118.4)
    assert est.delta_lambda_pm == pytest.approx(delta, abs=0.0100001)


def test_measurement_equal_to_reference():
    ref = upsample(_analytic_spectrum(0.0))
    other = upsample(_analytic_spectrum(2.0))
    est = bracketed_shift(ref, ref, other, 118.4)
    assert est.delta_1_pm == 0.0


def test_noiseless_extraction_rmse(mesh, ring1, physics, gt, quiet_noise):
    # reduced-count version of the acceptance oracle
    rng = np.random.default_rng(12)
    n = len(interfering_pucs(mesh, ring1))
    zeros = np.zeros(n)
    ref_b = measure_spectrum(mesh, ring1, physics, gt, zeros, quiet_noise, 0)
    ref_a = measure_spectrum(mesh, ring1, physics, gt, zeros, quiet_noise, 2)
    errors = []
    for shift in rng.uniform(-physics.fsr_pm / 2, physics.fsr_pm / 2, 25):
        meas = measure_spectrum(mesh, ring1, physics, gt, zeros, quiet_noise, 1,
                                loop_phase_rad=2 * math.pi * shift / physics.fsr_pm)
        est = extract_shift(ref_b, meas, ref_a, physics.fsr_pm)
        errors.append(est.delta_lambda_pm - shift)
    assert math.sqrt(np.mean(np.square(errors))) <= 0.05


def test_default_noise_extraction_rmse(mesh, ring1, physics, gt):
    from thermomesh.simulator import ground_truth_shift

    noise = NoiseSpec(seed=21)
    coeff = gt.coefficients(mesh, ring1)
    n = len(coeff)
    drift = drift_offsets(noise, 3 * 40)
    rng = np.random.default_rng(13)
    zeros = np.zeros(n)
    errors = []
    for j in range(40):
        phases = rng.uniform(0, 2 * math.pi, n)
        ref_b = measure_spectrum(mesh, ring1, physics, gt, zeros, noise, 3 * j,
                                 drift=drift, coefficients=coeff)
        meas = measure_spectrum(mesh, ring1, physics, gt, phases, noise, 3 * j + 1,
                                drift=drift, coefficients=coeff)
        ref_a = measure_spectrum(mesh, ring1, physics, gt, zeros, noise, 3 * j + 2,
                                 drift=drift, coefficients=coeff)
        est = extract_shift(ref_b, meas, ref_a, physics.fsr_pm)
        errors.append(est.delta_lambda_pm
                      - ground_truth_shift(gt, mesh, ring1, phases, coefficients=coeff))
    assert math.sqrt(np.mean(np.square(errors))) <= 0.3


def test_directory_batch_extraction(tmp_path):
    import csv

    for sample, shift in (("s000", 2.0), ("s001", -4.5)):
        _analytic_spectrum(0.0).to_csv(tmp_path / f"{sample}__ref_before.csv")
        _analytic_spectrum(shift).to_csv(tmp_path / f"{sample}__measurement.csv")
        _analytic_spectrum(0.0).to_csv(tmp_path / f"{sample}__ref_after.csv")
    with open(tmp_path / "phases.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "phi_00", "phi_01"])
        writer.writerow(["s000", "0.5", "1.5"])
        writer.writerow(["s001", "2.5", "0.0"])

    out_csv = tmp_path / "samples.csv"
    rows = extract_spectra_dir(tmp_path, 118.4, out_csv=out_csv)
    assert [r["sample_id"] for r in rows] == ["s000", "s001"]
    assert rows[0]["delta_lambda_pm"] == pytest.approx(2.0, abs=0.0100001)
    assert rows[1]["delta_lambda_pm"] == pytest.approx(-4.5, abs=0.0100001)
    assert rows[0]["phi_01"] == 1.5
    header = out_csv.read_text().splitlines()[0].split(",")
    assert header == ["sample_id", "phi_00", "phi_01",
                      "delta_lambda_pm", "correlation_1", "correlation_2"]


def test_directory_missing_role_rejected(tmp_path):
    _analytic_spectrum(0.0).to_csv(tmp_path / "s000__ref_before.csv")
    _analytic_spectrum(1.0).to_csv(tmp_path / "s000__measurement.csv")
    with pytest.raises(FileNotFoundError, match="ref_after"):
        extract_spectra_dir(tmp_path, 118.4)
