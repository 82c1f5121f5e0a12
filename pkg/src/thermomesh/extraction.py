"""Resonance-shift extraction from noisy spectra.

A measurement is compared against a zero-perturbation reference spectrum
taken just before it and another taken just after it.  Each comparison
upsamples both traces with a cubic spline, then finds the wavelength lag
inside one free spectral range that maximizes the Pearson correlation of the
overlapping region.  Averaging the two lags cancels slow reference drift to
first order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft
from scipy.interpolate import CubicSpline

from .simulator import Spectrum

UPSAMPLED_STEP_PM = 0.01


class NoSignalError(ValueError):
    """Raised when a spectrum carries no usable structure (constant trace)."""


@dataclass(frozen=True)
class ShiftEstimate:
    """Bracketed resonance-shift estimate (all wavelengths in pm)."""

    delta_lambda_pm: float
    delta_1_pm: float
    delta_2_pm: float
    correlation_1: float
    correlation_2: float


def upsample(spec: Spectrum, target_step_pm: float = UPSAMPLED_STEP_PM) -> Spectrum:
    """Cubic-spline interpolation onto a finer uniform grid.

    The output spans the original range and reproduces the input values at
    the original knots.
    """
    n = len(spec)
    if n < 4:
        raise ValueError(f"need at least 4 samples to upsample, got {n}")
    if target_step_pm >= spec.step_pm:
        raise ValueError(
            f"target step {target_step_pm} pm must be finer than {spec.step_pm} pm"
        )
    x = np.arange(n) * spec.step_pm
    spline = CubicSpline(x, spec.power_db)
    factor = spec.step_pm / target_step_pm
    if abs(factor - round(factor)) < 1e-9:
        # Integral upsampling factor: evaluate the piecewise cubics on the
        # fixed per-interval offsets directly (same polynomial as __call__).
        factor = int(round(factor))
        t = (np.arange(factor) * target_step_pm)[None, :]
        c = spline.c
        vals = ((c[0][:, None] * t + c[1][:, None]) * t + c[2][:, None]) * t + c[3][:, None]
        power = np.append(vals.ravel(), spec.power_db[-1])
    else:
        n_up = int(math.floor(x[-1] / target_step_pm + 1e-9)) + 1
        power = spline(np.arange(n_up) * target_step_pm)
    return Spectrum(
        start_wavelength_nm=spec.start_wavelength_nm,
        step_pm=target_step_pm,
        power_db=power,
    )


def _require_same_grid(a: Spectrum, b: Spectrum) -> None:
    if (len(a) != len(b) or abs(a.step_pm - b.step_pm) > 1e-12
            or abs(a.start_wavelength_nm - b.start_wavelength_nm) > 1e-12):
        raise ValueError("spectra must share an identical wavelength grid")


def _centered(spec: Spectrum) -> np.ndarray:
    values = spec.power_db.astype(float)
    if np.ptp(values) == 0:
        raise NoSignalError("constant spectrum: no structure to correlate")
    return values - values.mean()


def _window_moments(values: np.ndarray, lags: np.ndarray, side: str):
    """Per-lag sum and sum of squares over the overlap window."""
    n = values.shape[0]
    cs = np.concatenate(([0.0], np.cumsum(values)))
    cs2 = np.concatenate(([0.0], np.cumsum(values * values)))
    if side == "shifted":
        a = np.maximum(lags, 0)
        b = n + np.minimum(lags, 0)
    else:
        a = np.maximum(-lags, 0)
        b = n - np.maximum(lags, 0)
    return cs[b] - cs[a], cs2[b] - cs2[a]


def _correlation_peaks(shifted: Spectrum, references: list[Spectrum],
                       fsr_pm: float) -> list[tuple[float, float]]:
    """Lag (pm) in (-fsr/2, +fsr/2] maximizing windowed Pearson correlation.

    The lag search is exhaustive at grid resolution; the overlap region is
    truncated at the edges (no circular wrap).  Ties resolve to the smallest
    absolute lag.  The FFT of the shifted spectrum is shared across
    references.
    """
    step = shifted.step_pm
    n = len(shifted)
    half_steps = int(math.floor(fsr_pm / (2.0 * step) + 1e-9))
    if half_steps < 1:
        raise ValueError("fsr smaller than the wavelength grid step")
    if n - half_steps < 2:
        raise ValueError("spectra too short for the requested lag window")
    lags = np.arange(-half_steps + 1, half_steps + 1)

    x = _centered(shifted)
    sx, sxx = _window_moments(x, lags, "shifted")
    m = (n - np.abs(lags)).astype(float)
    var_x = m * sxx - sx * sx

    # Zero-padding to n + half_steps keeps the circular correlation free of
    # wrap-around terms for every lag in the window.
    n_fft = next_fast_len(n + half_steps + 1)
    x_fft = rfft(x, n_fft)

    peaks = []
    for reference in references:
        _require_same_grid(shifted, reference)
        y = _centered(reference)
        # cross[k] = sum_i x[i] * y[i-k]
        circular = irfft(x_fft * np.conj(rfft(y, n_fft)), n_fft)
        cross = circular[lags % n_fft]
        sy, syy = _window_moments(y, lags, "reference")
        var_y = m * syy - sy * sy

        valid = (var_x > 0) & (var_y > 0) & (m >= 2)
        r = np.full(lags.shape, -2.0)
        denom = np.sqrt(np.where(valid, var_x * var_y, 1.0))
        np.divide(m * cross - sx * sy, denom, out=r, where=valid)
        if not np.any(valid):
            raise NoSignalError("no lag with non-degenerate overlap")
        best = r.max()
        tied = np.flatnonzero(r >= best - 1e-15)
        k = tied[np.lexsort((lags[tied], np.abs(lags[tied])))[0]]
        peaks.append((float(lags[k] * step), float(min(max(r[k], -1.0), 1.0))))
    return peaks


def correlation_shift(shifted: Spectrum, reference: Spectrum, fsr_pm: float) -> float:
    """Signed resonance shift (pm) of ``shifted`` relative to ``reference``."""
    return _correlation_peaks(shifted, [reference], fsr_pm)[0][0]


def bracketed_shift(ref_before: Spectrum, measurement: Spectrum,
                    ref_after: Spectrum, fsr_pm: float) -> ShiftEstimate:
    """Drift-cancelling estimate from references taken before and after.

    All three spectra must already sit on an identical (upsampled) grid.
    """
    (d1, r1), (d2, r2) = _correlation_peaks(measurement, [ref_before, ref_after], fsr_pm)
    return ShiftEstimate(
        delta_lambda_pm=0.5 * (d1 + d2),
        delta_1_pm=d1,
        delta_2_pm=d2,
        correlation_1=r1,
        correlation_2=r2,
    )


def extract_shift(ref_before: Spectrum, measurement: Spectrum, ref_after: Spectrum,
                  fsr_pm: float, target_step_pm: float = UPSAMPLED_STEP_PM) -> ShiftEstimate:
    """Upsample raw spectra and run the bracketed estimate in one call."""
    return bracketed_shift(
        upsample(ref_before, target_step_pm),
        upsample(measurement, target_step_pm),
        upsample(ref_after, target_step_pm),
        fsr_pm,
    )


_ROLE_SUFFIXES = ("ref_before", "measurement", "ref_after")


def extract_spectra_dir(directory, fsr_pm: float, out_csv=None,
                        target_step_pm: float = UPSAMPLED_STEP_PM) -> list[dict]:
    """Batch extraction over a directory of spectrum CSV triplets.

    Expects files named ``<sample>__ref_before.csv``, ``<sample>__measurement.csv``
    and ``<sample>__ref_after.csv``.  If a ``phases.csv`` file is present
    (columns: sample_id, then one phase per cell), phases are joined into the
    output rows.  Returns one dict per sample, sorted by sample id, and
    optionally writes them as a samples CSV.
    """
    directory = Path(directory)
    triplets: dict[str, dict[str, Path]] = {}
    for f in sorted(directory.glob("*__*.csv")):
        stem, _, role = f.stem.rpartition("__")
        if role in _ROLE_SUFFIXES:
            triplets.setdefault(stem, {})[role] = f
    if not triplets:
        raise FileNotFoundError(f"no spectrum triplets found in {directory}")

    phases_by_sample: dict[str, list[str]] = {}
    phase_header: list[str] = []
    phases_path = directory / "phases.csv"
    if phases_path.exists():
        with open(phases_path, "r", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        phase_header = rows[0][1:]
        phases_by_sample = {r[0]: r[1:] for r in rows[1:]}

    results = []
    for sample_id in sorted(triplets):
        roles = triplets[sample_id]
        missing = [r for r in _ROLE_SUFFIXES if r not in roles]
        if missing:
            raise FileNotFoundError(f"sample {sample_id}: missing {missing} spectra")
        est = extract_shift(
            Spectrum.from_csv(roles["ref_before"]),
            Spectrum.from_csv(roles["measurement"]),
            Spectrum.from_csv(roles["ref_after"]),
            fsr_pm, target_step_pm,
        )
        row = {"sample_id": sample_id}
        for name, value in zip(phase_header, phases_by_sample.get(sample_id, [])):
            row[name] = float(value)
        row.update(
            delta_lambda_pm=est.delta_lambda_pm,
            correlation_1=est.correlation_1,
            correlation_2=est.correlation_2,
        )
        results.append(row)

    if out_csv is not None:
        fieldnames = list(results[0].keys())
        with open(out_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(fieldnames)
            for row in results:
                writer.writerow([
                    row[k] if k == "sample_id" else repr(float(row[k]))
                    for k in fieldnames
                ])
    return results
