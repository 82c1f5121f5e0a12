"""Synthetic measurement bench for a ring programmed on the mesh.

Generates through-port power spectra of the six-edge add-drop ring under a
configurable ground-truth crosstalk law, with additive amplitude noise and a
slow random-walk wavelength drift.  The crosstalk acts as an additive
resonance shift: every interfering cell contributes a coefficient (pm per pi
of driven phase) that decays with its distance from the ring and carries a
fixed per-cell fabrication perturbation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .mesh import (
    CENTER_WAVELENGTH_NM,
    MeshTopology,
    RingConfig,
    interfering_pucs,
    ring_distances,
)

SPECTRUM_START_NM = 1549.75
SPECTRUM_SPAN_NM = 0.5
RAW_STEP_PM = 1.6

DEFAULT_ROUND_TRIP_AMPLITUDE = 0.96

# Default ground-truth crosstalk law, calibrated so per-cell coefficients
# stay within [0.1, 0.6] pm/pi over the distances present in the mesh.
DEFAULT_COEFF_AMPLITUDE = 0.55   # pm/pi
DEFAULT_COEFF_DECAY = 0.6        # 1/mm
DEFAULT_COEFF_FLOOR = 0.15       # pm/pi
DEFAULT_PERTURBATION_STD = 0.1

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class GroundTruthCrosstalk:
    """Hidden crosstalk law of a simulated chip.

    The coefficient of interfering cell i at distance d_i from the ring is

        c_i = (amplitude * exp(-decay * d_i) + floor) * (1 + eta_i)

    in pm per pi of driven phase.  eta_i is a zero-mean Gaussian perturbation
    drawn once per cell from ``seed`` and fixed for the chip's lifetime.
    """

    amplitude_pm_per_pi: float = DEFAULT_COEFF_AMPLITUDE
    decay_per_mm: float = DEFAULT_COEFF_DECAY
    floor_pm_per_pi: float = DEFAULT_COEFF_FLOOR
    perturbation_std: float = DEFAULT_PERTURBATION_STD
    seed: int = 0

    def __post_init__(self) -> None:
        if self.decay_per_mm <= 0:
            raise ValueError(f"decay rate must be positive, got {self.decay_per_mm}")
        if self.perturbation_std < 0:
            raise ValueError("perturbation std must be non-negative")

    def perturbations(self, n_pucs: int) -> np.ndarray:
        """Fixed per-cell multiplicative perturbations (1 + eta)."""
        rng = np.random.default_rng((self.seed, 0))
        return 1.0 + rng.normal(0.0, self.perturbation_std, n_pucs)

    def coefficients(self, mesh: MeshTopology, ring: RingConfig) -> np.ndarray:
        """Coefficients (pm/pi) for the ring's interfering cells, ascending id."""
        pucs = interfering_pucs(mesh, ring)
        d = ring_distances(mesh, ring, pucs)
        factors = self.perturbations(mesh.n_pucs)[pucs]
        c = (self.amplitude_pm_per_pi * np.exp(-self.decay_per_mm * d)
             + self.floor_pm_per_pi) * factors
        if np.any(c < 0):
            bad = [p for p, ci in zip(pucs, c) if ci < 0]
            raise ValueError(f"negative crosstalk coefficient for PUCs {bad}")
        return c


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement imperfections: amplitude noise and slow reference drift."""

    amplitude_std_db: float = 0.1
    drift_step_std_pm: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.amplitude_std_db < 0 or self.drift_step_std_pm < 0:
            raise ValueError("noise magnitudes must be non-negative")

    @classmethod
    def quiet(cls, seed: int = 0) -> "NoiseSpec":
        return cls(amplitude_std_db=0.0, drift_step_std_pm=0.0, seed=seed)


def drift_offsets(noise: NoiseSpec, n_slots: int) -> np.ndarray:
    """Cumulative drift (pm) at measurement slots 0..n_slots-1.

    The drift is a random walk over the slot index, fully determined by the
    noise seed, so spectra may be generated in any order or in parallel.
    """
    rng = np.random.default_rng((noise.seed, 0))
    steps = rng.normal(0.0, noise.drift_step_std_pm, n_slots)
    return np.cumsum(steps)


@dataclass(frozen=True)
class RingPhysics:
    """Analytic add-drop response of the programmed ring.

    Coupling ratios are the fraction of power cross-coupled, so the amplitude
    self-coupling of each coupler is sqrt(1 - ratio).
    """

    self_coupling_through: float
    self_coupling_drop: float
    round_trip_amplitude: float = DEFAULT_ROUND_TRIP_AMPLITUDE
    phase_offset_rad: float = 0.0
    fsr_pm: float = 118.4
    center_wavelength_nm: float = CENTER_WAVELENGTH_NM

    def __post_init__(self) -> None:
        for t in (self.self_coupling_through, self.self_coupling_drop):
            if not 0.0 <= t <= 1.0:
                raise ValueError(f"self-coupling amplitude {t} outside [0, 1]")
        if not 0.0 < self.round_trip_amplitude <= 1.0:
            raise ValueError("round-trip amplitude must be in (0, 1]")
        if self.fsr_pm <= 0:
            raise ValueError("fsr must be positive")

    @classmethod
    def from_ring(cls, ring: RingConfig,
                  round_trip_amplitude: float = DEFAULT_ROUND_TRIP_AMPLITUDE,
                  phase_offset_rad: float = 0.0) -> "RingPhysics":
        phys = cls(
            self_coupling_through=math.sqrt(1.0 - ring.io_coupler[1]),
            self_coupling_drop=math.sqrt(1.0 - ring.drop_coupler[1]),
            round_trip_amplitude=round_trip_amplitude,
            phase_offset_rad=phase_offset_rad,
            fsr_pm=ring.fsr_pm,
        )
        er = phys.extinction_ratio_db()
        if abs(er - ring.extinction_ratio_target_db) > 3.0:
            raise ValueError(
                f"simulated extinction ratio {er:.2f} dB misses the "
                f"{ring.extinction_ratio_target_db:.2f} dB target by more than 3 dB"
            )
        return phys

    def extinction_ratio_db(self) -> float:
        """Depth of the resonance notch: max over min transmission, in dB."""
        t_on = through_port_power(self, 0.0)
        t_off = through_port_power(self, math.pi)
        return 10.0 * math.log10(t_off / t_on) if t_on > 0 else math.inf


def through_port_power(phys: RingPhysics, round_trip_phase) -> np.ndarray | float:
    """Linear power fraction at the through port for a round-trip phase (rad).

    2*pi-periodic; minimum at zero phase (resonance).  Returns a scalar for
    scalar input.
    """
    phi = np.asarray(round_trip_phase, dtype=float)
    t1 = phys.self_coupling_through
    t2a = phys.self_coupling_drop * phys.round_trip_amplitude
    cos_phi = np.cos(phi)
    num = t1**2 + t2a**2 - 2.0 * t1 * t2a * cos_phi
    den = 1.0 + (t1 * t2a) ** 2 - 2.0 * t1 * t2a * cos_phi
    out = num / den
    return float(out) if np.isscalar(round_trip_phase) or out.ndim == 0 else out


@dataclass(frozen=True)
class Spectrum:
    """Uniformly sampled through-port power trace."""

    start_wavelength_nm: float
    step_pm: float
    power_db: np.ndarray

    def __post_init__(self) -> None:
        self.power_db.setflags(write=False)

    def __len__(self) -> int:
        return self.power_db.shape[0]

    @property
    def wavelengths_nm(self) -> np.ndarray:
        return self.start_wavelength_nm + np.arange(len(self)) * self.step_pm * 1e-3

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["wavelength_nm", "power_db"])
            for w, p in zip(self.wavelengths_nm, self.power_db):
                writer.writerow([repr(float(w)), repr(float(p))])

    @classmethod
    def from_csv(cls, path) -> "Spectrum":
        with open(path, "r", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["wavelength_nm", "power_db"]:
            raise ValueError(f"{path}: not a spectrum CSV")
        wl = np.array([float(r[0]) for r in rows[1:]])
        power = np.array([float(r[1]) for r in rows[1:]])
        if len(wl) < 2:
            raise ValueError(f"{path}: spectrum needs at least 2 samples")
        steps = np.diff(wl) * 1e3
        if not np.allclose(steps, steps[0], rtol=0, atol=1e-6):
            raise ValueError(f"{path}: wavelength grid is not uniform")
        return cls(start_wavelength_nm=float(wl[0]), step_pm=float(steps[0]), power_db=power)


def _validate_phases(phases: np.ndarray, n_expected: int) -> np.ndarray:
    phases = np.asarray(phases, dtype=float)
    if phases.shape != (n_expected,):
        raise ValueError(f"expected {n_expected} phases, got shape {phases.shape}")
    if np.any(phases < 0) or np.any(phases > TWO_PI + 1e-12):
        raise ValueError("phases must lie in [0, 2*pi] rad")
    return phases


def ground_truth_shift(gt: GroundTruthCrosstalk, mesh: MeshTopology, ring: RingConfig,
                       phases, coefficients: np.ndarray | None = None) -> float:
    """True injected resonance shift (pm): sum of c_i * phi_i / pi.

    Linear in every phase; zero phases give zero shift.
    """
    c = gt.coefficients(mesh, ring) if coefficients is None else coefficients
    phases = np.asarray(phases, dtype=float)
    if phases.shape != c.shape:
        raise ValueError(f"expected {c.shape[0]} phases, got shape {phases.shape}")
    return float(np.dot(c, phases / math.pi))


def measure_spectrum(mesh: MeshTopology, ring: RingConfig, phys: RingPhysics,
                     gt: GroundTruthCrosstalk, phases, noise: NoiseSpec,
                     time_index: int, loop_phase_rad: float = 0.0,
                     drift: np.ndarray | None = None,
                     coefficients: np.ndarray | None = None) -> Spectrum:
    """Simulate one through-port spectrum at a measurement slot.

    Parameters
    ----------
    phases : array
        Driven phase (rad, in [0, 2*pi]) of every interfering cell of the
        ring, ordered by ascending PUC id.
    time_index : int
        Measurement slot; indexes the drift random walk and the per-slot
        amplitude-noise stream, making the function pure and parallel-safe.
    loop_phase_rad : float
        Extra round-trip phase applied on the ring loop itself (the sum of
        the six per-cell compensation phases).
    drift : array, optional
        Precomputed :func:`drift_offsets`; derived from the noise seed when
        omitted.
    """
    if coefficients is None:
        coefficients = gt.coefficients(mesh, ring)
    phases = _validate_phases(phases, coefficients.shape[0])
    if time_index < 0:
        raise ValueError("time_index must be non-negative")

    shift_pm = float(np.dot(coefficients, phases / math.pi))
    if drift is None:
        drift_pm = float(drift_offsets(noise, time_index + 1)[time_index])
    else:
        drift_pm = float(drift[time_index])
    total_shift_pm = shift_pm + drift_pm + phys.fsr_pm * loop_phase_rad / TWO_PI

    n_points = int(math.floor(SPECTRUM_SPAN_NM * 1e3 / RAW_STEP_PM)) + 1
    detuning_pm = (SPECTRUM_START_NM - phys.center_wavelength_nm) * 1e3 \
        + np.arange(n_points) * RAW_STEP_PM
    phi = TWO_PI * (detuning_pm - total_shift_pm) / phys.fsr_pm + phys.phase_offset_rad
    power = through_port_power(phys, phi)
    power_db = 10.0 * np.log10(np.maximum(power, 1e-15))

    if noise.amplitude_std_db > 0:
        rng = np.random.default_rng((noise.seed, 1, time_index))
        power_db = power_db + rng.normal(0.0, noise.amplitude_std_db, n_points)

    return Spectrum(start_wavelength_nm=SPECTRUM_START_NM, step_pm=RAW_STEP_PM,
                    power_db=power_db)
