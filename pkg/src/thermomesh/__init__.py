"""Thermal-crosstalk laboratory for ring structures on a hexagonal photonic mesh.

Simulates crosstalk-perturbed through-port spectra, extracts resonance
shifts, fits predictive models (scikit-learn style estimators), evaluates
their generalization across ring placements and closes the loop with
phase-based compensation.
"""

from .compensation import (
    CompensationRecord,
    boxplot_summary,
    compensation_phase,
    run_compensation,
)
from .config import ConfigError, ExperimentConfig, load_config, save_config
from .evaluation import (
    CrossEvalMatrix,
    SizeSweepResult,
    cross_eval,
    rmse,
    size_sweep,
    weight_distance_diagnostics,
)
from .extraction import (
    NoSignalError,
    ShiftEstimate,
    bracketed_shift,
    correlation_shift,
    extract_shift,
    upsample,
)
from .mesh import (
    MeshConfigurationError,
    MeshTopology,
    PucState,
    RingConfig,
    build_mesh,
    distance_to_ring,
    interfering_pucs,
    puc_distance,
    ring_preset,
)
from .models import (
    DegenerateDesignError,
    FitReport,
    RidgePhaseModel,
    ThermalDecayModel,
    TotalPhaseModel,
    fit_model,
    make_model,
)
from .sampling import Dataset, beta_params, build_dataset, sample_phase_vectors
from .simulator import (
    GroundTruthCrosstalk,
    NoiseSpec,
    RingPhysics,
    Spectrum,
    ground_truth_shift,
    measure_spectrum,
    through_port_power,
)

__version__ = "0.1.0"

__all__ = [
    "CompensationRecord", "boxplot_summary", "compensation_phase", "run_compensation",
    "ConfigError", "ExperimentConfig", "load_config", "save_config",
    "CrossEvalMatrix", "SizeSweepResult", "cross_eval", "rmse", "size_sweep",
    "weight_distance_diagnostics",
    "NoSignalError", "ShiftEstimate", "bracketed_shift", "correlation_shift",
    "extract_shift", "upsample",
    "MeshConfigurationError", "MeshTopology", "PucState", "RingConfig", "build_mesh",
    "distance_to_ring", "interfering_pucs", "puc_distance", "ring_preset",
    "DegenerateDesignError", "FitReport", "RidgePhaseModel", "ThermalDecayModel",
    "TotalPhaseModel", "fit_model", "make_model",
    "Dataset", "beta_params", "build_dataset", "sample_phase_vectors",
    "GroundTruthCrosstalk", "NoiseSpec", "RingPhysics", "Spectrum",
    "ground_truth_shift", "measure_spectrum", "through_port_power",
    "__version__",
]
