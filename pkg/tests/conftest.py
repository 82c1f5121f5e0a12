import numpy as np
import pytest

from thermomesh.mesh import PRESET_NAMES, build_mesh, ring_preset
from thermomesh.sampling import Dataset, sample_phase_vectors, split_indices
from thermomesh.simulator import GroundTruthCrosstalk, NoiseSpec, RingPhysics


@pytest.fixture(scope="session")
def mesh():
    return build_mesh()


@pytest.fixture(scope="session")
def rings(mesh):
    return {name: ring_preset(mesh, name) for name in PRESET_NAMES}


@pytest.fixture(scope="session")
def ring1(rings):
    return rings["mrr1"]


@pytest.fixture(scope="session")
def gt():
    return GroundTruthCrosstalk(seed=101)


@pytest.fixture(scope="session")
def physics(ring1):
    return RingPhysics.from_ring(ring1)


@pytest.fixture(scope="session")
def quiet_noise():
    return NoiseSpec.quiet(seed=11)


@pytest.fixture
def oracle_dataset(mesh, gt):
    """Factory for datasets whose labels come straight from the hidden law.

    Skips the spectra entirely, so model behaviour can be tested quickly and
    against exact targets.  ``label_noise`` adds iid Gaussian error standing
    in for the extraction floor.
    """
    from thermomesh.mesh import interfering_pucs, ring_distances

    def build(ring, n_samples=400, label_noise=0.0, seed=0):
        pucs = interfering_pucs(mesh, ring)
        distances = ring_distances(mesh, ring, pucs)
        coeff = gt.coefficients(mesh, ring)
        phases = sample_phase_vectors(n_samples, len(pucs), seed=seed)
        y = (phases / np.pi) @ coeff
        if label_noise > 0:
            y = y + np.random.default_rng(seed + 1).normal(0, label_noise, n_samples)
        train_idx, test_idx = split_indices(n_samples, 0.8, seed + 2)
        return Dataset(
            ring_id=ring.ring_id,
            puc_ids=np.asarray(pucs),
            distances_mm=distances,
            phases=phases,
            shifts_pm=y,
            correlations=np.zeros((n_samples, 2)),
            train_idx=train_idx,
            test_idx=test_idx,
            meta={"fsr_pm": ring.fsr_pm},
        )

    return build
