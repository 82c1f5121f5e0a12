import itertools

import numpy as np
import pytest

from thermomesh.mesh import (
    MeshConfigurationError,
    PucState,
    build_mesh,
    distance_to_ring,
    implied_group_index,
    interfering_pucs,
    mesh_from_config,
    mesh_to_config,
    puc_distance,
    ring_distances,
    ring_preset,
)


def test_build_assigns_72_pucs(mesh):
    assert mesh.n_pucs == 72
    assert mesh.positions.shape == (72, 2)


def test_pairwise_distance_bounds(mesh):
    deltas = mesh.positions[:, None, :] - mesh.positions[None, :, :]
    dist = np.hypot(deltas[..., 0], deltas[..., 1])
    upper = dist[np.triu_indices(72, 1)]
    assert upper.min() > 0
    assert upper.min() < 1.7


def test_build_is_deterministic():
    a = build_mesh()
    b = build_mesh()
    assert np.array_equal(a.positions, b.positions)
    assert a.hex_loops == b.hex_loops


def test_zero_unit_length_rejected():
    with pytest.raises(MeshConfigurationError):
        build_mesh(unit_length_mm=0.0)


def test_tiling_too_small_rejected():
    with pytest.raises(MeshConfigurationError, match="tiling"):
        build_mesh(rows=2, cols=2)


def test_adjacent_pucs_near_unit_length(mesh, ring1):
    loop = sorted(ring1.loop_pucs)
    dists = [puc_distance(mesh, a, b) for a, b in itertools.combinations(loop, 2)]
    nearest = min(dists)
    assert abs(nearest - mesh.unit_length_mm) < 0.2 * mesh.unit_length_mm


def test_distance_symmetry(mesh):
    rng = np.random.default_rng(5)
    for _ in range(100):
        a, b = rng.choice(72, size=2, replace=False)
        assert puc_distance(mesh, a, b) == puc_distance(mesh, b, a)
        assert puc_distance(mesh, a, b) > 0


def test_distance_to_self_is_error(mesh):
    with pytest.raises(ValueError):
        puc_distance(mesh, 3, 3)


def test_triangle_inequality_on_subset(mesh):
    subset = range(10)
    for a, b, c in itertools.product(subset, repeat=3):
        if len({a, b, c}) < 3:
            continue
        assert puc_distance(mesh, a, c) <= (
            puc_distance(mesh, a, b) + puc_distance(mesh, b, c) + 1e-12
        )


def test_distance_to_ring_is_mean_of_six(mesh, ring1):
    puc = next(p for p in range(72) if p not in ring1.loop_pucs)
    manual = np.mean([puc_distance(mesh, puc, lp) for lp in ring1.loop_pucs])
    assert abs(distance_to_ring(mesh, ring1, puc) - manual) < 1e-9


def test_distance_to_ring_mirror_symmetry(mesh, ring1):
    # Cells mirror-symmetric about the ring centre see the same mean distance.
    center = mesh.positions[list(ring1.loop_pucs)].mean(axis=0)
    positions = mesh.positions
    for p in range(72):
        if p in ring1.loop_pucs:
            continue
        mirrored = 2 * center - positions[p]
        matches = np.where(np.hypot(*(positions - mirrored).T) < 1e-6)[0]
        if len(matches) and matches[0] not in ring1.loop_pucs:
            q = int(matches[0])
            assert distance_to_ring(mesh, ring1, p) == pytest.approx(
                distance_to_ring(mesh, ring1, q), abs=1e-9)
            break
    else:
        pytest.fail("no mirror-symmetric cell pair found")


def test_loop_member_rejected(mesh, ring1):
    with pytest.raises(ValueError):
        distance_to_ring(mesh, ring1, ring1.loop_pucs[0])


def test_interfering_counts(mesh, rings):
    assert len(interfering_pucs(mesh, rings["mrr1"])) == 66
    assert len(interfering_pucs(mesh, rings["mrr2"])) == 66
    assert len(interfering_pucs(mesh, rings["mrr3"])) == 58


def test_interfering_excludes_loop_and_guiding(mesh, rings):
    for ring in rings.values():
        inter = interfering_pucs(mesh, ring)
        assert len(inter) == len(set(inter))
        assert not set(inter) & set(ring.loop_pucs)
        assert not set(inter) & set(ring.guiding_ids)
        assert inter == sorted(inter)


def test_guiding_distance_band(mesh, rings):
    ring = rings["mrr3"]
    assert len(ring.guiding_pucs) == 8
    states = [st for _, st in ring.guiding_pucs]
    assert states.count("bar") == 2 and states.count("cross") == 6
    dists = ring_distances(mesh, ring, [p for p, _ in ring.guiding_pucs])
    assert dists.min() >= 0.94
    assert dists.max() <= 2.32


def test_close_range_counts_ordered(mesh, rings):
    counts = {}
    for name, ring in rings.items():
        d = ring_distances(mesh, ring, interfering_pucs(mesh, ring))
        counts[name] = int((d < 3.0).sum())
    assert len(set(counts.values())) == 3
    assert counts["mrr1"] > counts["mrr3"] > counts["mrr2"]


def test_preset_couplers(rings):
    for ring in rings.values():
        assert ring.io_coupler[1] == 0.9
        assert ring.drop_coupler[1] == 0.77
        assert ring.io_coupler[0] in ring.loop_pucs
        assert ring.drop_coupler[0] in ring.loop_pucs


def test_fsr_group_index_consistency(ring1):
    n_g = implied_group_index(ring1.fsr_pm, ring1.round_trip_length_mm)
    assert ring1.group_index == pytest.approx(n_g, rel=1e-12)
    assert ring1.round_trip_length_mm == pytest.approx(6 * 0.81141)


def test_unknown_preset_rejected(mesh):
    with pytest.raises(MeshConfigurationError, match="unknown ring preset"):
        ring_preset(mesh, "mrr9")


def test_config_round_trip(mesh, rings):
    config = mesh_to_config(mesh, rings)
    rebuilt_mesh, rebuilt_rings = mesh_from_config(config)
    assert np.array_equal(mesh.positions, rebuilt_mesh.positions)
    for name, ring in rings.items():
        other = rebuilt_rings[name]
        assert other.loop_pucs == ring.loop_pucs
        assert other.guiding_pucs == ring.guiding_pucs
        assert other.io_coupler == ring.io_coupler
        assert other.fsr_pm == ring.fsr_pm
    assert mesh_to_config(rebuilt_mesh, rebuilt_rings) == config


def test_puc_state_validation():
    assert PucState.coupler(0.9).value == 0.9
    assert PucState.bar().mode == "bar"
    with pytest.raises(ValueError):
        PucState.coupler(1.5)
    with pytest.raises(ValueError):
        PucState.interfering(-0.1)
    with pytest.raises(ValueError):
        PucState("bar", 1.0)
