"""Hexagonal mesh geometry for a 72-cell programmable photonic processor.

The mesh is a tiling of regular hexagons whose edges carry the programmable
unit cells (PUCs).  Each PUC is represented by the midpoint of its edge; all
distances are Euclidean distances between midpoints, in millimetres.  A ring
structure occupies the six edges of one hexagon.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

CENTER_WAVELENGTH_NM = 1550.0
DEFAULT_UNIT_LENGTH_MM = 0.81141
DEFAULT_FSR_PM = 118.4
DEFAULT_ROWS = 5
DEFAULT_COLS = 5
NUM_PUCS = 72

IO_COUPLING_RATIO = 0.9
DROP_COUPLING_RATIO = 0.77

# Round-trip length is six edges; the implied group index ties the free
# spectral range to the physical loop at the 1550 nm working point.
LOOP_EDGES = 6


class MeshConfigurationError(ValueError):
    """Raised when a mesh or ring cannot be constructed as requested."""


@dataclass(frozen=True)
class PucState:
    """State of one programmable cell.

    mode is one of ``bar``, ``cross``, ``coupler`` or ``interfering``.
    ``coupler`` carries a power coupling ratio in [0, 1]; ``interfering``
    carries a phase in [0, 2*pi] applied identically to both arms so the
    coupling ratio stays fixed.
    """

    mode: str
    value: float | None = None

    _MODES = ("bar", "cross", "coupler", "interfering")

    def __post_init__(self) -> None:
        if self.mode not in self._MODES:
            raise ValueError(f"unknown PUC mode {self.mode!r}; expected one of {self._MODES}")
        if self.mode == "coupler":
            if self.value is None or not 0.0 <= self.value <= 1.0:
                raise ValueError(f"coupler ratio must be in [0, 1], got {self.value}")
        elif self.mode == "interfering":
            if self.value is None or not 0.0 <= self.value <= 2.0 * math.pi:
                raise ValueError(f"interfering phase must be in [0, 2*pi] rad, got {self.value}")
        elif self.value is not None:
            raise ValueError(f"mode {self.mode!r} takes no value")

    @classmethod
    def bar(cls) -> "PucState":
        return cls("bar")

    @classmethod
    def cross(cls) -> "PucState":
        return cls("cross")

    @classmethod
    def coupler(cls, ratio: float) -> "PucState":
        return cls("coupler", ratio)

    @classmethod
    def interfering(cls, phase: float) -> "PucState":
        return cls("interfering", phase)


@dataclass(frozen=True)
class MeshTopology:
    """Immutable geometry of the hexagonal mesh.

    Attributes
    ----------
    unit_length_mm : float
        Edge length of one hexagon, i.e. the PUC basic unit length.
    rows, cols : int
        Hexagon tiling extent used to generate the layout.
    positions : ndarray, shape (72, 2)
        Midpoint coordinates (mm) of the edge carrying each PUC, indexed
        by PUC id.
    hex_centers : ndarray, shape (rows * cols, 2)
        Centre coordinates of every hexagon in the tiling.
    hex_loops : tuple
        Per hexagon, the 6 PUC ids of its edges, or None if any edge of
        that hexagon was not assigned a PUC id.
    """

    unit_length_mm: float
    rows: int
    cols: int
    positions: np.ndarray
    hex_centers: np.ndarray
    hex_loops: tuple

    def __post_init__(self) -> None:
        self.positions.setflags(write=False)
        self.hex_centers.setflags(write=False)

    @property
    def n_pucs(self) -> int:
        return self.positions.shape[0]

    def validate_puc(self, puc: int) -> int:
        p = int(puc)
        if not 0 <= p < self.n_pucs:
            raise ValueError(f"PUC id {puc} outside [0, {self.n_pucs - 1}]")
        return p

    def loop_for_hex(self, q: int, col_row: int | None = None) -> tuple[int, ...]:
        """PUC ids of the six edges of hexagon (q, r); raises if incomplete."""
        if col_row is None:
            index = int(q)
        else:
            index = int(col_row) * self.cols + int(q)
        loop = self.hex_loops[index]
        if loop is None:
            raise MeshConfigurationError(f"hexagon {index} has edges without PUC ids")
        return loop


@dataclass(frozen=True)
class RingConfig:
    """A six-edge ring placement with coupler settings and guiding cells."""

    ring_id: str
    loop_pucs: tuple[int, ...]
    io_coupler: tuple[int, float]
    drop_coupler: tuple[int, float]
    guiding_pucs: tuple[tuple[int, str], ...]
    round_trip_length_mm: float
    group_index: float
    fsr_pm: float
    extinction_ratio_target_db: float

    def __post_init__(self) -> None:
        if len(self.loop_pucs) != LOOP_EDGES or len(set(self.loop_pucs)) != LOOP_EDGES:
            raise MeshConfigurationError("ring loop must consist of 6 distinct PUCs")
        if self.io_coupler[0] not in self.loop_pucs or self.drop_coupler[0] not in self.loop_pucs:
            raise MeshConfigurationError("couplers must belong to the ring loop")
        for _, ratio in (self.io_coupler, self.drop_coupler):
            if not 0.0 <= ratio <= 1.0:
                raise MeshConfigurationError(f"coupling ratio {ratio} outside [0, 1]")
        guiding_ids = [p for p, _ in self.guiding_pucs]
        if len(set(guiding_ids)) != len(guiding_ids):
            raise MeshConfigurationError("duplicate guiding PUCs")
        if set(guiding_ids) & set(self.loop_pucs):
            raise MeshConfigurationError("guiding PUCs must be disjoint from the loop")
        for _, state in self.guiding_pucs:
            if state not in ("bar", "cross"):
                raise MeshConfigurationError(f"guiding state must be bar or cross, got {state!r}")
        if self.fsr_pm <= 0:
            raise MeshConfigurationError(f"fsr must be positive, got {self.fsr_pm}")
        implied = implied_fsr_pm(self.group_index, self.round_trip_length_mm)
        if abs(implied - self.fsr_pm) > 1e-3 * self.fsr_pm:
            raise MeshConfigurationError(
                f"fsr {self.fsr_pm} pm inconsistent with group index {self.group_index} "
                f"and loop length {self.round_trip_length_mm} mm (implies {implied:.3f} pm)"
            )

    @property
    def guiding_ids(self) -> tuple[int, ...]:
        return tuple(p for p, _ in self.guiding_pucs)


def implied_fsr_pm(group_index: float, round_trip_length_mm: float,
                   wavelength_nm: float = CENTER_WAVELENGTH_NM) -> float:
    """Free spectral range (pm) from the loop length and group index."""
    wavelength_pm = wavelength_nm * 1e3
    length_pm = round_trip_length_mm * 1e9
    return wavelength_pm**2 / (group_index * length_pm)


def implied_group_index(fsr_pm: float, round_trip_length_mm: float,
                        wavelength_nm: float = CENTER_WAVELENGTH_NM) -> float:
    """Group index implied by a free spectral range and loop length."""
    wavelength_pm = wavelength_nm * 1e3
    length_pm = round_trip_length_mm * 1e9
    return wavelength_pm**2 / (fsr_pm * length_pm)


def build_mesh(unit_length_mm: float = DEFAULT_UNIT_LENGTH_MM,
               rows: int = DEFAULT_ROWS, cols: int = DEFAULT_COLS) -> MeshTopology:
    """Construct the hexagonal mesh and assign the 72 PUC ids.

    Hexagons are laid out pointy-top on an axial grid of ``rows`` x ``cols``.
    Every distinct hexagon edge is a candidate PUC; the 72 edges closest to
    the tiling centroid receive ids, numbered in raster order (y, then x).
    The construction is a pure function of its arguments.
    """
    if unit_length_mm <= 0:
        raise MeshConfigurationError(f"unit length must be positive, got {unit_length_mm}")
    if rows < 1 or cols < 1:
        raise MeshConfigurationError("rows and cols must be at least 1")

    s = float(unit_length_mm)
    centers = []
    for r in range(rows):
        for q in range(cols):
            centers.append((math.sqrt(3.0) * s * (q + 0.5 * r), 1.5 * s * r))
    centers = np.asarray(centers)

    # Edge midpoints of the tiling fall on an exact lattice (multiples of
    # sqrt(3)*s/4 in x and 3*s/4 in y), so shared edges dedupe robustly on
    # integer lattice keys.
    corner_angles = [math.radians(30 + 60 * j) for j in range(6)]
    x_pitch = math.sqrt(3.0) * s / 4.0
    y_pitch = 0.75 * s
    midpoint_key_to_index: dict[tuple[int, int], int] = {}
    midpoints: list[tuple[float, float]] = []
    hex_edge_indices: list[list[int]] = []
    for cx, cy in centers:
        corners = [(cx + s * math.cos(a), cy + s * math.sin(a)) for a in corner_angles]
        edge_ids = []
        for j in range(6):
            x0, y0 = corners[j]
            x1, y1 = corners[(j + 1) % 6]
            mx, my = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
            key = (round(mx / x_pitch), round(my / y_pitch))
            if key not in midpoint_key_to_index:
                midpoint_key_to_index[key] = len(midpoints)
                midpoints.append((key[0] * x_pitch, key[1] * y_pitch))
            edge_ids.append(midpoint_key_to_index[key])
        hex_edge_indices.append(edge_ids)

    midpoints = np.asarray(midpoints)
    n_edges = midpoints.shape[0]
    if n_edges < NUM_PUCS:
        raise MeshConfigurationError(
            f"{rows}x{cols} tiling yields only {n_edges} edges; {NUM_PUCS} required"
        )

    centroid = midpoints.mean(axis=0)
    dist_to_centroid = np.hypot(*(midpoints - centroid).T)
    order = np.lexsort((
        np.round(midpoints[:, 0], 9),
        np.round(midpoints[:, 1], 9),
        np.round(dist_to_centroid, 9),
    ))
    kept = np.sort(order[:NUM_PUCS])
    raster = np.lexsort((
        np.round(midpoints[kept, 0], 9),
        np.round(midpoints[kept, 1], 9),
    ))
    kept = kept[raster]

    edge_to_puc = {int(e): i for i, e in enumerate(kept)}
    hex_loops = []
    for edge_ids in hex_edge_indices:
        if all(e in edge_to_puc for e in edge_ids):
            hex_loops.append(tuple(sorted(edge_to_puc[e] for e in edge_ids)))
        else:
            hex_loops.append(None)

    return MeshTopology(
        unit_length_mm=s,
        rows=rows,
        cols=cols,
        positions=midpoints[kept].copy(),
        hex_centers=centers,
        hex_loops=tuple(hex_loops),
    )


def puc_distance(mesh: MeshTopology, a: int, b: int) -> float:
    """Euclidean distance (mm) between two distinct PUC midpoints."""
    a = mesh.validate_puc(a)
    b = mesh.validate_puc(b)
    if a == b:
        raise ValueError(f"distance from PUC {a} to itself is undefined")
    dx, dy = mesh.positions[a] - mesh.positions[b]
    return float(math.hypot(dx, dy))


def distance_to_ring(mesh: MeshTopology, ring: RingConfig, puc: int) -> float:
    """Mean of the distances from a PUC to the six loop PUCs of a ring."""
    puc = mesh.validate_puc(puc)
    if puc in ring.loop_pucs:
        raise ValueError(f"PUC {puc} belongs to the ring loop of {ring.ring_id!r}")
    return float(np.mean([puc_distance(mesh, puc, lp) for lp in ring.loop_pucs]))


def ring_distances(mesh: MeshTopology, ring: RingConfig, pucs) -> np.ndarray:
    """Vector of distance_to_ring values for the given PUC ids."""
    return np.asarray([distance_to_ring(mesh, ring, p) for p in pucs])


def interfering_pucs(mesh: MeshTopology, ring: RingConfig) -> list[int]:
    """All PUCs outside the ring loop and its fixed guiding cells, ascending."""
    excluded = set(ring.loop_pucs) | set(ring.guiding_ids)
    return [p for p in range(mesh.n_pucs) if p not in excluded]


def _make_ring(mesh: MeshTopology, ring_id: str, loop: tuple[int, ...],
               guiding: tuple[tuple[int, str], ...] = (),
               fsr_pm: float = DEFAULT_FSR_PM,
               extinction_ratio_target_db: float = 12.1) -> RingConfig:
    length = LOOP_EDGES * mesh.unit_length_mm
    io_id = min(loop)
    drop_id = max((p for p in loop if p != io_id),
                  key=lambda p: (puc_distance(mesh, io_id, p), p))
    return RingConfig(
        ring_id=ring_id,
        loop_pucs=tuple(loop),
        io_coupler=(io_id, IO_COUPLING_RATIO),
        drop_coupler=(drop_id, DROP_COUPLING_RATIO),
        guiding_pucs=tuple(guiding),
        round_trip_length_mm=length,
        group_index=implied_group_index(fsr_pm, length),
        fsr_pm=fsr_pm,
        extinction_ratio_target_db=extinction_ratio_target_db,
    )


# Named placements on the default 5x5 mesh.  mrr1 and mrr3 occupy hexagons
# mirror-symmetric about the central one; mrr3 additionally fixes eight
# guiding cells (two bar, six cross) that route light across the mesh and
# are excluded from its dataset.  mrr2 sits at the mesh periphery, so fewer
# of its interfering cells fall inside the thermally relevant range.
_PRESET_HEXES = {"mrr1": (2, 1), "mrr2": (2, 0), "mrr3": (2, 3)}

PRESET_NAMES = ("mrr1", "mrr2", "mrr3")


def _default_mesh_required(mesh: MeshTopology) -> None:
    if (mesh.rows, mesh.cols) != (DEFAULT_ROWS, DEFAULT_COLS):
        raise MeshConfigurationError(
            "named ring presets are defined for the default "
            f"{DEFAULT_ROWS}x{DEFAULT_COLS} tiling, got {mesh.rows}x{mesh.cols}"
        )


# Guiding cells for the third ring sit in the first shells around the loop,
# between 0.94 and 2.32 mm from it.
_GUIDING_BAND_MM = (0.94, 2.32)


def _guiding_for_mrr3(mesh: MeshTopology, loop: tuple[int, ...]) -> tuple[tuple[int, str], ...]:
    """Eight guiding cells adjacent to the third ring: two bar, six cross."""
    lo, hi = _GUIDING_BAND_MM
    candidates = []
    for p in range(mesh.n_pucs):
        if p in loop:
            continue
        d = float(np.mean([puc_distance(mesh, p, lp) for lp in loop]))
        if lo <= d <= hi:
            candidates.append((round(d, 9), p))
    candidates.sort()
    if len(candidates) < 8:
        raise MeshConfigurationError("not enough cells in the guiding band around mrr3")
    chosen = sorted(p for _, p in candidates[:8])
    states = ["bar", "bar"] + ["cross"] * 6
    return tuple((p, st) for p, st in zip(chosen, states))


def ring_preset(mesh: MeshTopology, name: str) -> RingConfig:
    """One of the named ring placements ``mrr1``, ``mrr2``, ``mrr3``."""
    if name not in _PRESET_HEXES:
        raise MeshConfigurationError(f"unknown ring preset {name!r}; expected one of {PRESET_NAMES}")
    _default_mesh_required(mesh)
    q, r = _PRESET_HEXES[name]
    loop = mesh.loop_for_hex(q, r)
    guiding = _guiding_for_mrr3(mesh, loop) if name == "mrr3" else ()
    return _make_ring(mesh, name, loop, guiding)


def mesh_to_config(mesh: MeshTopology, rings: dict[str, RingConfig] | None = None) -> dict:
    """Serializable description of the mesh and optional ring placements."""
    config: dict = {
        "unit_length_mm": mesh.unit_length_mm,
        "rows": mesh.rows,
        "cols": mesh.cols,
    }
    if rings:
        config["placements"] = {
            name: {
                "loop_pucs": list(ring.loop_pucs),
                "io_coupler": [ring.io_coupler[0], ring.io_coupler[1]],
                "drop_coupler": [ring.drop_coupler[0], ring.drop_coupler[1]],
                "guiding_pucs": [[p, st] for p, st in ring.guiding_pucs],
                "fsr_pm": ring.fsr_pm,
                "extinction_ratio_target_db": ring.extinction_ratio_target_db,
            }
            for name, ring in rings.items()
        }
    return config


def mesh_from_config(config: dict) -> tuple[MeshTopology, dict[str, RingConfig]]:
    """Rebuild a mesh and its ring placements from :func:`mesh_to_config` output."""
    mesh = build_mesh(
        unit_length_mm=config.get("unit_length_mm", DEFAULT_UNIT_LENGTH_MM),
        rows=config.get("rows", DEFAULT_ROWS),
        cols=config.get("cols", DEFAULT_COLS),
    )
    rings: dict[str, RingConfig] = {}
    for name, p in config.get("placements", {}).items():
        loop = tuple(int(x) for x in p["loop_pucs"])
        length = LOOP_EDGES * mesh.unit_length_mm
        fsr = float(p.get("fsr_pm", DEFAULT_FSR_PM))
        rings[name] = RingConfig(
            ring_id=name,
            loop_pucs=loop,
            io_coupler=(int(p["io_coupler"][0]), float(p["io_coupler"][1])),
            drop_coupler=(int(p["drop_coupler"][0]), float(p["drop_coupler"][1])),
            guiding_pucs=tuple((int(g), str(st)) for g, st in p.get("guiding_pucs", [])),
            round_trip_length_mm=length,
            group_index=implied_group_index(fsr, length),
            fsr_pm=fsr,
            extinction_ratio_target_db=float(p.get("extinction_ratio_target_db", 12.1)),
        )
    return mesh, rings


def save_mesh_config(path, mesh: MeshTopology, rings: dict[str, RingConfig] | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(mesh_to_config(mesh, rings), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_mesh_config(path) -> tuple[MeshTopology, dict[str, RingConfig]]:
    with open(path, "r", encoding="utf-8") as fh:
        return mesh_from_config(json.load(fh))
