"""Synthetic parametric head cohorts with known region-level generative factors.

Clinical mesh cohorts are private, so tests and demos run on a stand-in: a
subdivided ellipsoid template segmented into 15 angular-sector regions, with
each subject generated as template + per-region radial deformations under an
age-dependent global scale. Every region carries several independent smooth
deformation modes (a mean-amplitude bump plus tangent-polynomial modulations
of it), so each region has as many degrees of freedom as the model assigns
latent variables to it. Class-specific mean amplitudes drive the first mode;
per-subject Gaussian noise drives them all. The factors that generated each
subject are stored alongside, which is what makes disentanglement claims
checkable.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .cohort import CohortError, SubjectRecord, age_group
from .mesh import (
    ATTRIBUTE_COUNT,
    CANONICAL_ATTRIBUTE_NAMES,
    CorrespondedMesh,
    MeshTopology,
    save_mesh,
)

CLASS_LABELS = ("Healthy", "Apert", "Crouzon", "Muenke")


@dataclass(frozen=True)
class SyntheticFactorSpec:
    """Generative factors for the synthetic cohort.

    ``class_amplitudes[label]`` is a 15-vector of mean radial bump amplitudes
    (mm, one per region) driving each region's first deformation mode;
    ``subject_noise`` is the per-subject Gaussian std (mm) on that mode.
    Each region additionally carries ``modes_per_region - 1`` independent
    smooth modes, zero-mean with std ``subject_noise * mode_scale``, so the
    whole cohort collapses to the scaled template when the noise is zero.
    Head size scales with age as ``scale_base + scale_gain * sqrt(age / 20)``;
    ``blend_mm`` is the falloff width of every region field outside its mask.
    """

    class_amplitudes: dict[str, np.ndarray]
    subject_noise: float = 1.0
    scale_base: float = 0.7
    scale_gain: float = 0.3
    blend_mm: float = 12.0
    modes_per_region: int = 5
    mode_scale: float = 2.0

    def __post_init__(self):
        amps = {}
        for label, a in self.class_amplitudes.items():
            a = np.asarray(a, dtype=np.float64)
            if a.shape != (ATTRIBUTE_COUNT,):
                raise CohortError(f"{label}: need {ATTRIBUTE_COUNT} amplitudes, got {a.shape}")
            if not np.all(np.isfinite(a)):
                raise CohortError(f"{label}: non-finite amplitude")
            amps[label] = a
        object.__setattr__(self, "class_amplitudes", amps)
        if self.modes_per_region < 1:
            raise CohortError("each region needs at least one deformation mode")
        if not (np.isfinite(self.mode_scale) and self.mode_scale >= 0):
            raise CohortError("mode_scale must be finite and non-negative")

    def amplitude_matrix(self) -> np.ndarray:
        return np.stack([self.class_amplitudes[c] for c in sorted(self.class_amplitudes)])

    def mode_stds(self) -> np.ndarray:
        """Per-mode factor stds: the first mode carries the subject noise,
        the extra modes carry it scaled by ``mode_scale``."""
        stds = np.full(self.modes_per_region, self.subject_noise * self.mode_scale)
        stds[0] = self.subject_noise
        return stds


def default_factor_spec(discriminative_region: str = "orbits",
                        levels: tuple[float, float, float, float] = (0.0, 14.0, -11.0, 6.5),
                        subject_noise: float = 1.0) -> SyntheticFactorSpec:
    """Four-class spec whose class differences live in a single region.

    The amplitude levels on the discriminative region are well separated
    relative to the subject noise; every other region has the same mean
    amplitude in all classes, so only subject noise varies there.
    """
    idx = CANONICAL_ATTRIBUTE_NAMES.index(discriminative_region)
    amps = {}
    for label, level in zip(CLASS_LABELS, levels):
        a = np.zeros(ATTRIBUTE_COUNT)
        a[idx] = level
        amps[label] = a
    return SyntheticFactorSpec(class_amplitudes=amps, subject_noise=subject_noise)


# ---------------------------------------------------------------------------
# Template: octahedron subdivided toward an ellipsoid (1026 vertices at 4
# subdivisions), segmented into 3 polar bands x 5 azimuth sectors.

def _octasphere(subdivisions: int) -> tuple[np.ndarray, np.ndarray]:
    verts = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0],
                      [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.float64)
    faces = np.array([[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
                      [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]], dtype=np.int64)
    for _ in range(subdivisions):
        edge_mid: dict[tuple[int, int], int] = {}
        new_faces = []
        verts_list = list(verts)

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in edge_mid:
                m = verts_list[a] + verts_list[b]
                m /= np.linalg.norm(m)
                edge_mid[key] = len(verts_list)
                verts_list.append(m)
            return edge_mid[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]])
        verts = np.asarray(verts_list)
        faces = np.asarray(new_faces, dtype=np.int64)
    return verts, faces


def _sector_masks(unit_verts: np.ndarray) -> tuple[np.ndarray, ...]:
    """15 angular sectors: 3 polar bands, each cut into 5 azimuth wedges."""
    x, y, z = unit_verts.T
    polar = np.arccos(np.clip(z, -1.0, 1.0))
    azimuth = np.mod(np.arctan2(y, x), 2 * np.pi)
    band = np.digitize(polar, [np.pi / 3, 2 * np.pi / 3])
    wedge = np.minimum((azimuth / (2 * np.pi / 5)).astype(np.int64), 4)
    label = band * 5 + wedge
    return tuple(np.flatnonzero(label == k) for k in range(ATTRIBUTE_COUNT))


def build_template(subdivisions: int = 4,
                   radii: tuple[float, float, float] = (75.0, 95.0, 105.0),
                   names: tuple[str, ...] = CANONICAL_ATTRIBUTE_NAMES,
                   ) -> CorrespondedMesh:
    """Ellipsoidal head-scale template with 15 angular-sector region masks."""
    unit, faces = _octasphere(subdivisions)
    masks = _sector_masks(unit)
    topology = MeshTopology(vertex_count=len(unit), faces=faces,
                            attribute_names=names, attribute_masks=masks)
    return CorrespondedMesh(topology, unit * np.asarray(radii))


def vertex_normals(positions: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted unit vertex normals."""
    p = positions
    fn = np.cross(p[faces[:, 1]] - p[faces[:, 0]], p[faces[:, 2]] - p[faces[:, 0]])
    normals = np.zeros_like(p)
    for c in range(3):
        np.add.at(normals, faces[:, c], fn)
    norms = np.linalg.norm(normals, axis=1, keepdims=True)
    return normals / np.maximum(norms, 1e-30)


def region_bump_fields(template: CorrespondedMesh, blend_mm: float) -> np.ndarray:
    """(15, V) weight fields: 1 inside each region, cosine falloff to 0 at
    one blend width outside it (measured along mesh edges)."""
    topo = template.topology
    edges = topo.edges()
    lengths = np.linalg.norm(template.positions[edges[:, 0]] - template.positions[edges[:, 1]], axis=1)
    n = topo.vertex_count
    graph = sp.coo_matrix(
        (np.concatenate([lengths, lengths]),
         (np.concatenate([edges[:, 0], edges[:, 1]]),
          np.concatenate([edges[:, 1], edges[:, 0]]))), shape=(n, n)).tocsr()
    fields = np.zeros((ATTRIBUTE_COUNT, n))
    for k, mask in enumerate(topo.attribute_masks):
        dist = dijkstra(graph, indices=mask, min_only=True, limit=blend_mm)
        inside = np.isfinite(dist)
        w = np.zeros(n)
        w[inside] = np.cos(np.pi * dist[inside] / (2.0 * blend_mm)) ** 2
        w[mask] = 1.0
        fields[k] = w
    return fields


def region_mode_fields(template: CorrespondedMesh, blend_mm: float,
                       modes: int = 5) -> np.ndarray:
    """(15 * modes, V) deformation fields, ``modes`` per region.

    Mode 0 of region k is its falloff window; the rest multiply that window
    by low-order polynomials in tangent coordinates at the region centroid
    (linear, linear, saddle, quadratic difference), each normalized to unit
    rms over the region's vertices. All modes of region k vanish wherever
    the window does, so each factor still only moves region k plus its
    blend margin, and the modes are linearly independent by construction.
    """
    base = region_bump_fields(template, blend_mm)
    if modes == 1:
        return base
    unit = template.positions / np.linalg.norm(template.positions, axis=1,
                                               keepdims=True)
    topo = template.topology
    fields = np.zeros((ATTRIBUTE_COUNT * modes, topo.vertex_count))
    for k, mask in enumerate(topo.attribute_masks):
        center = unit[mask].mean(axis=0)
        center /= np.linalg.norm(center)
        axis = np.zeros(3)
        axis[np.argmin(np.abs(center))] = 1.0
        u = np.cross(center, axis)
        u /= np.linalg.norm(u)
        v = np.cross(center, u)
        a = unit @ u
        b = unit @ v
        mods = [np.ones_like(a), a, b, a * b, a * a - b * b]
        while len(mods) < modes:  # past degree two, alternate higher powers
            j = len(mods)
            mods.append(a ** (j // 2 + 1) * b ** ((j + 1) // 2 - 1))
        for j in range(modes):
            h = mods[j]
            rms = np.sqrt(np.mean(h[mask] ** 2))
            fields[k * modes + j] = base[k] * (h / max(rms, 1e-9))
    return fields


@dataclass
class SyntheticCohort:
    template: CorrespondedMesh
    records: list[SubjectRecord]
    factors: dict[str, np.ndarray] = field(default_factory=dict)
    scales: dict[str, float] = field(default_factory=dict)


def subject_positions(template: CorrespondedMesh, bump_fields: np.ndarray,
                      normals: np.ndarray, factors: np.ndarray, scale: float) -> np.ndarray:
    offsets = (np.ravel(factors) @ bump_fields)[:, None] * normals
    return scale * (template.positions + offsets)


def generate_synthetic_cohort(spec: SyntheticFactorSpec, counts: dict[str, int],
                              out_dir: str | Path, seed: int = 0,
                              template: CorrespondedMesh | None = None,
                              subdivisions: int = 4,
                              mesh_format: str = "ply") -> SyntheticCohort:
    """Generate per-class subjects, write their meshes, and keep ground truth.

    Deterministic for a given seed. Ages are drawn half from [0, 4) and half
    from [4, 20]; sex is balanced. Each subject's (15, modes) region factors
    (class amplitude on mode 0, Gaussian noise on all modes) and its global
    scale go into ``factors``/``scales``.
    """
    if any(c <= 0 for c in counts.values()):
        raise CohortError("per-class counts must be positive")
    if template is None:
        template = build_template(subdivisions=subdivisions)
    for label in counts:
        if label not in spec.class_amplitudes:
            raise CohortError(f"no amplitudes configured for class {label!r}")

    out_dir = Path(out_dir)
    mesh_dir = out_dir / "meshes"
    mesh_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    modes = spec.modes_per_region
    fields = region_mode_fields(template, spec.blend_mm, modes)
    stds = spec.mode_stds()
    normals = vertex_normals(template.positions, template.topology.faces)

    cohort = SyntheticCohort(template=template, records=[])
    for label in sorted(counts):
        amp = spec.class_amplitudes[label]
        for i in range(counts[label]):
            sid = f"{label.lower()}_{i:04d}"
            group = int(rng.integers(2))
            lo, hi = (0.0, 4.0) if group == 0 else (4.0, 20.0)
            age = float(lo + (hi - lo) * rng.random())
            sex = "M" if i % 2 == 0 else "F"
            factors = stds * rng.standard_normal((ATTRIBUTE_COUNT, modes))
            factors[:, 0] += amp
            scale = spec.scale_base + spec.scale_gain * np.sqrt(age / 20.0)
            positions = subject_positions(template, fields, normals, factors, scale)
            mesh = CorrespondedMesh(template.topology, positions)
            rel_path = f"meshes/{sid}.{mesh_format}"
            save_mesh(mesh, out_dir / rel_path)
            cohort.records.append(SubjectRecord(
                id=sid, class_label=label, age=age, sex=sex,
                mesh_path=rel_path, provenance="synthetic"))
            cohort.factors[sid] = factors
            cohort.scales[sid] = scale
    return cohort


def save_factors(cohort: SyntheticCohort, path: str | Path) -> None:
    names = cohort.template.topology.attribute_names
    first = cohort.factors[cohort.records[0].id]
    modes = 1 if first.ndim == 1 else first.shape[1]
    if modes == 1:
        cols = list(names)
    else:
        cols = [f"{n}_m{j}" for n in names for j in range(modes)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "scale", *cols])
        for rec in cohort.records:
            f = np.ravel(cohort.factors[rec.id])
            writer.writerow([rec.id, f"{cohort.scales[rec.id]:.17g}",
                             *(f"{v:.17g}" for v in f)])


def subject_age_groups(records: list[SubjectRecord]) -> dict[str, int]:
    return {r.id: age_group(r.age) for r in records}
