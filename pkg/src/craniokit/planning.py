"""Procedure planning in latent space.

A patient's latent vector is pulled toward the healthy-population mean along
the line joining them, but only on the latent subsets of the anatomical
regions a chosen procedure can move. Stopping points at 1, 2, and 3 projected
standard deviations of the healthy cloud give conservative targets; ranking
procedures by the residual distance to the healthy mean orders them by how
much of the anomaly each one can correct.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .mesh import CANONICAL_ATTRIBUTE_NAMES, CorrespondedMesh, DisplacementField, displacement
from .sdvae import LATENT_DIM, attribute_slice

__all__ = [
    "PlanningError", "Procedure", "HealthyReference", "InterpolationTargets",
    "PlanningSession", "TrajectoryStep", "ProcedureRanking", "TARGET_KEYS",
    "HEALTHY_LABEL", "healthy_reference", "targets", "resolve_target",
    "trajectory_latents", "interpolate", "rank_procedures",
    "builtin_procedures", "save_procedures", "load_procedures",
]

HEALTHY_LABEL = "Healthy"
TARGET_KEYS = ("mu", "1sigma", "2sigma", "3sigma")


class PlanningError(Exception):
    """Raised for ill-posed planning geometry or invalid session state."""


# ---------------------------------------------------------------------------
# Procedures

@dataclass(frozen=True)
class Procedure:
    """A named, editable set of anatomical regions a procedure can move."""

    name: str
    attributes: tuple

    def __post_init__(self):
        attrs = tuple(sorted({int(a) for a in self.attributes}))
        if not attrs:
            raise PlanningError(f"procedure {self.name!r} moves no regions")
        if attrs[0] < 0 or attrs[-1] >= len(CANONICAL_ATTRIBUTE_NAMES):
            raise PlanningError(f"procedure {self.name!r} has out-of-range regions")
        if not self.name:
            raise PlanningError("procedure name must be non-empty")
        object.__setattr__(self, "attributes", attrs)

    @property
    def attribute_names(self) -> tuple:
        return tuple(CANONICAL_ATTRIBUTE_NAMES[a] for a in self.attributes)


def _names_to_indices(names) -> tuple:
    lookup = {n: i for i, n in enumerate(CANONICAL_ATTRIBUTE_NAMES)}
    try:
        return tuple(lookup[n] for n in names)
    except KeyError as missing:
        raise PlanningError(f"unknown attribute name {missing}") from None


def builtin_procedures() -> list:
    """Six stock procedures with editable default region sets.

    Region memberships are defaults, not anatomy lessons: load_procedures can
    replace any of them from a registry file.
    """
    table = [
        ("monobloc", ("forehead", "supraorbital", "orbits", "nose",
                      "nasolabial", "upper_lip", "malar")),
        ("FOAR", ("forehead", "supraorbital", "orbits")),
        ("Le Fort II", ("nose", "upper_lip", "nasolabial")),
        ("facial bipartition", ("orbits", "nose", "nasolabial",
                                "upper_lip", "malar")),
        ("box osteotomy", ("supraorbital", "orbits", "malar")),
        ("mandibular osteotomy", ("mandible", "chin", "lower_lip")),
    ]
    return [Procedure(name, _names_to_indices(names)) for name, names in table]


def save_procedures(procedures, path) -> None:
    """Write a registry file mapping procedure names to attribute names."""
    payload = {"procedures": [
        {"name": p.name, "attributes": list(p.attribute_names)}
        for p in procedures]}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_procedures(path) -> list:
    try:
        payload = json.loads(Path(path).read_text())
        entries = payload["procedures"]
    except (OSError, ValueError, KeyError) as exc:
        raise PlanningError(f"unreadable procedure registry {path}: {exc}") from None
    return [Procedure(e["name"], _names_to_indices(e["attributes"]))
            for e in entries]


# ---------------------------------------------------------------------------
# Healthy reference and sigma-stop targets

@dataclass(frozen=True)
class HealthyReference:
    """Healthy-population latent mean plus the cloud behind it."""

    mean: np.ndarray     # (75,)
    latents: np.ndarray  # (n, 75), used for directional spread


def healthy_reference(latents, labels, healthy_label: str = HEALTHY_LABEL) -> HealthyReference:
    """Mean latent of the subjects carrying the healthy label."""
    z = np.asarray(latents, dtype=np.float64)
    labels = np.asarray(labels)
    if z.ndim != 2 or len(z) != len(labels):
        raise PlanningError("latents must be (n, d) with one label per row")
    healthy = z[labels == healthy_label]
    if len(healthy) == 0:
        raise PlanningError(f"no subjects labeled {healthy_label!r}")
    return HealthyReference(mean=healthy.mean(axis=0), latents=healthy.copy())


@dataclass(frozen=True)
class InterpolationTargets:
    """Stopping points on the patient-to-healthy-mean line.

    sigma_k sits k directional standard deviations from the mean, where the
    deviation is measured over the healthy cloud projected on the unit
    direction from the mean toward the patient.
    """

    mean: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray
    sigma3: np.ndarray
    direction: np.ndarray  # unit vector, mean -> patient
    sigma_dir: float

    def by_key(self, key: str) -> np.ndarray:
        try:
            return {"mu": self.mean, "1sigma": self.sigma1,
                    "2sigma": self.sigma2, "3sigma": self.sigma3}[key]
        except KeyError:
            raise PlanningError(f"unknown target key {key!r}") from None


def targets(ref: HealthyReference, z_patient) -> InterpolationTargets:
    """Sigma-stop targets on the line through the patient and the healthy mean."""
    z_p = np.asarray(z_patient, dtype=np.float64).reshape(-1)
    gap = z_p - ref.mean
    norm = float(np.linalg.norm(gap))
    if norm == 0.0:
        raise PlanningError("patient latent equals the healthy mean; "
                            "interpolation direction is undefined")
    u = gap / norm
    sigma_dir = float(np.std(ref.latents @ u))
    stops = [ref.mean + k * sigma_dir * u for k in (1, 2, 3)]
    return InterpolationTargets(mean=ref.mean.copy(), sigma1=stops[0],
                                sigma2=stops[1], sigma3=stops[2],
                                direction=u, sigma_dir=sigma_dir)


# ---------------------------------------------------------------------------
# Sessions and trajectories

@dataclass(frozen=True)
class PlanningSession:
    """One patient/procedure pairing with its interpolation controls.

    ``stops`` maps procedure attribute index -> per-attribute stop fraction
    t_k in [0, 1] (unlisted attributes default to 1). ``target`` is one of
    TARGET_KEYS or a custom 75-dim latent. ``t`` is the current global
    trajectory parameter in [0, 1].
    """

    patient_id: str
    latent: np.ndarray
    procedure: Procedure
    stops: dict = field(default_factory=dict)
    target: object = "mu"
    t: float = 1.0

    def __post_init__(self):
        z = np.asarray(self.latent, dtype=np.float64).reshape(-1)
        if z.shape != (LATENT_DIM,):
            raise PlanningError(f"patient latent must have {LATENT_DIM} entries")
        object.__setattr__(self, "latent", z)
        stops = {int(k): float(v) for k, v in self.stops.items()}
        allowed = set(self.procedure.attributes)
        for k, v in stops.items():
            if k not in allowed:
                raise PlanningError(
                    f"stop fraction given for region {k}, which procedure "
                    f"{self.procedure.name!r} does not move")
            if not 0.0 <= v <= 1.0:
                raise PlanningError(f"stop fraction for region {k} outside [0, 1]")
        object.__setattr__(self, "stops", stops)
        if not 0.0 <= float(self.t) <= 1.0:
            raise PlanningError("trajectory parameter t must lie in [0, 1]")
        object.__setattr__(self, "t", float(self.t))
        if isinstance(self.target, str):
            if self.target not in TARGET_KEYS:
                raise PlanningError(f"unknown target key {self.target!r}")
        else:
            tgt = np.asarray(self.target, dtype=np.float64).reshape(-1)
            if tgt.shape != (LATENT_DIM,):
                raise PlanningError(f"custom target must have {LATENT_DIM} entries")
            object.__setattr__(self, "target", tgt)

    def with_controls(self, t=None, stops=None, target=None) -> "PlanningSession":
        return replace(self,
                       t=self.t if t is None else t,
                       stops=dict(self.stops) if stops is None else stops,
                       target=self.target if target is None else target)


def resolve_target(session: PlanningSession, ref: HealthyReference) -> np.ndarray:
    """The concrete 75-dim latent the session interpolates toward."""
    if isinstance(session.target, str):
        return targets(ref, session.latent).by_key(session.target)
    return session.target


def trajectory_latents(session: PlanningSession, ref: HealthyReference,
                       steps: int) -> np.ndarray:
    """(steps, 75) latents sampled at equidistant t in [0, 1].

    On each procedure attribute k the subset moves as
    (1 - t * t_k) * patient + (t * t_k) * target; every other subset stays
    bitwise equal to the patient's.
    """
    if steps < 1:
        raise PlanningError("need at least one trajectory step")
    target = resolve_target(session, ref)
    ts = np.linspace(0.0, 1.0, steps) if steps > 1 else np.zeros(1)
    out = np.tile(session.latent, (steps, 1))
    for k in session.procedure.attributes:
        sl = attribute_slice(k)
        tk = session.stops.get(k, 1.0)
        w = (ts * tk)[:, None]
        out[:, sl] = (1.0 - w) * session.latent[sl] + w * target[sl]
    return out


@dataclass(frozen=True)
class TrajectoryStep:
    t: float
    latent: np.ndarray
    mesh: CorrespondedMesh
    displacement: DisplacementField  # vs the t=0 mesh


def interpolate(session: PlanningSession, ref: HealthyReference, steps: int,
                model) -> list:
    """Decode the session trajectory: one (t, latent, mesh, displacement) per step."""
    zs = trajectory_latents(session, ref, steps)
    ts = np.linspace(0.0, 1.0, steps) if steps > 1 else np.zeros(1)
    positions = model.generate_many(zs)
    topo = model.hierarchy.levels[0].topology
    meshes = [CorrespondedMesh(topo, p) for p in positions]
    return [TrajectoryStep(t=float(t), latent=z, mesh=m,
                           displacement=displacement(meshes[0], m))
            for t, z, m in zip(ts, zs, meshes)]


# ---------------------------------------------------------------------------
# Ranking

@dataclass(frozen=True)
class ProcedureRanking:
    procedure: Procedure
    d_mu: float
    d_1sigma: float
    d_2sigma: float
    d_3sigma: float

    def distances(self) -> tuple:
        return (self.d_mu, self.d_1sigma, self.d_2sigma, self.d_3sigma)


def rank_procedures(procedures, z_patient, ref: HealthyReference,
                    stop_targets: InterpolationTargets | None = None) -> list:
    """Distance to the healthy mean after each procedure, most effective first.

    For each procedure and stopping target, the procedure's subsets jump to
    the target values while the rest keep the patient's; the recorded number
    is the Euclidean distance of that endpoint to the healthy mean. Rows are
    sorted ascending by d_mu (stable for ties).
    """
    z_p = np.asarray(z_patient, dtype=np.float64).reshape(-1)
    if stop_targets is None:
        stop_targets = targets(ref, z_p)
    rows = []
    for proc in procedures:
        dists = []
        for key in TARGET_KEYS:
            tgt = stop_targets.by_key(key)
            z_end = z_p.copy()
            for k in proc.attributes:
                sl = attribute_slice(k)
                z_end[sl] = tgt[sl]
            dists.append(float(np.linalg.norm(z_end - ref.mean)))
        rows.append(ProcedureRanking(proc, *dists))
    return sorted(rows, key=lambda r: r.d_mu)
