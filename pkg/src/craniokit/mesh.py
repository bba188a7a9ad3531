"""Fixed-topology triangle meshes, anatomical region masks, and mesh file I/O.

Every mesh in a cohort shares one :class:`MeshTopology` (same vertex count,
same faces, same region segmentation), so vertex i means the same anatomical
point on every subject. All coordinates are millimetres.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeshError(Exception):
    """Base error for mesh construction and I/O."""


class MeshParseError(MeshError):
    """Mesh file could not be parsed."""


class CorrespondenceError(MeshError):
    """Mesh does not match the shared topology (vertex count or face list)."""


ATTRIBUTE_COUNT = 15

# Canonical region names used by the synthetic template and the default
# procedure registry. Real templates supply their own names via the
# segmentation file.
CANONICAL_ATTRIBUTE_NAMES = (
    "forehead",
    "supraorbital",
    "orbits",
    "nose",
    "nasolabial",
    "upper_lip",
    "lower_lip",
    "chin",
    "mandible",
    "cheeks",
    "malar",
    "ears",
    "temporal",
    "parietal",
    "neck_occiput",
)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MeshTopology:
    """Shared connectivity: faces plus the 15 disjoint region masks.

    Faces are oriented vertex-index triples. ``attribute_masks[k]`` holds the
    sorted vertex indices belonging to attribute ``attribute_names[k]``; the
    masks are pairwise disjoint and cover every vertex.
    """

    vertex_count: int
    faces: np.ndarray
    attribute_names: tuple[str, ...]
    attribute_masks: tuple[np.ndarray, ...]
    _hash: str = field(default="", repr=False)

    def __post_init__(self):
        faces = np.asarray(self.faces, dtype=np.int64)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshError(f"faces must be (F, 3), got {faces.shape}")
        if faces.size and (faces.min() < 0 or faces.max() >= self.vertex_count):
            raise MeshError("face index out of range")
        if len({tuple(sorted(f)) for f in faces.tolist()}) != len(faces):
            raise MeshError("duplicate faces")
        # Consistent orientation on a 2-manifold: each directed edge occurs
        # at most once, each undirected edge in at most two faces.
        directed = set()
        undirected: dict[tuple[int, int], int] = {}
        for a, b, c in faces.tolist():
            if a == b or b == c or a == c:
                raise MeshError("degenerate face")
            for u, v in ((a, b), (b, c), (c, a)):
                if (u, v) in directed:
                    raise MeshError(f"inconsistent orientation at edge {(u, v)}")
                directed.add((u, v))
                key = (min(u, v), max(u, v))
                undirected[key] = undirected.get(key, 0) + 1
                if undirected[key] > 2:
                    raise MeshError(f"non-manifold edge {key}")
        object.__setattr__(self, "faces", _freeze(faces))

        if len(self.attribute_names) != ATTRIBUTE_COUNT:
            raise MeshError(f"expected {ATTRIBUTE_COUNT} attribute names")
        if len(set(self.attribute_names)) != ATTRIBUTE_COUNT:
            raise MeshError("attribute names must be unique")
        if len(self.attribute_masks) != ATTRIBUTE_COUNT:
            raise MeshError(f"expected {ATTRIBUTE_COUNT} attribute masks")
        masks = tuple(_freeze(np.unique(np.asarray(m, dtype=np.int64))) for m in self.attribute_masks)
        labels = np.full(self.vertex_count, -1, dtype=np.int64)
        for k, m in enumerate(masks):
            if m.size and (m.min() < 0 or m.max() >= self.vertex_count):
                raise MeshError(f"mask {k} index out of range")
            if np.any(labels[m] != -1):
                raise MeshError("attribute masks overlap")
            labels[m] = k
        if np.any(labels == -1):
            raise MeshError("attribute masks do not cover all vertices")
        object.__setattr__(self, "attribute_masks", masks)
        object.__setattr__(self, "attribute_names", tuple(self.attribute_names))

        h = hashlib.sha256()
        h.update(struct.pack("<q", self.vertex_count))
        h.update(faces.astype("<i8").tobytes())
        h.update(labels.astype("<i8").tobytes())
        object.__setattr__(self, "_hash", h.hexdigest()[:16])

    @property
    def topology_hash(self) -> str:
        return self._hash

    @property
    def face_count(self) -> int:
        return len(self.faces)

    def vertex_labels(self) -> np.ndarray:
        """Per-vertex region label in 0..14."""
        labels = np.empty(self.vertex_count, dtype=np.int64)
        for k, m in enumerate(self.attribute_masks):
            labels[m] = k
        return labels

    def edges(self) -> np.ndarray:
        """Unique undirected edges, (E, 2), each row sorted, rows sorted."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)

    def mask_index(self, name: str) -> int:
        try:
            return self.attribute_names.index(name)
        except ValueError:
            raise MeshError(f"unknown attribute {name!r}") from None


@dataclass(frozen=True, eq=False)
class CorrespondedMesh:
    """Vertex positions (mm) bound to a shared topology."""

    topology: MeshTopology
    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.shape != (self.topology.vertex_count, 3):
            raise CorrespondenceError(
                f"positions shape {pos.shape} does not match topology "
                f"({self.topology.vertex_count} vertices)"
            )
        if not np.all(np.isfinite(pos)):
            raise MeshError("non-finite vertex coordinates")
        object.__setattr__(self, "positions", _freeze(pos))

    def with_positions(self, positions: np.ndarray) -> "CorrespondedMesh":
        return CorrespondedMesh(self.topology, positions)


@dataclass(frozen=True, eq=False)
class DisplacementField:
    """Per-vertex displacement magnitudes in mm (non-negative)."""

    magnitudes: np.ndarray

    def __post_init__(self):
        mags = np.asarray(self.magnitudes, dtype=np.float64)
        if mags.ndim != 1:
            raise MeshError("magnitudes must be 1-D")
        if np.any(mags < 0) or not np.all(np.isfinite(mags)):
            raise MeshError("magnitudes must be finite and non-negative")
        object.__setattr__(self, "magnitudes", _freeze(mags))


def _check_same_topology(a: CorrespondedMesh, b: CorrespondedMesh) -> None:
    if a.topology.topology_hash != b.topology.topology_hash:
        raise CorrespondenceError("meshes are bound to different topologies")


def displacement(a: CorrespondedMesh, b: CorrespondedMesh) -> DisplacementField:
    """Per-vertex Euclidean distance between two corresponded meshes."""
    _check_same_topology(a, b)
    return DisplacementField(np.linalg.norm(a.positions - b.positions, axis=1))


def mean_vertex_distance(a: CorrespondedMesh, b: CorrespondedMesh) -> float:
    """Mean of the per-vertex Euclidean distances, in mm."""
    return float(np.mean(displacement(a, b).magnitudes))


def region_mean_displacement(field: DisplacementField, mask: np.ndarray) -> float:
    """Mean displacement magnitude restricted to a vertex-index set."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise MeshError("empty region mask")
    if mask.min() < 0 or mask.max() >= field.magnitudes.size:
        raise MeshError("mask index out of range")
    return float(np.mean(field.magnitudes[mask]))


# ---------------------------------------------------------------------------
# File I/O: OBJ, PLY (ascii and binary little-endian), segmentation labels.

def write_obj(path: str | Path, positions: np.ndarray, faces: np.ndarray) -> None:
    lines = []
    for x, y, z in np.asarray(positions, dtype=np.float64):
        lines.append(f"v {x:.10g} {y:.10g} {z:.10g}")
    for a, b, c in np.asarray(faces, dtype=np.int64):
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    positions, faces = [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v":
            if len(parts) < 4:
                raise MeshParseError(f"{path}:{lineno}: bad vertex line")
            try:
                positions.append([float(p) for p in parts[1:4]])
            except ValueError as exc:
                raise MeshParseError(f"{path}:{lineno}: {exc}") from None
        elif parts[0] == "f":
            if len(parts) != 4:
                raise MeshParseError(f"{path}:{lineno}: only triangles supported")
            try:
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
            except ValueError as exc:
                raise MeshParseError(f"{path}:{lineno}: {exc}") from None
    if not positions:
        raise MeshParseError(f"{path}: no vertices")
    return np.asarray(positions, dtype=np.float64), np.asarray(faces, dtype=np.int64)


def write_ply(path: str | Path, positions: np.ndarray, faces: np.ndarray,
              binary: bool = True) -> None:
    positions = np.asarray(positions, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"element vertex {len(positions)}\n"
        "property double x\nproperty double y\nproperty double z\n"
        f"element face {len(faces)}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            fh.write(positions.astype("<f8").tobytes())
            face_rec = np.empty(len(faces), dtype=[("n", "u1"), ("idx", "<i4", 3)])
            face_rec["n"] = 3
            face_rec["idx"] = faces
            fh.write(face_rec.tobytes())
        else:
            body = []
            for x, y, z in positions:
                body.append(f"{x:.17g} {y:.17g} {z:.17g}")
            for a, b, c in faces:
                body.append(f"3 {a} {b} {c}")
            fh.write(("\n".join(body) + "\n").encode("ascii"))


def read_ply(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"ply":
            raise MeshParseError(f"{path}: not a PLY file")
        fmt = None
        n_vert = n_face = 0
        vertex_props: list[tuple[str, str]] = []
        element = None
        while True:
            line = fh.readline()
            if not line:
                raise MeshParseError(f"{path}: unexpected end of header")
            tok = line.decode("ascii", "replace").split()
            if not tok:
                continue
            if tok[0] == "format":
                fmt = tok[1]
            elif tok[0] == "element":
                element = tok[1]
                if element == "vertex":
                    n_vert = int(tok[2])
                elif element == "face":
                    n_face = int(tok[2])
            elif tok[0] == "property" and element == "vertex":
                if tok[1] == "list":
                    raise MeshParseError(f"{path}: list property on vertices")
                vertex_props.append((tok[2], tok[1]))
            elif tok[0] == "end_header":
                break
        if fmt not in ("ascii", "binary_little_endian"):
            raise MeshParseError(f"{path}: unsupported format {fmt}")
        names = [n for n, _ in vertex_props]
        if names[:3] != ["x", "y", "z"]:
            raise MeshParseError(f"{path}: vertex properties must start with x y z")
        np_types = {"float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8"}
        try:
            vert_dtype = np.dtype([(n, np_types[t]) for n, t in vertex_props])
        except KeyError as exc:
            raise MeshParseError(f"{path}: unsupported vertex property type {exc}") from None

        if fmt == "binary_little_endian":
            raw = fh.read(vert_dtype.itemsize * n_vert)
            if len(raw) != vert_dtype.itemsize * n_vert:
                raise MeshParseError(f"{path}: truncated vertex data")
            rec = np.frombuffer(raw, dtype=vert_dtype)
            positions = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
            faces = np.empty((n_face, 3), dtype=np.int64)
            for i in range(n_face):
                (count,) = struct.unpack("<B", fh.read(1))
                if count != 3:
                    raise MeshParseError(f"{path}: non-triangle face")
                faces[i] = struct.unpack("<3i", fh.read(12))
        else:
            text = fh.read().decode("ascii").split("\n")
            rows = [r for r in (t.strip() for t in text) if r]
            if len(rows) < n_vert + n_face:
                raise MeshParseError(f"{path}: truncated ascii body")
            positions = np.array(
                [[float(v) for v in rows[i].split()[:3]] for i in range(n_vert)],
                dtype=np.float64,
            )
            faces = np.empty((n_face, 3), dtype=np.int64)
            for i in range(n_face):
                tok = rows[n_vert + i].split()
                if tok[0] != "3":
                    raise MeshParseError(f"{path}: non-triangle face")
                faces[i] = [int(t) for t in tok[1:4]]
    return positions, faces


def read_mesh_file(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read positions and faces from an OBJ or PLY file (by extension)."""
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return read_obj(path)
    if suffix == ".ply":
        return read_ply(path)
    raise MeshParseError(f"unsupported mesh format {suffix!r}")


def write_mesh_file(path: str | Path, positions: np.ndarray, faces: np.ndarray,
                    binary_ply: bool = True) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        write_obj(path, positions, faces)
    elif suffix == ".ply":
        write_ply(path, positions, faces, binary=binary_ply)
    else:
        raise MeshParseError(f"unsupported mesh format {suffix!r}")


def load_mesh(path: str | Path, topology: MeshTopology) -> CorrespondedMesh:
    """Load a mesh file and bind it to the shared topology.

    The file must contain exactly ``topology.vertex_count`` vertices and the
    identical face list; anything else breaks dense correspondence.
    """
    positions, faces = read_mesh_file(path)
    if len(positions) != topology.vertex_count:
        raise CorrespondenceError(
            f"{path}: {len(positions)} vertices, topology has {topology.vertex_count}"
        )
    if len(faces) != len(topology.faces) or not np.array_equal(faces, topology.faces):
        raise CorrespondenceError(f"{path}: face list differs from shared topology")
    return CorrespondedMesh(topology, positions)


def save_mesh(mesh: CorrespondedMesh, path: str | Path, binary_ply: bool = True) -> None:
    write_mesh_file(path, mesh.positions, mesh.topology.faces, binary_ply=binary_ply)


def save_segmentation(path: str | Path, names: tuple[str, ...], labels: np.ndarray) -> None:
    """Write the per-vertex region labels: a name header then one label per line."""
    lines = [",".join(names)]
    lines.extend(str(int(v)) for v in labels)
    Path(path).write_text("\n".join(lines) + "\n")


def load_segmentation(path: str | Path, vertex_count: int) -> tuple[tuple[str, ...], tuple[np.ndarray, ...]]:
    """Read a segmentation file; returns (names, masks)."""
    rows = Path(path).read_text().splitlines()
    if not rows:
        raise MeshParseError(f"{path}: empty segmentation file")
    names = tuple(n.strip() for n in rows[0].split(","))
    labels = np.array([int(r) for r in rows[1:] if r.strip()], dtype=np.int64)
    if labels.size != vertex_count:
        raise CorrespondenceError(
            f"{path}: {labels.size} labels for {vertex_count} vertices"
        )
    if labels.min() < 0 or labels.max() >= len(names):
        raise MeshParseError(f"{path}: label out of range")
    masks = tuple(np.flatnonzero(labels == k) for k in range(len(names)))
    return names, masks


def build_topology(faces: np.ndarray, vertex_count: int,
                   names: tuple[str, ...], masks: tuple[np.ndarray, ...]) -> MeshTopology:
    return MeshTopology(vertex_count=vertex_count, faces=faces,
                        attribute_names=names, attribute_masks=masks)
