"""Multi-resolution mesh hierarchy for spiral convolutions.

Each level is produced from the previous by quadric-error edge collapses that
keep one endpoint in place, so down-sampling is a pure row selection. Going
back up, every removed vertex is expressed as a convex (barycentric)
combination of the nearest coarse triangle's corners. Spiral index tables
give, per vertex, a fixed-length ordered neighborhood walk used as the
convolution support.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import CorrespondedMesh, MeshError, MeshTopology


class HierarchyError(MeshError):
    pass


# ---------------------------------------------------------------------------
# Spirals

def _orientation_maps(faces: np.ndarray, vertex_count: int):
    """Per-vertex successor map: at v, after neighbor p comes next_v[p],
    following face orientation. Also plain neighbor sets."""
    nxt: list[dict] = [dict() for _ in range(vertex_count)]
    neighbors: list[set] = [set() for _ in range(vertex_count)]
    for a, b, c in faces.tolist():
        nxt[a][b] = c
        nxt[b][c] = a
        nxt[c][a] = b
        neighbors[a].update((b, c))
        neighbors[b].update((a, c))
        neighbors[c].update((a, b))
    return nxt, neighbors


def _ordered_ring(v: int, nxt, neighbors) -> tuple[list[int], bool]:
    """One-ring of v in face-orientation order from the smallest-index
    neighbor. Returns (ring, closed); an open walk stops where the
    orientation chain breaks (mesh boundary)."""
    if not neighbors[v]:
        return [], False
    start = min(neighbors[v])
    ring = [start]
    cur = start
    while True:
        cur = nxt[v].get(cur)
        if cur is None:
            return ring, False
        if cur == start:
            return ring, True
        ring.append(cur)
        if len(ring) > len(neighbors[v]):
            raise HierarchyError(f"non-manifold neighborhood at vertex {v}")


def vertex_spiral(v: int, length: int, nxt, neighbors) -> list[int]:
    """Spiral support: center, then rings outward; each ring is collected in
    the order of the previous ring, each contribution in orientation order.
    A fully exhausted closed neighborhood wraps around cyclically; an open
    (boundary) walk pads by repeating the last index."""
    ring, closed = _ordered_ring(v, nxt, neighbors)
    seq = [v] + ring
    visited = set(seq)
    frontier = ring
    while len(seq) < length and frontier:
        nxt_ring: list[int] = []
        for u in frontier:
            u_ring, _ = _ordered_ring(u, nxt, neighbors)
            for w in u_ring:
                if w not in visited:
                    visited.add(w)
                    nxt_ring.append(w)
        seq.extend(nxt_ring)
        frontier = nxt_ring
    if len(seq) < length:
        if closed and len(seq) > 1:
            body = seq[1:]
            i = 0
            while len(seq) < length:
                seq.append(body[i % len(body)])
                i += 1
        else:
            pad = seq[-1] if seq else v
            seq.extend([pad] * (length - len(seq)))
    return seq[:length]


def enumerate_spirals(topology: MeshTopology, length: int) -> np.ndarray:
    """(V, length) spiral index table."""
    if length < 1:
        raise HierarchyError("spiral length must be >= 1")
    nxt, neighbors = _orientation_maps(topology.faces, topology.vertex_count)
    table = np.empty((topology.vertex_count, length), dtype=np.int64)
    for v in range(topology.vertex_count):
        table[v] = vertex_spiral(v, length, nxt, neighbors)
    return table


# ---------------------------------------------------------------------------
# Quadric-error decimation with kept-endpoint placement

def _face_quadric(p0, p1, p2) -> np.ndarray:
    n = np.cross(p1 - p0, p2 - p0)
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        return np.zeros((4, 4))
    n = n / norm
    plane = np.array([n[0], n[1], n[2], -float(n @ p0)])
    return np.outer(plane, plane)


def _quadric_cost(q: np.ndarray, p: np.ndarray) -> float:
    h = np.array([p[0], p[1], p[2], 1.0])
    return float(h @ q @ h)


def decimate(topology: MeshTopology, positions: np.ndarray, target: int):
    """Collapse lowest-error edges onto a kept endpoint until target vertices
    remain. Returns (survivors ascending, coarse faces in survivor indices).
    """
    n = topology.vertex_count
    if target < 4:
        raise HierarchyError(f"cannot decimate below 4 vertices (target {target})")
    if target >= n:
        raise HierarchyError(f"target {target} not below vertex count {n}")

    faces = topology.faces.tolist()
    alive_face = [True] * len(faces)
    vert_faces: list[set] = [set() for _ in range(n)]
    for fi, f in enumerate(faces):
        for v in f:
            vert_faces[v].add(fi)
    neighbors: list[set] = [set() for _ in range(n)]
    for a, b, c in faces:
        neighbors[a].update((b, c))
        neighbors[b].update((a, c))
        neighbors[c].update((a, b))
    face_keys = {tuple(sorted(f)) for f in faces}

    quadrics = [np.zeros((4, 4)) for _ in range(n)]
    for f, ok in zip(faces, alive_face):
        q = _face_quadric(positions[f[0]], positions[f[1]], positions[f[2]])
        for v in f:
            quadrics[v] += q

    stamp = [0] * n
    heap: list = []

    def push_edge(a: int, b: int):
        if a > b:
            a, b = b, a
        q = quadrics[a] + quadrics[b]
        ca = _quadric_cost(q, positions[a])
        cb = _quadric_cost(q, positions[b])
        cost, keep = (ca, a) if ca <= cb else (cb, b)
        heapq.heappush(heap, (cost, a, b, keep, stamp[a], stamp[b]))

    pushed = set()
    for a, b, c in faces:
        for u, v in ((a, b), (b, c), (c, a)):
            key = (min(u, v), max(u, v))
            if key not in pushed:
                pushed.add(key)
                push_edge(*key)

    alive = np.ones(n, dtype=bool)
    remaining = n

    def wings(a: int, b: int) -> list[int]:
        out = []
        for fi in vert_faces[a] & vert_faces[b]:
            out.extend(v for v in faces[fi] if v != a and v != b)
        return out

    while remaining > target:
        if not heap:
            raise HierarchyError(f"ran out of collapsible edges at {remaining} vertices")
        cost, a, b, keep, sa, sb = heapq.heappop(heap)
        if not (alive[a] and alive[b]) or sa != stamp[a] or sb != stamp[b]:
            continue
        w = wings(a, b)
        # manifoldness: shared neighbors must be exactly the edge's wing
        # vertices, and no substituted face may duplicate an existing one
        if len(w) not in (1, 2) or len(set(w)) != len(w):
            continue
        if neighbors[a] & neighbors[b] != set(w):
            continue
        gone = b if keep == a else a
        dead_faces = vert_faces[a] & vert_faces[b]
        if any(len(vert_faces[x]) - sum(1 for fi in dead_faces if x in faces[fi]) < 1
               for x in w):
            continue
        moved = [fi for fi in vert_faces[gone] if fi not in dead_faces]
        new_keys = []
        bad = False
        for fi in moved:
            nk = tuple(sorted(keep if v == gone else v for v in faces[fi]))
            if nk in face_keys or nk in new_keys:
                bad = True
                break
            new_keys.append(nk)
        if bad:
            continue

        # commit
        for fi in dead_faces:
            alive_face[fi] = False
            face_keys.discard(tuple(sorted(faces[fi])))
            for v in faces[fi]:
                vert_faces[v].discard(fi)
        for fi in moved:
            face_keys.discard(tuple(sorted(faces[fi])))
            faces[fi] = [keep if v == gone else v for v in faces[fi]]
            face_keys.add(tuple(sorted(faces[fi])))
            vert_faces[keep].add(fi)
            vert_faces[gone].discard(fi)
        for u in neighbors[gone]:
            neighbors[u].discard(gone)
            if u != keep:
                neighbors[u].add(keep)
                neighbors[keep].add(u)
        neighbors[keep].discard(keep)
        neighbors[gone] = set()
        quadrics[keep] = quadrics[keep] + quadrics[gone]
        alive[gone] = False
        remaining -= 1
        stamp[keep] += 1
        stamp[gone] += 1
        for u in sorted(neighbors[keep]):
            stamp[u] += 1
        for u in sorted(neighbors[keep]):
            push_edge(keep, u)
            for x in sorted(neighbors[u]):
                if x != keep:
                    push_edge(u, x)

    survivors = np.flatnonzero(alive)
    index_of = np.full(n, -1, dtype=np.int64)
    index_of[survivors] = np.arange(len(survivors))
    coarse_faces = np.array(
        [[index_of[v] for v in faces[fi]] for fi in range(len(faces)) if alive_face[fi]],
        dtype=np.int64,
    )
    return survivors, coarse_faces


# ---------------------------------------------------------------------------
# Barycentric up-sampling

def _closest_point_weights(points: np.ndarray, a, b, c):
    """Barycentric weights of the closest point on triangle (a, b, c) for
    each query point, plus squared distances."""
    ab, ac = b - a, c - a
    d1 = (points - a) @ ab
    d2 = (points - a) @ ac
    d3 = (points - b) @ ab
    d4 = (points - b) @ ac
    d5 = (points - c) @ ab
    d6 = (points - c) @ ac
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    n = len(points)
    w = np.zeros((n, 3))
    done = np.zeros(n, dtype=bool)

    def claim(mask, wa, wb, wc):
        m = mask & ~done
        w[m, 0], w[m, 1], w[m, 2] = wa[m] if np.ndim(wa) else wa, \
            wb[m] if np.ndim(wb) else wb, wc[m] if np.ndim(wc) else wc
        done[m] = True

    def safe_div(num, den):
        return num / np.where(den == 0.0, 1.0, den)

    claim((d1 <= 0) & (d2 <= 0), 1.0, 0.0, 0.0)
    claim((d3 >= 0) & (d4 <= d3), 0.0, 1.0, 0.0)
    claim((d6 >= 0) & (d5 <= d6), 0.0, 0.0, 1.0)
    v = safe_div(d1, d1 - d3)
    claim((vc <= 0) & (d1 >= 0) & (d3 <= 0), 1.0 - v, v, 0.0)
    t = safe_div(d2, d2 - d6)
    claim((vb <= 0) & (d2 >= 0) & (d6 <= 0), 1.0 - t, 0.0, t)
    u = safe_div(d4 - d3, (d4 - d3) + (d5 - d6))
    claim((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), 0.0, 1.0 - u, u)
    denom = np.where(done, 1.0, va + vb + vc)
    v = safe_div(vb, denom)
    u = safe_div(vc, denom)
    claim(np.ones(n, dtype=bool), 1.0 - v - u, v, u)

    closest = w[:, :1] * a + w[:, 1:2] * b + w[:, 2:3] * c
    dist2 = np.sum((points - closest) ** 2, axis=1)
    return w, dist2


def barycentric_upsampling(fine_positions: np.ndarray, survivors: np.ndarray,
                           coarse_positions: np.ndarray,
                           coarse_faces: np.ndarray) -> sp.csr_matrix:
    """(V_fine, V_coarse) matrix: kept vertices map to themselves; removed
    vertices get the barycentric weights of their nearest coarse triangle."""
    n_fine = len(fine_positions)
    n_coarse = len(coarse_positions)
    kept = np.zeros(n_fine, dtype=bool)
    kept[survivors] = True
    removed = np.flatnonzero(~kept)

    rows = list(survivors)
    cols = list(range(n_coarse))
    vals = [1.0] * n_coarse

    if len(removed):
        pts = fine_positions[removed]
        best_d = np.full(len(removed), np.inf)
        best_w = np.zeros((len(removed), 3))
        best_f = np.zeros(len(removed), dtype=np.int64)
        for fi, (ia, ib, ic) in enumerate(coarse_faces):
            w, d2 = _closest_point_weights(
                pts, coarse_positions[ia], coarse_positions[ib], coarse_positions[ic])
            better = d2 < best_d
            best_d[better] = d2[better]
            best_w[better] = w[better]
            best_f[better] = fi
        for i, v in enumerate(removed):
            for j in range(3):
                rows.append(v)
                cols.append(int(coarse_faces[best_f[i], j]))
                vals.append(float(best_w[i, j]))
    m = sp.coo_matrix((vals, (rows, cols)), shape=(n_fine, n_coarse)).tocsr()
    m.sum_duplicates()
    return m


def selection_matrix(survivors: np.ndarray, n_fine: int) -> sp.csr_matrix:
    """(V_coarse, V_fine) binary row selection of the surviving vertices."""
    n_coarse = len(survivors)
    return sp.coo_matrix(
        (np.ones(n_coarse), (np.arange(n_coarse), survivors)),
        shape=(n_coarse, n_fine)).tocsr()


# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HierarchyLevel:
    topology: MeshTopology
    positions: np.ndarray
    spirals: np.ndarray


@dataclass(frozen=True, eq=False)
class MeshHierarchy:
    """Template hierarchy: levels[0] is the full-resolution template;
    down[l] selects level l+1 vertices from level l, up[l] goes back."""

    levels: tuple[HierarchyLevel, ...]
    down: tuple[sp.csr_matrix, ...]
    up: tuple[sp.csr_matrix, ...]

    @property
    def topology_hash(self) -> str:
        return self.levels[0].topology.topology_hash

    @property
    def vertex_counts(self) -> tuple[int, ...]:
        return tuple(lv.topology.vertex_count for lv in self.levels)


def _inherit_masks(topology: MeshTopology, survivors: np.ndarray) -> tuple[np.ndarray, ...]:
    labels = topology.vertex_labels()[survivors]
    return tuple(np.flatnonzero(labels == k) for k in range(len(topology.attribute_masks)))


def build_hierarchy(mesh: CorrespondedMesh, levels: int = 4, factor: int = 4,
                    spiral_length: int = 9) -> MeshHierarchy:
    """Build the sampling hierarchy for a template mesh.

    Each of the ``levels`` coarsenings targets 1/factor of the previous
    vertex count (rounded), so 5 topology levels exist for levels=4.
    """
    if levels < 1 or factor < 2:
        raise HierarchyError("need levels >= 1 and factor >= 2")
    tiers = [HierarchyLevel(mesh.topology, np.asarray(mesh.positions),
                            enumerate_spirals(mesh.topology, spiral_length))]
    down: list[sp.csr_matrix] = []
    up: list[sp.csr_matrix] = []
    for _ in range(levels):
        topo = tiers[-1].topology
        pos = tiers[-1].positions
        target = int(topo.vertex_count / factor + 0.5)
        survivors, coarse_faces = decimate(topo, pos, target)
        coarse_topo = MeshTopology(
            vertex_count=len(survivors), faces=coarse_faces,
            attribute_names=topo.attribute_names,
            attribute_masks=_inherit_masks(topo, survivors))
        coarse_pos = pos[survivors]
        down.append(selection_matrix(survivors, topo.vertex_count))
        up.append(barycentric_upsampling(pos, survivors, coarse_pos, coarse_faces))
        tiers.append(HierarchyLevel(coarse_topo, coarse_pos,
                                    enumerate_spirals(coarse_topo, spiral_length)))
    return MeshHierarchy(levels=tuple(tiers), down=tuple(down), up=tuple(up))
