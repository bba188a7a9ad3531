"""Swap-disentangled spiral-convolution mesh VAE.

The 75-dim latent space is organised as 15 contiguous 5-variable subsets, one
per head attribute. Training batches are B x B grids in which one attribute is
swapped across subjects (column-constant) while everything else stays with the
row subject; a margin loss on the encoded means pushes each latent subset to
follow its attribute through the swap. Meshes inside a batch are stacked into
one (B^2 * V, C) matrix so gathers, pools and unpools are single sparse
multiplies and convolutions are single GEMMs.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import diffcore as dc
from .hierarchy import HierarchyLevel, MeshHierarchy, selection_matrix
from .mesh import ATTRIBUTE_COUNT, CorrespondedMesh, MeshTopology, mean_vertex_distance
from .spectral import build_laplacian

ATTRIBUTE_DIM = 5
LATENT_DIM = ATTRIBUTE_COUNT * ATTRIBUTE_DIM


class ModelError(Exception):
    pass


class TrainingError(ModelError):
    pass


def attribute_slice(k: int) -> slice:
    """Columns of latent subset k (contiguous blocks of 5)."""
    if not 0 <= k < ATTRIBUTE_COUNT:
        raise ModelError(f"attribute index {k} out of range")
    return slice(k * ATTRIBUTE_DIM, (k + 1) * ATTRIBUTE_DIM)


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 600
    batch_size: int = 16
    lr: float = 1e-4
    alpha: float = 0.1      # Laplacian smoothing weight
    beta: float = 1e-4      # KL weight
    kappa: float = 0.5      # latent consistency weight
    eta1: float = 0.5       # swapped-attribute margin
    eta2: float = 0.5       # untouched-attribute margin
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 2 or self.lr <= 0:
            raise ModelError("epochs >= 1, batch_size >= 2 and lr > 0 required")
        if min(self.alpha, self.beta, self.kappa, self.eta1, self.eta2) < 0:
            raise ModelError("loss weights and margins must be non-negative")


# ---------------------------------------------------------------------------
# Swap mini-batches

@dataclass(frozen=True, eq=False)
class SwapBatch:
    """B x B grid of vertex positions; entry (r, c) is subject r with
    attribute k* replaced by subject c's. Diagonal = original subjects."""

    positions: np.ndarray   # (B, B, V, 3)
    swapped_attribute: int
    diagonal_ids: tuple = ()

    @property
    def grid_size(self) -> int:
        return self.positions.shape[0]

    def stacked(self) -> np.ndarray:
        b, _, v, _ = self.positions.shape
        return self.positions.reshape(b * b, v, 3).reshape(b * b * v, 3)


def make_swap_batch(meshes, k_star: int, ids=()) -> SwapBatch:
    if not meshes:
        raise ModelError("empty batch")
    topo = meshes[0].topology
    for m in meshes[1:]:
        if m.topology.topology_hash != topo.topology_hash:
            raise ModelError("batch meshes on different topologies")
    if not 0 <= k_star < len(topo.attribute_masks):
        raise ModelError(f"attribute index {k_star} out of range")
    subjects = np.stack([m.positions for m in meshes])
    b = len(meshes)
    grid = np.repeat(subjects[:, None], b, axis=1)
    mask = topo.attribute_masks[k_star]
    grid[:, :, mask, :] = subjects[None, :, mask, :]
    return SwapBatch(positions=grid, swapped_attribute=k_star, diagonal_ids=tuple(ids))


# ---------------------------------------------------------------------------
# Model

def _glorot(rng, fan_in: int, fan_out: int, shape) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


@dataclass
class _Structures:
    """Per-batch-size sparse operators (block-diagonal over stacked meshes)."""
    gathers: list
    pools: list
    unpools: list
    laplacian: sp.csr_matrix


def _spiral_gather(level: HierarchyLevel) -> sp.csr_matrix:
    spirals = level.spirals
    v, s = spirals.shape
    return sp.coo_matrix(
        (np.ones(v * s), (np.arange(v * s), spirals.ravel())),
        shape=(v * s, v)).tocsr()


class SpiralVAE:
    """Encoder/generator pair over a fixed mesh hierarchy.

    params maps names to diffcore Tensors; enc{i}/gen{i} are spiral
    convolutions, mu/logsigma the encoder heads, gen_in/out the generator's
    entry and per-vertex exit linears.
    """

    def __init__(self, hierarchy: MeshHierarchy, params: dict):
        self.hierarchy = hierarchy
        self.params = params
        self.n_convs = len(hierarchy.down)
        self.counts = hierarchy.vertex_counts
        self.spiral_length = hierarchy.levels[0].spirals.shape[1]
        self.enc_features = [params[f"enc{i}.w"].shape[1] for i in range(self.n_convs)]
        self.gen_features = [params[f"gen{i}.w"].shape[1] for i in range(self.n_convs)]
        self._structs: dict[int, _Structures] = {}
        self._base_gathers = [_spiral_gather(lv) for lv in hierarchy.levels[:-1]]
        self._base_laplacian = build_laplacian(hierarchy.levels[0].topology)
        # millimetre coordinates are centered and scaled to O(1) inside the
        # network; both constants derive deterministically from the template
        tpl = np.asarray(hierarchy.levels[0].positions)
        self._center = tpl.mean(axis=0)
        self._scale = max(float(np.sqrt(np.mean((tpl - self._center) ** 2))), 1e-9)

    @classmethod
    def create(cls, hierarchy: MeshHierarchy, seed: int = 0,
               rng: np.random.Generator | None = None) -> "SpiralVAE":
        if rng is None:
            rng = np.random.default_rng(seed)
        n = len(hierarchy.down)
        if n < 1:
            raise ModelError("hierarchy has no coarsening levels")
        enc_feats = [32] * (n - 1) + [64]
        gen_feats = [64] + [32] * (n - 1)
        s = hierarchy.levels[0].spirals.shape[1]
        counts = hierarchy.vertex_counts

        params: dict[str, dc.Tensor] = {}

        def linear(name, fan_in, fan_out):
            params[f"{name}.w"] = dc.parameter(_glorot(rng, fan_in, fan_out, (fan_in, fan_out)))
            params[f"{name}.b"] = dc.parameter(np.zeros(fan_out))

        in_feats = [3] + enc_feats[:-1]
        for i in range(n):
            linear(f"enc{i}", s * in_feats[i], enc_feats[i])
        flat = counts[-1] * enc_feats[-1]
        linear("mu", flat, LATENT_DIM)
        linear("logsigma", flat, LATENT_DIM)
        linear("gen_in", LATENT_DIM, counts[-1] * gen_feats[0])
        gin = [gen_feats[0]] + gen_feats[:-1]
        for i in range(n):
            linear(f"gen{i}", s * gin[i], gen_feats[i])
        linear("out", gen_feats[-1], 3)
        return cls(hierarchy, params)

    # -- plumbing ----------------------------------------------------------

    def parameters(self) -> list:
        return [self.params[k] for k in sorted(self.params)]

    def _structures(self, m: int) -> _Structures:
        if m not in self._structs:
            eye = sp.identity(m, format="csr")

            def rep(mat):
                return (sp.kron(eye, mat, format="csr") if m > 1 else mat.tocsr())

            self._structs[m] = _Structures(
                gathers=[rep(g) for g in self._base_gathers],
                pools=[rep(d) for d in self.hierarchy.down],
                unpools=[rep(u) for u in self.hierarchy.up],
                laplacian=rep(self._base_laplacian),
            )
        return self._structs[m]

    def pair_matrices(self, b: int) -> tuple:
        return pair_matrices(b)

    # -- forward passes ------------------------------------------------------

    def encode_batch(self, x: dc.Tensor, m: int):
        st = self._structures(m)
        feats = 3
        h = dc.scale(dc.add(x, dc.constant(-self._center)), 1.0 / self._scale)
        for i in range(self.n_convs):
            g = dc.sparse_matmul(st.gathers[i], h)
            g = dc.reshape(g, (m * self.counts[i], self.spiral_length * feats))
            h = dc.elu(dc.add(dc.matmul(g, self.params[f"enc{i}.w"]),
                              self.params[f"enc{i}.b"]))
            h = dc.sparse_matmul(st.pools[i], h)
            feats = self.enc_features[i]
        flat = dc.reshape(h, (m, self.counts[-1] * feats))
        mu = dc.add(dc.matmul(flat, self.params["mu.w"]), self.params["mu.b"])
        logsigma = dc.add(dc.matmul(flat, self.params["logsigma.w"]),
                          self.params["logsigma.b"])
        return mu, logsigma

    def generate_batch(self, z: dc.Tensor, m: int) -> dc.Tensor:
        st = self._structures(m)
        h = dc.add(dc.matmul(z, self.params["gen_in.w"]), self.params["gen_in.b"])
        h = dc.reshape(h, (m * self.counts[-1], self.gen_features[0]))
        feats = self.gen_features[0]
        for i in range(self.n_convs):
            level = self.n_convs - 1 - i
            h = dc.sparse_matmul(st.unpools[level], h)
            g = dc.sparse_matmul(st.gathers[level], h)
            g = dc.reshape(g, (m * self.counts[level], self.spiral_length * feats))
            h = dc.elu(dc.add(dc.matmul(g, self.params[f"gen{i}.w"]),
                              self.params[f"gen{i}.b"]))
            feats = self.gen_features[i]
        out = dc.add(dc.matmul(h, self.params["out.w"]), self.params["out.b"])
        return dc.add(dc.scale(out, self._scale), dc.constant(self._center))

    # -- user-facing single-mesh API -----------------------------------------

    def encode(self, mesh: CorrespondedMesh):
        """Deterministic encoding; returns (mu, logsigma) as length-75 arrays."""
        mu, logsigma = self.encode_batch(dc.constant(mesh.positions), 1)
        return mu.data[0].copy(), logsigma.data[0].copy()

    def encode_many(self, meshes, chunk: int = 16) -> np.ndarray:
        """(n, 75) matrix of encoded means."""
        if not meshes:
            return np.zeros((0, LATENT_DIM))
        rows = []
        for lo in range(0, len(meshes), chunk):
            part = meshes[lo:lo + chunk]
            x = np.concatenate([m.positions for m in part], axis=0)
            mu, _ = self.encode_batch(dc.constant(x), len(part))
            rows.append(mu.data)
        return np.concatenate(rows, axis=0)

    def generate(self, z: np.ndarray) -> CorrespondedMesh:
        z = np.asarray(z, dtype=np.float64).reshape(-1)
        if z.shape != (LATENT_DIM,):
            raise ModelError(f"latent must have {LATENT_DIM} entries")
        out = self.generate_batch(dc.constant(z[None, :]), 1)
        return CorrespondedMesh(self.hierarchy.levels[0].topology, out.data)

    def generate_many(self, z: np.ndarray, chunk: int = 16) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        v = self.counts[0]
        if len(z) == 0:
            return np.zeros((0, v, 3))
        rows = []
        for lo in range(0, len(z), chunk):
            part = z[lo:lo + chunk]
            out = self.generate_batch(dc.constant(part), len(part))
            rows.append(out.data.reshape(len(part), v, 3))
        return np.concatenate(rows, axis=0)

    def reconstruct(self, mesh: CorrespondedMesh) -> CorrespondedMesh:
        mu, _ = self.encode(mesh)
        return self.generate(mu)


# ---------------------------------------------------------------------------
# Losses

def loss_reconstruction(out: dc.Tensor, target: dc.Tensor) -> dc.Tensor:
    """Mean squared difference over all vertices and coordinates."""
    return dc.mean(dc.square(dc.sub(out, target)))


def loss_kl(mu: dc.Tensor, logsigma: dc.Tensor) -> dc.Tensor:
    """Mean over batch and dimensions of KL(N(mu, sigma^2) || N(0, 1))."""
    sigma2 = dc.exp(dc.scale(logsigma, 2.0))
    inner = dc.add(dc.shift(dc.add(dc.square(mu), sigma2), -1.0),
                   dc.scale(logsigma, -2.0))
    return dc.scale(dc.mean(inner), 0.5)


def loss_laplacian(out: dc.Tensor, laplacian: sp.csr_matrix) -> dc.Tensor:
    """Mean per-vertex squared norm of the uniform Laplacian of the output."""
    n_vertices = out.shape[0]
    lap = dc.sparse_matmul(laplacian, out)
    return dc.scale(dc.total(dc.square(lap)), 1.0 / n_vertices)


def loss_latent_consistency(z: dc.Tensor, b: int, k_star: int,
                            eta1: float, eta2: float,
                            pair_mats=None) -> dc.Tensor:
    """Margin loss over the B x B grid of encoded means (row-major rows of z).

    The swapped attribute must vary less within columns than within rows by
    eta1; every other attribute the opposite way by eta2. Differences are
    mean squared-norm over vertex pairs.
    """
    if b < 2:
        raise ModelError("consistency loss needs B >= 2")
    if z.shape[0] != b * b or z.shape[1] != LATENT_DIM:
        raise ModelError(f"latents must be ({b * b}, {LATENT_DIM}), got {z.shape}")
    if not 0 <= k_star < ATTRIBUTE_COUNT:
        raise ModelError(f"attribute index {k_star} out of range")
    p_col, p_row = pair_matrices(b) if pair_mats is None else pair_mats
    n_pairs = p_col.shape[0]

    terms = []
    for k in range(ATTRIBUTE_COUNT):
        sl = attribute_slice(k)
        zk = dc.slice_cols(z, sl.start, sl.stop)
        dcol = dc.scale(dc.total(dc.square(dc.sparse_matmul(p_col, zk))), 1.0 / n_pairs)
        drow = dc.scale(dc.total(dc.square(dc.sparse_matmul(p_row, zk))), 1.0 / n_pairs)
        if k == k_star:
            terms.append(dc.relu(dc.shift(dc.sub(dcol, drow), eta1)))
        else:
            terms.append(dc.relu(dc.shift(dc.sub(drow, dcol), eta2)))
    loss = terms[0]
    for t in terms[1:]:
        loss = dc.add(loss, t)
    return loss


_PAIR_CACHE: dict[int, tuple] = {}


def pair_matrices(b: int) -> tuple:
    """Signed pair-difference operators over a row-major B x B grid: one for
    row pairs within each column, one for column pairs within each row."""
    if b < 2:
        raise ModelError("need a grid of at least 2 x 2 for pair differences")
    if b not in _PAIR_CACHE:
        col_idx, row_idx = [], []
        for c in range(b):
            for r1 in range(b):
                for r2 in range(r1 + 1, b):
                    col_idx.append((r1 * b + c, r2 * b + c))
        for r in range(b):
            for c1 in range(b):
                for c2 in range(c1 + 1, b):
                    row_idx.append((r * b + c1, r * b + c2))

        def signed(pairs):
            n = len(pairs)
            rows = np.repeat(np.arange(n), 2)
            cols = np.array(pairs).ravel()
            vals = np.tile([1.0, -1.0], n)
            return sp.coo_matrix((vals, (rows, cols)), shape=(n, b * b)).tocsr()

        _PAIR_CACHE[b] = (signed(col_idx), signed(row_idx))
    return _PAIR_CACHE[b]


def total_loss(model: SpiralVAE, batch: SwapBatch, config: TrainingConfig,
               eps: np.ndarray):
    """Forward pass over a swap grid; returns (loss, parts dict of floats)."""
    b = batch.grid_size
    m = b * b
    x = dc.constant(batch.stacked())
    mu, logsigma = model.encode_batch(x, m)
    z = dc.add(mu, dc.mul(dc.constant(eps), dc.exp(logsigma)))
    out = model.generate_batch(z, m)

    recon = loss_reconstruction(out, x)
    lap = loss_laplacian(out, model._structures(m).laplacian)
    kl = loss_kl(mu, logsigma)
    cons = loss_latent_consistency(mu, b, batch.swapped_attribute,
                                   config.eta1, config.eta2,
                                   model.pair_matrices(b))
    loss = dc.add(dc.add(recon, dc.scale(lap, config.alpha)),
                  dc.add(dc.scale(kl, config.beta), dc.scale(cons, config.kappa)))
    parts = {"reconstruction": recon.item(), "laplacian": lap.item(),
             "kl": kl.item(), "consistency": cons.item()}
    return loss, parts


# ---------------------------------------------------------------------------
# Training loop

@dataclass
class EpochStats:
    epoch: int
    reconstruction: float
    laplacian: float
    kl: float
    consistency: float
    val_reconstruction: float


def metric_reconstruction_error(meshes, reconstruct) -> tuple[float, float]:
    """Mean and population std (mm) of per-mesh mean vertex distance to its
    reconstruction."""
    if not meshes:
        raise ModelError("no meshes to evaluate")
    errs = np.array([mean_vertex_distance(m, reconstruct(m)) for m in meshes])
    return float(errs.mean()), float(errs.std())


def metric_diversity(generate, n: int = 100, seed: int = 0) -> float:
    """Mean vertex distance between disjoint random pairs of generated meshes."""
    if n < 2 or n % 2:
        raise ModelError("n must be even and >= 2")
    rng = np.random.default_rng(seed)
    latents = rng.standard_normal((n, LATENT_DIM))
    order = rng.permutation(n)
    meshes = [generate(latents[i]) for i in range(n)]
    dists = [mean_vertex_distance(meshes[order[2 * i]], meshes[order[2 * i + 1]])
             for i in range(n // 2)]
    return float(np.mean(dists))


def _validation_error(model: SpiralVAE, meshes) -> float:
    z = model.encode_many(meshes)
    outs = model.generate_many(z)
    errs = [np.mean(np.linalg.norm(outs[i] - m.positions, axis=1))
            for i, m in enumerate(meshes)]
    return float(np.mean(errs))


def train(train_meshes, val_meshes, config: TrainingConfig,
          hierarchy: MeshHierarchy, model: SpiralVAE | None = None,
          progress=None):
    """Train a (fresh or given) model; returns (model, per-epoch stats, rng).

    Each epoch shuffles the training set and walks it in batch_size chunks
    (remainder dropped); every chunk swaps one uniformly drawn attribute.
    The model is left holding the parameters of the best validation epoch.
    """
    b = config.batch_size
    if len(train_meshes) < b:
        raise TrainingError(f"{len(train_meshes)} training meshes < batch size {b}")
    if not val_meshes:
        raise TrainingError("validation set is empty")
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = SpiralVAE.create(hierarchy, rng=rng)
    opt = dc.Adam(model.parameters(), lr=config.lr)

    n_attr = len(hierarchy.levels[0].topology.attribute_masks)
    stats: list[EpochStats] = []
    best = (np.inf, None)
    for epoch in range(config.epochs):
        order = rng.permutation(len(train_meshes))
        sums = np.zeros(4)
        steps = 0
        for start in range(0, len(order) - b + 1, b):
            chunk = order[start:start + b]
            k_star = int(rng.integers(n_attr))
            eps = rng.standard_normal((b * b, LATENT_DIM))
            batch = make_swap_batch([train_meshes[i] for i in chunk], k_star)
            try:
                opt.zero_grad()
                loss, parts = total_loss(model, batch, config, eps)
                loss.backward()
                opt.step()
            except dc.GradientError as exc:
                raise TrainingError(
                    f"training diverged at epoch {epoch}, step {steps}: {exc}"
                ) from exc
            sums += [parts["reconstruction"], parts["laplacian"],
                     parts["kl"], parts["consistency"]]
            steps += 1
        if steps == 0:
            raise TrainingError("no full batch fits the training set")
        val = _validation_error(model, val_meshes)
        stats.append(EpochStats(epoch, *(sums / steps), val))
        if val < best[0]:
            best = (val, {k: p.data.copy() for k, p in model.params.items()})
        if progress is not None:
            progress(stats[-1])
    if best[1] is not None:
        for k, p in model.params.items():
            p.data[...] = best[1][k]
    return model, stats, rng


def save_training_log(stats, path) -> None:
    lines = ["epoch,reconstruction,laplacian,kl,consistency,val_reconstruction"]
    for s in stats:
        lines.append(f"{s.epoch},{s.reconstruction:.17g},{s.laplacian:.17g},"
                     f"{s.kl:.17g},{s.consistency:.17g},{s.val_reconstruction:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Checkpoints

CHECKPOINT_VERSION = 1


def save_checkpoint(path, model: SpiralVAE, config: TrainingConfig,
                    rng: np.random.Generator | None = None) -> None:
    """Self-contained npz: parameters, config, hierarchy and rng state."""
    h = model.hierarchy
    arrays = {
        "meta_version": np.array(CHECKPOINT_VERSION, dtype=np.int64),
        "meta_topology_hash": np.array(h.topology_hash),
        "meta_attribute_names": np.array(list(h.levels[0].topology.attribute_names)),
        "config_json": np.array(json.dumps(asdict(config), sort_keys=True)),
    }
    if rng is not None:
        arrays["rng_json"] = np.array(json.dumps(rng.bit_generator.state))
    for name, p in model.params.items():
        arrays[f"param_{name}"] = p.data.astype("<f8")
    for i, lv in enumerate(h.levels):
        arrays[f"hier_faces{i}"] = lv.topology.faces.astype("<i8")
        arrays[f"hier_labels{i}"] = lv.topology.vertex_labels().astype("<i8")
        arrays[f"hier_positions{i}"] = np.asarray(lv.positions).astype("<f8")
        arrays[f"hier_spirals{i}"] = lv.spirals.astype("<i8")
    for i, (d, u) in enumerate(zip(h.down, h.up)):
        arrays[f"hier_survivors{i}"] = d.indices.astype("<i8")
        arrays[f"hier_up{i}_data"] = u.data.astype("<f8")
        arrays[f"hier_up{i}_indices"] = u.indices.astype("<i8")
        arrays[f"hier_up{i}_indptr"] = u.indptr.astype("<i8")
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Returns (model, config, meta) where meta carries topology hash and the
    saved rng state (or None)."""
    with np.load(path, allow_pickle=False) as z:
        version = int(z["meta_version"])
        if version != CHECKPOINT_VERSION:
            raise ModelError(f"unsupported checkpoint version {version}")
        names = tuple(str(n) for n in z["meta_attribute_names"])
        config = TrainingConfig(**json.loads(str(z["config_json"])))
        rng_state = json.loads(str(z["rng_json"])) if "rng_json" in z else None

        levels = []
        i = 0
        while f"hier_faces{i}" in z:
            labels = z[f"hier_labels{i}"].astype(np.int64)
            masks = tuple(np.flatnonzero(labels == k) for k in range(len(names)))
            topo = MeshTopology(vertex_count=len(labels),
                                faces=z[f"hier_faces{i}"].astype(np.int64),
                                attribute_names=names, attribute_masks=masks)
            levels.append(HierarchyLevel(
                topo, z[f"hier_positions{i}"].astype(np.float64),
                z[f"hier_spirals{i}"].astype(np.int64)))
            i += 1
        down, up = [], []
        for j in range(len(levels) - 1):
            fine = levels[j].topology.vertex_count
            coarse = levels[j + 1].topology.vertex_count
            down.append(selection_matrix(z[f"hier_survivors{j}"].astype(np.int64), fine))
            up.append(sp.csr_matrix(
                (z[f"hier_up{j}_data"].astype(np.float64),
                 z[f"hier_up{j}_indices"].astype(np.int64),
                 z[f"hier_up{j}_indptr"].astype(np.int64)),
                shape=(fine, coarse)))
        hierarchy = MeshHierarchy(levels=tuple(levels), down=tuple(down), up=tuple(up))

        params = {}
        for key in z.files:
            if key.startswith("param_"):
                params[key[len("param_"):]] = dc.parameter(z[key].astype(np.float64))
        model = SpiralVAE(hierarchy, params)
        saved_hash = str(z["meta_topology_hash"])
        if hierarchy.topology_hash != saved_hash:
            raise ModelError("checkpoint hierarchy does not match its topology hash")
        meta = {"topology_hash": saved_hash, "rng_state": rng_state}
    return model, config, meta
