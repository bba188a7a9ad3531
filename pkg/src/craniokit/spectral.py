"""Shared-Laplacian eigenanalysis, mesh Fourier transforms, and spectral
interpolation between pairs of corresponded meshes.

All meshes in a cohort share one topology, hence one graph Laplacian L and
one orthonormal eigenbasis U. Vertex positions X transform to spectral
coefficients via U^T X and back via U times the coefficients; new cohort
members are synthesised by interpolating the low-frequency coefficients of
two parents.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import CorrespondedMesh, CorrespondenceError, MeshTopology

DENSE_SOLVER_MAX_VERTICES = 3000
DEFAULT_ACTIVE_COMPONENTS = 30


class EigensolverError(Exception):
    """Iterative eigensolver failed to converge; carries residual norms."""

    def __init__(self, message: str, residuals: np.ndarray | None = None):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True, eq=False)
class LaplacianEigenbasis:
    """The k smallest eigenpairs of the shared mesh Laplacian.

    Columns of ``eigenvectors`` are orthonormal; eigenvalues ascend and the
    first is 0 for a connected mesh. The sign of each column is fixed so the
    first entry of magnitude above tolerance is positive.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    topology_hash: str

    @property
    def k(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def vertex_count(self) -> int:
        return int(self.eigenvectors.shape[0])


@dataclass(frozen=True, eq=False)
class SpectralCoefficients:
    """k x 3 spectral components (rows = components, columns = x, y, z)."""

    coeffs: np.ndarray
    topology_hash: str

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != 3:
            raise ValueError(f"coefficients must be (k, 3), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite spectral coefficients")
        object.__setattr__(self, "coeffs", c)


@dataclass(frozen=True, eq=False)
class InterpolationWeights:
    """Per-component interpolation factors: Gaussian on the first 30
    components (mean 0.5, std 0.5, unclamped), zero above."""

    rho: np.ndarray
    rng_seed: int
    n_active: int = DEFAULT_ACTIVE_COMPONENTS

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=np.float64)
        if np.any(rho[self.n_active:] != 0.0):
            raise ValueError(f"components above {self.n_active} must have zero weight")
        object.__setattr__(self, "rho", rho)


def build_laplacian(topology: MeshTopology) -> sp.csr_matrix:
    """Combinatorial graph Laplacian: degree on the diagonal, -1 per edge."""
    edges = topology.edges()
    n = topology.vertex_count
    i = np.concatenate([edges[:, 0], edges[:, 1]])
    j = np.concatenate([edges[:, 1], edges[:, 0]])
    adj = sp.coo_matrix((np.ones(i.size), (i, j)), shape=(n, n))
    deg = np.asarray(adj.sum(axis=1)).ravel()
    return (sp.diags(deg) - adj).tocsr()


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Make the first entry with magnitude above tolerance positive, per column."""
    out = vecs.copy()
    for c in range(out.shape[1]):
        col = out[:, c]
        tol = 1e-8 * max(np.abs(col).max(), 1e-300)
        nz = np.flatnonzero(np.abs(col) > tol)
        if nz.size and col[nz[0]] < 0:
            out[:, c] = -col
    return out


def eigendecompose(L: sp.spmatrix, k: int, seed: int = 0,
                   residual_tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Smallest k eigenpairs of a symmetric Laplacian, ascending, orthonormal.

    Dense LAPACK path for small operators; shift-invert Lanczos for larger
    ones, with residual verification either way.
    """
    n = L.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds matrix size {n}")
    if n <= DENSE_SOLVER_MAX_VERTICES or k >= n - 1:
        vals, vecs = np.linalg.eigh(L.toarray())
        vals, vecs = vals[:k], vecs[:, :k]
    else:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(n)
        try:
            vals, vecs = spla.eigsh(L.tocsc(), k=k, sigma=-1e-6, which="LM",
                                    v0=v0, maxiter=10 * k)
        except spla.ArpackNoConvergence as exc:
            got_vals = getattr(exc, "eigenvalues", np.empty(0))
            raise EigensolverError(
                f"eigensolver converged {got_vals.size}/{k} pairs", got_vals
            ) from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    # Zero is an exact eigenvalue of every graph Laplacian; scrub the
    # numerically tiny negatives the solvers produce around it.
    vals = np.where(np.abs(vals) < 1e-10, 0.0, vals)
    residuals = np.linalg.norm(L @ vecs - vecs * vals, axis=0)
    scale = max(float(np.abs(vals).max()), 1.0)
    if np.any(residuals > residual_tol * scale * np.sqrt(n)):
        raise EigensolverError("eigenpair residuals above tolerance", residuals)
    return vals, _fix_signs(vecs)


def build_eigenbasis(topology: MeshTopology, k: int, seed: int = 0) -> LaplacianEigenbasis:
    vals, vecs = eigendecompose(build_laplacian(topology), k, seed=seed)
    return LaplacianEigenbasis(eigenvalues=vals, eigenvectors=vecs,
                               topology_hash=topology.topology_hash)


def _check_basis(mesh: CorrespondedMesh, basis: LaplacianEigenbasis) -> None:
    if mesh.topology.topology_hash != basis.topology_hash:
        raise CorrespondenceError("mesh and eigenbasis built on different topologies")


def fourier(mesh: CorrespondedMesh, basis: LaplacianEigenbasis) -> SpectralCoefficients:
    """Mesh Fourier transform of vertex positions: U^T X."""
    _check_basis(mesh, basis)
    return SpectralCoefficients(coeffs=basis.eigenvectors.T @ mesh.positions,
                                topology_hash=basis.topology_hash)


def inverse_fourier(coeffs: SpectralCoefficients, basis: LaplacianEigenbasis) -> np.ndarray:
    """Inverse mesh Fourier transform: U times the coefficients."""
    if coeffs.topology_hash != basis.topology_hash:
        raise CorrespondenceError("coefficients and eigenbasis topology mismatch")
    if coeffs.coeffs.shape[0] != basis.k:
        raise ValueError("coefficient row count does not match basis size")
    return basis.eigenvectors @ coeffs.coeffs


def sample_weights(seed: int, k: int, n_active: int = DEFAULT_ACTIVE_COMPONENTS,
                   mean: float = 0.5, std: float = 0.5) -> InterpolationWeights:
    """Draw interpolation factors for the first ``n_active`` components.

    Each active factor is Gaussian with mean 0.5 and std 0.5, so about 68%
    of draws land in [0, 1] and the rest extrapolate slightly; factors are
    deliberately not clamped.
    """
    rng = np.random.default_rng(seed)
    rho = np.zeros(k, dtype=np.float64)
    n_active = min(n_active, k)
    rho[:n_active] = mean + std * rng.standard_normal(n_active)
    return InterpolationWeights(rho=rho, rng_seed=seed, n_active=n_active)


def spectral_augment(x1: CorrespondedMesh, x2: CorrespondedMesh,
                     weights: InterpolationWeights,
                     basis: LaplacianEigenbasis) -> CorrespondedMesh:
    """Blend two meshes component-by-component in the spectral domain.

    The augmented vertices are X1 + U [rho * U^T (X2 - X1)]: each retained
    spectral component is linearly interpolated from mesh 1 (factor 0) to
    mesh 2 (factor 1); components with zero factor pass through unchanged,
    so a zero weight vector returns X1 exactly.
    """
    _check_basis(x1, basis)
    _check_basis(x2, basis)
    if weights.rho.size != basis.k:
        raise ValueError("weight vector length does not match basis size")
    active = np.flatnonzero(weights.rho)
    if active.size == 0:
        return CorrespondedMesh(x1.topology, x1.positions.copy())
    u_active = basis.eigenvectors[:, active]
    delta = u_active.T @ (x2.positions - x1.positions)
    aug = x1.positions + u_active @ (weights.rho[active, None] * delta)
    return CorrespondedMesh(x1.topology, aug)


def export_spectra(meshes, records, basis: LaplacianEigenbasis,
                   n_components: int, path: str | Path) -> int:
    """Write per-subject spectral components to CSV for cohort inspection.

    One row per (subject, coordinate, component): class, age, sex,
    coordinate, component index, coefficient. Returns the row count.
    """
    n_components = min(n_components, basis.k)
    rows = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "class", "age", "sex",
                         "coordinate", "component", "value"])
        for mesh, rec in zip(meshes, records):
            coeffs = fourier(mesh, basis).coeffs
            for ci, coord in enumerate("xyz"):
                for comp in range(n_components):
                    writer.writerow([rec.id, rec.class_label, f"{rec.age:.17g}",
                                     rec.sex, coord, comp + 1,
                                     f"{coeffs[comp, ci]:.17g}"])
                    rows += 1
    return rows


def save_basis(basis: LaplacianEigenbasis, path: str | Path) -> None:
    """Cache an eigenbasis keyed by its topology hash (versioned npz)."""
    np.savez(path, format_version=np.int64(1),
             topology_hash=np.frombuffer(basis.topology_hash.encode(), dtype=np.uint8),
             eigenvalues=basis.eigenvalues.astype("<f8"),
             eigenvectors=basis.eigenvectors.astype("<f8"))


def load_basis(path: str | Path, topology: MeshTopology | None = None) -> LaplacianEigenbasis:
    with np.load(path) as data:
        if int(data["format_version"]) != 1:
            raise ValueError("unsupported eigenbasis cache version")
        tophash = data["topology_hash"].tobytes().decode()
        basis = LaplacianEigenbasis(eigenvalues=data["eigenvalues"].astype(np.float64),
                                    eigenvectors=data["eigenvectors"].astype(np.float64),
                                    topology_hash=tophash)
    if topology is not None and basis.topology_hash != topology.topology_hash:
        raise CorrespondenceError("cached eigenbasis was built for another topology")
    return basis
