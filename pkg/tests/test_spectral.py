"""Graph Laplacian, eigenbasis, spectral transforms, and augmentation."""

from __future__ import annotations

import time

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from craniokit.mesh import CorrespondedMesh, CorrespondenceError
from craniokit.spectral import (EigensolverError, InterpolationWeights,
                                build_eigenbasis,
                                build_laplacian, eigendecompose, fourier,
                                inverse_fourier, load_basis, sample_weights,
                                save_basis, spectral_augment)

from conftest import tetra_topology


@pytest.fixture(scope="module")
def basis(template):
    return build_eigenbasis(template.topology, k=20, seed=0)


@pytest.fixture(scope="module")
def full_basis(template):
    return build_eigenbasis(template.topology, k=template.topology.vertex_count,
                            seed=0)


class TestLaplacian:
    def test_rows_sum_to_zero(self, template):
        L = build_laplacian(template.topology)
        np.testing.assert_allclose(np.abs(L @ np.ones(L.shape[0])), 0.0,
                                   atol=1e-12)

    def test_symmetric(self, template):
        L = build_laplacian(template.topology)
        assert abs(L - L.T).max() == 0.0

    def test_diagonal_is_degree(self, template):
        L = build_laplacian(template.topology)
        edges = template.topology.edges()
        degree = np.bincount(edges.ravel(), minlength=L.shape[0])
        np.testing.assert_array_equal(L.diagonal(), degree)


class TestEigendecompose:
    def test_path_graph_spectrum(self):
        # path on 3 vertices: eigenvalues 0, 1, 3
        L = sp.csr_matrix(np.array([[1.0, -1.0, 0.0],
                                    [-1.0, 2.0, -1.0],
                                    [0.0, -1.0, 1.0]]))
        values, vectors = eigendecompose(L, k=3)
        np.testing.assert_allclose(values, [0.0, 1.0, 3.0], atol=1e-10)
        np.testing.assert_allclose(vectors.T @ vectors, np.eye(3), atol=1e-10)

    def test_first_eigenvector_constant(self, basis):
        v0 = basis.eigenvectors[:, 0]
        assert np.ptp(np.abs(v0)) < 1e-8

    def test_ascending_eigenvalues(self, basis):
        assert np.all(np.diff(basis.eigenvalues) >= -1e-12)

    def test_orthonormal(self, basis):
        gram = basis.eigenvectors.T @ basis.eigenvectors
        assert np.max(np.abs(gram - np.eye(basis.k))) < 1e-8

    def test_k_too_large_rejected(self, template):
        with pytest.raises(ValueError):
            build_eigenbasis(template.topology,
                             k=template.topology.vertex_count + 1)

    def test_deterministic(self, template):
        a = build_eigenbasis(template.topology, k=12, seed=3)
        b = build_eigenbasis(template.topology, k=12, seed=3)
        assert np.array_equal(a.eigenvectors, b.eigenvectors)
        assert np.array_equal(a.eigenvalues, b.eigenvalues)


class TestTransforms:
    def test_full_basis_roundtrip(self, template, full_basis):
        rec = inverse_fourier(fourier(template, full_basis), full_basis)
        assert np.max(np.abs(rec - template.positions)) < 1e-8

    def test_parseval_full_basis(self, template, full_basis):
        coeffs = fourier(template, full_basis).coeffs
        lhs = np.sum(coeffs ** 2)
        rhs = np.sum(template.positions ** 2)
        assert abs(lhs - rhs) / rhs < 1e-8

    def test_truncation_is_projection(self, template, basis):
        # applying analysis/synthesis twice equals applying it once
        once = inverse_fourier(fourier(template, basis), basis)
        mesh_once = template.with_positions(once)
        twice = inverse_fourier(fourier(mesh_once, basis), basis)
        np.testing.assert_allclose(twice, once, atol=1e-9)


class TestSampleWeights:
    def test_statistics(self):
        draws = np.stack([sample_weights(s, k=30).rho for s in range(2000)])
        assert abs(draws.mean() - 0.5) < 0.02
        assert abs(draws.std() - 0.5) < 0.02

    def test_inactive_components_zero(self):
        w = sample_weights(0, k=50, n_active=30)
        assert np.all(w.rho[30:] == 0.0)
        assert np.any(w.rho[:30] != 0.0)

    def test_deterministic(self):
        assert np.array_equal(sample_weights(9, 30).rho, sample_weights(9, 30).rho)

    def test_seed_sensitivity(self):
        assert not np.array_equal(sample_weights(1, 30).rho,
                                  sample_weights(2, 30).rho)


class TestAugment:
    def test_rho_zero_returns_first_parent_bitwise(self, template, basis, rng):
        other = template.with_positions(
            template.positions + rng.normal(size=template.positions.shape))
        w = sample_weights(0, k=basis.k)
        w = InterpolationWeights(rho=np.zeros_like(w.rho), rng_seed=0)
        out = spectral_augment(template, other, w, basis)
        assert np.array_equal(out.positions, template.positions)

    def test_rho_one_moves_spectral_content(self, template, full_basis, rng):
        # with the full basis and rho = 1 everywhere the result is parent 2
        other = template.with_positions(
            template.positions + rng.normal(size=template.positions.shape))
        w = sample_weights(0, k=full_basis.k)
        w = InterpolationWeights(rho=np.ones_like(w.rho), rng_seed=0,
                                 n_active=full_basis.k)
        out = spectral_augment(template, other, w, full_basis)
        np.testing.assert_allclose(out.positions, other.positions, atol=1e-8)

    @given(st.integers(0, 10 ** 6))
    @settings(max_examples=15, deadline=None)
    def test_componentwise_interpolation_identity(self, template, basis, seed):
        rng = np.random.default_rng(seed)
        other = template.with_positions(
            template.positions + rng.normal(size=template.positions.shape))
        w = sample_weights(seed, k=basis.k)
        out = spectral_augment(template, other, w, basis)
        c1 = fourier(template, basis).coeffs
        c2 = fourier(other, basis).coeffs
        c = fourier(out, basis).coeffs
        want = c1 + w.rho[:, None] * (c2 - c1)
        assert np.max(np.abs(c - want)) < 1e-10

    def test_linearity_in_rho(self, template, basis, rng):
        other = template.with_positions(
            template.positions + rng.normal(size=template.positions.shape))
        w1 = sample_weights(1, k=basis.k)
        w2 = InterpolationWeights(rho=2.0 * w1.rho, rng_seed=0)
        out1 = spectral_augment(template, other, w1, basis).positions
        out2 = spectral_augment(template, other, w2, basis).positions
        np.testing.assert_allclose(out2 - template.positions,
                                   2.0 * (out1 - template.positions), atol=1e-9)

    def test_topology_mismatch_rejected(self, template, basis, tetra):
        w = sample_weights(0, k=basis.k)
        with pytest.raises(Exception):
            spectral_augment(template, tetra, w, basis)


class TestBasisIO:
    def test_roundtrip(self, tmp_path, template, basis):
        save_basis(basis, tmp_path / "b.npz")
        loaded = load_basis(tmp_path / "b.npz", topology=template.topology)
        assert np.array_equal(loaded.eigenvectors, basis.eigenvectors)
        assert np.array_equal(loaded.eigenvalues, basis.eigenvalues)
        assert loaded.topology_hash == basis.topology_hash

    def test_topology_check_on_load(self, tmp_path, basis):
        save_basis(basis, tmp_path / "b.npz")
        with pytest.raises(CorrespondenceError):
            load_basis(tmp_path / "b.npz", topology=tetra_topology())

    def test_deterministic_bytes(self, tmp_path, basis):
        save_basis(basis, tmp_path / "a.npz")
        save_basis(basis, tmp_path / "b.npz")
        assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()
