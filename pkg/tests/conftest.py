"""Shared fixtures: micro meshes, a tiny synthetic cohort, and one small
trained model reused by the sdvae/service/cli tests."""

from __future__ import annotations

import numpy as np
import pytest

from craniokit import cli, sdvae
from craniokit.cohort import load_manifest
from craniokit.hierarchy import build_hierarchy
from craniokit.mesh import CorrespondedMesh, MeshTopology, load_mesh
from craniokit.synthetic import build_template


@pytest.fixture(scope="session")
def template():
    # 66 vertices, 15 region masks
    return build_template(subdivisions=2)


@pytest.fixture(scope="session")
def topology(template):
    return template.topology


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


EMPTY = np.array([], dtype=np.int64)


def tetra_topology(names=None, masks=None) -> MeshTopology:
    """4-vertex closed tetrahedron; masks 0/1 hold two vertices each and the
    remaining 13 regions are empty."""
    faces = np.array([[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]])
    if names is None:
        names = tuple(f"r{i:02d}" for i in range(15))
    if masks is None:
        masks = (np.array([0, 1]), np.array([2, 3])) + (EMPTY,) * 13
    return MeshTopology(vertex_count=4, faces=faces,
                        attribute_names=names, attribute_masks=masks)


@pytest.fixture()
def tetra():
    topo = tetra_topology()
    pos = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                    [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    return CorrespondedMesh(topo, pos)


@pytest.fixture(scope="session")
def micro_pipeline(tmp_path_factory):
    """Tiny end-to-end artifact directory: synth, split, augment, short
    training run, eval, analyze, plan. Shared read-only by cli/service tests."""
    out = tmp_path_factory.mktemp("micro")
    steps = [
        ["synth", "--out", str(out), "--counts", "8", "5", "5", "4",
         "--subdivisions", "2", "--seed", "7"],
        ["split", "--out", str(out), "--ratios", "0.6", "0.2", "0.2",
         "--seed", "7"],
        ["augment", "--out", str(out), "--target", "6",
         "--basis-k", "12", "--components", "12", "--seed", "7"],
        ["train", "--out", str(out), "--epochs", "3", "--batch-size", "4",
         "--levels", "2", "--spiral-length", "6", "--seed", "7", "--quiet"],
        ["eval", "--out", str(out), "--diversity-n", "4", "--seed", "7"],
        ["analyze", "--out", str(out)],
        ["plan", "--out", str(out), "--patient", "apert_0000",
         "--procedure", "Le Fort II", "--steps", "3"],
    ]
    for argv in steps:
        assert cli.main(argv) == 0, f"pipeline step failed: {argv}"
    return out


@pytest.fixture(scope="session")
def micro_model(micro_pipeline):
    model, config, meta = sdvae.load_checkpoint(micro_pipeline / "checkpoint.npz")
    return model


@pytest.fixture(scope="session")
def micro_records(micro_pipeline):
    return load_manifest(micro_pipeline / "manifest.csv")


@pytest.fixture(scope="session")
def micro_meshes(micro_pipeline, micro_records, micro_model):
    topo = micro_model.hierarchy.levels[0].topology
    return [load_mesh(micro_pipeline / r.mesh_path, topo) for r in micro_records]


@pytest.fixture(scope="session")
def micro_hierarchy(template):
    return build_hierarchy(template, levels=2, factor=4, spiral_length=6)
