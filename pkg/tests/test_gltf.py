"""Binary glTF container round-trips and validation."""

from __future__ import annotations

import json
import struct

import numpy as np
import pytest

from craniokit.gltf import MeshError, mesh_to_glb, parse_glb, save_glb


@pytest.fixture()
def quad():
    positions = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                          [1.0, 1.0, 0.0], [0.0, 1.0, 0.25]])
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    return positions, faces


class TestContainer:
    def test_header_and_alignment(self, quad):
        data = mesh_to_glb(*quad)
        magic, version, total = struct.unpack_from("<III", data, 0)
        assert magic == 0x46546C67 and version == 2
        assert total == len(data)
        assert len(data) % 4 == 0

    def test_json_chunk_is_valid_gltf(self, quad):
        data = mesh_to_glb(*quad)
        length, kind = struct.unpack_from("<II", data, 12)
        assert kind == 0x4E4F534A
        doc = json.loads(data[20:20 + length])
        assert doc["asset"]["version"] == "2.0"
        assert doc["meshes"][0]["primitives"][0]["attributes"]["POSITION"] >= 0

    def test_roundtrip_float32_exact(self, quad):
        positions, faces = quad
        back = parse_glb(mesh_to_glb(positions, faces))
        np.testing.assert_array_equal(back["positions"],
                                      positions.astype(np.float32))
        np.testing.assert_array_equal(back["faces"], faces)
        assert back["displacement"] is None

    def test_roundtrip_with_displacement(self, quad):
        positions, faces = quad
        disp = np.array([0.0, 1.5, 2.5, 10.0])
        back = parse_glb(mesh_to_glb(positions, faces, displacement=disp))
        np.testing.assert_array_equal(back["displacement"],
                                      disp.astype(np.float32))

    def test_deterministic_bytes(self, quad):
        assert mesh_to_glb(*quad) == mesh_to_glb(*quad)

    def test_save_matches_bytes(self, quad, tmp_path):
        path = tmp_path / "mesh.glb"
        save_glb(path, *quad)
        assert path.read_bytes() == mesh_to_glb(*quad)


class TestValidation:
    def test_displacement_length_checked(self, quad):
        positions, faces = quad
        with pytest.raises(MeshError):
            mesh_to_glb(positions, faces, displacement=np.zeros(3))

    def test_truncated_rejected(self, quad):
        data = mesh_to_glb(*quad)
        with pytest.raises(MeshError):
            parse_glb(data[:8])
        with pytest.raises(MeshError):
            parse_glb(data[:-4])

    def test_wrong_magic_rejected(self, quad):
        data = bytearray(mesh_to_glb(*quad))
        data[0] = 0
        with pytest.raises(MeshError):
            parse_glb(bytes(data))
