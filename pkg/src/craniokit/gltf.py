"""Binary glTF (GLB) export of corresponded meshes.

Positions go in the standard POSITION attribute; an optional per-vertex
scalar field rides along as the custom _DISPLACEMENT attribute so viewers
can colormap it without a side channel. Floats are float32 on the wire.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .mesh import MeshError

__all__ = ["mesh_to_glb", "save_glb", "parse_glb"]

_MAGIC = 0x46546C67
_CHUNK_JSON = 0x4E4F534A
_CHUNK_BIN = 0x004E4942
_FLOAT = 5126
_UINT32 = 5125
_ARRAY_BUFFER = 34962
_ELEMENT_ARRAY_BUFFER = 34963


def mesh_to_glb(positions, faces, displacement=None, name: str = "mesh") -> bytes:
    """Serialize one triangle mesh (plus optional vertex scalars) as GLB bytes."""
    pos = np.ascontiguousarray(np.asarray(positions, dtype=np.float64), dtype="<f4")
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise MeshError("positions must be (V, 3)")
    idx = np.ascontiguousarray(np.asarray(faces, dtype=np.int64).reshape(-1), dtype="<u4")

    blobs = [pos.tobytes()]
    views = [{"buffer": 0, "byteOffset": 0, "byteLength": len(blobs[0]),
              "target": _ARRAY_BUFFER}]
    accessors = [{"bufferView": 0, "componentType": _FLOAT, "count": len(pos),
                  "type": "VEC3",
                  "min": [float(v) for v in pos.min(axis=0)],
                  "max": [float(v) for v in pos.max(axis=0)]}]
    attributes = {"POSITION": 0}
    offset = len(blobs[0])

    if displacement is not None:
        disp = np.ascontiguousarray(
            np.asarray(displacement, dtype=np.float64).reshape(-1), dtype="<f4")
        if len(disp) != len(pos):
            raise MeshError("one displacement value per vertex required")
        blobs.append(disp.tobytes())
        views.append({"buffer": 0, "byteOffset": offset,
                      "byteLength": len(blobs[-1]), "target": _ARRAY_BUFFER})
        accessors.append({"bufferView": len(views) - 1, "componentType": _FLOAT,
                          "count": len(disp), "type": "SCALAR",
                          "min": [float(disp.min())], "max": [float(disp.max())]})
        attributes["_DISPLACEMENT"] = len(accessors) - 1
        offset += len(blobs[-1])

    blobs.append(idx.tobytes())
    views.append({"buffer": 0, "byteOffset": offset,
                  "byteLength": len(blobs[-1]), "target": _ELEMENT_ARRAY_BUFFER})
    accessors.append({"bufferView": len(views) - 1, "componentType": _UINT32,
                      "count": len(idx), "type": "SCALAR"})

    binary = b"".join(blobs)
    binary += b"\x00" * (-len(binary) % 4)
    doc = {
        "asset": {"version": "2.0", "generator": "craniokit"},
        "buffers": [{"byteLength": len(binary)}],
        "bufferViews": views,
        "accessors": accessors,
        "meshes": [{"name": name, "primitives": [
            {"attributes": attributes, "indices": len(accessors) - 1, "mode": 4}]}],
        "nodes": [{"mesh": 0, "name": name}],
        "scenes": [{"nodes": [0]}],
        "scene": 0,
    }
    payload = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    payload += b" " * (-len(payload) % 4)

    total = 12 + 8 + len(payload) + 8 + len(binary)
    out = bytearray()
    out += struct.pack("<III", _MAGIC, 2, total)
    out += struct.pack("<II", len(payload), _CHUNK_JSON) + payload
    out += struct.pack("<II", len(binary), _CHUNK_BIN) + binary
    return bytes(out)


def save_glb(path, positions, faces, displacement=None, name: str = "mesh") -> None:
    Path(path).write_bytes(mesh_to_glb(positions, faces, displacement, name))


def _read_accessor(doc, views_bin, index):
    acc = doc["accessors"][index]
    view = doc["bufferViews"][acc["bufferView"]]
    start = view.get("byteOffset", 0) + acc.get("byteOffset", 0)
    count = acc["count"]
    width = {"SCALAR": 1, "VEC3": 3}[acc["type"]]
    dtype = {_FLOAT: "<f4", _UINT32: "<u4"}[acc["componentType"]]
    flat = np.frombuffer(views_bin, dtype=dtype, count=count * width, offset=start)
    return flat.reshape(count, width) if width > 1 else flat


def parse_glb(data: bytes) -> dict:
    """Decode a GLB produced by mesh_to_glb back into numpy arrays.

    Returns positions (V, 3) float32, faces (F, 3) int64, and displacement
    (V,) float32 or None.
    """
    if len(data) < 12:
        raise MeshError("truncated GLB")
    magic, version, total = struct.unpack_from("<III", data, 0)
    if magic != _MAGIC or version != 2:
        raise MeshError("not a binary glTF 2.0 container")
    if total != len(data):
        raise MeshError("GLB length field disagrees with payload size")
    chunks = {}
    pos = 12
    while pos < len(data):
        length, kind = struct.unpack_from("<II", data, pos)
        chunks[kind] = data[pos + 8:pos + 8 + length]
        pos += 8 + length
    try:
        doc = json.loads(chunks[_CHUNK_JSON])
        binary = chunks[_CHUNK_BIN]
        prim = doc["meshes"][0]["primitives"][0]
        positions = _read_accessor(doc, binary, prim["attributes"]["POSITION"])
        faces = _read_accessor(doc, binary, prim["indices"])
        disp = None
        if "_DISPLACEMENT" in prim["attributes"]:
            disp = _read_accessor(doc, binary, prim["attributes"]["_DISPLACEMENT"])
    except (KeyError, IndexError, ValueError) as exc:
        raise MeshError(f"malformed GLB content: {exc}") from None
    return {"positions": positions,
            "faces": faces.astype(np.int64).reshape(-1, 3),
            "displacement": disp}
