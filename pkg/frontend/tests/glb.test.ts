/**
 * Binary glTF reader tests against a hand-assembled payload with the same
 * layout the service emits: POSITION + _DISPLACEMENT + uint32 indices in a
 * single BIN chunk.
 */

import { describe, expect, it } from "vitest";

import { decodeBase64, parseGlb } from "../src/glb.js";
import { projectMesh, stripIndices } from "../src/shape.js";

function buildGlb(
  positions: number[],
  indices: number[],
  displacement: number[] | null,
): ArrayBuffer {
  const pos = new Float32Array(positions);
  const idx = new Uint32Array(indices);
  const disp = displacement ? new Float32Array(displacement) : null;

  const posBytes = pos.byteLength;
  const dispBytes = disp ? disp.byteLength : 0;
  const idxBytes = idx.byteLength;
  const binLength = posBytes + dispBytes + idxBytes;

  const accessors: object[] = [
    { bufferView: 0, componentType: 5126, count: pos.length / 3, type: "VEC3" },
  ];
  const bufferViews: object[] = [
    { buffer: 0, byteOffset: 0, byteLength: posBytes },
  ];
  const attributes: Record<string, number> = { POSITION: 0 };
  let next = 1;
  if (disp) {
    accessors.push({
      bufferView: next,
      componentType: 5126,
      count: disp.length,
      type: "SCALAR",
    });
    bufferViews.push({ buffer: 0, byteOffset: posBytes, byteLength: dispBytes });
    attributes["_DISPLACEMENT"] = next;
    next += 1;
  }
  accessors.push({
    bufferView: next,
    componentType: 5125,
    count: idx.length,
    type: "SCALAR",
  });
  bufferViews.push({
    buffer: 0,
    byteOffset: posBytes + dispBytes,
    byteLength: idxBytes,
  });

  const doc = {
    asset: { version: "2.0" },
    buffers: [{ byteLength: binLength }],
    bufferViews,
    accessors,
    meshes: [{ primitives: [{ attributes, indices: next, mode: 4 }] }],
    nodes: [{ mesh: 0 }],
    scenes: [{ nodes: [0] }],
    scene: 0,
  };
  let json = JSON.stringify(doc);
  while (json.length % 4 !== 0) json += " ";
  const jsonBytes = new TextEncoder().encode(json);
  const binPadded = (binLength + 3) & ~3;

  const total = 12 + 8 + jsonBytes.length + 8 + binPadded;
  const out = new ArrayBuffer(total);
  const dv = new DataView(out);
  dv.setUint32(0, 0x46546c67, true);
  dv.setUint32(4, 2, true);
  dv.setUint32(8, total, true);
  dv.setUint32(12, jsonBytes.length, true);
  dv.setUint32(16, 0x4e4f534a, true);
  new Uint8Array(out, 20, jsonBytes.length).set(jsonBytes);
  const binStart = 20 + jsonBytes.length;
  dv.setUint32(binStart, binPadded, true);
  dv.setUint32(binStart + 4, 0x004e4942, true);
  const body = new Uint8Array(out, binStart + 8, binPadded);
  body.set(new Uint8Array(pos.buffer), 0);
  if (disp) body.set(new Uint8Array(disp.buffer), posBytes);
  body.set(new Uint8Array(idx.buffer), posBytes + dispBytes);
  return out;
}

const TETRA_POS = [
  0, 0, 0,
  1, 0, 0,
  0, 1, 0,
  0, 0, 1,
];
const TETRA_IDX = [0, 2, 1, 0, 1, 3, 0, 3, 2, 1, 2, 3];

describe("binary glTF reader", () => {
  it("reads positions, indices, and displacement", () => {
    const glb = buildGlb(TETRA_POS, TETRA_IDX, [0, 1, 2, 3]);
    const mesh = parseGlb(glb);
    expect(mesh.vertexCount).toBe(4);
    expect(Array.from(mesh.positions)).toEqual(TETRA_POS);
    expect(Array.from(mesh.indices)).toEqual(TETRA_IDX);
    expect(mesh.displacement).not.toBeNull();
    expect(Array.from(mesh.displacement!)).toEqual([0, 1, 2, 3]);
  });

  it("handles payloads without displacement", () => {
    const mesh = parseGlb(buildGlb(TETRA_POS, TETRA_IDX, null));
    expect(mesh.displacement).toBeNull();
    expect(mesh.indices).toHaveLength(12);
  });

  it("round-trips through base64 like the service payload", () => {
    const glb = buildGlb(TETRA_POS, TETRA_IDX, [0.5, 0.5, 0.5, 0.5]);
    const b64 = Buffer.from(glb).toString("base64");
    const mesh = parseGlb(decodeBase64(b64));
    expect(mesh.vertexCount).toBe(4);
    expect(mesh.displacement![0]).toBeCloseTo(0.5, 6);
  });

  it("rejects payloads that are not binary glTF", () => {
    expect(() => parseGlb(new TextEncoder().encode("PLY...").buffer)).toThrow(
      /not a binary glTF/,
    );
    const wrongVersion = buildGlb(TETRA_POS, TETRA_IDX, null);
    new DataView(wrongVersion).setUint32(4, 1, true);
    expect(() => parseGlb(wrongVersion)).toThrow(/version/);
  });
});

describe("shape projection", () => {
  it("culls back faces and keeps front faces", () => {
    // two triangles with opposite winding: only the one facing +z survives
    const mesh = {
      positions: new Float32Array([0, 0, 0, 1, 0, 0, 0, 1, 0]),
      indices: new Uint32Array([0, 1, 2, 0, 2, 1]),
      displacement: null,
      vertexCount: 3,
    };
    const faces = projectMesh(mesh, { yaw: 0, pitch: 0, zoom: 1 }, 100, 100, 10);
    expect(faces).toHaveLength(1);
  });

  it("orders faces back to front for the painter pass", () => {
    const mesh = parseGlb(buildGlb(TETRA_POS, TETRA_IDX, null));
    const faces = projectMesh(
      mesh,
      { yaw: 0.4, pitch: 0.2, zoom: 1 },
      200,
      200,
      10,
    );
    expect(faces.length).toBeGreaterThan(0);
    for (let i = 1; i < faces.length; i++) {
      expect(faces[i]!.depth).toBeGreaterThanOrEqual(faces[i - 1]!.depth);
    }
  });

  it("keeps projected coordinates inside the canvas", () => {
    const mesh = parseGlb(buildGlb(TETRA_POS, TETRA_IDX, [0, 0, 0, 0]));
    const faces = projectMesh(
      mesh,
      { yaw: 1.1, pitch: -0.3, zoom: 1 },
      160,
      120,
      10,
    );
    for (const f of faces) {
      for (const x of f.xs) expect(x).toBeGreaterThanOrEqual(0);
      for (const x of f.xs) expect(x).toBeLessThanOrEqual(160);
      for (const y of f.ys) expect(y).toBeGreaterThanOrEqual(0);
      for (const y of f.ys) expect(y).toBeLessThanOrEqual(120);
    }
  });

  it("spreads strip frames evenly across the trajectory", () => {
    expect(stripIndices(10)).toEqual([0, 2, 5, 7, 9]);
    expect(stripIndices(5)).toEqual([0, 1, 2, 3, 4]);
    expect(stripIndices(3)).toEqual([0, 1, 2]);
    expect(stripIndices(1)).toEqual([0]);
    expect(stripIndices(0)).toEqual([]);
  });
});
