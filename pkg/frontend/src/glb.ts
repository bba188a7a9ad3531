/**
 * Minimal binary glTF reader for the service's mesh payloads: one
 * triangle primitive with float32 POSITION, uint32 indices, and an
 * optional per-vertex _DISPLACEMENT scalar.
 */

const MAGIC = 0x46546c67; // "glTF"
const CHUNK_JSON = 0x4e4f534a;
const CHUNK_BIN = 0x004e4942;
const FLOAT = 5126;
const UINT32 = 5125;

interface GltfAccessor {
  bufferView: number;
  byteOffset?: number;
  componentType: number;
  count: number;
  type: string;
}

interface GltfBufferView {
  buffer: number;
  byteOffset?: number;
  byteLength: number;
}

interface GltfDoc {
  accessors: GltfAccessor[];
  bufferViews: GltfBufferView[];
  meshes: {
    primitives: {
      attributes: Record<string, number>;
      indices: number;
      mode?: number;
    }[];
  }[];
}

export interface ParsedMesh {
  /** xyz triples, length 3 * vertexCount. */
  positions: Float32Array;
  /** vertex index triples, length 3 * faceCount. */
  indices: Uint32Array;
  /** per-vertex displacement magnitude in mm, if present. */
  displacement: Float32Array | null;
  vertexCount: number;
}

export function decodeBase64(b64: string): ArrayBuffer {
  if (typeof atob === "function") {
    const raw = atob(b64);
    const out = new Uint8Array(raw.length);
    for (let i = 0; i < raw.length; i++) out[i] = raw.charCodeAt(i);
    return out.buffer;
  }
  const buf = Buffer.from(b64, "base64");
  return buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength);
}

function componentSize(doc: GltfDoc, index: number): number {
  const acc = doc.accessors[index];
  if (!acc) throw new Error(`accessor ${index} missing`);
  const per = acc.type === "VEC3" ? 3 : acc.type === "SCALAR" ? 1 : 0;
  if (per === 0) throw new Error(`unsupported accessor type ${acc.type}`);
  return per;
}

function readAccessor(
  doc: GltfDoc,
  bin: DataView,
  index: number,
): Float32Array | Uint32Array {
  const acc = doc.accessors[index];
  if (!acc) throw new Error(`accessor ${index} missing`);
  const view = doc.bufferViews[acc.bufferView];
  if (!view) throw new Error(`buffer view ${acc.bufferView} missing`);
  const per = componentSize(doc, index);
  const offset =
    bin.byteOffset + (view.byteOffset ?? 0) + (acc.byteOffset ?? 0);
  const n = acc.count * per;
  if (acc.componentType === FLOAT) {
    return new Float32Array(bin.buffer.slice(offset, offset + 4 * n));
  }
  if (acc.componentType === UINT32) {
    return new Uint32Array(bin.buffer.slice(offset, offset + 4 * n));
  }
  throw new Error(`unsupported component type ${acc.componentType}`);
}

export function parseGlb(data: ArrayBuffer): ParsedMesh {
  const dv = new DataView(data);
  if (data.byteLength < 12 || dv.getUint32(0, true) !== MAGIC) {
    throw new Error("not a binary glTF payload");
  }
  if (dv.getUint32(4, true) !== 2) {
    throw new Error("unsupported glTF version");
  }
  const total = dv.getUint32(8, true);
  if (total > data.byteLength) throw new Error("truncated glTF payload");

  let offset = 12;
  let doc: GltfDoc | null = null;
  let bin: DataView | null = null;
  while (offset + 8 <= total) {
    const length = dv.getUint32(offset, true);
    const kind = dv.getUint32(offset + 4, true);
    const start = offset + 8;
    if (kind === CHUNK_JSON) {
      const text = new TextDecoder().decode(
        new Uint8Array(data, start, length),
      );
      doc = JSON.parse(text) as GltfDoc;
    } else if (kind === CHUNK_BIN) {
      bin = new DataView(data, start, length);
    }
    offset = start + length;
  }
  if (!doc || !bin) throw new Error("glTF payload missing JSON or BIN chunk");

  const prim = doc.meshes[0]?.primitives[0];
  if (!prim) throw new Error("glTF payload has no mesh primitive");
  const positions = readAccessor(doc, bin, prim.attributes["POSITION"] ?? -1);
  const indices = readAccessor(doc, bin, prim.indices);
  const dispIndex = prim.attributes["_DISPLACEMENT"];
  const displacement =
    dispIndex === undefined
      ? null
      : (readAccessor(doc, bin, dispIndex) as Float32Array);
  return {
    positions: positions as Float32Array,
    indices: indices as Uint32Array,
    displacement,
    vertexCount: positions.length / 3,
  };
}
