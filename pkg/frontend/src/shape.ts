/**
 * Shape view: orthographic software rendering of the fetched mesh with its
 * displacement colormap, plus the five-frame trajectory strip. A painter's
 * algorithm over a 2D canvas keeps the whole pipeline dependency-free and
 * deterministic; meshes here are ~1k vertices, far below what needs a GPU.
 */

import { displacementColor } from "./colormap.js";
import type { ParsedMesh } from "./glb.js";
import type { CameraState } from "./state.js";

interface ProjectedFace {
  depth: number;
  xs: [number, number, number];
  ys: [number, number, number];
  color: string;
}

function rotate(
  positions: Float32Array,
  yaw: number,
  pitch: number,
): Float32Array {
  const cy = Math.cos(yaw);
  const sy = Math.sin(yaw);
  const cp = Math.cos(pitch);
  const sp = Math.sin(pitch);
  const out = new Float32Array(positions.length);
  for (let i = 0; i < positions.length; i += 3) {
    const x = positions[i] as number;
    const y = positions[i + 1] as number;
    const z = positions[i + 2] as number;
    const x1 = cy * x + sy * z;
    const z1 = -sy * x + cy * z;
    const y2 = cp * y - sp * z1;
    const z2 = sp * y + cp * z1;
    out[i] = x1;
    out[i + 1] = y2;
    out[i + 2] = z2;
  }
  return out;
}

function shade(
  base: [number, number, number],
  lambert: number,
): string {
  const l = 0.45 + 0.55 * Math.max(0, lambert);
  return `rgb(${Math.round(base[0] * l)},${Math.round(base[1] * l)},${Math.round(base[2] * l)})`;
}

export function projectMesh(
  mesh: ParsedMesh,
  camera: CameraState,
  width: number,
  height: number,
  colormapMax: number,
): ProjectedFace[] {
  const rotated = rotate(mesh.positions, camera.yaw, camera.pitch);
  let minX = Infinity;
  let maxX = -Infinity;
  let minY = Infinity;
  let maxY = -Infinity;
  for (let i = 0; i < rotated.length; i += 3) {
    const x = rotated[i] as number;
    const y = rotated[i + 1] as number;
    if (x < minX) minX = x;
    if (x > maxX) maxX = x;
    if (y < minY) minY = y;
    if (y > maxY) maxY = y;
  }
  const span = Math.max(maxX - minX, maxY - minY, 1e-9);
  const scale = (camera.zoom * Math.min(width, height) * 0.85) / span;
  const cx = (minX + maxX) / 2;
  const cyc = (minY + maxY) / 2;

  const faces: ProjectedFace[] = [];
  const idx = mesh.indices;
  for (let f = 0; f < idx.length; f += 3) {
    const a = idx[f] as number;
    const b = idx[f + 1] as number;
    const c = idx[f + 2] as number;
    const ax = rotated[3 * a] as number;
    const ay = rotated[3 * a + 1] as number;
    const az = rotated[3 * a + 2] as number;
    const bx = rotated[3 * b] as number;
    const by = rotated[3 * b + 1] as number;
    const bz = rotated[3 * b + 2] as number;
    const cx3 = rotated[3 * c] as number;
    const cy3 = rotated[3 * c + 1] as number;
    const cz3 = rotated[3 * c + 2] as number;

    // face normal's z component decides visibility and shading
    const ux = bx - ax;
    const uy = by - ay;
    const uz = bz - az;
    const vx = cx3 - ax;
    const vy = cy3 - ay;
    const vz = cz3 - az;
    const nx = uy * vz - uz * vy;
    const ny = uz * vx - ux * vz;
    const nz = ux * vy - uy * vx;
    const norm = Math.hypot(nx, ny, nz) || 1;
    if (nz <= 0) continue; // back face

    let mag = 0;
    if (mesh.displacement) {
      mag =
        ((mesh.displacement[a] as number) +
          (mesh.displacement[b] as number) +
          (mesh.displacement[c] as number)) /
        3;
    }
    const color = shade(displacementColor(mag, colormapMax), nz / norm);
    const px = (x: number) => width / 2 + (x - cx) * scale;
    const py = (y: number) => height / 2 - (y - cyc) * scale;
    faces.push({
      depth: (az + bz + cz3) / 3,
      xs: [px(ax), px(bx), px(cx3)],
      ys: [py(ay), py(by), py(cy3)],
      color,
    });
  }
  faces.sort((p, q) => p.depth - q.depth);
  return faces;
}

export function drawMesh(
  canvas: HTMLCanvasElement,
  mesh: ParsedMesh,
  camera: CameraState,
  colormapMax: number,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.fillStyle = "#f8fafc";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const faces = projectMesh(mesh, camera, canvas.width, canvas.height, colormapMax);
  for (const f of faces) {
    ctx.beginPath();
    ctx.moveTo(f.xs[0], f.ys[0]);
    ctx.lineTo(f.xs[1], f.ys[1]);
    ctx.lineTo(f.xs[2], f.ys[2]);
    ctx.closePath();
    ctx.fillStyle = f.color;
    ctx.strokeStyle = f.color;
    ctx.lineWidth = 0.5;
    ctx.fill();
    ctx.stroke();
  }
}

/** Evenly spaced frame picks for the five-step strip. */
export function stripIndices(stepCount: number, frames = 5): number[] {
  if (stepCount <= 0) return [];
  const n = Math.min(frames, stepCount);
  if (n === 1) return [0];
  const out: number[] = [];
  for (let i = 0; i < n; i++) {
    out.push(Math.round((i * (stepCount - 1)) / (n - 1)));
  }
  return out;
}
