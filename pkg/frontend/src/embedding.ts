/**
 * Embedding scatter: class clouds, one-standard-deviation iso-contour
 * ellipses, the patient marker, and the trajectory polyline, rendered as an
 * SVG string. Pure data-to-markup; no DOM access, so views are trivially
 * testable and deterministic.
 */

import type { EmbeddingResponse } from "./api.js";

export interface EmbeddingRender {
  width: number;
  height: number;
  margin: number;
}

const DEFAULT_RENDER: EmbeddingRender = { width: 520, height: 420, margin: 36 };

const CLASS_COLORS = [
  "#2563eb",
  "#dc2626",
  "#16a34a",
  "#9333ea",
  "#ea580c",
  "#0891b2",
];

export function classColor(classes: string[], label: string): string {
  const i = Math.max(0, classes.indexOf(label));
  return CLASS_COLORS[i % CLASS_COLORS.length] as string;
}

interface Extent {
  x0: number;
  x1: number;
  y0: number;
  y1: number;
}

function dataExtent(
  body: EmbeddingResponse,
  trajectory: [number, number][],
): Extent {
  const xs: number[] = [];
  const ys: number[] = [];
  for (const p of body.points) {
    xs.push(p.x);
    ys.push(p.y);
  }
  if (body.patient) {
    xs.push(body.patient[0]);
    ys.push(body.patient[1]);
  }
  for (const [x, y] of trajectory) {
    xs.push(x);
    ys.push(y);
  }
  for (const e of body.ellipses) {
    const r = Math.max(e.axes[0], e.axes[1]);
    xs.push(e.center[0] - r, e.center[0] + r);
    ys.push(e.center[1] - r, e.center[1] + r);
  }
  if (xs.length === 0) return { x0: -1, x1: 1, y0: -1, y1: 1 };
  const pad = (hi: number, lo: number) => Math.max(1e-9, (hi - lo) * 0.05);
  const x0 = Math.min(...xs);
  const x1 = Math.max(...xs);
  const y0 = Math.min(...ys);
  const y1 = Math.max(...ys);
  return {
    x0: x0 - pad(x1, x0),
    x1: x1 + pad(x1, x0),
    y0: y0 - pad(y1, y0),
    y1: y1 + pad(y1, y0),
  };
}

export function buildEmbeddingSvg(
  body: EmbeddingResponse,
  trajectory: [number, number][] = [],
  render: EmbeddingRender = DEFAULT_RENDER,
): string {
  const { width, height, margin } = render;
  const ext = dataExtent(body, trajectory);
  const sx = (v: number) =>
    margin + ((v - ext.x0) / (ext.x1 - ext.x0)) * (width - 2 * margin);
  const sy = (v: number) =>
    height - margin - ((v - ext.y0) / (ext.y1 - ext.y0)) * (height - 2 * margin);
  // isotropic pixel scale for ellipse radii: use the x scale and correct y
  const kx = (width - 2 * margin) / (ext.x1 - ext.x0);
  const ky = (height - 2 * margin) / (ext.y1 - ext.y0);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}" class="embedding" data-scope="${body.scope}">`,
  );
  parts.push(`<rect width="${width}" height="${height}" fill="#ffffff"/>`);

  for (const e of body.ellipses) {
    const color = classColor(body.classes, e.label);
    const cx = sx(e.center[0]);
    const cy = sy(e.center[1]);
    const deg = (-e.angle * 180) / Math.PI; // SVG y runs downward
    parts.push(
      `<ellipse cx="${cx.toFixed(2)}" cy="${cy.toFixed(2)}" ` +
        `rx="${(e.axes[0] * kx).toFixed(2)}" ry="${(e.axes[1] * ky).toFixed(2)}" ` +
        `transform="rotate(${deg.toFixed(2)} ${cx.toFixed(2)} ${cy.toFixed(2)})" ` +
        `fill="${color}" fill-opacity="0.08" stroke="${color}" ` +
        `stroke-dasharray="${e.degenerate ? "2 3" : "none"}"/>`,
    );
  }

  for (const p of body.points) {
    parts.push(
      `<circle cx="${sx(p.x).toFixed(2)}" cy="${sy(p.y).toFixed(2)}" r="3" ` +
        `fill="${classColor(body.classes, p.label)}" fill-opacity="0.75">` +
        `<title>${p.id} (${p.label})</title></circle>`,
    );
  }

  if (trajectory.length > 1) {
    const pts = trajectory
      .map(([x, y]) => `${sx(x).toFixed(2)},${sy(y).toFixed(2)}`)
      .join(" ");
    parts.push(
      `<polyline points="${pts}" fill="none" stroke="#111827" ` +
        `stroke-width="1.5" stroke-dasharray="4 3" class="trajectory"/>`,
    );
  }

  if (body.patient) {
    const cx = sx(body.patient[0]);
    const cy = sy(body.patient[1]);
    parts.push(
      `<circle cx="${cx.toFixed(2)}" cy="${cy.toFixed(2)}" r="6" ` +
        `fill="#ec4899" stroke="#831843" stroke-width="1.5" class="patient">` +
        `<title>patient</title></circle>`,
    );
  }

  const legendY = 16;
  body.classes.forEach((label, i) => {
    const x = margin + i * 110;
    parts.push(
      `<circle cx="${x}" cy="${legendY}" r="4" fill="${classColor(body.classes, label)}"/>` +
        `<text x="${x + 8}" y="${legendY + 4}" font-size="11" fill="#374151">${label}</text>`,
    );
  });

  parts.push("</svg>");
  return parts.join("");
}
