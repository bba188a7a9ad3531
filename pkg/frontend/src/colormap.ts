/**
 * Displacement colormap: blue at rest through yellow at the fixed 10 mm
 * ceiling. Magnitudes above the ceiling saturate rather than rescale, so
 * colors stay comparable across frames and sessions.
 */

import { COLORMAP_MAX_MM } from "./state.js";

const LOW: readonly [number, number, number] = [37, 99, 235]; // blue
const HIGH: readonly [number, number, number] = [250, 204, 21]; // yellow

export function colormapWeight(magnitudeMm: number, maxMm = COLORMAP_MAX_MM): number {
  if (!(maxMm > 0)) throw new Error("colormap ceiling must be positive");
  if (Number.isNaN(magnitudeMm)) return 0;
  return Math.min(1, Math.max(0, magnitudeMm / maxMm));
}

export function displacementColor(
  magnitudeMm: number,
  maxMm = COLORMAP_MAX_MM,
): [number, number, number] {
  const w = colormapWeight(magnitudeMm, maxMm);
  return [
    Math.round(LOW[0] + w * (HIGH[0] - LOW[0])),
    Math.round(LOW[1] + w * (HIGH[1] - LOW[1])),
    Math.round(LOW[2] + w * (HIGH[2] - LOW[2])),
  ];
}

export function displacementCss(magnitudeMm: number, maxMm = COLORMAP_MAX_MM): string {
  const [r, g, b] = displacementColor(magnitudeMm, maxMm);
  return `rgb(${r},${g},${b})`;
}
