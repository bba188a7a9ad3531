/**
 * View-side session state: which scope is displayed, where the sliders sit,
 * and how displacement magnitudes map to color. Scientific quantities never
 * live here; they are refetched from the service on every change.
 */

import type { SessionView } from "./api.js";

/** Attribute display order matches the service's subset indexing. */
export const ATTRIBUTE_NAMES = [
  "forehead",
  "supraorbital",
  "orbits",
  "nose",
  "nasolabial",
  "upper_lip",
  "lower_lip",
  "chin",
  "mandible",
  "cheeks",
  "malar",
  "ears",
  "temporal",
  "parietal",
  "neck_occiput",
] as const;

export type AttributeName = (typeof ATTRIBUTE_NAMES)[number];
export type Scope = "whole" | `attribute_${number}`;

/** Fixed ceiling of the displacement colormap, in millimetres. */
export const COLORMAP_MAX_MM = 10;

export interface CameraState {
  /** Rotation around the vertical axis, radians. */
  yaw: number;
  /** Rotation around the horizontal axis, radians. */
  pitch: number;
  zoom: number;
}

export interface SessionViewState {
  sessionId: string;
  scope: Scope;
  /** Global trajectory position. */
  t: number;
  /** Per-attribute stop fractions keyed by attribute name. */
  stops: Record<string, number>;
  target: string;
  camera: CameraState;
  colormapRange: readonly [number, number];
}

export function clamp01(v: number): number {
  if (Number.isNaN(v)) return 0;
  return Math.min(1, Math.max(0, v));
}

export function initialViewState(session: SessionView): SessionViewState {
  const stops: Record<string, number> = {};
  for (const [name, v] of Object.entries(session.stops)) {
    stops[name] = clamp01(v);
  }
  return {
    sessionId: session.id,
    scope: "whole",
    t: clamp01(session.t),
    stops,
    target: session.target,
    camera: { yaw: 0.5, pitch: 0.15, zoom: 1 },
    colormapRange: [0, COLORMAP_MAX_MM],
  };
}

export function withT(state: SessionViewState, t: number): SessionViewState {
  return { ...state, t: clamp01(t) };
}

export function withStop(
  state: SessionViewState,
  attribute: string,
  value: number,
): SessionViewState {
  return { ...state, stops: { ...state.stops, [attribute]: clamp01(value) } };
}

export function withScope(state: SessionViewState, scope: Scope): SessionViewState {
  return { ...state, scope };
}

export function scopeForAttribute(index: number): Scope {
  return `attribute_${index}`;
}

export function scopeLabel(scope: Scope): string {
  if (scope === "whole") return "whole head";
  const idx = Number(scope.slice("attribute_".length));
  return ATTRIBUTE_NAMES[idx] ?? scope;
}
