/**
 * Pure-view unit tests: colormap endpoints, slider clamping, embedding SVG
 * content, and ranking table fidelity. Everything here runs without a DOM
 * or a server.
 */

import { describe, expect, it } from "vitest";

import type { EmbeddingResponse, RankingResponse, SessionView } from "../src/api.js";
import {
  colormapWeight,
  displacementColor,
  displacementCss,
} from "../src/colormap.js";
import { buildEmbeddingSvg, classColor } from "../src/embedding.js";
import { buildRankingTable } from "../src/ranking.js";
import {
  ATTRIBUTE_NAMES,
  COLORMAP_MAX_MM,
  clamp01,
  initialViewState,
  scopeForAttribute,
  scopeLabel,
  withStop,
  withT,
} from "../src/state.js";

const session: SessionView = {
  id: "s0",
  patient_id: "pat_07",
  model: "model",
  analysis: "analysis",
  procedure: "Le Fort II",
  procedure_attributes: ["nose", "upper_lip", "nasolabial"],
  stops: { nose: 1, upper_lip: 0.5, nasolabial: 1 },
  target: "mu",
  t: 0.25,
  created: "2026-08-15T00:00:00Z",
};

describe("displacement colormap", () => {
  it("is uniform at the resting color when nothing has moved", () => {
    // t=0 trajectory frame: zero displacement everywhere maps every vertex
    // to the same low end of the ramp
    const rest = displacementColor(0);
    for (const mag of [0, -0, 0.0]) {
      expect(displacementColor(mag)).toEqual(rest);
    }
    expect(rest).toEqual([37, 99, 235]);
    expect(colormapWeight(0)).toBe(0);
  });

  it("saturates at the fixed ceiling instead of rescaling", () => {
    expect(colormapWeight(COLORMAP_MAX_MM)).toBe(1);
    expect(colormapWeight(250)).toBe(1);
    expect(displacementColor(250)).toEqual(displacementColor(COLORMAP_MAX_MM));
    expect(displacementColor(COLORMAP_MAX_MM)).toEqual([250, 204, 21]);
  });

  it("interpolates monotonically in between", () => {
    const w = [0, 2.5, 5, 7.5, 10].map((m) => colormapWeight(m));
    for (let i = 1; i < w.length; i++) expect(w[i]!).toBeGreaterThan(w[i - 1]!);
    expect(displacementCss(5)).toMatch(/^rgb\(\d+,\d+,\d+\)$/);
  });

  it("treats junk magnitudes as resting", () => {
    expect(colormapWeight(Number.NaN)).toBe(0);
    expect(colormapWeight(-3)).toBe(0);
    expect(() => colormapWeight(1, 0)).toThrow();
  });
});

describe("session view state", () => {
  it("clamps slider values into [0, 1]", () => {
    expect(clamp01(-0.5)).toBe(0);
    expect(clamp01(1.5)).toBe(1);
    expect(clamp01(Number.NaN)).toBe(0);
    const st = initialViewState(session);
    expect(withT(st, 2).t).toBe(1);
    expect(withStop(st, "nose", -1).stops["nose"]).toBe(0);
  });

  it("starts from the server's record of the session", () => {
    const st = initialViewState(session);
    expect(st.sessionId).toBe("s0");
    expect(st.scope).toBe("whole");
    expect(st.t).toBe(0.25);
    expect(st.stops["upper_lip"]).toBe(0.5);
    expect(st.colormapRange).toEqual([0, COLORMAP_MAX_MM]);
  });

  it("names every attribute scope", () => {
    expect(ATTRIBUTE_NAMES).toHaveLength(15);
    expect(scopeForAttribute(3)).toBe("attribute_3");
    expect(scopeLabel("attribute_3")).toBe("nose");
    expect(scopeLabel("whole")).toBe("whole head");
  });
});

const embedding: EmbeddingResponse = {
  scope: "whole",
  classes: ["Healthy", "Apert"],
  points: [
    { id: "h0", label: "Healthy", x: 0, y: 0 },
    { id: "h1", label: "Healthy", x: 1, y: 0.5 },
    { id: "a0", label: "Apert", x: 4, y: 3 },
  ],
  ellipses: [
    { label: "Healthy", center: [0.5, 0.25], axes: [1, 0.5], angle: 0.3, degenerate: false },
    { label: "Apert", center: [4, 3], axes: [0.5, 0.5], angle: 0, degenerate: true },
  ],
  patient: [2, 1.5],
};

describe("embedding scatter", () => {
  it("renders every point, ellipse, the patient, and the legend", () => {
    const svg = buildEmbeddingSvg(embedding);
    expect((svg.match(/<circle/g) ?? []).length).toBe(3 + 1 + 2); // points + patient + legend
    expect((svg.match(/<ellipse/g) ?? []).length).toBe(2);
    expect(svg).toContain('class="patient"');
    expect(svg).toContain("<title>h0 (Healthy)</title>");
    expect(svg).toContain(">Apert</text>");
  });

  it("dashes degenerate covariance ellipses", () => {
    const svg = buildEmbeddingSvg(embedding);
    const dashed = svg.match(/stroke-dasharray="2 3"/g) ?? [];
    expect(dashed).toHaveLength(1);
  });

  it("draws the trajectory polyline when given one", () => {
    const svg = buildEmbeddingSvg(embedding, [
      [2, 1.5],
      [1.5, 1.0],
      [0.5, 0.25],
    ]);
    expect(svg).toContain('class="trajectory"');
    const pts = /points="([^"]+)"/.exec(svg)?.[1] ?? "";
    expect(pts.split(" ")).toHaveLength(3);
  });

  it("omits patient and trajectory when absent", () => {
    const svg = buildEmbeddingSvg({ ...embedding, patient: null });
    expect(svg).not.toContain('class="patient"');
    expect(svg).not.toContain("polyline");
  });

  it("keeps class colors stable across scopes", () => {
    const classes = ["Healthy", "Apert", "Crouzon", "Muenke"];
    expect(classColor(classes, "Apert")).toBe(classColor(classes, "Apert"));
    expect(classColor(classes, "Apert")).not.toBe(classColor(classes, "Healthy"));
  });
});

describe("ranking table", () => {
  const body: RankingResponse = {
    session: "s0",
    rows: [
      { procedure: "monobloc", attributes: ["forehead", "orbits"], d_mu: 1.25, d_1sigma: 1.5, d_2sigma: 1.75, d_3sigma: 2.0 },
      { procedure: "Le Fort II", attributes: ["nose"], d_mu: 0.5, d_1sigma: 0.75, d_2sigma: 1.0, d_3sigma: 1.25 },
      { procedure: "a<b & c", attributes: ["chin"], d_mu: 3, d_1sigma: 3, d_2sigma: 3, d_3sigma: 3 },
    ],
  };

  it("preserves the service's row order verbatim", () => {
    const html = buildRankingTable(body);
    const order = [...html.matchAll(/data-procedure="([^"]+)"/g)].map((m) => m[1]);
    expect(order).toEqual(["monobloc", "Le Fort II", "a&lt;b &amp; c"]);
    expect(html.indexOf("monobloc")).toBeLessThan(html.indexOf("Le Fort II"));
  });

  it("prints all four distance columns", () => {
    const html = buildRankingTable(body);
    expect(html).toContain("<th>d_mu</th>");
    expect(html).toContain('<td class="num">1.250</td>');
    expect(html).toContain('<td class="num">2.000</td>');
  });

  it("escapes markup in names", () => {
    const html = buildRankingTable(body);
    expect(html).toContain("a&lt;b &amp; c");
    expect(html).not.toContain("a<b");
  });
});
