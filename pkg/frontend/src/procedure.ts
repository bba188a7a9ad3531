/**
 * Procedure panel markup: procedure picker, per-attribute stop sliders for
 * the attributes the chosen procedure touches, global t slider, and the
 * target selector. Event wiring happens in the app shell.
 */

import type { ProcedureSpec, SessionView } from "./api.js";

export const TARGET_CHOICES = ["mu", "1sigma", "2sigma", "3sigma"] as const;

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function buildProcedurePanel(
  procedures: ProcedureSpec[],
  session: SessionView,
): string {
  const options = procedures
    .map((p) => {
      const sel = p.name === session.procedure ? " selected" : "";
      return `<option value="${esc(p.name)}"${sel}>${esc(p.name)}</option>`;
    })
    .join("");

  const sliders = session.procedure_attributes
    .map((name) => {
      const v = session.stops[name] ?? 1;
      return (
        `<label class="stop-row" data-attribute="${esc(name)}">` +
        `<span>${esc(name)}</span>` +
        `<input type="range" class="stop" min="0" max="1" step="0.01" ` +
        `value="${v}" data-attribute="${esc(name)}"/>` +
        `<output>${v.toFixed(2)}</output></label>`
      );
    })
    .join("");

  const targets = TARGET_CHOICES.map((t) => {
    const sel = t === session.target ? " selected" : "";
    return `<option value="${t}"${sel}>${t}</option>`;
  }).join("");

  return (
    `<div class="procedure-panel" data-session="${esc(session.id)}">` +
    `<label>procedure <select class="procedure-select">${options}</select></label>` +
    `<label>target <select class="target-select">${targets}` +
    `<option value="custom"${session.target === "custom" ? " selected" : ""}>custom</option>` +
    `</select></label>` +
    `<label class="t-row">t ` +
    `<input type="range" class="t" min="0" max="1" step="0.01" value="${session.t}"/>` +
    `<output>${session.t.toFixed(2)}</output></label>` +
    `<div class="stops">${sliders}</div>` +
    `</div>`
  );
}
