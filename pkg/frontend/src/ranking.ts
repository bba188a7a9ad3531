/**
 * Procedure ranking table. Row order is exactly the service's order; the
 * view never re-sorts, so what the operator sees is what the ranking
 * endpoint returned.
 */

import type { RankingResponse } from "./api.js";

const HEADERS = ["procedure", "attributes", "d_mu", "d_1sigma", "d_2sigma", "d_3sigma"];

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function buildRankingTable(body: RankingResponse): string {
  const head = HEADERS.map((h) => `<th>${h}</th>`).join("");
  const rows = body.rows
    .map((row, i) => {
      const cells = [
        `<td class="name">${esc(row.procedure)}</td>`,
        `<td class="attrs">${esc(row.attributes.join(", "))}</td>`,
        `<td class="num">${row.d_mu.toFixed(3)}</td>`,
        `<td class="num">${row.d_1sigma.toFixed(3)}</td>`,
        `<td class="num">${row.d_2sigma.toFixed(3)}</td>`,
        `<td class="num">${row.d_3sigma.toFixed(3)}</td>`,
      ].join("");
      return `<tr data-rank="${i}" data-procedure="${esc(row.procedure)}">${cells}</tr>`;
    })
    .join("");
  return (
    `<table class="ranking" data-session="${esc(body.session)}">` +
    `<thead><tr>${head}</tr></thead><tbody>${rows}</tbody></table>`
  );
}
