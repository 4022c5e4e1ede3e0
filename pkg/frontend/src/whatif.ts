/** What-if comparison table: one row per completed /simulate run.
 *
 * Renders phrase, q, total savings (W) and average throughput loss (%)
 * side by side.  Every number is copied verbatim from a service
 * response; no local arithmetic beyond formatting.
 */

import type { ComparisonRow } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmt(value: number, digits: number): string {
  return value.toFixed(digits);
}

/** Phrases ordered by a row field; ties keep insertion order. */
export function orderBy(
  rows: readonly ComparisonRow[],
  key: "total_savings_w" | "avg_throughput_loss_pct",
): string[] {
  return rows
    .map((row, i) => ({ row, i }))
    .sort((a, b) => a.row[key] - b.row[key] || a.i - b.i)
    .map((x) => x.row.phrase);
}

export function renderWhatifTable(
  rows: readonly ComparisonRow[],
  orientation: string | null,
): string {
  if (rows.length === 0) {
    return '<p class="hint">Run a preference to append a comparison row.</p>';
  }
  const body = rows
    .map(
      (r) => `<tr>
  <td>${escapeHtml(r.phrase)}</td>
  <td class="num">${fmt(r.q, 2)}</td>
  <td class="num">${fmt(r.total_savings_w, 3)}</td>
  <td class="num">${fmt(r.avg_throughput_loss_pct, 4)}</td>
  <td class="num">${fmt(100 * r.off_fraction, 1)}</td>
</tr>`,
    )
    .join("\n");
  const head = orientation === null ? "" : ` <span class="hint">(orientation ${escapeHtml(orientation)})</span>`;
  return `<h2>Preference comparison${head}</h2>
<table class="whatif">
  <thead><tr><th>preference</th><th>q</th><th>savings (W)</th><th>loss (%)</th><th>off (%)</th></tr></thead>
  <tbody>
${body}
  </tbody>
</table>`;
}
