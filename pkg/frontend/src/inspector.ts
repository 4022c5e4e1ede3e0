/** Forecast inspector: predicted vs actual load for one cell with the
 * simulator's off-intervals shaded behind the curves.
 *
 * Prediction/actual points come from per-interval /predict responses;
 * the shading comes from the matching pair's `off` trace in the
 * /simulate response.  All geometry here is derived from those numbers.
 */

import type { PairRow } from "./api.js";
import { escapeHtml } from "./whatif.js";

export interface InspectorPoint {
  target_time: number;
  prediction: number;
  actual: number;
}

export interface InspectorData {
  cell: number;
  phrase: string;
  points: InspectorPoint[];
  off: boolean[];
}

/** The pair whose "low-high" key contains the cell, or null. */
export function pairForCell(perPair: readonly PairRow[], cell: number): PairRow | null {
  const id = String(cell);
  for (const row of perPair) {
    if (row.pair.split("-").includes(id)) return row;
  }
  return null;
}

/** Merge consecutive off intervals into [start, end) index spans. */
export function offSpans(off: readonly (boolean | number)[]): Array<[number, number]> {
  const spans: Array<[number, number]> = [];
  let open = -1;
  for (let i = 0; i < off.length; i++) {
    if (off[i] && open < 0) open = i;
    if (!off[i] && open >= 0) {
      spans.push([open, i]);
      open = -1;
    }
  }
  if (open >= 0) spans.push([open, off.length]);
  return spans;
}

const WIDTH = 720;
const HEIGHT = 240;
const PAD = { left: 44, right: 12, top: 12, bottom: 24 };

function polyline(values: number[], yScale: (v: number) => number, xStep: number): string {
  return values
    .map((v, i) => `${(PAD.left + i * xStep).toFixed(2)},${yScale(v).toFixed(2)}`)
    .join(" ");
}

export function renderInspector(data: InspectorData | null): string {
  if (data === null || data.points.length === 0) {
    return '<p class="empty">No intervals in the selected time range — nothing to inspect.</p>';
  }
  const n = data.points.length;
  const innerW = WIDTH - PAD.left - PAD.right;
  const innerH = HEIGHT - PAD.top - PAD.bottom;
  const xStep = n > 1 ? innerW / (n - 1) : 0;
  const values = data.points.flatMap((p) => [p.prediction, p.actual]);
  const lo = Math.min(0, ...values);
  const hi = Math.max(1, ...values);
  const yScale = (v: number) => PAD.top + innerH * (1 - (v - lo) / (hi - lo));

  const shading = offSpans(data.off)
    .map(([a, b]) => {
      const x0 = PAD.left + (a - 0.5) * xStep;
      const x1 = PAD.left + (b - 0.5) * xStep;
      return `<rect class="off" x="${x0.toFixed(2)}" y="${PAD.top}" width="${(x1 - x0).toFixed(2)}" height="${innerH}" fill="#cfd8e3"/>`;
    })
    .join("");
  const predicted = polyline(data.points.map((p) => p.prediction), yScale, xStep);
  const actual = polyline(data.points.map((p) => p.actual), yScale, xStep);

  return `<h2>Cell ${data.cell} — ${escapeHtml(data.phrase)}</h2>
<svg viewBox="0 0 ${WIDTH} ${HEIGHT}" role="img" aria-label="predicted vs actual load">
  ${shading}
  <polyline class="actual" points="${actual}" fill="none" stroke="#1f3a5f" stroke-width="1.5"/>
  <polyline class="predicted" points="${predicted}" fill="none" stroke="#c44f27" stroke-width="1.5" stroke-dasharray="4 2"/>
  <text x="${PAD.left}" y="${HEIGHT - 6}" class="axis">${data.points.length} intervals, load ${lo.toFixed(0)}–${hi.toFixed(0)}%</text>
</svg>
<p class="legend"><span class="predicted">predicted</span> · <span class="actual">actual</span> · shaded = high cell off</p>`;
}
