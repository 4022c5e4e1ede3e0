/** DOM entry point: wires the controller to the page.
 *
 * Everything interesting lives in the pure modules; this file only
 * moves strings into innerHTML and forwards events.
 */

import { ApiClient } from "./api.js";
import { ConsoleController } from "./controller.js";
import { renderInspector } from "./inspector.js";
import { escapeHtml, renderWhatifTable } from "./whatif.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("service") ?? "http://127.0.0.1:8733";
const api = new ApiClient(base);
const controller = new ConsoleController(api);

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing #${id}`);
  return node;
}

function dayOptions(): string {
  const { health, range } = controller.state;
  if (health === null) return "";
  const dayMs = 144 * health.step_ms;
  const days = Math.max(
    1,
    Math.round((health.test_window.end_ms - health.test_window.start_ms) / dayMs),
  );
  return Array.from({ length: days }, (_, i) => {
    const start = health.test_window.start_ms + i * dayMs;
    const selected = range !== null && range.start_ms === start ? " selected" : "";
    return `<option value="${i}"${selected}>test day ${i + 1}</option>`;
  }).join("");
}

function render(): void {
  const { state } = controller;
  el("banner").innerHTML =
    state.banner === null
      ? ""
      : `<div class="banner">${escapeHtml(state.banner.message)}
  ${state.banner.retry === null ? "" : '<button data-action="retry">Retry</button>'}
  <button data-action="dismiss">Dismiss</button></div>`;

  el("phrase").innerHTML = state.phrases
    .map(
      (p) =>
        `<option value="${escapeHtml(p.phrase)}"${p.phrase === state.selectedPhrase ? " selected" : ""}>${escapeHtml(p.phrase)} (q=${p.q})</option>`,
    )
    .join("");
  el("cell").innerHTML = (state.health?.cells ?? [])
    .map(
      (c) => `<option value="${c}"${c === state.selectedCell ? " selected" : ""}>cell ${c}</option>`,
    )
    .join("");
  el("day").innerHTML = dayOptions();
  el("status").textContent = state.busy
    ? "running…"
    : state.health === null
      ? "connecting…"
      : `service ${state.health.version} · ${state.health.cells.length} cells · orientation ${state.health.orientation}`;
  el("whatif").innerHTML = renderWhatifTable(state.comparison, state.orientation);
  el("inspector").innerHTML = renderInspector(controller.inspector);
}

document.addEventListener("click", (ev) => {
  const target = ev.target as HTMLElement;
  const action = target.dataset.action;
  if (action === "retry") controller.state.banner?.retry?.();
  if (action === "dismiss") controller.dismissBanner();
  if (action === "run" && controller.state.selectedPhrase !== null) {
    void controller.selectPreference(controller.state.selectedPhrase);
  }
});

document.addEventListener("change", (ev) => {
  const target = ev.target as HTMLSelectElement;
  if (target.id === "phrase") void controller.selectPreference(target.value);
  if (target.id === "cell") void controller.setCell(Number(target.value));
  if (target.id === "day") {
    const { health } = controller.state;
    if (health !== null) {
      const dayMs = 144 * health.step_ms;
      const start = health.test_window.start_ms + Number(target.value) * dayMs;
      void controller.setRange({
        start_ms: start,
        end_ms: Math.min(start + dayMs, health.test_window.end_ms),
      });
    }
  }
});

controller.subscribe(render);
void controller.init().then(render);
