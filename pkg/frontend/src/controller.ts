/** Orchestration between the API client, console state and renderers.
 *
 * One user action triggers at most one /simulate; a monotonically
 * increasing request token marks every in-flight action, and responses
 * arriving after a newer action started are discarded wholesale.
 * Service failures surface as a non-blocking banner whose retry re-runs
 * the failed action; the rest of the console keeps working.
 */

import { ServiceError } from "./api.js";
import type { ServiceApi, SimulateResponse, TimeRangeMs } from "./api.js";
import type { InspectorData } from "./inspector.js";
import { pairForCell } from "./inspector.js";
import {
  appendComparison,
  initialState,
  intervalCount,
  selectCell,
  selectPhrase,
  selectRange,
  withBanner,
  withHealth,
  withPreferences,
  type ConsoleState,
} from "./state.js";

function describeError(err: unknown): string {
  if (err instanceof ServiceError) {
    const detail = err.detail as { error?: string } | null;
    return detail?.error ? `${err.message}: ${detail.error}` : err.message;
  }
  return String(err);
}

export class ConsoleController {
  state: ConsoleState = initialState();
  inspector: InspectorData | null = null;
  private simToken = 0;
  private listeners: Array<() => void> = [];

  constructor(private readonly api: ServiceApi) {}

  subscribe(listener: () => void): void {
    this.listeners.push(listener);
  }

  private update(state: ConsoleState): void {
    this.state = state;
    for (const fn of this.listeners) fn();
  }

  /** Load /health and /preferences; issues no simulation requests. */
  async init(): Promise<void> {
    try {
      const [health, prefs] = await Promise.all([this.api.health(), this.api.preferences()]);
      this.update(
        withBanner(
          withPreferences(withHealth(this.state, health), prefs.orientation, prefs.preferences),
          null,
        ),
      );
    } catch (err) {
      this.update(
        withBanner(this.state, {
          message: describeError(err),
          retry: () => void this.init(),
        }),
      );
    }
  }

  /** Select one of the fetched phrases and run the full what-if loop:
   * one /simulate over the whole test window (appending a comparison
   * row) plus per-interval /predict calls for the inspector. */
  async selectPreference(phrase: string): Promise<void> {
    this.update(selectPhrase(this.state, phrase));
    await this.refresh();
  }

  async setCell(cell: number): Promise<void> {
    this.update(selectCell(this.state, cell));
    await this.reloadInspector();
  }

  async setRange(range: TimeRangeMs | null): Promise<void> {
    this.update(selectRange(this.state, range));
    await this.reloadInspector();
  }

  dismissBanner(): void {
    this.update(withBanner(this.state, null));
  }

  /** Simulate the selected phrase and rebuild the inspector. */
  async refresh(): Promise<void> {
    const phrase = this.state.selectedPhrase;
    if (phrase === null) return;
    const token = ++this.simToken;
    this.update({ ...this.state, busy: true });
    try {
      const sim = await this.api.simulate({ preference: phrase });
      if (token !== this.simToken) return;
      this.update(withBanner({ ...appendComparison(this.state, sim), busy: false }, null));
      await this.loadInspector(token, sim, phrase);
    } catch (err) {
      if (token !== this.simToken) return;
      this.update(
        withBanner({ ...this.state, busy: false }, {
          message: describeError(err),
          retry: () => void this.refresh(),
        }),
      );
    }
  }

  /** Re-run only the /predict sweep, reusing the last simulation for
   * shading (used when the cell or day changes under one phrase). */
  async reloadInspector(): Promise<void> {
    const sim = this.state.lastSimulate;
    if (sim === null || sim.preference !== this.state.selectedPhrase) {
      await this.refresh();
      return;
    }
    const token = ++this.simToken;
    await this.loadInspector(token, sim, sim.preference);
  }

  private async loadInspector(
    token: number,
    sim: SimulateResponse,
    phrase: string,
  ): Promise<void> {
    const { health, range, selectedCell: cell } = this.state;
    if (health === null || cell === null) return;
    const step = health.step_ms;
    const n = intervalCount(range, step);
    if (range === null || n === 0) {
      // Empty time range: explicit empty state, no requests issued.
      this.inspector = null;
      this.update(this.state);
      return;
    }
    try {
      const targets = Array.from({ length: n }, (_, k) => range.start_ms + k * step);
      const responses = await Promise.all(
        targets.map((t) =>
          this.api.predict({ cell_id: cell, window_end_time: t - step, preference: phrase }),
        ),
      );
      if (token !== this.simToken) return;
      const pair = pairForCell(sim.per_pair, cell);
      const offset = Math.round((range.start_ms - sim.time_range.start_ms) / step);
      const off = (pair?.off ?? []).slice(offset, offset + n).map(Boolean);
      this.inspector = {
        cell,
        phrase,
        points: responses.map((r) => ({
          target_time: r.target_time,
          prediction: r.prediction,
          actual: r.actual,
        })),
        off,
      };
      this.update({ ...this.state, lastPredict: responses[responses.length - 1] ?? null });
    } catch (err) {
      if (token !== this.simToken) return;
      this.update(
        withBanner(this.state, {
          message: describeError(err),
          retry: () => void this.reloadInspector(),
        }),
      );
    }
  }
}
