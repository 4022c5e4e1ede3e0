/** Console state and its pure transitions.
 *
 * The preference list is always whatever /preferences returned — the
 * five phrases are never hardcoded here.  Comparison rows are frozen on
 * creation and the table only ever grows by appending.
 */

import type {
  HealthInfo,
  PredictResponse,
  PreferenceEntry,
  SimulateResponse,
  TimeRangeMs,
} from "./api.js";

export interface ComparisonRow {
  readonly phrase: string;
  readonly q: number;
  readonly total_savings_w: number;
  readonly avg_throughput_loss_pct: number;
  readonly off_fraction: number;
}

export interface Banner {
  readonly message: string;
  readonly retry: (() => void) | null;
}

export interface ConsoleState {
  health: HealthInfo | null;
  orientation: string | null;
  phrases: readonly PreferenceEntry[];
  selectedPhrase: string | null;
  selectedCell: number | null;
  range: TimeRangeMs | null;
  lastPredict: PredictResponse | null;
  lastSimulate: SimulateResponse | null;
  comparison: readonly ComparisonRow[];
  banner: Banner | null;
  busy: boolean;
}

export function initialState(): ConsoleState {
  return {
    health: null,
    orientation: null,
    phrases: [],
    selectedPhrase: null,
    selectedCell: null,
    range: null,
    lastPredict: null,
    lastSimulate: null,
    comparison: [],
    banner: null,
    busy: false,
  };
}

export function withHealth(state: ConsoleState, health: HealthInfo): ConsoleState {
  return {
    ...state,
    health,
    orientation: health.orientation,
    selectedCell: state.selectedCell ?? health.cells[0] ?? null,
    range: state.range ?? firstDayRange(health),
  };
}

export function withPreferences(
  state: ConsoleState,
  orientation: string,
  phrases: PreferenceEntry[],
): ConsoleState {
  const selected =
    state.selectedPhrase !== null && phrases.some((p) => p.phrase === state.selectedPhrase)
      ? state.selectedPhrase
      : (phrases[0]?.phrase ?? null);
  return { ...state, orientation, phrases: Object.freeze([...phrases]), selectedPhrase: selected };
}

/** Reject selections outside the fetched list so state can never hold an
 * invented phrase. */
export function selectPhrase(state: ConsoleState, phrase: string): ConsoleState {
  if (!state.phrases.some((p) => p.phrase === phrase)) {
    throw new Error(`phrase not offered by the service: ${phrase}`);
  }
  return { ...state, selectedPhrase: phrase };
}

export function selectCell(state: ConsoleState, cell: number): ConsoleState {
  if (state.health !== null && !state.health.cells.includes(cell)) {
    throw new Error(`unknown cell ${cell}`);
  }
  return { ...state, selectedCell: cell };
}

export function selectRange(state: ConsoleState, range: TimeRangeMs | null): ConsoleState {
  return { ...state, range };
}

export function comparisonRowFrom(sim: SimulateResponse): ComparisonRow {
  return Object.freeze({
    phrase: sim.preference,
    q: sim.q,
    total_savings_w: sim.total_savings_w,
    avg_throughput_loss_pct: sim.avg_throughput_loss_pct,
    off_fraction: sim.off_fraction,
  });
}

export function appendComparison(state: ConsoleState, sim: SimulateResponse): ConsoleState {
  return {
    ...state,
    lastSimulate: sim,
    comparison: Object.freeze([...state.comparison, comparisonRowFrom(sim)]),
  };
}

export function withBanner(state: ConsoleState, banner: Banner | null): ConsoleState {
  return { ...state, banner };
}

export function firstDayRange(health: HealthInfo): TimeRangeMs {
  const day = 144 * health.step_ms;
  const start = health.test_window.start_ms;
  return { start_ms: start, end_ms: Math.min(start + day, health.test_window.end_ms) };
}

export function intervalCount(range: TimeRangeMs | null, stepMs: number): number {
  if (range === null) return 0;
  return Math.max(0, Math.floor((range.end_ms - range.start_ms) / stepMs));
}
