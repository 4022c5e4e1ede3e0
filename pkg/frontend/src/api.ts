/** Typed client for the four cellcast service endpoints.
 *
 * The console never computes simulation numbers locally; everything it
 * renders comes back through one of these calls.
 */

export interface TimeRangeMs {
  start_ms: number;
  end_ms: number;
}

export interface HealthInfo {
  status: string;
  version: string;
  orientation: string;
  cells: number[];
  pairs: number;
  test_window: TimeRangeMs;
  step_ms: number;
}

export interface PreferenceEntry {
  phrase: string;
  q: number;
}

export interface PreferencesResponse {
  orientation: string;
  preferences: PreferenceEntry[];
}

export interface PredictRequest {
  cell_id: number;
  window_end_time: number;
  preference: string;
}

export interface PredictResponse {
  prediction: number;
  q: number;
  preference: string;
  cell_id: number;
  target_time: number;
  actual: number;
}

export interface SimulateRequest {
  preference: string;
  time_range?: TimeRangeMs;
}

export interface PairRow {
  pair: string;
  off_fraction: number;
  mean_power_w: number;
  savings_w: number;
  loss_pct: number;
  off?: number[];
  power_w?: number[];
  loss_raw?: number[];
}

export interface SimulateResponse {
  name: string;
  baseline: string | null;
  intervals: number;
  total_savings_w: number;
  savings_sum_w: number;
  avg_throughput_loss_pct: number;
  mean_power_w: number;
  off_fraction: number;
  per_pair: PairRow[];
  preference: string;
  q: number;
  orientation: string;
  time_range: TimeRangeMs;
}

/** Non-2xx response or network failure; `detail` carries the service's
 * JSON error body when one was readable. */
export class ServiceError extends Error {
  constructor(
    message: string,
    readonly status: number | null = null,
    readonly detail: unknown = null,
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** The four service endpoints the console consumes; nothing else. */
export interface ServiceApi {
  health(): Promise<HealthInfo>;
  preferences(): Promise<PreferencesResponse>;
  predict(body: PredictRequest): Promise<PredictResponse>;
  simulate(body: SimulateRequest): Promise<SimulateResponse>;
}

export class ApiClient implements ServiceApi {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ServiceError(`service unreachable: ${String(err)}`);
    }
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      // non-JSON body; keep detail null
    }
    if (!response.ok) {
      const detail = (body as { detail?: unknown } | null)?.detail ?? body;
      throw new ServiceError(`${path} failed (${response.status})`, response.status, detail);
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  health(): Promise<HealthInfo> {
    return this.request<HealthInfo>("/health");
  }

  preferences(): Promise<PreferencesResponse> {
    return this.request<PreferencesResponse>("/preferences");
  }

  predict(body: PredictRequest): Promise<PredictResponse> {
    return this.post<PredictResponse>("/predict", body);
  }

  simulate(body: SimulateRequest): Promise<SimulateResponse> {
    return this.post<SimulateResponse>("/simulate", body);
  }
}
