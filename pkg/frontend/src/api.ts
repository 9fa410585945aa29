/** Thin typed client for the service's JSON API.
 *
 * Every error becomes an ApiError carrying the server's structured
 * {code, message} body, so views can surface the server's own words.
 */

import type {
  ActiveModelDoc,
  ConfigDoc,
  HistoryPage,
  LabelsDoc,
  ModelSummary,
  StateDoc,
  TargetDoc,
  TrainingStatus,
} from "./types.js";

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(code: string, message: string, status: number) {
    super(message);
    this.code = code;
    this.status = status;
  }
}

/** Notice text for a failed call: the server's own code and message. */
export function describeError(err: unknown): string {
  if (err instanceof ApiError) return `${err.code}: ${err.message}`;
  return err instanceof Error ? err.message : String(err);
}

export interface HistoryQuery {
  target?: string;
  if_index?: number;
  label?: string;
  from?: number;
  to?: number;
  offset?: number;
  limit?: number;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class Api {
  private readonly base: string;
  private readonly token: string | null;
  private readonly fetchFn: FetchLike;

  constructor(base = "", token: string | null = null, fetchFn?: FetchLike) {
    this.base = base.replace(/\/$/, "");
    this.token = token;
    // bind: a bare reference to window.fetch loses its `this` and throws
    this.fetchFn = fetchFn ?? globalThis.fetch.bind(globalThis);
  }

  /** /stream URL; EventSource cannot set headers, so the token rides the query. */
  streamUrl(): string {
    const suffix = this.token ? `?token=${encodeURIComponent(this.token)}` : "";
    return `${this.base}/stream${suffix}`;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["Content-Type"] = "application/json";
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    const resp = await this.fetchFn(`${this.base}${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (resp.status === 204) return undefined as T;
    let doc: unknown = null;
    try {
      doc = await resp.json();
    } catch {
      doc = null;
    }
    if (!resp.ok) {
      const err = (doc ?? {}) as { code?: string; message?: string };
      throw new ApiError(err.code ?? "http_error", err.message ?? resp.statusText, resp.status);
    }
    return doc as T;
  }

  getConfig(): Promise<ConfigDoc> {
    return this.request("GET", "/api/v1/config");
  }

  getState(): Promise<{
    streams: StateDoc[];
    model: ActiveModelDoc | null;
    online_reorg: boolean;
  }> {
    return this.request("GET", "/api/v1/state");
  }

  getHistory(query: HistoryQuery = {}): Promise<HistoryPage> {
    const params = new URLSearchParams();
    for (const [key, value] of Object.entries(query)) {
      if (value !== undefined && value !== "") params.set(key, String(value));
    }
    const qs = params.toString();
    return this.request("GET", `/api/v1/history${qs ? `?${qs}` : ""}`);
  }

  labelRecord(
    recordId: number,
    label: string,
  ): Promise<{ key: string; record_id: number; label: { id: number; name: string } }> {
    return this.request("POST", `/api/v1/records/${recordId}/label`, { label });
  }

  getLabels(): Promise<LabelsDoc> {
    return this.request("GET", "/api/v1/labels");
  }

  train(overrides: Record<string, number | string> = {}): Promise<TrainingStatus> {
    return this.request("POST", "/api/v1/train", overrides);
  }

  trainStatus(): Promise<TrainingStatus> {
    return this.request("GET", "/api/v1/train/status");
  }

  getModels(): Promise<{ models: ModelSummary[] }> {
    return this.request("GET", "/api/v1/models");
  }

  activateModel(modelId: string): Promise<ActiveModelDoc> {
    return this.request("POST", `/api/v1/models/${modelId}/activate`);
  }

  getTargets(): Promise<{ targets: TargetDoc[] }> {
    return this.request("GET", "/api/v1/targets");
  }
}
