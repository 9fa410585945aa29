/** Shared fakes: canned documents and a routing fetch stub. */

import type {
  ConfigDoc,
  Decision,
  RecordDoc,
  StateDoc,
  TrainingStatus,
} from "../src/types.js";

export const CONFIG: ConfigDoc = {
  classes: [
    { id: 0, name: "Normal", color: "#2e7d32", strategy: "steady-state monitoring" },
    { id: 1, name: "Congestion", color: "#ef6c00", strategy: "shape or reroute bulk traffic" },
    { id: 2, name: "ErrorBurst", color: "#c62828", strategy: "inspect interface and cabling" },
    { id: 3, name: "BroadcastStorm", color: "#6a1b9a", strategy: "isolate the chattering segment" },
  ],
  unidentified_strategy: "escalate to operator",
  online_reorg: true,
  training: { delta: 1.0, alpha: 1.0, epsilon: 0.02, max_passes: 20, variant: "a" },
};

export function decision(name: string | null, margin = 0.1): Decision {
  const byName: Record<string, number> = {
    Normal: 0,
    Congestion: 1,
    ErrorBurst: 2,
    BroadcastStorm: 3,
  };
  return {
    label: name === null ? null : { id: byName[name], name },
    potentials: [0.9, 0.2, 0.1, 0.05],
    margin,
    decided_at: 1755216000000,
  };
}

export function stateDoc(partial: Partial<StateDoc> = {}): StateDoc {
  return {
    target: "desk",
    if_index: 1,
    health: "ok",
    ts_ms: 1755216000000,
    rates: { in_octets_rate: 120000, error_ratio: 0.001 },
    decision: decision("Normal"),
    strategy: "steady-state monitoring",
    model_id: "abc123def456",
    ...partial,
  };
}

export function recordDoc(partial: Partial<RecordDoc> = {}): RecordDoc {
  return {
    record_id: 1,
    target: "desk",
    if_index: 1,
    ts_ms: 1755216000000,
    rates: { in_octets_rate: 120000, error_ratio: 0.001 },
    decision: decision("Normal"),
    vector: [0.1, -0.2, 0.3, 0.0, 0.5, -0.1],
    strategy: "steady-state monitoring",
    model_id: "abc123def456",
    degraded: false,
    ...partial,
  };
}

export function trainingStatus(partial: Partial<TrainingStatus> = {}): TrainingStatus {
  return {
    state: "idle",
    report: null,
    error: null,
    active_model_id: null,
    online_updates: 0,
    ...partial,
  };
}

export interface FetchCall {
  method: string;
  url: string;
  headers: Record<string, string>;
  body: unknown;
}

/** Routing fetch stub: `routes` maps "METHOD path" to [status, body]. */
export function routedFetch(routes: Record<string, [number, unknown]>) {
  const calls: FetchCall[] = [];
  const fn = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    calls.push({
      method,
      url,
      headers: (init?.headers as Record<string, string>) ?? {},
      body: typeof init?.body === "string" ? JSON.parse(init.body) : undefined,
    });
    const hit = routes[`${method} ${url}`] ?? routes[`${method} ${url.split("?")[0]}`];
    if (!hit) throw new Error(`unrouted request: ${method} ${url}`);
    const [status, body] = hit;
    return {
      ok: status >= 200 && status < 300,
      status,
      statusText: `status ${status}`,
      json: async () => {
        if (body === undefined) throw new Error("no body");
        return body;
      },
    } as unknown as Response;
  };
  return { fn, calls };
}

/** Let pending promise chains settle. */
export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
