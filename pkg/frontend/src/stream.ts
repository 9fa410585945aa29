/** Server-sent events plumbing with automatic reconnect.
 *
 * The browser retries transient errors on its own; we only step in when the
 * source reaches CLOSED (e.g. the service restarted and the old connection
 * is gone for good) and open a fresh one after a short delay.
 */

import type { RecordDoc, ServerEvent, StateDoc, TrainingStatus } from "./types.js";

// structural subset of EventSource so tests can substitute a fake
export interface EventSourceLike {
  readyState: number;
  onopen: ((ev: unknown) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  addEventListener(type: string, listener: (ev: { data: string }) => void): void;
  close(): void;
}

export interface StreamOptions {
  url: string;
  onEvent: (event: ServerEvent) => void;
  onLive: (live: boolean) => void;
  makeSource?: (url: string) => EventSourceLike;
  schedule?: (fn: () => void, delayMs: number) => void;
  retryDelayMs?: number;
}

const CLOSED = 2; // EventSource.CLOSED

export interface StreamHandle {
  close(): void;
}

export function connectStream(options: StreamOptions): StreamHandle {
  const makeSource =
    options.makeSource ?? ((url: string) => new EventSource(url) as EventSourceLike);
  const schedule = options.schedule ?? ((fn, ms) => setTimeout(fn, ms));
  const retryDelayMs = options.retryDelayMs ?? 2000;
  let source: EventSourceLike | null = null;
  let closed = false;

  const parse = (type: ServerEvent["type"], data: string): ServerEvent | null => {
    let doc: unknown;
    try {
      doc = JSON.parse(data);
    } catch {
      return null; // a malformed frame shouldn't kill the stream
    }
    switch (type) {
      case "state":
        return { type, doc: doc as StateDoc };
      case "record":
        return { type, doc: doc as RecordDoc };
      case "training":
        return { type, doc: doc as TrainingStatus };
    }
  };

  const open = (): void => {
    if (closed) return;
    source = makeSource(options.url);
    source.onopen = () => options.onLive(true);
    source.onerror = () => {
      options.onLive(false);
      if (source && source.readyState === CLOSED && !closed) {
        schedule(open, retryDelayMs);
      }
    };
    for (const type of ["state", "record", "training"] as const) {
      source.addEventListener(type, (ev) => {
        const event = parse(type, ev.data);
        if (event) options.onEvent(event);
      });
    }
  };

  open();

  return {
    close() {
      closed = true;
      options.onLive(false);
      source?.close();
    },
  };
}
