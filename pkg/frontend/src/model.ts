/** View model: one plain-data document the views render from.
 *
 * Everything here is derived from API responses and stream events — there
 * is no client-side classification, and reloading the page rebuilds the
 * same document from GET endpoints alone.
 */

import { pushSample } from "./sparkline.js";
import type {
  ConfigDoc,
  HistoryPage,
  ModelSummary,
  RecordDoc,
  ServerEvent,
  StateDoc,
  TrainingStatus,
} from "./types.js";

export const UNIDENTIFIED = "Unidentified";
export const UNIDENTIFIED_COLOR = "#607d8b";
const HEALTH_COLORS: Record<string, string> = {
  unknown: "#455a64",
  unreachable: "#b71c1c",
  degraded: "#8d6e63",
};
const RECENT_CAP = 200;
const QUEUE_CAP = 100;

export interface Tile {
  key: string;
  state: StateDoc;
  spark: number[]; // recent in_octets_rate samples
}

export interface Notice {
  kind: "error" | "info";
  text: string;
}

export class AppModel {
  config: ConfigDoc | null = null;
  tiles = new Map<string, Tile>();
  history: HistoryPage = { records: [], total: 0, offset: 0, limit: 50 };
  queue: RecordDoc[] = []; // Unidentified records awaiting a label, oldest first
  labelCounts: Record<string, number> | null = null; // stored samples per class
  training: TrainingStatus | null = null;
  models: ModelSummary[] = [];
  notices: Notice[] = [];
  live = false; // stream currently delivering

  private listeners: Array<() => void> = [];

  onChange(fn: () => void): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  // -- lookups the views share --

  labelName(doc: StateDoc | RecordDoc): string | null {
    if (!doc.decision) return null;
    return doc.decision.label ? doc.decision.label.name : UNIDENTIFIED;
  }

  /** Tile color: class color from config; Unidentified and bad health
   * get their own colors so they stand out. */
  colorFor(doc: StateDoc): string {
    if (doc.health in HEALTH_COLORS) return HEALTH_COLORS[doc.health];
    const label = this.labelName(doc);
    if (label === null) return HEALTH_COLORS.unknown;
    if (label === UNIDENTIFIED) return UNIDENTIFIED_COLOR;
    const cls = this.config?.classes.find((c) => c.name === label);
    return cls ? cls.color : UNIDENTIFIED_COLOR;
  }

  classNames(): string[] {
    return this.config ? this.config.classes.map((c) => c.name) : [];
  }

  // -- ingest: REST results --

  setConfig(config: ConfigDoc): void {
    this.config = config;
    this.emit();
  }

  setStateSnapshot(streams: StateDoc[]): void {
    for (const doc of streams) this.upsertTile(doc);
    this.emit();
  }

  setHistory(page: HistoryPage): void {
    this.history = page;
    for (const record of page.records) this.maybeQueue(record);
    this.emit();
  }

  setTraining(status: TrainingStatus): void {
    this.training = status;
    this.emit();
  }

  setModels(models: ModelSummary[]): void {
    this.models = models;
    this.emit();
  }

  setLabelCounts(counts: Record<string, number>): void {
    this.labelCounts = counts;
    this.emit();
  }

  setLive(live: boolean): void {
    if (this.live !== live) {
      this.live = live;
      this.emit();
    }
  }

  pushNotice(kind: Notice["kind"], text: string): void {
    this.notices.push({ kind, text });
    if (this.notices.length > 5) this.notices.shift();
    this.emit();
  }

  dismissNotice(index: number): void {
    this.notices.splice(index, 1);
    this.emit();
  }

  // -- ingest: stream events --

  applyEvent(event: ServerEvent): void {
    switch (event.type) {
      case "state":
        this.upsertTile(event.doc);
        break;
      case "record": {
        const record = event.doc;
        // history pages are ascending; a new record extends the tail. Only
        // grow the page when the operator is looking at the live end —
        // an older page just sees its "of N" count move.
        const page = this.history;
        const atTail = page.offset + page.records.length >= page.total;
        let records = page.records;
        let offset = page.offset;
        if (atTail) {
          records = [...records, record];
          if (records.length > RECENT_CAP) {
            records = records.slice(records.length - RECENT_CAP);
            offset += 1;
          }
        }
        this.history = { ...page, records, offset, total: page.total + 1 };
        this.maybeQueue(record);
        break;
      }
      case "training":
        this.training = event.doc;
        break;
    }
    this.emit();
  }

  private upsertTile(doc: StateDoc): void {
    const key = `${doc.target}:${doc.if_index}`;
    const prev = this.tiles.get(key);
    const spark =
      doc.rates && doc.rates.in_octets_rate !== undefined
        ? pushSample(prev?.spark ?? [], doc.rates.in_octets_rate)
        : prev?.spark ?? [];
    this.tiles.set(key, { key, state: doc, spark });
  }

  private maybeQueue(record: RecordDoc): void {
    if (this.labelName(record) !== UNIDENTIFIED) return;
    if (this.queue.some((r) => r.record_id === record.record_id)) return;
    this.queue.push(record);
    if (this.queue.length > QUEUE_CAP) this.queue.shift();
  }

  // -- labeling with optimistic removal --

  /**
   * Remove the record from the queue immediately; the caller runs the API
   * call and invokes the returned function to put it back if that fails.
   */
  takeFromQueue(recordId: number): () => void {
    const index = this.queue.findIndex((r) => r.record_id === recordId);
    if (index < 0) return () => undefined;
    const [record] = this.queue.splice(index, 1);
    this.emit();
    return () => {
      const at = Math.min(index, this.queue.length);
      this.queue.splice(at, 0, record);
      this.emit();
    };
  }

  sortedTiles(): Tile[] {
    return [...this.tiles.values()].sort((a, b) => a.key.localeCompare(b.key));
  }
}
