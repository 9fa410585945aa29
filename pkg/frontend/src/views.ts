/** DOM rendering. The skeleton is built once; model changes refresh the
 * dynamic regions only, so form inputs keep whatever the operator typed.
 * Nothing in here computes domain values — it formats API fields.
 */

import { fmtRate, fmtTime, trainReportLines } from "./format.js";
import { AppModel, Tile, UNIDENTIFIED } from "./model.js";
import { sparklinePath } from "./sparkline.js";
import type { HistoryQuery } from "./api.js";
import type { RecordDoc, TrainingParams } from "./types.js";

export interface Actions {
  label(recordId: number, label: string): void;
  train(overrides: Partial<TrainingParams>): void;
  activate(modelId: string): void;
  loadHistory(query: HistoryQuery): void;
  dismissNotice(index: number): void;
}

const SVG_NS = "http://www.w3.org/2000/svg";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = "",
  ...children: Array<Node | string>
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  node.append(...children);
  return node;
}

function button(label: string, className: string, onClick: () => void): HTMLButtonElement {
  const b = el("button", className, label);
  b.type = "button";
  b.addEventListener("click", onClick);
  return b;
}

function sparkSvg(values: number[], color: string): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("class", "spark");
  svg.setAttribute("viewBox", "0 0 120 28");
  svg.setAttribute("preserveAspectRatio", "none");
  const path = document.createElementNS(SVG_NS, "path");
  path.setAttribute("d", sparklinePath(values, 120, 28));
  path.setAttribute("fill", "none");
  path.setAttribute("stroke", color);
  path.setAttribute("stroke-width", "1.5");
  svg.append(path);
  return svg;
}

export class View {
  private connBadge!: HTMLElement;
  private activeModelEl!: HTMLElement;
  private noticesBox!: HTMLElement;
  private tilesBox!: HTMLElement;
  private queueBox!: HTMLElement;
  private historyTargetSel!: HTMLSelectElement;
  private historyLabelSel!: HTMLSelectElement;
  private historyRange!: HTMLElement;
  private historyPrev!: HTMLButtonElement;
  private historyNext!: HTMLButtonElement;
  private historyBox!: HTMLElement;
  private detailBox!: HTMLElement;
  private trainForm!: HTMLFormElement;
  private trainStatusEl!: HTMLElement;
  private trainReportEl!: HTMLPreElement;
  private modelsBox!: HTMLElement;

  private selectedRecordId: number | null = null;
  private prefilled = false;

  constructor(
    private root: HTMLElement,
    private model: AppModel,
    private actions: Actions,
  ) {}

  mount(): void {
    this.buildSkeleton();
    this.model.onChange(() => this.refresh());
    this.refresh();
  }

  private buildSkeleton(): void {
    this.connBadge = el("span", "badge stale", "connecting");
    this.activeModelEl = el("span", "model-id");
    const header = el(
      "header",
      "",
      el("h1", "", "netstate console"),
      this.connBadge,
      el("span", "spacer"),
      el("span", "", "active model: "),
      this.activeModelEl,
    );

    this.noticesBox = el("div", "notices");
    this.tilesBox = el("div", "tiles");
    this.queueBox = el("div", "queue");

    this.historyTargetSel = el("select");
    this.historyLabelSel = el("select");
    this.historyPrev = button("< older", "page", () => this.page(-1));
    this.historyNext = button("newer >", "page", () => this.page(+1));
    this.historyRange = el("span", "range");
    for (const sel of [this.historyTargetSel, this.historyLabelSel]) {
      sel.addEventListener("change", () => this.loadHistory(undefined));
    }
    const filterBar = el(
      "div",
      "filter-bar",
      el("label", "", "target ", this.historyTargetSel),
      el("label", "", "label ", this.historyLabelSel),
      this.historyPrev,
      this.historyNext,
      this.historyRange,
    );
    this.historyBox = el("div", "history");
    this.detailBox = el("div", "detail");

    this.trainForm = this.buildTrainForm();
    this.trainStatusEl = el("div", "train-status");
    this.trainReportEl = el("pre", "train-report");
    this.modelsBox = el("div", "models");

    this.root.replaceChildren(
      header,
      this.noticesBox,
      section("Live state", this.tilesBox),
      section("Labeling queue", this.queueBox),
      section("History", filterBar, this.historyBox, this.detailBox),
      section("Training", this.trainForm, this.trainStatusEl, this.trainReportEl),
      section("Models", this.modelsBox),
    );

    function section(title: string, ...children: Node[]): HTMLElement {
      return el("section", "", el("h2", "", title), ...children);
    }
  }

  private buildTrainForm(): HTMLFormElement {
    const form = el("form", "train-form");
    const field = (name: string, step: string): HTMLElement => {
      const input = el("input");
      input.name = name;
      input.type = "number";
      input.step = step;
      return el("label", "", name.replace("_", " ") + " ", input);
    };
    const variant = el("select");
    variant.name = "variant";
    for (const v of ["a", "b"]) {
      const opt = el("option", "", v);
      opt.value = v;
      variant.append(opt);
    }
    form.append(
      field("delta", "0.1"),
      field("alpha", "0.1"),
      field("epsilon", "0.001"),
      field("max_passes", "1"),
      el("label", "", "variant ", variant),
      button("Train", "train", () => this.submitTrain()),
    );
    form.addEventListener("submit", (ev) => ev.preventDefault());
    return form;
  }

  private submitTrain(): void {
    const data = new FormData(this.trainForm);
    const overrides: Partial<TrainingParams> = {};
    for (const key of ["delta", "alpha", "epsilon", "max_passes"] as const) {
      const raw = String(data.get(key) ?? "").trim();
      if (raw !== "") overrides[key] = Number(raw);
    }
    const variant = String(data.get("variant") ?? "");
    if (variant) overrides.variant = variant;
    this.actions.train(overrides);
  }

  // form defaults come from the service config, once it has arrived
  private prefillTrainForm(): void {
    if (this.prefilled || !this.model.config) return;
    const params = this.model.config.training;
    const inputs = this.trainForm.elements;
    (inputs.namedItem("delta") as HTMLInputElement).value = String(params.delta);
    (inputs.namedItem("alpha") as HTMLInputElement).value = String(params.alpha);
    (inputs.namedItem("epsilon") as HTMLInputElement).value = String(params.epsilon);
    (inputs.namedItem("max_passes") as HTMLInputElement).value = String(params.max_passes);
    (inputs.namedItem("variant") as HTMLSelectElement).value = params.variant;
    this.prefilled = true;
  }

  // omitting the offset loads the newest page
  private loadHistory(offset: number | undefined): void {
    const query: HistoryQuery = { offset, limit: this.model.history.limit };
    if (this.historyTargetSel.value) query.target = this.historyTargetSel.value;
    if (this.historyLabelSel.value) query.label = this.historyLabelSel.value;
    this.actions.loadHistory(query);
  }

  private page(direction: number): void {
    const { offset, limit, total } = this.model.history;
    const top = Math.max(0, total - limit);
    this.loadHistory(Math.min(top, Math.max(0, offset + direction * limit)));
  }

  private refresh(): void {
    this.prefillTrainForm();
    this.renderHeader();
    this.renderNotices();
    this.renderTiles();
    this.renderQueue();
    this.renderHistory();
    this.renderTraining();
    this.renderModels();
  }

  private renderHeader(): void {
    this.connBadge.textContent = this.model.live ? "live" : "stale";
    this.connBadge.className = this.model.live ? "badge live" : "badge stale";
    this.activeModelEl.textContent = this.model.training?.active_model_id ?? "none";
  }

  private renderNotices(): void {
    this.noticesBox.replaceChildren(
      ...this.model.notices.map((notice, i) =>
        el(
          "div",
          `notice ${notice.kind}`,
          el("span", "", notice.text),
          button("x", "dismiss", () => this.actions.dismissNotice(i)),
        ),
      ),
    );
  }

  private renderTiles(): void {
    const tiles = this.model.sortedTiles();
    if (!tiles.length) {
      this.tilesBox.replaceChildren(el("p", "empty", "no targets polled yet"));
      return;
    }
    this.tilesBox.replaceChildren(...tiles.map((t) => this.tileNode(t)));
  }

  private tileNode(tile: Tile): HTMLElement {
    const doc = tile.state;
    const label = this.model.labelName(doc);
    const color = this.model.colorFor(doc);
    const node = el("div", "tile" + (label === UNIDENTIFIED ? " unidentified" : ""));
    node.style.borderLeftColor = color;

    const head = el("div", "tile-head", el("strong", "", tile.key));
    if (doc.health !== "ok") head.append(el("span", `health ${doc.health}`, doc.health));
    node.append(head);

    node.append(el("div", "tile-label", label ?? "no decision"));
    if (doc.decision) {
      node.append(el("div", "tile-margin", `margin ${doc.decision.margin.toFixed(4)}`));
    }
    node.append(sparkSvg(tile.spark, color));
    if (doc.rates) {
      node.append(
        el(
          "div",
          "tile-rates",
          `${fmtRate("in_octets_rate", doc.rates.in_octets_rate ?? 0)} in · ` +
            `err ${fmtRate("error_ratio", doc.rates.error_ratio ?? 0)}`,
        ),
      );
    }
    if (doc.strategy) node.append(el("div", "tile-strategy", doc.strategy));
    if (doc.ts_ms !== null) node.append(el("div", "tile-ts", fmtTime(doc.ts_ms)));
    return node;
  }

  private renderQueue(): void {
    const rows: Node[] = this.model.queue.length
      ? this.model.queue.map((record) => this.queueNode(record))
      : [el("p", "empty", "nothing awaiting a label")];
    if (this.model.labelCounts) {
      const counts = Object.entries(this.model.labelCounts)
        .sort(([a], [b]) => a.localeCompare(b))
        .map(([name, n]) => `${name}=${n}`)
        .join(" ");
      rows.push(el("p", "label-counts", `stored samples: ${counts || "none"}`));
    }
    this.queueBox.replaceChildren(...rows);
  }

  private queueNode(record: RecordDoc): HTMLElement {
    const margin = record.decision ? record.decision.margin.toFixed(4) : "-";
    const row = el(
      "div",
      "queue-row",
      el("span", "when", fmtTime(record.ts_ms)),
      el("span", "", `${record.target}:${record.if_index}`),
      el("span", "margin", `margin ${margin}`),
    );
    const buttons = el("div", "label-buttons");
    for (const name of this.model.classNames()) {
      buttons.append(button(name, "label", () => this.actions.label(record.record_id, name)));
    }
    row.append(buttons);
    return row;
  }

  private renderHistory(): void {
    this.syncFilterOptions();
    const page = this.model.history;
    // pages arrive oldest-first; the console shows newest on top
    const rows = [...page.records].reverse().map((record) => {
      const label = this.model.labelName(record) ?? "-";
      const row = el(
        "div",
        "history-row" + (record.record_id === this.selectedRecordId ? " selected" : ""),
        el("span", "when", fmtTime(record.ts_ms)),
        el("span", "", `${record.target}:${record.if_index}`),
        el("span", "label", label),
        el("span", "margin", record.decision ? record.decision.margin.toFixed(4) : ""),
        el("span", "flag", record.degraded ? "degraded" : ""),
      );
      row.addEventListener("click", () => {
        this.selectedRecordId =
          this.selectedRecordId === record.record_id ? null : record.record_id;
        this.refresh();
      });
      return row;
    });
    this.historyBox.replaceChildren(
      ...(rows.length ? rows : [el("p", "empty", "no records")]),
    );

    const last = Math.min(page.offset + page.records.length, page.total);
    this.historyRange.textContent = page.total
      ? `${page.offset + 1}-${last} of ${page.total}`
      : "0 of 0";
    this.historyPrev.disabled = page.offset === 0;
    this.historyNext.disabled = page.offset + page.records.length >= page.total;

    this.renderDetail();
  }

  private renderDetail(): void {
    const record = this.model.history.records.find(
      (r) => r.record_id === this.selectedRecordId,
    );
    if (!record) {
      this.detailBox.replaceChildren();
      return;
    }
    const rates = el("dl", "rates");
    for (const [name, value] of Object.entries(record.rates)) {
      rates.append(el("dt", "", name), el("dd", "", fmtRate(name, value)));
    }
    const meta = el(
      "div",
      "meta",
      `record ${record.record_id} · model ${record.model_id ?? "none"}` +
        (record.strategy ? ` · ${record.strategy}` : ""),
    );
    this.detailBox.replaceChildren(rates, meta);
  }

  private syncFilterOptions(): void {
    const targets = [...new Set([...this.model.tiles.values()].map((t) => t.state.target))];
    const labels = [...this.model.classNames(), UNIDENTIFIED];
    syncOptions(this.historyTargetSel, ["", ...targets.sort()], "all targets");
    syncOptions(this.historyLabelSel, ["", ...labels], "all labels");

    function syncOptions(sel: HTMLSelectElement, values: string[], blank: string): void {
      const current = sel.value;
      const existing = [...sel.options].map((o) => o.value);
      if (existing.join("\n") === values.join("\n")) return;
      sel.replaceChildren(
        ...values.map((v) => {
          const opt = document.createElement("option");
          opt.value = v;
          opt.textContent = v === "" ? blank : v;
          return opt;
        }),
      );
      if (values.includes(current)) sel.value = current;
    }
  }

  private renderTraining(): void {
    const status = this.model.training;
    if (!status) {
      this.trainStatusEl.textContent = "";
      this.trainReportEl.textContent = "";
      return;
    }
    let text = `status: ${status.state}`;
    if (status.state === "failed" && status.error) text += ` — ${status.error}`;
    if (status.online_updates) text += ` · online updates: ${status.online_updates}`;
    this.trainStatusEl.textContent = text;
    this.trainStatusEl.className = `train-status ${status.state}`;
    this.trainReportEl.textContent = status.report
      ? trainReportLines(status.report).join("\n")
      : "";
  }

  private renderModels(): void {
    if (!this.model.models.length) {
      this.modelsBox.replaceChildren(el("p", "empty", "no models trained yet"));
      return;
    }
    this.modelsBox.replaceChildren(
      ...this.model.models.map((m) => {
        const row = el(
          "div",
          "model-row" + (m.active ? " active" : ""),
          el("span", "model-id", m.model_id),
          el("span", "", m.created_at),
          el("span", "classes", m.classes.join(", ")),
          el("span", "fp", m.fingerprint.slice(0, 12)),
        );
        row.append(
          m.active
            ? el("span", "badge live", "active")
            : button("activate", "activate", () => this.actions.activate(m.model_id)),
        );
        return row;
      }),
    );
  }
}
