/** Display formatting: human units for rates, timestamps, report text. */

import type { TrainReport } from "./types.js";

export function fmtBytesPerSec(v: number): string {
  if (!isFinite(v)) return "-";
  const units = ["B/s", "KB/s", "MB/s", "GB/s"];
  let i = 0;
  while (v >= 1000 && i < units.length - 1) {
    v /= 1000;
    i += 1;
  }
  return `${v >= 100 || i === 0 ? Math.round(v) : v.toFixed(1)} ${units[i]}`;
}

export function fmtPktsPerSec(v: number): string {
  if (!isFinite(v)) return "-";
  return v >= 1000 ? `${(v / 1000).toFixed(1)}k pps` : `${Math.round(v)} pps`;
}

export function fmtRatio(v: number): string {
  return `${(v * 100).toFixed(2)}%`;
}

export function fmtTime(tsMs: number | null): string {
  if (tsMs === null) return "-";
  return new Date(tsMs).toISOString().slice(11, 19);
}

const RATE_FORMATTERS: Record<string, (v: number) => string> = {
  in_octets_rate: fmtBytesPerSec,
  out_octets_rate: fmtBytesPerSec,
  in_pkts_rate: fmtPktsPerSec,
  error_ratio: fmtRatio,
  discard_ratio: fmtRatio,
  broadcast_ratio: fmtRatio,
};

/** Human rendering for one named rate; unknown names fall back to fixed 3. */
export function fmtRate(name: string, value: number): string {
  const f = RATE_FORMATTERS[name];
  return f ? f(value) : value.toFixed(3);
}

/**
 * The exact lines the command-line trainer prints for the same report, so
 * an operator can diff the dashboard against a terminal run verbatim.
 */
export function trainReportLines(r: TrainReport): string[] {
  const counts = Object.keys(r.class_counts)
    .sort()
    .map((name) => `${name}=${r.class_counts[name]}`)
    .join(", ");
  const py = (b: boolean) => (b ? "True" : "False");
  return [
    `trained on ${r.sample_count} samples: ${counts}`,
    `stage1 converged=${py(r.stage1_converged)} passes=${r.stage1_passes}; ` +
      `stage2 converged=${py(r.stage2_converged)} passes=${r.stage2_passes}`,
    `training accuracy ${r.training_accuracy.toFixed(4)}`,
  ];
}
