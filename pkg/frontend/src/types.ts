/** Wire shapes of the service API. Field names are the server's, verbatim. */

export interface ClassInfo {
  id: number;
  name: string;
  color: string;
  strategy: string;
}

export interface TrainingParams {
  delta: number;
  alpha: number;
  epsilon: number;
  max_passes: number;
  variant: string;
}

export interface ConfigDoc {
  classes: ClassInfo[];
  unidentified_strategy: string;
  online_reorg: boolean;
  training: TrainingParams;
}

export interface LabelRef {
  id: number;
  name: string;
}

export interface Decision {
  label: LabelRef | null;
  potentials: number[];
  margin: number;
  decided_at: number | null;
}

/** One live stream ("state" event / GET /state entry). */
export interface StateDoc {
  target: string;
  if_index: number;
  health: string;
  ts_ms: number | null;
  rates: Record<string, number> | null;
  decision: Decision | null;
  strategy: string | null;
  model_id: string | null;
}

/** One persisted classification ("record" event / GET /history entry). */
export interface RecordDoc {
  record_id: number;
  target: string;
  if_index: number;
  ts_ms: number;
  rates: Record<string, number>;
  decision: Decision | null;
  vector: number[] | null;
  strategy: string | null;
  model_id: string | null;
  degraded: boolean;
}

export interface HistoryPage {
  records: RecordDoc[];
  total: number;
  offset: number;
  limit: number;
}

export interface TrainReport {
  sample_count: number;
  class_counts: Record<string, number>;
  stage1_converged: boolean;
  stage1_passes: number;
  stage2_converged: boolean;
  stage2_passes: number;
  converged: boolean;
  training_accuracy: number;
  fingerprint: string;
  params: TrainingParams;
}

export interface TrainingStatus {
  state: "idle" | "running" | "done" | "failed";
  report: TrainReport | null;
  error: string | null;
  started_at?: string;
  finished_at?: string;
  active_model_id: string | null;
  online_updates: number;
}

/** Active-model doc: GET /api/v1/model, the `model` field of GET /state,
 * and the response of POST /models/{id}/activate. */
export interface ActiveModelDoc {
  model_id: string | null;
  created_at: string;
  fingerprint: string;
  classes: LabelRef[];
  training_size: number;
  epsilon: number;
  alpha: number;
  stage1_converged: boolean;
  stage2_converged: boolean;
  online_updates: number;
}

/** Entry of GET /api/v1/models (class names only; the active-model doc
 * from GET /api/v1/model carries more detail). */
export interface ModelSummary {
  model_id: string;
  created_at: string;
  fingerprint: string;
  classes: string[];
  training_size: number;
  stage1_converged: boolean;
  stage2_converged: boolean;
  active: boolean;
}

export interface LabeledSample {
  key: string;
  features: Record<string, number>;
  label: LabelRef;
  source_id: string | null;
}

export interface LabelsDoc {
  samples: LabeledSample[];
  class_counts: Record<string, number>;
}

export interface TargetDoc {
  id: string;
  host: string;
  port: number;
  community: string;
  if_indexes: number[];
  poll_interval_s: number;
}

export type ServerEvent =
  | { type: "state"; doc: StateDoc }
  | { type: "record"; doc: RecordDoc }
  | { type: "training"; doc: TrainingStatus };
