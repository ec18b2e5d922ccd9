// Wire types mirroring the trial service JSON exactly.
// All times are hours on the wire; the UI converts to/from days at entry.

export interface CombinationRef {
  dose: number;
  schedule: string;
  freq: number;
}

export interface DecisionRowView {
  dose: number;
  schedule: string;
  freq: number;
  auc_cycle1: number;
  p_underdosing: number;
  p_target: number;
  p_overdosing: number;
  ewoc_ok: boolean;
  mean_dlt_prob: number | null;
}

export interface DecisionTableView {
  bound: number;
  interval: { lower: number; upper: number };
  rows: DecisionRowView[];
  recommendation: CombinationRef | null;
  rationale: string;
}

export interface PatientRecordView {
  dose: number;
  freq: number;
  dlt: boolean;
  time_hours: number;
}

export interface SessionView {
  sessionId: string;
  revision: number;
  decision: DecisionTableView;
  records: PatientRecordView[];
}

export interface ExposureSamples {
  dose: number;
  freq: number;
  times_hours: number[];
  exposure: number[];
  cumulative_exposure: number[];
}
