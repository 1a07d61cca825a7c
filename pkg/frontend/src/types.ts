/** Payload shapes of the conduct service's JSON API. */

export interface Window {
  x_min: number;
  x_max: number;
  y_min: number;
  y_max: number;
}

export interface PatientRecord {
  index: number;
  x: number;
  y: number;
  raw_x: number;
  raw_y: number;
  z: number;
  e: number | null;
  stage: number;
  cohort: number;
}

export interface PendingAssignment {
  index: number;
  x: number;
  y: number;
  raw_x: number;
  raw_y: number;
  stage: number;
  cohort: number;
  alpha: number | null;
}

export interface Curve {
  x: number[];
  y: number[];
  empty_reason: string | null;
}

export interface Convergence {
  split_rhat_max: { [model: string]: number };
}

export interface SessionConfig {
  theta_z: number;
  theta_e: number;
  delta_u: number;
  n1: number;
  n2: number;
  m1: number;
  m2: number;
}

export type Phase =
  | "stage1"
  | "stage2"
  | "stopped_safety"
  | "stopped_futility"
  | "completed";

export interface SessionState {
  id: string;
  version: number;
  phase: Phase;
  stop_reason: string | null;
  enrolled: number;
  window: Window;
  records: PatientRecord[];
  pending: PendingAssignment[];
  curve: Curve | null;
  exceedance: number[] | null;
  exceedance_argmax: number | null;
  convergence: Convergence | null;
  config: SessionConfig;
}

export interface OutcomeEntry {
  z: number;
  e: number | null;
}

export interface OptDose {
  x: number;
  y: number;
  raw_x: number;
  raw_y: number;
  exceedance: number;
}

export interface FinalDecision {
  reject_h0: boolean;
  delta_u: number;
  max_exceedance: number | null;
  stop_reason: string | null;
  no_recommendation_reason: string | null;
  opt_dose: OptDose | null;
}
