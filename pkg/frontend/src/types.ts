// Wire types for the control-plane responses. Field names match the JSON
// exactly; the dashboard renders payloads as received and never reshapes
// them on the way in.

export interface Finding {
  severity: string;
  path: string;
  message: string;
}

export interface ValidateResponse {
  findings: Finding[];
  errors?: number;
  runnable?: boolean;
}

export interface PlanNode {
  id: string;
  machine: string;
  recipe: string;
  stage: number;
}

export interface PlanDocument {
  nodes: PlanNode[];
  edges: string[][];
  stages: string[][];
}

export interface FormFieldWire {
  key: string;
  kind: string; // string | int | float | bool | bytes
  default: unknown;
  effective: unknown;
  recipe: string;
  constraint: string; // display text such as "min 128"; not parsed client-side
}

export interface FormResponse {
  fields: FormFieldWire[];
}

export interface RunProgress {
  completed: number;
  total: number;
}

export interface RunStatus {
  run_id: string;
  phase: string;
  started_ms: number;
  progress: RunProgress;
  task_states: Record<string, string>;
  run_dir: string;
  error: string | null;
}

export interface LaunchResponse {
  run_id: string;
  status_url: string;
}

export interface RunsList {
  runs: RunStatus[];
}

const TERMINAL_PHASES = new Set(["done", "failed", "aborted"]);

export function isTerminal(phase: string): boolean {
  return TERMINAL_PHASES.has(phase);
}
