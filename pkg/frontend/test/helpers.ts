// Typed access to the recorded control-plane session used across the tests.
// The fixture is a verbatim capture of API responses from a real 3-task run;
// re-record it with scripts/record_session.py when the wire format changes.

import type { TaskTiming } from "../src/dag.js";
import type {
  Finding,
  FormResponse,
  PlanDocument,
  RunsList,
  RunStatus,
} from "../src/types.js";
import rawSession from "./fixtures/session.json";

export interface RecordedTask extends TaskTiming {
  machine: string;
  recipe: string;
  state: string;
}

export interface SessionFixture {
  definition_text: string;
  validate_ok: { findings: Finding[]; errors?: number; runnable?: boolean };
  validate_broken: { findings: Finding[] };
  definition: { id: string; name: string };
  plan: PlanDocument;
  form: FormResponse;
  launch: { run_id: string; status_url: string };
  status_snapshots: RunStatus[];
  metric_rows: { machine: string; rows: string[] };
  runs_list: RunsList;
  abort_after_done: { status_code: number };
  record_tasks: RecordedTask[];
}

export const session = rawSession as unknown as SessionFixture;
