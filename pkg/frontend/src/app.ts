// Browser wiring: owns the mutable state and the DOM, delegates every
// state transition and every piece of markup to the pure modules. Status
// polls run at 1 s; metrics arrive per machine over the event stream.

import { ApiClient, ApiError } from "./api.js";
import type { ChartBuffer, MetricColumn } from "./charts.js";
import { appendRow, markGap, newBuffer } from "./charts.js";
import type { DagLayout } from "./dag.js";
import { layoutPlan, nodeColors } from "./dag.js";
import type { EditorState } from "./editor.js";
import { applyValidation, canLaunch, editText, initialEditor } from "./editor.js";
import type { FormState } from "./form.js";
import {
  applyServerProblems,
  collectOverrides,
  formFromResponse,
  setField,
  submitBlocked,
} from "./form.js";
import { renderChart, renderDag, renderFindings, renderForm, renderRunHeader } from "./render.js";
import { MetricStream } from "./sse.js";
import type { RunStatus } from "./types.js";
import { isTerminal } from "./types.js";

const POLL_INTERVAL_MS = 1000;
const VALIDATE_DEBOUNCE_MS = 400;
const CHART_COLUMNS: MetricColumn[] = ["cpu_pct", "mem_used", "disk_read_bps", "net_rx_bps"];

const STARTER_TEXT = `name: demo
provider:
  backend: local
cookbooks: {}
groups: {}
`;

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing #${id}`);
  }
  return node;
}

class App {
  private api: ApiClient;
  private editor: EditorState = initialEditor(STARTER_TEXT);
  private definitionId: string | null = null;
  private layout: DagLayout | null = null;
  private form: FormState | null = null;
  private runId: string | null = null;
  private status: RunStatus | null = null;
  private buffers = new Map<string, ChartBuffer>();
  private streams: MetricStream[] = [];
  private validateTimer: number | undefined;
  private pollTimer: number | undefined;

  constructor() {
    const base = window.location.hash.replace(/^#/, "") || "http://127.0.0.1:8765";
    this.api = new ApiClient(base);
    el("api-base").textContent = base;

    const text = el("editor-text") as HTMLTextAreaElement;
    text.value = this.editor.text;
    text.addEventListener("input", () => {
      this.editor = editText(this.editor, text.value);
      this.paintEditor();
      window.clearTimeout(this.validateTimer);
      this.validateTimer = window.setTimeout(() => void this.validateNow(), VALIDATE_DEBOUNCE_MS);
    });
    el("launch").addEventListener("click", () => void this.launch());
    el("run-panel").addEventListener("click", (event) => {
      const target = event.target as HTMLElement;
      if (target.matches("button.abort") && this.runId !== null) {
        void this.api.abortRun(this.runId).catch(() => undefined);
      } else if (target.matches("button.relaunch")) {
        void this.launch();
      }
    });
    el("form-panel").addEventListener("input", (event) => {
      const input = event.target as HTMLInputElement;
      if (this.form !== null && input.name !== "") {
        this.form = setField(this.form, input.name, input.value);
        this.paintFormProblems();
      }
    });
    el("form-panel").addEventListener("submit", (event) => event.preventDefault());

    void this.validateNow();
  }

  private banner(message: string | null): void {
    const node = el("banner");
    node.textContent = message ?? "";
    node.style.display = message === null ? "none" : "block";
  }

  private paintEditor(): void {
    el("findings").innerHTML = renderFindings(this.editor.findings);
    (el("launch") as HTMLButtonElement).disabled = !canLaunch(this.editor);
  }

  private async validateNow(): Promise<void> {
    try {
      const result = await this.api.validateDefinition(this.editor.text);
      this.editor = applyValidation(this.editor, result);
      this.banner(null);
    } catch (error) {
      this.banner(`control plane unreachable: ${String(error)}`);
    }
    this.paintEditor();
  }

  private paintFormProblems(): void {
    if (this.form !== null) {
      el("form-panel").innerHTML = renderForm(this.form);
      this.restoreFormValues();
    }
  }

  // innerHTML replacement resets focus; values are re-applied so a repaint
  // never loses what the operator typed
  private restoreFormValues(): void {
    if (this.form === null) {
      return;
    }
    for (const entry of this.form.fields) {
      const input = el("form-panel").querySelector<HTMLInputElement>(
        `input[name="${entry.field.key}"]`,
      );
      if (input !== null && input.value !== entry.raw) {
        input.value = entry.raw;
      }
    }
  }

  private async launch(): Promise<void> {
    try {
      const stored = await this.api.storeDefinition(this.editor.text);
      this.definitionId = stored.id;
      const [plan, form] = await Promise.all([
        this.api.getPlan(stored.id),
        this.api.getForm(stored.id),
      ]);
      this.layout = layoutPlan(plan);
      if (this.form === null || submitBlocked(this.form)) {
        this.form = formFromResponse(form);
      }
      this.paintFormProblems();

      const launch = await this.api.launchRun({
        definition_id: stored.id,
        overrides: this.form === null ? {} : collectOverrides(this.form),
      });
      this.watchRun(launch.run_id, plan.nodes.map((node) => node.machine));
      this.banner(null);
    } catch (error) {
      if (error instanceof ApiError && Array.isArray((error.payload as any)?.problems)) {
        const problems = (error.payload as { problems: string[] }).problems;
        if (this.form !== null) {
          this.form = applyServerProblems(this.form, problems);
          this.paintFormProblems();
        }
        this.banner(`launch refused: ${problems.join("; ")}`);
      } else {
        this.banner(`launch failed: ${String(error)}`);
      }
    }
  }

  private watchRun(runId: string, machines: string[]): void {
    this.runId = runId;
    this.status = null;
    for (const stream of this.streams) {
      stream.close();
    }
    this.streams = [];
    this.buffers = new Map();
    for (const machine of [...new Set(machines)]) {
      this.buffers.set(machine, newBuffer(machine));
      const stream = new MetricStream(
        this.api.metricsUrl(runId, machine),
        (row) => {
          this.buffers.set(machine, appendRow(this.buffers.get(machine)!, row));
          this.paintCharts();
        },
        () => {
          this.buffers.set(machine, markGap(this.buffers.get(machine)!));
          this.paintCharts();
        },
      );
      stream.connect();
      this.streams.push(stream);
    }
    window.clearInterval(this.pollTimer);
    this.pollTimer = window.setInterval(() => void this.poll(), POLL_INTERVAL_MS);
    void this.poll();
  }

  private async poll(): Promise<void> {
    if (this.runId === null) {
      return;
    }
    try {
      this.status = await this.api.runStatus(this.runId);
    } catch {
      return;
    }
    this.paintRun();
    if (isTerminal(this.status.phase)) {
      window.clearInterval(this.pollTimer);
      for (const stream of this.streams) {
        stream.close();
      }
    }
  }

  private paintRun(): void {
    if (this.status === null || this.layout === null) {
      return;
    }
    el("run-panel").innerHTML = renderRunHeader(this.status);
    el("dag-panel").innerHTML = renderDag(this.layout, nodeColors(this.layout, this.status));
    this.paintCharts();
  }

  private paintCharts(): void {
    const parts: string[] = [];
    for (const buffer of this.buffers.values()) {
      for (const column of CHART_COLUMNS) {
        parts.push(renderChart(buffer, column));
      }
    }
    el("charts-panel").innerHTML = parts.join("");
  }
}

new App();
