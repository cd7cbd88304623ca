import type { PlanDocument, RunStatus } from "./types.js";

export const NODE_W = 180;
export const NODE_H = 58;
const GAP_X = 48;
const GAP_Y = 64;
const MARGIN = 24;

export interface NodeBox {
  id: string;
  machine: string;
  recipe: string;
  stage: number;
  x: number;
  y: number;
}

export interface EdgeLine {
  from: string;
  to: string;
  x1: number;
  y1: number;
  x2: number;
  y2: number;
}

export interface DagLayout {
  nodes: NodeBox[];
  edges: EdgeLine[];
  width: number;
  height: number;
  layerCount: number;
}

// layered straight off the plan's stage numbers, one row per stage with the
// row centered; the server already guarantees no edge stays inside a stage,
// so no client-side graph layout engine is needed
export function layoutPlan(plan: PlanDocument): DagLayout {
  const layers = plan.stages;
  const widest = Math.max(1, ...layers.map((layer) => layer.length));
  const width = MARGIN * 2 + widest * NODE_W + (widest - 1) * GAP_X;
  const meta = new Map(plan.nodes.map((node) => [node.id, node]));

  const nodes: NodeBox[] = [];
  layers.forEach((layer, stage) => {
    const layerWidth = layer.length * NODE_W + (layer.length - 1) * GAP_X;
    const x0 = (width - layerWidth) / 2;
    layer.forEach((id, i) => {
      const node = meta.get(id);
      nodes.push({
        id,
        machine: node?.machine ?? id,
        recipe: node?.recipe ?? "",
        stage,
        x: x0 + i * (NODE_W + GAP_X),
        y: MARGIN + stage * (NODE_H + GAP_Y),
      });
    });
  });

  const boxes = new Map(nodes.map((node) => [node.id, node]));
  const edges: EdgeLine[] = [];
  for (const [from, to] of plan.edges) {
    const a = boxes.get(from);
    const b = boxes.get(to);
    if (!a || !b) {
      continue;
    }
    edges.push({
      from,
      to,
      x1: a.x + NODE_W / 2,
      y1: a.y + NODE_H,
      x2: b.x + NODE_W / 2,
      y2: b.y,
    });
  }

  return {
    nodes,
    edges,
    width,
    height: MARGIN * 2 + layers.length * NODE_H + Math.max(0, layers.length - 1) * GAP_Y,
    layerCount: layers.length,
  };
}

export const STATE_COLORS: Record<string, string> = {
  pending: "#8888a0",
  ready: "#3b82f6",
  running: "#eab308",
  succeeded: "#22c55e",
  failed: "#ef4444",
  skipped: "#6b7280",
};

export function stateColor(state: string | undefined): string {
  return STATE_COLORS[state ?? "pending"] ?? STATE_COLORS.pending;
}

export function nodeColors(layout: DagLayout, status: RunStatus): Record<string, string> {
  const colors: Record<string, string> = {};
  for (const node of layout.nodes) {
    colors[node.id] = stateColor(status.task_states[node.id]);
  }
  return colors;
}

export interface Transition {
  snapshot: number;
  task: string;
  state: string;
}

// the distinct recoloring steps a poll sequence produces, in poll order
export function recolorTimeline(snapshots: RunStatus[]): Transition[] {
  const last: Record<string, string> = {};
  const transitions: Transition[] = [];
  snapshots.forEach((snap, index) => {
    for (const [task, state] of Object.entries(snap.task_states)) {
      if (last[task] !== state) {
        last[task] = state;
        transitions.push({ snapshot: index, task, state });
      }
    }
  });
  return transitions;
}

export interface TaskTiming {
  id: string;
  started_ms: number;
  finished_ms: number;
}

const ACTIVE_STATES = new Set(["running", "succeeded", "failed", "skipped"]);
const DONE_STATES = new Set(["succeeded", "failed", "skipped"]);

function firstIndex(snapshots: RunStatus[], task: string, states: Set<string>): number {
  return snapshots.findIndex((snap) => states.has(snap.task_states[task] ?? ""));
}

// cross-checks what the operator saw against what actually ran: a task that
// started earlier must never turn active later on screen, and a task that
// finished before another began must be shown done no later than the second
// turns active
export function recolorOrderViolations(
  snapshots: RunStatus[],
  timings: TaskTiming[],
): string[] {
  const problems: string[] = [];
  for (const a of timings) {
    const activeA = firstIndex(snapshots, a.id, ACTIVE_STATES);
    const doneA = firstIndex(snapshots, a.id, DONE_STATES);
    if (activeA < 0 || doneA < 0) {
      problems.push(`${a.id} never appeared ${activeA < 0 ? "active" : "done"} in any snapshot`);
      continue;
    }
    for (const b of timings) {
      if (a.id === b.id) {
        continue;
      }
      const activeB = firstIndex(snapshots, b.id, ACTIVE_STATES);
      if (a.started_ms < b.started_ms && activeB >= 0 && activeA > activeB) {
        problems.push(`${a.id} started before ${b.id} but recolored active after it`);
      }
      if (a.finished_ms <= b.started_ms && activeB >= 0 && doneA > activeB) {
        problems.push(`${a.id} finished before ${b.id} started but recolored done after it`);
      }
    }
  }
  return problems;
}
