// Pure renderers: every function maps state to a markup string and nothing
// else, so replaying recorded API traffic reproduces the exact same DOM.

import type { ChartBuffer, MetricColumn } from "./charts.js";
import { gapPositions, polylinePoints, seriesFor } from "./charts.js";
import type { DagLayout } from "./dag.js";
import { NODE_H, NODE_W, stateColor } from "./dag.js";
import type { EditorState } from "./editor.js";
import { canLaunch } from "./editor.js";
import type { FormState } from "./form.js";
import { submitBlocked } from "./form.js";
import type { Finding, RunStatus } from "./types.js";
import { isTerminal } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export function renderFindings(findings: Finding[]): string {
  if (findings.length === 0) {
    return `<div class="findings findings-empty">no findings</div>`;
  }
  const items = findings
    .map(
      (f) =>
        `<li class="finding severity-${f.severity.toLowerCase()}">` +
        `<span class="finding-path">${escapeHtml(f.path)}</span> ` +
        `${escapeHtml(f.message)}</li>`,
    )
    .join("");
  return `<ul class="findings">${items}</ul>`;
}

export function renderEditorPanel(state: EditorState): string {
  const launchAttr = canLaunch(state) ? "" : " disabled";
  const hint = state.dirty ? `<span class="editor-hint">validating…</span>` : "";
  return (
    `<div class="editor-panel">` +
    `<textarea class="editor-text" spellcheck="false">${escapeHtml(state.text)}</textarea>` +
    renderFindings(state.findings) +
    `<div class="editor-actions">${hint}<button class="launch"${launchAttr}>launch</button></div>` +
    `</div>`
  );
}

export function renderForm(state: FormState): string {
  if (state.fields.length === 0) {
    return `<p class="form-empty">no parameters</p>`;
  }
  const rows = state.fields
    .map((entry) => {
      const f = entry.field;
      const hintParts = [f.kind, f.constraint, `from ${f.recipe}`].filter((p) => p !== "");
      const problem =
        entry.problem === null
          ? ""
          : `<span class="field-problem">${escapeHtml(entry.problem)}</span>`;
      return (
        `<label class="form-field${entry.problem === null ? "" : " invalid"}">` +
        `<span class="field-key">${escapeHtml(f.key)}</span>` +
        `<input name="${escapeHtml(f.key)}" value="${escapeHtml(entry.raw)}">` +
        `<span class="field-hint">${escapeHtml(hintParts.join(", "))}</span>` +
        problem +
        `</label>`
      );
    })
    .join("");
  const submitAttr = submitBlocked(state) ? " disabled" : "";
  return (
    `<form class="parameter-form">${rows}` +
    `<button type="submit"${submitAttr}>apply</button></form>`
  );
}

export function renderDag(layout: DagLayout, colors: Record<string, string> = {}): string {
  const edges = layout.edges
    .map(
      (e) =>
        `<line x1="${e.x1}" y1="${e.y1}" x2="${e.x2}" y2="${e.y2}" ` +
        `class="dag-edge" marker-end="url(#arrow)"/>`,
    )
    .join("");
  const nodes = layout.nodes
    .map((n) => {
      const color = colors[n.id] ?? stateColor(undefined);
      return (
        `<g class="dag-node" data-task="${escapeHtml(n.id)}">` +
        `<rect x="${n.x}" y="${n.y}" width="${NODE_W}" height="${NODE_H}" rx="8" ` +
        `fill="none" stroke="${color}" stroke-width="2.5"/>` +
        `<text x="${n.x + NODE_W / 2}" y="${n.y + 24}" text-anchor="middle" ` +
        `class="dag-machine">${escapeHtml(n.machine)}</text>` +
        `<text x="${n.x + NODE_W / 2}" y="${n.y + 42}" text-anchor="middle" ` +
        `class="dag-recipe">${escapeHtml(n.recipe)}</text>` +
        `</g>`
      );
    })
    .join("");
  return (
    `<svg class="dag" viewBox="0 0 ${layout.width} ${layout.height}" ` +
    `width="${layout.width}" height="${layout.height}">` +
    `<defs><marker id="arrow" markerWidth="10" markerHeight="8" refX="9" refY="4" orient="auto">` +
    `<path d="M0,0 L10,4 L0,8 Z"/></marker></defs>` +
    edges +
    nodes +
    `</svg>`
  );
}

export function renderRunHeader(status: RunStatus): string {
  const terminal = isTerminal(status.phase);
  const abortAttr = terminal ? " disabled" : "";
  const relaunch = terminal ? `<button class="relaunch">relaunch</button>` : "";
  const error =
    status.error === null
      ? ""
      : `<div class="run-error">${escapeHtml(status.error)}</div>`;
  return (
    `<div class="run-header phase-${escapeHtml(status.phase)}">` +
    `<span class="run-id">${escapeHtml(status.run_id)}</span>` +
    `<span class="run-phase">${escapeHtml(status.phase)}</span>` +
    `<span class="run-progress">${status.progress.completed}/${status.progress.total} tasks</span>` +
    `<button class="abort"${abortAttr}>abort</button>${relaunch}` +
    error +
    `</div>`
  );
}

const CHART_W = 320;
const CHART_H = 96;

export function renderChart(buffer: ChartBuffer, column: MetricColumn): string {
  const points = polylinePoints(seriesFor(buffer, column), CHART_W, CHART_H);
  const gaps = gapPositions(buffer, CHART_W)
    .map(
      (x) =>
        `<line x1="${x.toFixed(2)}" y1="0" x2="${x.toFixed(2)}" y2="${CHART_H}" class="chart-gap"/>`,
    )
    .join("");
  const body =
    points === ""
      ? `<text x="${CHART_W / 2}" y="${CHART_H / 2}" text-anchor="middle" class="chart-empty">waiting for samples</text>`
      : `<polyline points="${points}" fill="none" class="chart-line"/>${gaps}`;
  return (
    `<figure class="chart">` +
    `<figcaption>${escapeHtml(buffer.machine)} ${escapeHtml(column)}</figcaption>` +
    `<svg viewBox="0 0 ${CHART_W} ${CHART_H}" width="${CHART_W}" height="${CHART_H}">${body}</svg>` +
    `</figure>`
  );
}
