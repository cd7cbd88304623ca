// Acceptance gate for the dashboard, replayed against a recorded API session
// of a 3-task run (one namenode recipe, two dependent datanode recipes).
// Everything here must hold on the captured traffic alone: the rendered UI is
// a pure function of API responses, so replaying the session must reproduce
// the exact same states the operator saw live.

import { describe, expect, it } from "vitest";
import { layoutPlan, nodeColors, recolorOrderViolations, recolorTimeline } from "../src/dag.js";
import { displayValue, formFromResponse } from "../src/form.js";
import { renderDag, renderForm } from "../src/render.js";
import { session } from "./helpers.js";

describe("recorded session: dag view", () => {
  it("renders 2 layers and 3 nodes from the plan", () => {
    const layout = layoutPlan(session.plan);
    expect(layout.layerCount).toBe(2);
    expect(layout.nodes).toHaveLength(3);
    // the namenode stage sits above both datanodes
    const byId = new Map(layout.nodes.map((n) => [n.id, n]));
    const nn = byId.get("namenodes-0/hadoop::nn")!;
    const dn0 = byId.get("datanodes-0/hadoop::dn")!;
    const dn1 = byId.get("datanodes-1/hadoop::dn")!;
    expect(nn.stage).toBe(0);
    expect(dn0.stage).toBe(1);
    expect(dn1.stage).toBe(1);
    expect(nn.y).toBeLessThan(dn0.y);
    expect(dn0.y).toBe(dn1.y);
    // one edge from the namenode into each datanode
    expect(layout.edges).toHaveLength(2);
    for (const edge of layout.edges) {
      expect(edge.from).toBe("namenodes-0/hadoop::nn");
      expect(edge.y1).toBeLessThan(edge.y2);
    }

    const svg = renderDag(layout);
    expect(svg.match(/class="dag-node"/g)).toHaveLength(3);
    expect(svg.match(/class="dag-edge"/g)).toHaveLength(2);
    expect(svg).toMatchSnapshot();
  });
});

describe("recorded session: parameter form", () => {
  it("shows one prefilled input per registry default", () => {
    const form = formFromResponse(session.form);
    expect(form.fields).toHaveLength(session.form.fields.length);
    for (const entry of form.fields) {
      expect(entry.raw).toBe(displayValue(entry.field.default));
      expect(entry.problem).toBeNull();
    }
    const byKey = new Map(form.fields.map((e) => [e.field.key, e.raw]));
    expect(byKey.get("hdfs.blocksize")).toBe("128MB");
    expect(byKey.get("hadoop.heap.mb")).toBe("1024");

    const html = renderForm(form);
    expect(html.match(/<input /g)).toHaveLength(session.form.fields.length);
    expect(html).toContain('value="128MB"');
    expect(html).toContain('value="1024"');
    expect(html).toMatchSnapshot();
  });
});

describe("recorded session: node recoloring", () => {
  it("recolors in the order the tasks actually ran", () => {
    const violations = recolorOrderViolations(session.status_snapshots, session.record_tasks);
    expect(violations).toEqual([]);
  });

  it("walks pending through running to succeeded for every task", () => {
    const timeline = recolorTimeline(session.status_snapshots);
    for (const task of session.record_tasks) {
      const states = timeline.filter((t) => t.task === task.id).map((t) => t.state);
      expect(states[0]).toBe("pending");
      expect(states).toContain("running");
      expect(states[states.length - 1]).toBe("succeeded");
    }
  });

  it("replaying the snapshots renders identical frames both times", () => {
    const layout = layoutPlan(session.plan);
    const renderAll = () =>
      session.status_snapshots.map((snap) => renderDag(layout, nodeColors(layout, snap)));
    const first = renderAll();
    const second = renderAll();
    expect(second).toEqual(first);
    // consecutive polls that changed task state must change the frame
    const frames = new Set(first);
    expect(frames.size).toBeGreaterThanOrEqual(4);
    expect(first).toMatchSnapshot();
  });
});
