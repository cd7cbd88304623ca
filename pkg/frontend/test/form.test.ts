import { describe, expect, it } from "vitest";
import {
  applyServerProblems,
  checkEntry,
  collectOverrides,
  formFromResponse,
  parseBytes,
  setField,
  submitBlocked,
} from "../src/form.js";
import { renderForm } from "../src/render.js";
import { session } from "./helpers.js";

describe("entry grammar", () => {
  it("accepts integers and rejects everything else for int fields", () => {
    expect(checkEntry("int", "1024")).toBeNull();
    expect(checkEntry("int", "-3")).toBeNull();
    expect(checkEntry("int", " 42 ")).toBeNull();
    expect(checkEntry("int", "4.5")).not.toBeNull();
    expect(checkEntry("int", "lots")).not.toBeNull();
    expect(checkEntry("int", "")).toBe("a value is required");
  });

  it("accepts finite numbers for float fields", () => {
    expect(checkEntry("float", "0.05")).toBeNull();
    expect(checkEntry("float", "-1e3")).toBeNull();
    expect(checkEntry("float", "fast")).not.toBeNull();
  });

  it("accepts the boolean words in any case", () => {
    for (const word of ["true", "Yes", "ON", "1", "false", "no", "OFF", "0"]) {
      expect(checkEntry("bool", word)).toBeNull();
    }
    expect(checkEntry("bool", "si")).not.toBeNull();
  });

  it("parses byte quantities with binary unit factors", () => {
    expect(parseBytes("256MB")).toBe(256 * 2 ** 20);
    expect(parseBytes("1.5KB")).toBe(1536);
    expect(parseBytes(" 10 gb ")).toBe(10 * 2 ** 30);
    expect(parseBytes("7")).toBe(7);
    expect(parseBytes("7B")).toBe(7);
    // fractional bytes are not a size
    expect(parseBytes("1.5B")).toBeNull();
    expect(parseBytes("0.3")).toBeNull();
    expect(parseBytes("12XB")).toBeNull();
    expect(parseBytes("MB")).toBeNull();
  });

  it("never flags string fields", () => {
    expect(checkEntry("string", "")).toBeNull();
    expect(checkEntry("string", "anything at all")).toBeNull();
  });
});

describe("parameter form state", () => {
  it("flags a type-invalid entry before submission", () => {
    let form = formFromResponse(session.form);
    expect(submitBlocked(form)).toBe(false);

    form = setField(form, "hadoop.heap.mb", "plenty");
    const entry = form.fields.find((e) => e.field.key === "hadoop.heap.mb")!;
    expect(entry.problem).toContain("expected an integer");
    expect(submitBlocked(form)).toBe(true);

    const html = renderForm(form);
    expect(html).toContain("invalid");
    expect(html).toContain("expected an integer");
    expect(html).toContain("<button type=\"submit\" disabled>");
  });

  it("clears the flag once the entry is fixed", () => {
    let form = formFromResponse(session.form);
    form = setField(form, "hdfs.blocksize", "not-a-size");
    expect(submitBlocked(form)).toBe(true);
    form = setField(form, "hdfs.blocksize", "64MB");
    expect(submitBlocked(form)).toBe(false);
    expect(form.fields.find((e) => e.field.key === "hdfs.blocksize")!.problem).toBeNull();
  });

  it("renders a placeholder when the definition has no parameters", () => {
    const html = renderForm(formFromResponse({ fields: [] }));
    expect(html).toContain("no parameters");
    expect(html).not.toContain("<input");
    expect(html).toMatchSnapshot();
  });

  it("collects only the fields the operator changed", () => {
    let form = formFromResponse(session.form);
    expect(collectOverrides(form)).toEqual({});

    form = setField(form, "hadoop.heap.mb", "2048");
    expect(collectOverrides(form)).toEqual({ "hadoop.heap.mb": "2048" });

    // putting the default back removes the override again
    form = setField(form, "hadoop.heap.mb", "1024");
    expect(collectOverrides(form)).toEqual({});
  });

  it("excludes invalid entries from the collected overrides", () => {
    let form = formFromResponse(session.form);
    form = setField(form, "hadoop.heap.mb", "plenty");
    form = setField(form, "hdfs.blocksize", "64MB");
    expect(collectOverrides(form)).toEqual({ "hdfs.blocksize": "64MB" });
  });

  it("attaches launch-time 422 problems to their fields", () => {
    let form = formFromResponse(session.form);
    form = setField(form, "hadoop.heap.mb", "64");
    // the value is a well-formed int, so the client lets it through and the
    // server answers with the range problem
    expect(submitBlocked(form)).toBe(false);

    form = applyServerProblems(form, ["hadoop.heap.mb: 64 is below the minimum 128"]);
    const entry = form.fields.find((e) => e.field.key === "hadoop.heap.mb")!;
    expect(entry.problem).toBe("64 is below the minimum 128");
    expect(submitBlocked(form)).toBe(true);
  });
});
