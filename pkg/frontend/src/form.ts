import type { FormFieldWire, FormResponse } from "./types.js";

export interface FieldState {
  field: FormFieldWire;
  raw: string;
  problem: string | null;
}

export interface FormState {
  fields: FieldState[];
}

export function displayValue(value: unknown): string {
  if (value === null || value === undefined) {
    return "";
  }
  return String(value);
}

export function formFromResponse(form: FormResponse): FormState {
  return {
    fields: form.fields.map((field) => ({
      field,
      raw: displayValue(field.effective),
      problem: null,
    })),
  };
}

const BYTES_RE = /^\s*(\d+(?:\.\d+)?)\s*(KB|MB|GB|TB|B)?\s*$/i;
const BYTES_FACTORS: Record<string, number> = {
  "": 1,
  B: 1,
  KB: 2 ** 10,
  MB: 2 ** 20,
  GB: 2 ** 30,
  TB: 2 ** 40,
};

export function parseBytes(text: string): number | null {
  const match = BYTES_RE.exec(text);
  if (!match) {
    return null;
  }
  const value = Number(match[1]) * BYTES_FACTORS[(match[2] ?? "").toUpperCase()];
  return Number.isInteger(value) ? value : null;
}

const BOOL_WORDS = new Set(["true", "1", "yes", "on", "false", "0", "no", "off"]);

// mirrors the server's kind grammar so a bad entry is flagged before
// submission; range and choice constraints stay server-side and surface
// as 422 problems on launch
export function checkEntry(kind: string, raw: string): string | null {
  const text = raw.trim();
  if (kind === "string") {
    return null;
  }
  if (text === "") {
    return "a value is required";
  }
  switch (kind) {
    case "int":
      return /^[+-]?\d+$/.test(text) ? null : `expected an integer, got ${raw}`;
    case "float":
      return Number.isFinite(Number(text)) ? null : `expected a number, got ${raw}`;
    case "bool":
      return BOOL_WORDS.has(text.toLowerCase()) ? null : `expected a boolean, got ${raw}`;
    case "bytes":
      return parseBytes(text) !== null
        ? null
        : `expected a byte quantity such as 256MB, got ${raw}`;
    default:
      return null;
  }
}

export function setField(state: FormState, key: string, raw: string): FormState {
  return {
    fields: state.fields.map((entry) =>
      entry.field.key === key
        ? { ...entry, raw, problem: checkEntry(entry.field.kind, raw) }
        : entry,
    ),
  };
}

export function submitBlocked(state: FormState): boolean {
  return state.fields.some((entry) => entry.problem !== null);
}

// only fields the operator actually changed travel as overrides; the server
// coerces the raw strings with the same grammar checkEntry mirrors
export function collectOverrides(state: FormState): Record<string, string> {
  const overrides: Record<string, string> = {};
  for (const entry of state.fields) {
    if (entry.problem === null && entry.raw !== displayValue(entry.field.effective)) {
      overrides[entry.field.key] = entry.raw;
    }
  }
  return overrides;
}

export function applyServerProblems(state: FormState, problems: string[]): FormState {
  // a 422 problem line starts with the offending key ("key: message")
  const byKey = new Map<string, string>();
  for (const problem of problems) {
    const colon = problem.indexOf(":");
    if (colon > 0) {
      byKey.set(problem.slice(0, colon).trim(), problem.slice(colon + 1).trim());
    }
  }
  return {
    fields: state.fields.map((entry) => {
      const message = byKey.get(entry.field.key);
      return message === undefined ? entry : { ...entry, problem: message };
    }),
  };
}
