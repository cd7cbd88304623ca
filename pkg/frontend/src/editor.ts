import type { Finding, ValidateResponse } from "./types.js";

export interface EditorState {
  text: string;
  findings: Finding[];
  runnable: boolean;
  // text changed since the last validation round-trip; launch stays off
  // until the server has seen the current text
  dirty: boolean;
}

export function initialEditor(text = ""): EditorState {
  return { text, findings: [], runnable: false, dirty: text !== "" };
}

export function editText(state: EditorState, text: string): EditorState {
  if (text === state.text) {
    return state;
  }
  return { ...state, text, dirty: true };
}

export function applyValidation(state: EditorState, result: ValidateResponse): EditorState {
  return {
    ...state,
    findings: result.findings,
    runnable: result.runnable === true,
    dirty: false,
  };
}

export function canLaunch(state: EditorState): boolean {
  return state.runnable && !state.dirty;
}
