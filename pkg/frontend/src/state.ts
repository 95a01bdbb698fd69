/** Editor state and the pure logic behind the playground UI.
 *
 * Everything here is synchronous and framework-free so it can be tested
 * directly: building the canonical request from the editor state, applying
 * and undoing suggestions, filtering unverified suggestions, counting
 * words for the client-side window check, and dropping stale responses.
 */

import type { GenerateRequest, Suggestion, WordRange } from "./types.js";

export interface EditorState {
  document: string;
  cursorStart: number;
  cursorEnd: number;
  /** Each chip is a set of alternatives; every chip must be satisfied. */
  keyphraseChips: string[][];
  wordRange: WordRange | null;
  numSuggestions: number;
  seed: number | null;
  suggestions: Suggestion[];
  /** Documents before each accepted insertion, newest last. */
  history: Array<{ document: string; cursorStart: number; cursorEnd: number }>;
  /** Monotonic id of the newest in-flight request; older responses are stale. */
  requestId: number;
  banner: string | null;
}

export function initialState(document = ""): EditorState {
  return {
    document,
    cursorStart: document.length,
    cursorEnd: document.length,
    keyphraseChips: [],
    wordRange: null,
    numSuggestions: 4,
    seed: null,
    suggestions: [],
    history: [],
    requestId: 0,
    banner: null,
  };
}

/** Parse a chip entry like "ring, rings, wedding ring" into alternatives. */
export function parseChip(raw: string): string[] {
  return raw
    .split(",")
    .map((part) => part.trim())
    .filter((part) => part.length > 0);
}

export function addChip(state: EditorState, raw: string): EditorState {
  const variants = parseChip(raw);
  if (variants.length === 0) return state;
  return { ...state, keyphraseChips: [...state.keyphraseChips, variants] };
}

export function removeChip(state: EditorState, index: number): EditorState {
  return {
    ...state,
    keyphraseChips: state.keyphraseChips.filter((_, i) => i !== index),
  };
}

export function setWordRange(state: EditorState, range: WordRange | null): EditorState {
  if (range && (range.min < 1 || range.max > 32 || range.min > range.max)) {
    return { ...state, banner: "word range must satisfy 1 <= min <= max <= 32" };
  }
  return { ...state, wordRange: range };
}

export function setSelection(state: EditorState, start: number, end: number): EditorState {
  const lo = Math.max(0, Math.min(start, state.document.length));
  const hi = Math.max(lo, Math.min(end, state.document.length));
  return { ...state, cursorStart: lo, cursorEnd: hi };
}

/** The canonical request for the current editor state.
 *
 * Prefix is everything before the cursor; a non-empty remainder after the
 * cursor makes this an insertion and rides along as the suffix. Field
 * order and shapes are fixed so fixtures can snapshot the serialization.
 */
export function buildGenerateRequest(state: EditorState): GenerateRequest {
  const prefix = state.document.slice(0, state.cursorStart);
  const suffix = state.document.slice(state.cursorEnd).trim();
  const request: GenerateRequest = {
    prefix,
    keyphrases: state.keyphraseChips.map((chip) => [...chip]),
    num_suggestions: state.numSuggestions,
  };
  if (suffix.length > 0) request.suffix = suffix;
  if (state.wordRange) request.word_length = { ...state.wordRange };
  if (state.seed !== null) request.seed = state.seed;
  return request;
}

/** Whitespace word count used for the client-side window recount. */
export function countWords(text: string): number {
  const trimmed = text.trim();
  if (trimmed.length === 0) return 0;
  return trimmed.split(/\s+/).length;
}

export function suggestionWithinRange(s: Suggestion, range: WordRange | null): boolean {
  if (!range) return true;
  const words = countWords(s.text);
  return words >= range.min && words <= range.max;
}

/** Record an outgoing request; returns the id responses must match. */
export function beginRequest(state: EditorState): [EditorState, number] {
  const id = state.requestId + 1;
  return [{ ...state, requestId: id, banner: null }, id];
}

/** Install a response, unless a newer request has been issued since.
 *
 * Suggestions the server did not mark satisfied are never displayed.
 */
export function receiveSuggestions(
  state: EditorState,
  requestId: number,
  suggestions: Suggestion[],
): EditorState {
  if (requestId !== state.requestId) return state; // stale response
  return { ...state, suggestions: suggestions.filter((s) => s.satisfied) };
}

export function receiveFailure(state: EditorState, requestId: number, banner: string): EditorState {
  if (requestId !== state.requestId) return state;
  return { ...state, suggestions: [], banner };
}

/** Insert the chosen suggestion verbatim at the cursor. */
export function acceptSuggestion(state: EditorState, index: number): EditorState {
  const chosen = state.suggestions[index];
  if (!chosen) return state;
  const before = state.document.slice(0, state.cursorStart);
  const after = state.document.slice(state.cursorEnd);
  const glueLeft = before.length > 0 && !/\s$/.test(before) ? " " : "";
  const inserted = glueLeft + chosen.text;
  const document = before + inserted + after;
  const cursor = before.length + inserted.length;
  return {
    ...state,
    history: [
      ...state.history,
      { document: state.document, cursorStart: state.cursorStart, cursorEnd: state.cursorEnd },
    ],
    document,
    cursorStart: cursor,
    cursorEnd: cursor,
    suggestions: [],
  };
}

export function undo(state: EditorState): EditorState {
  const last = state.history[state.history.length - 1];
  if (!last) return state;
  return {
    ...state,
    document: last.document,
    cursorStart: last.cursorStart,
    cursorEnd: last.cursorEnd,
    history: state.history.slice(0, -1),
    suggestions: [],
  };
}
