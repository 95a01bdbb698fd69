/** Wire types for the /v1 suggestion API. */

export interface WordRange {
  min: number;
  max: number;
}

export interface GenerateRequest {
  prefix: string;
  suffix?: string;
  keyphrases: string[][];
  word_length?: WordRange;
  num_suggestions: number;
  seed?: number;
}

export interface Suggestion {
  text: string;
  loglik: number;
  satisfied: boolean;
  tokens_per_second: number;
}

export interface GenerateResponse {
  suggestions: Suggestion[];
  horizon: number;
  seed: number;
}

export interface UnsatisfiableDetail {
  error: "unsatisfiable_constraint";
  clause: string;
  message: string;
}

export type ApiFailure =
  | { kind: "unsatisfiable"; clause: string; message: string }
  | { kind: "bad_request"; message: string }
  | { kind: "unavailable"; message: string }
  | { kind: "network"; message: string };
