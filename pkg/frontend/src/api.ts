/** Typed client for the suggestion service. */

import type { ApiFailure, GenerateRequest, GenerateResponse } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public failure: ApiFailure) {
    super(failure.message);
  }
}

function describeDetail(detail: unknown): string {
  if (typeof detail === "string") return detail;
  if (detail && typeof detail === "object" && "message" in detail) {
    return String((detail as { message: unknown }).message);
  }
  return JSON.stringify(detail);
}

export async function requestSuggestions(
  baseUrl: string,
  request: GenerateRequest,
  fetchImpl: FetchLike = fetch,
): Promise<GenerateResponse> {
  let response: Response;
  try {
    response = await fetchImpl(`${baseUrl}/v1/generate`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
  } catch (err) {
    throw new ApiError({ kind: "network", message: `service unreachable: ${err}` });
  }
  if (response.ok) {
    return (await response.json()) as GenerateResponse;
  }
  const body = await response.json().catch(() => ({}));
  const detail = (body as { detail?: unknown }).detail;
  if (response.status === 422 && detail && typeof detail === "object" && "clause" in detail) {
    const d = detail as { clause: string; message?: string };
    throw new ApiError({
      kind: "unsatisfiable",
      clause: d.clause,
      message: d.message ?? `clause '${d.clause}' cannot be satisfied`,
    });
  }
  if (response.status === 400 || response.status === 422) {
    throw new ApiError({ kind: "bad_request", message: describeDetail(detail) });
  }
  if (response.status === 503) {
    throw new ApiError({ kind: "unavailable", message: "model not loaded" });
  }
  throw new ApiError({ kind: "network", message: `unexpected status ${response.status}` });
}

export function bannerText(failure: ApiFailure): string {
  switch (failure.kind) {
    case "unsatisfiable":
      return `Constraint cannot be satisfied: ${failure.clause} (${failure.message})`;
    case "bad_request":
      return `Request rejected: ${failure.message}`;
    case "unavailable":
      return "Service has no model loaded";
    case "network":
      return `Network problem: ${failure.message}`;
  }
}
