/** Typed client for the conduct service. All statistics come from the
 * service; this module only moves JSON. */

import type { FinalDecision, OutcomeEntry, SessionState } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(`HTTP ${status}: ${JSON.stringify(detail)}`);
  }
}

/** Stale version token or inactive-session mutation. */
export class ConflictError extends ApiError {}

async function request<T>(
  base: string,
  path: string,
  init?: RequestInit,
): Promise<T> {
  const res = await fetch(`${base}${path}`, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  if (!res.ok) {
    let detail: unknown = null;
    try {
      detail = (await res.json()).detail;
    } catch {
      detail = await res.text().catch(() => null);
    }
    if (res.status === 409) throw new ConflictError(res.status, detail);
    throw new ApiError(res.status, detail);
  }
  return (await res.json()) as T;
}

export interface CreateSessionOptions {
  seed?: number;
  config?: Record<string, number>;
  window?: Record<string, number>;
  mcmc?: Record<string, number>;
}

export class ConductClient {
  constructor(private base: string) {}

  createSession(opts: CreateSessionOptions = {}): Promise<SessionState> {
    return request(this.base, "/sessions", {
      method: "POST",
      body: JSON.stringify(opts),
    });
  }

  getState(id: string): Promise<SessionState> {
    return request(this.base, `/sessions/${id}/state`);
  }

  submitOutcomes(
    id: string,
    version: number,
    outcomes: OutcomeEntry[],
  ): Promise<SessionState> {
    return request(this.base, `/sessions/${id}/outcomes`, {
      method: "POST",
      body: JSON.stringify({ version, outcomes }),
    });
  }

  finalize(id: string, version: number): Promise<FinalDecision> {
    return request(this.base, `/sessions/${id}/finalize`, {
      method: "POST",
      body: JSON.stringify({ version }),
    });
  }
}
