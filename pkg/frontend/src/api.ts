/** Typed client for the management server's /api/v1 endpoints. */

import type {
  AllowlistDoc,
  AllowlistEntry,
  ClientRecord,
  LogEntry,
  PendingDecision,
  RuleSetBody,
  RulesDoc,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

/** A versioned PUT raced another writer; reload and retry. */
export class VersionConflictError extends ApiError {
  constructor(message: string) {
    super(409, message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ConsoleApi {
  constructor(
    private baseUrl: string,
    private token: string = "",
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    const response = await this.fetchImpl(`${this.baseUrl}/api/v1${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (response.status === 409) {
      throw new VersionConflictError(await response.text());
    }
    if (!response.ok) {
      throw new ApiError(response.status, await response.text());
    }
    return (await response.json()) as T;
  }

  getClients(): Promise<ClientRecord[]> {
    return this.request("GET", "/clients");
  }

  getAlarms(limit = 200): Promise<LogEntry[]> {
    return this.request("GET", `/alarms?limit=${limit}`);
  }

  getDecisions(status?: string): Promise<PendingDecision[]> {
    const query = status ? `?status=${encodeURIComponent(status)}` : "";
    return this.request("GET", `/decisions${query}`);
  }

  resolveDecision(id: string, verdict: "allow" | "block"): Promise<{ id: string; status: string }> {
    return this.request("POST", `/decisions/${encodeURIComponent(id)}`, { verdict });
  }

  getAllowlist(): Promise<AllowlistDoc> {
    return this.request("GET", "/allowlist");
  }

  putAllowlist(baseVersion: number, entries: AllowlistEntry[]): Promise<{ version: number }> {
    return this.request("PUT", "/allowlist", { base_version: baseVersion, entries });
  }

  getRules(): Promise<RulesDoc> {
    return this.request("GET", "/rules");
  }

  putRules(baseVersion: number, body: RuleSetBody): Promise<{ version: number }> {
    return this.request("PUT", "/rules", { base_version: baseVersion, body });
  }
}
