/** Shapes of the /api/v1 JSON documents (see docs/api.md). */

export interface ClientRecord {
  client_id: string;
  last_heartbeat: string;
  version: string;
  status: string;
  applied_allowlist_version: number;
  applied_ruleset_version: number;
}

export interface LogEntry {
  client_id: string;
  sequence: number;
  at: string;
  kind: string;
  severity: string;
  payload: Record<string, unknown>;
}

export interface AllowlistEntry {
  device_id: number;
  created_time: string;
  device_name: string;
  serial_pattern: string;
  volume_number: string;
  device_class: string;
}

export interface AllowlistDoc {
  version: number;
  entries: AllowlistEntry[];
}

export interface RuleSetBody {
  target_paths: string[];
  reference_resolvers: Array<{
    name: string;
    answers: Record<string, { a: string[]; cname: string }>;
  }>;
  captcha_policy: { enabled: boolean; symbol_count: number };
  no_execute: boolean;
}

export interface RulesDoc {
  version: number;
  body: RuleSetBody;
}

export interface PendingDecision {
  id: string;
  client_id: string;
  device: Record<string, unknown>;
  created_at: number;
  expires_at: number;
  status: string;
  delivered: boolean;
}
