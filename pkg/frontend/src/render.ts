/** Pure HTML renderers: state in, markup out. No DOM access here, so the
 * whole surface is unit-testable in node. */

import type { AllowlistDoc, ClientRecord, LogEntry, PendingDecision, RulesDoc } from "./types.js";

export function escapeHtml(value: unknown): string {
  return String(value ?? "")
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

/** Payload columns rendered per log kind (usage records, file-access
 * events, DNS query records). */
export const KIND_COLUMNS: Record<string, string[]> = {
  Usage: [
    "device_id",
    "created_time",
    "user_name",
    "remark",
    "device_name",
    "serial_number",
    "volume_no",
    "action",
  ],
  FileAccess: [
    "filename",
    "process_id",
    "process_name",
    "last_read_time",
    "last_write_time",
    "process_path",
  ],
  DnsQuery: [
    "host_name",
    "port_number",
    "request_time",
    "response_code",
    "a_record",
    "cname",
    "source_address",
    "destination_address",
  ],
  GateEvent: ["event", "device_key", "got_symbol"],
};

function cell(value: unknown): string {
  return `<td>${escapeHtml(value)}</td>`;
}

export function renderClients(clients: ClientRecord[], nowMs: number, staleAfterMs = 15000): string {
  if (clients.length === 0) return `<p class="empty">no clients yet</p>`;
  const rows = clients
    .map((client) => {
      const age = nowMs - Date.parse(client.last_heartbeat);
      const stale = Number.isFinite(age) && age > staleAfterMs;
      return (
        `<tr class="${stale ? "stale" : "fresh"}">` +
        cell(client.client_id) +
        cell(client.status) +
        cell(client.last_heartbeat) +
        cell(client.version) +
        cell(client.applied_allowlist_version) +
        cell(client.applied_ruleset_version) +
        `</tr>`
      );
    })
    .join("");
  return (
    `<table><thead><tr><th>client</th><th>status</th><th>last heartbeat</th>` +
    `<th>version</th><th>allowlist</th><th>rules</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>`
  );
}

export function renderAlarms(alarms: LogEntry[]): string {
  if (alarms.length === 0) return `<p class="empty">no alarms</p>`;
  const blocks = alarms
    .slice()
    .reverse()
    .map((alarm) => {
      const columns = KIND_COLUMNS[alarm.kind] ?? Object.keys(alarm.payload);
      const cells = columns
        .map(
          (name) =>
            `<div class="field"><span class="k">${escapeHtml(name)}</span>` +
            `<span class="v">${escapeHtml(alarm.payload[name])}</span></div>`,
        )
        .join("");
      return (
        `<article class="alarm kind-${escapeHtml(alarm.kind)}">` +
        `<header>${escapeHtml(alarm.kind)} &middot; ${escapeHtml(alarm.client_id)}` +
        ` &middot; #${escapeHtml(alarm.sequence)} &middot; ${escapeHtml(alarm.at)}</header>` +
        `${cells}</article>`
      );
    })
    .join("");
  return blocks;
}

export function renderDecisions(decisions: PendingDecision[], nowSec: number): string {
  const pending = decisions.filter((d) => d.status === "pending");
  if (pending.length === 0) return `<p class="empty">no pending decisions</p>`;
  const rows = pending
    .map((decision) => {
      const remaining = Math.max(0, Math.round(decision.expires_at - nowSec));
      const device = decision.device;
      return (
        `<tr>` +
        cell(decision.client_id) +
        cell(device["device_name"]) +
        cell((device["classes"] as string[] | undefined)?.join(", ")) +
        cell(device["full_serial"]) +
        `<td class="countdown">blocks in ${remaining}s</td>` +
        `<td><button data-action="allow" data-id="${escapeHtml(decision.id)}">Allow</button>` +
        `<button data-action="block" data-id="${escapeHtml(decision.id)}">Block</button></td>` +
        `</tr>`
      );
    })
    .join("");
  return (
    `<table><thead><tr><th>client</th><th>device</th><th>classes</th>` +
    `<th>serial</th><th>expiry</th><th></th></tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderAllowlistEditor(doc: AllowlistDoc, problems: string[] = []): string {
  const issues = problems.length
    ? `<ul class="problems">${problems.map((p) => `<li>${escapeHtml(p)}</li>`).join("")}</ul>`
    : "";
  return (
    `<p>version ${doc.version} &middot; ${doc.entries.length} entries</p>` +
    issues +
    `<textarea id="allowlist-json" rows="12" spellcheck="false">${escapeHtml(
      JSON.stringify(doc.entries, null, 2),
    )}</textarea>` +
    `<button data-action="save-allowlist">Save (base v${doc.version})</button>`
  );
}

export function renderRulesEditor(doc: RulesDoc, problems: string[] = []): string {
  const issues = problems.length
    ? `<ul class="problems">${problems.map((p) => `<li>${escapeHtml(p)}</li>`).join("")}</ul>`
    : "";
  return (
    `<p>version ${doc.version}</p>` +
    issues +
    `<textarea id="rules-json" rows="12" spellcheck="false">${escapeHtml(
      JSON.stringify(doc.body, null, 2),
    )}</textarea>` +
    `<button data-action="save-rules">Save (base v${doc.version})</button>`
  );
}

export function renderBanner(connected: boolean, lastError: string | null): string {
  if (connected) return "";
  return `<div class="banner">server unreachable${
    lastError ? `: ${escapeHtml(lastError)}` : ""
  } &mdash; showing cached view</div>`;
}
