/** Poll-and-render controller. The console holds no authoritative state:
 * every mutation goes through the versioned API and the next render comes
 * from server truth. One poll in flight at a time; a failed poll keeps the
 * cached view and raises the connectivity banner. */

import { ConsoleApi, VersionConflictError } from "./api.js";
import type {
  AllowlistDoc,
  AllowlistEntry,
  ClientRecord,
  LogEntry,
  PendingDecision,
  RuleSetBody,
  RulesDoc,
} from "./types.js";
import { validateEntries, validateRules } from "./validate.js";

export interface ConsoleState {
  connected: boolean;
  lastError: string | null;
  clients: ClientRecord[];
  alarms: LogEntry[];
  decisions: PendingDecision[];
  allowlist: AllowlistDoc;
  rules: RulesDoc;
}

export type SaveOutcome =
  | { ok: true; version: number }
  | { ok: false; conflict: boolean; problems: string[] };

export class ConsoleController {
  state: ConsoleState = {
    connected: false,
    lastError: null,
    clients: [],
    alarms: [],
    decisions: [],
    allowlist: { version: 0, entries: [] },
    rules: { version: 0, body: {} as RuleSetBody },
  };

  private polling = false;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private api: ConsoleApi,
    private onRender: (state: ConsoleState) => void = () => {},
    public pollIntervalMs = 2000,
  ) {}

  start(): void {
    void this.poll();
    this.timer = setInterval(() => void this.poll(), this.pollIntervalMs);
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  /** One refresh of the live panels; never lets two polls overlap. */
  async poll(): Promise<void> {
    if (this.polling) return;
    this.polling = true;
    try {
      const [clients, alarms, decisions] = await Promise.all([
        this.api.getClients(),
        this.api.getAlarms(),
        this.api.getDecisions(),
      ]);
      this.state = { ...this.state, connected: true, lastError: null, clients, alarms, decisions };
    } catch (error) {
      this.state = {
        ...this.state,
        connected: false,
        lastError: error instanceof Error ? error.message : String(error),
      };
    } finally {
      this.polling = false;
      this.onRender(this.state);
    }
  }

  /** Load the editable documents (called at startup and after conflicts). */
  async loadDocuments(): Promise<void> {
    try {
      const [allowlist, rules] = await Promise.all([
        this.api.getAllowlist(),
        this.api.getRules(),
      ]);
      this.state = { ...this.state, connected: true, allowlist, rules };
    } catch (error) {
      this.state = {
        ...this.state,
        connected: false,
        lastError: error instanceof Error ? error.message : String(error),
      };
    }
    this.onRender(this.state);
  }

  async resolveDecision(id: string, verdict: "allow" | "block"): Promise<void> {
    await this.api.resolveDecision(id, verdict);
    await this.poll();
  }

  /** PUT with the last-seen base version. On a conflict the server copy is
   * reloaded and reported; the operator's draft is never silently dropped
   * and never overwrites the other writer. */
  async saveAllowlist(entries: AllowlistEntry[]): Promise<SaveOutcome> {
    const problems = validateEntries(entries);
    if (problems.length > 0) return { ok: false, conflict: false, problems };
    try {
      const result = await this.api.putAllowlist(this.state.allowlist.version, entries);
      await this.loadDocuments();
      return { ok: true, version: result.version };
    } catch (error) {
      if (error instanceof VersionConflictError) {
        await this.loadDocuments();
        return {
          ok: false,
          conflict: true,
          problems: ["allowlist changed on the server; review and retry"],
        };
      }
      throw error;
    }
  }

  async saveRules(body: RuleSetBody): Promise<SaveOutcome> {
    const problems = validateRules(body);
    if (problems.length > 0) return { ok: false, conflict: false, problems };
    try {
      const result = await this.api.putRules(this.state.rules.version, body);
      await this.loadDocuments();
      return { ok: true, version: result.version };
    } catch (error) {
      if (error instanceof VersionConflictError) {
        await this.loadDocuments();
        return {
          ok: false,
          conflict: true,
          problems: ["rules changed on the server; review and retry"],
        };
      }
      throw error;
    }
  }
}
