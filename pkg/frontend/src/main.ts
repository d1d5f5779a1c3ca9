/** Browser bootstrap: wire the controller to the page. Configuration comes
 * from ?server=...&token=... or localStorage. */

import { ConsoleApi } from "./api.js";
import { ConsoleController, type ConsoleState } from "./console.js";
import {
  renderAlarms,
  renderAllowlistEditor,
  renderBanner,
  renderClients,
  renderDecisions,
  renderRulesEditor,
} from "./render.js";
import type { AllowlistEntry, RuleSetBody } from "./types.js";

function param(name: string, fallback: string): string {
  const fromQuery = new URLSearchParams(window.location.search).get(name);
  if (fromQuery !== null) {
    localStorage.setItem(`usbips-${name}`, fromQuery);
    return fromQuery;
  }
  return localStorage.getItem(`usbips-${name}`) ?? fallback;
}

function panel(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing panel #${id}`);
  return node;
}

const serverUrl = param("server", "http://127.0.0.1:8433");
const token = param("token", "");
const pollMs = Number(param("poll", "2000"));

const api = new ConsoleApi(serverUrl, token);
let editorProblems: { allowlist: string[]; rules: string[] } = { allowlist: [], rules: [] };
let editing = false;

function render(state: ConsoleState): void {
  panel("banner").innerHTML = renderBanner(state.connected, state.lastError);
  panel("clients").innerHTML = renderClients(state.clients, Date.now());
  panel("alarms").innerHTML = renderAlarms(state.alarms);
  panel("decisions").innerHTML = renderDecisions(state.decisions, Date.now() / 1000);
  if (!editing) {
    panel("allowlist").innerHTML = renderAllowlistEditor(state.allowlist, editorProblems.allowlist);
    panel("rules").innerHTML = renderRulesEditor(state.rules, editorProblems.rules);
  }
  panel("target").textContent = `${serverUrl} (poll ${pollMs} ms)`;
}

const controller = new ConsoleController(api, render, pollMs);

async function saveAllowlist(): Promise<void> {
  const text = (document.getElementById("allowlist-json") as HTMLTextAreaElement).value;
  let entries: AllowlistEntry[];
  try {
    entries = JSON.parse(text);
  } catch (error) {
    editorProblems.allowlist = [`not valid JSON: ${error}`];
    render(controller.state);
    return;
  }
  const outcome = await controller.saveAllowlist(entries);
  editorProblems.allowlist = outcome.ok ? [] : outcome.problems;
  render(controller.state);
}

async function saveRules(): Promise<void> {
  const text = (document.getElementById("rules-json") as HTMLTextAreaElement).value;
  let body: RuleSetBody;
  try {
    body = JSON.parse(text);
  } catch (error) {
    editorProblems.rules = [`not valid JSON: ${error}`];
    render(controller.state);
    return;
  }
  const outcome = await controller.saveRules(body);
  editorProblems.rules = outcome.ok ? [] : outcome.problems;
  render(controller.state);
}

document.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const action = target.dataset["action"];
  if (!action) return;
  if (action === "allow" || action === "block") {
    void controller.resolveDecision(target.dataset["id"] ?? "", action);
  } else if (action === "save-allowlist") {
    void saveAllowlist();
  } else if (action === "save-rules") {
    void saveRules();
  }
});

// Pause editor re-rendering while the operator is typing in a textarea.
document.addEventListener("focusin", (event) => {
  if ((event.target as HTMLElement).tagName === "TEXTAREA") editing = true;
});
document.addEventListener("focusout", (event) => {
  if ((event.target as HTMLElement).tagName === "TEXTAREA") editing = false;
});

void controller.loadDocuments();
controller.start();
