/** Inline validation mirroring the server's rules, so obvious mistakes
 * never leave the form. The server remains the authority. */

import type { AllowlistEntry, RuleSetBody } from "./types.js";

export const FIELD_CAPS: Record<string, number> = {
  device_name: 512,
  serial_pattern: 512,
  volume_number: 32,
};

const DEVICE_CLASSES = new Set(["hid", "storage", "network", "other_usb"]);

/** Wildcard rule: non-empty, at most one '*', and only as the final char. */
export function validateSerialPattern(pattern: string): string | null {
  if (!pattern) return "serial pattern must be non-empty";
  const stars = (pattern.match(/\*/g) ?? []).length;
  if (stars > 1 || (stars === 1 && !pattern.endsWith("*"))) {
    return "wildcard permitted only as the final character";
  }
  return null;
}

export function validateEntry(entry: AllowlistEntry): string[] {
  const problems: string[] = [];
  if (!Number.isInteger(entry.device_id)) problems.push("device_id must be an integer");
  const patternProblem = validateSerialPattern(entry.serial_pattern);
  if (patternProblem) problems.push(patternProblem);
  if (!DEVICE_CLASSES.has(entry.device_class)) {
    problems.push(`unknown device_class ${JSON.stringify(entry.device_class)}`);
  }
  for (const [field, cap] of Object.entries(FIELD_CAPS)) {
    const value = (entry as unknown as Record<string, unknown>)[field];
    if (typeof value === "string" && value.length > cap) {
      problems.push(`${field} exceeds ${cap} characters`);
    }
  }
  return problems;
}

export function validateEntries(entries: AllowlistEntry[]): string[] {
  const problems: string[] = [];
  const seen = new Set<number>();
  entries.forEach((entry, i) => {
    for (const problem of validateEntry(entry)) problems.push(`entry ${i}: ${problem}`);
    if (seen.has(entry.device_id)) problems.push(`entry ${i}: duplicate device_id ${entry.device_id}`);
    seen.add(entry.device_id);
  });
  return problems;
}

export function validateRules(body: RuleSetBody): string[] {
  const problems: string[] = [];
  if (body.captcha_policy && body.captcha_policy.symbol_count !== 8) {
    problems.push("challenge length is fixed at 8 symbols");
  }
  for (const path of body.target_paths ?? []) {
    if (!/^([A-Za-z]:[\\/]|[\\/])/.test(path)) {
      problems.push(`target path must be absolute: ${JSON.stringify(path)}`);
    }
  }
  return problems;
}
