"""Scenario files: schema validation, deterministic replay, and reports.

A scenario is a JSON document describing a device library, a plug/step
schedule, client policy (allowlist + rules), and the expected outcome.
Replays are fully deterministic given the file and the seed; see
docs/scenarios.md for the schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .access_control import VersionedAllowlist, allowlist_from_json
from .bus import (
    AccessKind,
    BehaviorAction,
    DnsAnswer,
    FileAccess,
    Keystroke,
    NetConfigChange,
    SimDevice,
    SimHost,
)
from .client import Client, ClientConfig
from .devices import DeviceInfo, decode, descriptor_from_json
from .drbg import Drbg
from .errors import DeciderTimeout, ScenarioInvalid, UsbipsError
from .logs import LogKind
from .net_guard import LiveResolver, ReferenceResolverSet, adapter_from_json
from .rules import BehaviorRuleSet, ruleset_from_json
from .server import LocalTransport, ManagementServer

_DECISIONS = ("accept", "refuse", "timeout", "defer")


def action_from_json(doc: dict, index: int, label: str) -> BehaviorAction:
    kind = doc.get("kind")
    at = doc.get("at")
    if not isinstance(at, int) or at < 0:
        raise ScenarioInvalid(f"device {label!r} script[{index}]: 'at' must be a tick >= 0")
    try:
        if kind == "keystroke":
            return Keystroke(symbol=doc["symbol"], at=at)
        if kind == "file_access":
            return FileAccess(
                path=doc["path"],
                kind=AccessKind(doc["access"]),
                process_name=doc.get("process_name", "explorer.exe"),
                process_id=int(doc.get("process_id", 0)),
                process_path=doc.get("process_path", ""),
                at=at,
            )
        if kind == "net_config":
            return NetConfigChange(new_config=adapter_from_json(doc["config"]), at=at)
        if kind == "dns_answer":
            return DnsAnswer(
                query=doc["query"],
                a_record=doc["a_record"],
                cname=doc.get("cname", ""),
                at=at,
            )
    except (KeyError, ValueError, UsbipsError) as exc:
        raise ScenarioInvalid(f"device {label!r} script[{index}]: {exc}") from exc
    raise ScenarioInvalid(f"device {label!r} script[{index}]: unknown kind {kind!r}")


@dataclass(frozen=True)
class CheckResult:
    name: str
    expected: object
    actual: object
    passed: bool

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "expected": self.expected,
            "actual": self.actual,
            "passed": self.passed,
        }


@dataclass
class ScenarioReport:
    scenario_name: str
    seed: int
    events_total: int
    alarms: list[dict]
    verdicts: dict[str, str]
    checks: list[CheckResult]
    summary: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        return {
            "scenario_name": self.scenario_name,
            "seed": self.seed,
            "passed": self.passed,
            "events_total": self.events_total,
            "alarms": self.alarms,
            "verdicts": self.verdicts,
            "checks": [c.to_json() for c in self.checks],
            "summary": self.summary,
        }

    def render(self) -> str:
        lines = [f"scenario {self.scenario_name} (seed {self.seed})"]
        for check in self.checks:
            mark = "PASS" if check.passed else "FAIL"
            lines.append(
                f"  [{mark}] {check.name}: expected {check.expected!r}, got {check.actual!r}"
            )
        lines.append(
            f"  {'PASS' if self.passed else 'FAIL'}: {self.events_total} events, "
            f"{len(self.alarms)} alarms"
        )
        return "\n".join(lines)


@dataclass
class Scenario:
    name: str
    seed: int
    devices: dict[str, SimDevice]
    decisions: dict[str, str]  # device label -> accept|refuse|timeout|defer
    schedule: list[dict]
    allowlist: VersionedAllowlist
    rules: BehaviorRuleSet
    client_config: ClientConfig
    expect: dict
    server: dict = field(default_factory=dict)


def load_scenario(source: str | Path | dict) -> Scenario:
    if isinstance(source, (str, Path)):
        try:
            doc = json.loads(Path(source).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ScenarioInvalid(f"{source}: not valid JSON: {exc}") from exc
    else:
        doc = source
    if not isinstance(doc, dict):
        raise ScenarioInvalid("scenario must be a JSON object")
    name = doc.get("name")
    if not name:
        raise ScenarioInvalid("scenario needs a 'name'")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise ScenarioInvalid("'seed' must be an integer")

    devices: dict[str, SimDevice] = {}
    decisions: dict[str, str] = {}
    for i, item in enumerate(doc.get("devices", [])):
        label = item.get("label")
        if not label:
            raise ScenarioInvalid(f"devices[{i}]: needs a 'label'")
        if label in devices:
            raise ScenarioInvalid(f"devices[{i}]: duplicate label {label!r}")
        if "descriptor" not in item:
            raise ScenarioInvalid(f"device {label!r}: needs a 'descriptor'")
        try:
            descriptor = descriptor_from_json(item["descriptor"])
            script = tuple(
                action_from_json(a, n, label) for n, a in enumerate(item.get("script", []))
            )
            adapter = adapter_from_json(item["adapter"]) if "adapter" in item else None
            devices[label] = SimDevice(
                descriptor=descriptor, script=script, label=label, adapter=adapter
            )
            decode(descriptor)  # surface malformed descriptors at load time
        except ScenarioInvalid:
            raise
        except UsbipsError as exc:
            raise ScenarioInvalid(f"device {label!r}: {exc}") from exc
        decision = item.get("decision", "timeout")
        if decision not in _DECISIONS:
            raise ScenarioInvalid(
                f"device {label!r}: decision must be one of {_DECISIONS}, got {decision!r}"
            )
        decisions[label] = decision

    schedule = doc.get("schedule", [])
    for i, op in enumerate(schedule):
        verb = op.get("op")
        if verb in ("plug", "unplug"):
            if op.get("device") not in devices:
                raise ScenarioInvalid(f"schedule[{i}]: unknown device {op.get('device')!r}")
        elif verb == "step":
            if not isinstance(op.get("until"), int):
                raise ScenarioInvalid(f"schedule[{i}]: step needs integer 'until'")
        else:
            raise ScenarioInvalid(f"schedule[{i}]: unknown op {verb!r}")

    try:
        allowlist = allowlist_from_json(doc.get("allowlist", []), version=1)
        rules = ruleset_from_json(doc.get("rules", {}), version=1)
        client_config = ClientConfig(**{"client_id": "client-a", **doc.get("client", {})})
    except (UsbipsError, TypeError, ValueError) as exc:
        raise ScenarioInvalid(str(exc)) from exc

    expect = doc.get("expect", {})
    unknown = set(expect) - set(_SUMMARY_KEYS)
    if unknown:
        raise ScenarioInvalid(f"unknown expectation keys: {sorted(unknown)}")
    return Scenario(
        name=name,
        seed=seed,
        devices=devices,
        decisions=decisions,
        schedule=schedule,
        allowlist=allowlist,
        rules=rules,
        client_config=client_config,
        expect=expect,
        server=doc.get("server", {}),
    )


_SUMMARY_KEYS = (
    "delivered_keystrokes",
    "gate_final",
    "alarm_counts",
    "device_decisions",
    "pending_decisions",
    "allowlist_entries_added",
    "allowlist_version_delta",
    "files_absent",
    "files_present",
    "watch_events",
    "dns_verdicts",
    "adapter_dns",
    "suppressed_events",
    "remediated_files",
)


class ScenarioRun:
    """One in-process replay: host, client, optional server."""

    def __init__(
        self,
        scenario: Scenario,
        seed: int | None = None,
        live_dns: bool = False,
        transport=None,
    ):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.host = SimHost()
        self.key_to_label = {
            dev.device_key: label for label, dev in scenario.devices.items()
        }
        rules = scenario.rules
        if live_dns:
            rules = BehaviorRuleSet(
                version=rules.version,
                target_paths=rules.target_paths,
                resolvers=ReferenceResolverSet(
                    tuple(rules.resolvers.resolvers) + (LiveResolver(),)
                ),
                captcha=rules.captcha,
                no_execute=rules.no_execute,
            )
        self.mgmt: ManagementServer | None = None
        if transport is None and scenario.server.get("enabled"):
            self.mgmt = ManagementServer(
                decision_timeout=scenario.server.get("decision_timeout", 300)
            )
            transport = LocalTransport(self.mgmt)
        self.client = Client(
            scenario.client_config,
            self.host,
            scenario.allowlist,
            rules,
            decider=self._decider,
            transport=transport,
            drbg=Drbg(seed=self.seed),
        ).start()
        self.initial_entries = len(scenario.allowlist.entries())

    def _decider(self, info: DeviceInfo) -> bool | None:
        label = self.key_to_label.get(info.device_key, "")
        policy = self.scenario.decisions.get(label, "timeout")
        if policy == "accept":
            return True
        if policy == "refuse":
            return False
        if policy == "defer":
            return None
        raise DeciderTimeout(f"no user answer for {label!r}")

    def run_schedule(self) -> None:
        for op in self.scenario.schedule:
            if op["op"] == "plug":
                self.host.plug(self.scenario.devices[op["device"]])
            elif op["op"] == "unplug":
                self.host.unplug(self.scenario.devices[op["device"]].device_key)
            else:
                self.host.step(op["until"])

    def close(self) -> None:
        if self.mgmt is not None:
            self.mgmt.close()
            self.mgmt = None

    def execute(self) -> ScenarioReport:
        self.run_schedule()
        report = self.report()
        self.close()
        return report

    def _summary(self) -> dict:
        client = self.client
        alarm_counts: dict[str, int] = {}
        for entry in client.audit.alarms():
            alarm_counts[entry.kind.value] = alarm_counts.get(entry.kind.value, 0) + 1
        verdicts = {}
        for key, label in self.key_to_label.items():
            state = client.acl.states.get(key)
            verdicts[label] = state.value if state is not None else "never_attached"
        dns_verdicts = {"same": 0, "differ": 0, "deferred": 0}
        for entry in client.audit.history:
            if entry.kind is LogKind.DNS_QUERY:
                verdict = entry.payload.get("verdict")
                if verdict in dns_verdicts:
                    dns_verdicts[verdict] += 1
        watch_events = sum(
            1
            for e in client.audit.history
            if e.payload.get("event") == "config_change" and e.payload.get("verdict") == "watch"
        )
        remediated = sum(
            1
            for e in client.audit.alarms()
            if e.kind is LogKind.FILE_ACCESS and e.payload.get("remediation") == "deleted"
        )
        pending_seen = sum(
            1
            for e in client.audit.history
            if e.kind is LogKind.DECISION and e.payload.get("decision") == "pending"
        )
        return {
            "delivered_keystrokes": len(client.app_sink),
            "gate_final": client.gate.state.value,
            "alarm_counts": alarm_counts,
            "device_decisions": verdicts,
            "pending_decisions": pending_seen,
            "allowlist_entries_added": len(client.acl.allowlist.entries())
            - self.initial_entries,
            "allowlist_version_delta": client.acl.allowlist.version
            - self.scenario.allowlist.version,
            "watch_events": watch_events,
            "dns_verdicts": dns_verdicts,
            "adapter_dns": {
                adapter_id: cfg.dns_server for adapter_id, cfg in client.net.adapters.items()
            },
            "suppressed_events": client.suppressed_count,
            "remediated_files": remediated,
        }

    def report(self) -> ScenarioReport:
        summary = self._summary()
        checks: list[CheckResult] = []
        for key, expected in self.scenario.expect.items():
            if key == "files_absent":
                actual = sorted(p for p in expected if self.client.fs.exists(p))
                checks.append(CheckResult(key, [], actual, actual == []))
            elif key == "files_present":
                actual = sorted(p for p in expected if not self.client.fs.exists(p))
                checks.append(CheckResult(key, [], actual, actual == []))
            elif key == "alarm_counts":
                actual_counts = {k: summary["alarm_counts"].get(k, 0) for k in expected}
                checks.append(
                    CheckResult(key, expected, actual_counts, actual_counts == expected)
                )
            else:
                actual = summary[key]
                checks.append(CheckResult(key, expected, actual, actual == expected))
        alarms = [
            {"kind": e.kind.value, "at": e.at, "payload": e.payload}
            for e in self.client.audit.alarms()
        ]
        return ScenarioReport(
            scenario_name=self.scenario.name,
            seed=self.seed,
            events_total=len(self.host.event_log),
            alarms=alarms,
            verdicts=summary["device_decisions"],
            checks=checks,
            summary=summary,
        )


def run_scenario(
    source: str | Path | dict, seed: int | None = None, live_dns: bool = False
) -> ScenarioReport:
    scenario = load_scenario(source)
    return ScenarioRun(scenario, seed=seed, live_dns=live_dns).execute()
