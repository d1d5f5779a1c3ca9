"""Client daemon: routes bus notifications through classification, access
control, and the behavior detectors; keeps the daemon/observer watchdog
pair alive; and exchanges heartbeats, logs, and rules with the server.

Routing for every device is strictly classification, then access control,
then detection.  Events from a device that is not Allowed never reach a
detector.
"""

from __future__ import annotations

import json
import os
import sqlite3
from collections import deque
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .access_control import (
    AccessController,
    AccessDecision,
    Decider,
    VersionedAllowlist,
    allowlist_from_json,
)
from .bus import (
    AccessKind,
    ActionFired,
    BusEvent,
    DeviceAttached,
    DeviceRemoved,
    DnsAnswer,
    FileAccess,
    Keystroke,
    NetConfigChange,
    SimHost,
)
from .devices import DeviceClass, DeviceInfo, decode, info_to_json
from .drbg import Drbg
from .errors import AlreadyRunning, ServerUnreachable, UsbipsError
from .hid_gate import FilterResult, KeyboardGate, KeystrokeEvent
from .logs import AuditLog, LogKind, tick_timestamp
from .net_guard import NetworkDetector
from .rules import BehaviorRuleSet, ruleset_from_json
from .storage_guard import FileAccessEvent, SimFilesystem, StorageDetector
from .server import LocalTransport


class ClientStatus(Enum):
    HEALTHY = "Healthy"
    DEGRADED = "Degraded"


@dataclass(frozen=True)
class Heartbeat:
    client_id: str
    version: str
    at: str
    allowlist_version: int
    ruleset_version: int
    status: ClientStatus

    def to_json(self) -> dict:
        return {
            "client_id": self.client_id,
            "version": self.version,
            "at": self.at,
            "allowlist_version": self.allowlist_version,
            "ruleset_version": self.ruleset_version,
            "status": self.status.value,
        }


@dataclass
class ClientConfig:
    client_id: str
    server_endpoint: str | None = None
    heartbeat_interval: int = 5
    watchdog_interval: int = 5
    server_token: str = ""
    user_name: str = "operator"
    host_address: str = "192.168.51.60"
    log_path: str | None = None
    storage_path: str | None = None
    version: str = "0.1.0"

    def __post_init__(self):
        if not self.client_id:
            raise ValueError("client_id must be non-empty")
        if self.heartbeat_interval < 1 or self.watchdog_interval < 1:
            raise ValueError("intervals must be >= 1 tick")


def load_config(path: str | Path | None = None, env: dict | None = None) -> ClientConfig:
    """Config file (JSON, ClientConfig field names) with environment
    overrides for the server endpoint and client id."""
    env = os.environ if env is None else env
    doc: dict = {}
    if path is not None:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if env.get("USBIPS_SERVER_ENDPOINT"):
        doc["server_endpoint"] = env["USBIPS_SERVER_ENDPOINT"]
    if env.get("USBIPS_CLIENT_ID"):
        doc["client_id"] = env["USBIPS_CLIENT_ID"]
    return ClientConfig(**doc)


class ClientStore:
    """Embedded transactional store for the client's applied allowlist and
    its usage records; both survive a client restart."""

    def __init__(self, path: str | Path):
        self._db = sqlite3.connect(str(path))
        self._db.executescript(
            """
            CREATE TABLE IF NOT EXISTS allowlist (
                id INTEGER PRIMARY KEY CHECK (id = 1),
                version INTEGER NOT NULL,
                entries TEXT NOT NULL
            );
            CREATE TABLE IF NOT EXISTS usage_records (
                seq INTEGER PRIMARY KEY AUTOINCREMENT,
                record TEXT NOT NULL
            );
            CREATE TABLE IF NOT EXISTS meta (
                key TEXT PRIMARY KEY,
                value INTEGER NOT NULL
            );
            """
        )
        self._db.execute(
            "INSERT OR IGNORE INTO meta (key, value) VALUES ('audit_sequence', 0)"
        )
        self._db.commit()

    def next_sequence(self) -> int:
        row = self._db.execute(
            "UPDATE meta SET value = value + 1 WHERE key = 'audit_sequence' RETURNING value"
        ).fetchone()
        self._db.commit()
        return int(row[0])

    def load_allowlist(self) -> tuple[int, list[dict]] | None:
        row = self._db.execute("SELECT version, entries FROM allowlist WHERE id = 1").fetchone()
        if row is None:
            return None
        return int(row[0]), json.loads(row[1])

    def save_allowlist(self, version: int, entries: list[dict]) -> None:
        self._db.execute(
            """INSERT INTO allowlist (id, version, entries) VALUES (1, ?, ?)
               ON CONFLICT(id) DO UPDATE SET version=excluded.version,
                                             entries=excluded.entries""",
            (version, json.dumps(entries)),
        )
        self._db.commit()

    def add_usage(self, record: dict) -> None:
        self._db.execute(
            "INSERT INTO usage_records (record) VALUES (?)", (json.dumps(record),)
        )
        self._db.commit()

    def usage_records(self) -> list[dict]:
        rows = self._db.execute("SELECT record FROM usage_records ORDER BY seq").fetchall()
        return [json.loads(r[0]) for r in rows]

    def close(self) -> None:
        self._db.close()


@dataclass
class WatchdogPair:
    daemon_alive: bool = True
    observer_alive: bool = True
    last_seen_daemon: int = 0
    last_seen_observer: int = 0


def watchdog_tick(pair: WatchdogPair, now: int, interval: int) -> list[str]:
    """Restart any member unseen for more than one interval, provided its
    peer is alive to do the restarting."""
    daemon_stale = now - pair.last_seen_daemon > interval
    observer_stale = now - pair.last_seen_observer > interval
    daemon_was_alive = pair.daemon_alive
    observer_was_alive = pair.observer_alive
    restarted = []
    if daemon_stale and observer_was_alive:
        pair.daemon_alive = True
        pair.last_seen_daemon = now
        restarted.append("daemon")
    if observer_stale and daemon_was_alive:
        pair.observer_alive = True
        pair.last_seen_observer = now
        restarted.append("observer")
    return restarted


class Client:
    """One client instance bound to a simulated host."""

    def __init__(
        self,
        config: ClientConfig,
        host: SimHost,
        allowlist: VersionedAllowlist,
        ruleset: BehaviorRuleSet,
        decider: Decider | None = None,
        transport: LocalTransport | None = None,
        drbg: Drbg | None = None,
    ):
        self.config = config
        self.host = host
        self.ruleset = ruleset
        if transport is None and config.server_endpoint:
            from .http_api import HttpTransport

            transport = HttpTransport(config.server_endpoint, token=config.server_token)
        self.transport = transport
        self.store = ClientStore(config.storage_path) if config.storage_path else None
        self.audit = AuditLog(
            config.client_id,
            clock=lambda: tick_timestamp(host.clock),
            jsonl_path=config.log_path,
            sequencer=self.store.next_sequence if self.store else None,
        )
        if self.store is not None:
            saved = self.store.load_allowlist()
            if saved is not None and saved[0] > allowlist.version:
                allowlist = allowlist_from_json(saved[1], saved[0])
        self.acl = AccessController(
            allowlist, self.audit, config.user_name, decider, store=self.store
        )
        self.fs = SimFilesystem()
        self.gate = KeyboardGate(
            self.audit,
            drbg if drbg is not None else Drbg(),
            clock=lambda: host.clock,
            is_attached=host.is_attached,
        )
        self.storage = StorageDetector(
            self.audit, ruleset.target_paths, self.fs, ruleset.no_execute
        )
        self.net = NetworkDetector(self.audit, ruleset.resolvers, config.host_address)
        self.watchdog = WatchdogPair()
        self.infos: dict[str, DeviceInfo] = {}
        self.adapters_by_device: dict[str, str] = {}
        self.app_sink: list[KeystrokeEvent] = []
        self.suppressed_count = 0
        #: Bench hook: with detectors off, allowed devices' events are routed
        #: but skip every detector (the monitoring baseline).
        self.detectors_enabled = True
        self.bypassed_count = 0
        self.applied_allowlist_version = self.acl.allowlist.version
        self.applied_ruleset_version = ruleset.version
        self.online = False
        self.started = False
        self.stage_trace: deque[tuple[str, str]] = deque(maxlen=50_000)
        self._retry_at = 0
        self._fail_streak = 0

    # -- lifecycle ------------------------------------------------------

    def start(self) -> "Client":
        if self.config.client_id in self.host.clients:
            raise AlreadyRunning(f"client {self.config.client_id!r} already on this host")
        self.host.clients[self.config.client_id] = self
        now = self.host.clock
        # Observer comes up first and spawns the daemon; both arm watchdogs.
        self.watchdog.observer_alive = True
        self.watchdog.last_seen_observer = now
        self.audit.emit(LogKind.SYSTEM, {"event": "observer_started"})
        self.watchdog.daemon_alive = True
        self.watchdog.last_seen_daemon = now
        self.audit.emit(LogKind.SYSTEM, {"event": "daemon_started"})
        self.host.subscribe(self.on_bus_event)
        self.host.add_tick_hook(self.on_tick)
        self.started = True
        if self.transport is not None:
            try:
                self.sync()
            except ServerUnreachable:
                self.online = False
                self.audit.emit(
                    LogKind.SYSTEM, {"event": "server_unreachable", "mode": "offline"}
                )
        return self

    def status(self) -> ClientStatus:
        if self.transport is not None and not self.online:
            return ClientStatus.DEGRADED
        return ClientStatus.HEALTHY

    # -- bus routing ------------------------------------------------------

    def on_bus_event(self, event: BusEvent) -> None:
        if isinstance(event, DeviceAttached):
            self._on_plug(event)
        elif isinstance(event, DeviceRemoved):
            self._on_unplug(event)
        elif isinstance(event, ActionFired):
            self._on_action(event)

    def _on_plug(self, event: DeviceAttached) -> None:
        try:
            info = decode(event.descriptor)
        except UsbipsError as exc:
            self.audit.emit(
                LogKind.SYSTEM,
                {"event": "anomaly", "detail": str(exc), "label": event.label},
            )
            return
        self.stage_trace.append((info.device_key, "classify"))
        self.infos[info.device_key] = info
        decision = self.acl.on_device(info)
        self.stage_trace.append((info.device_key, "access_control"))
        if decision is AccessDecision.ALLOWED:
            self._activate_detectors(info, event)

    def _activate_detectors(self, info: DeviceInfo, event: DeviceAttached | None = None) -> None:
        if DeviceClass.HID in info.classes:
            if self.ruleset.captcha.enabled:
                try:
                    self.gate.on_new_keyboard(info.device_key)
                except UsbipsError:
                    pass  # queued behind the active challenge
            else:
                self.audit.emit(
                    LogKind.GATE_EVENT,
                    {"event": "challenge_skipped", "device_key": info.device_key},
                )
        if DeviceClass.STORAGE in info.classes and info.drive_letter:
            if self.ruleset.no_execute:
                self.storage.enforce_no_execute(info.drive_letter)
        if DeviceClass.NETWORK in info.classes and event is not None and event.adapter:
            self.net.register_adapter(event.adapter, self.host.clock)
            self.adapters_by_device[info.device_key] = event.adapter.adapter_id

    def _on_unplug(self, event: DeviceRemoved) -> None:
        info = self.infos.pop(event.device_key, None)
        self.gate.on_unplug(event.device_key)
        adapter_id = self.adapters_by_device.pop(event.device_key, None)
        if adapter_id is not None:
            self.net.unregister_adapter(adapter_id)
        if info is not None:
            if info.drive_letter:
                self.storage.release_drive(info.drive_letter)
            self.acl.on_unplug(info)

    def _on_action(self, event: ActionFired) -> None:
        key = event.device_key
        if self.acl.is_suppressed(key):
            self.suppressed_count += 1
            return
        if not self.detectors_enabled:
            self.bypassed_count += 1
            return
        self.stage_trace.append((key, "detect"))
        action = event.action
        if isinstance(action, Keystroke):
            ev = KeystrokeEvent(source_key=key, symbol=action.symbol, at=action.at)
            if self.gate.filter_keystroke(ev) is FilterResult.DELIVER:
                self.app_sink.append(ev)
        elif isinstance(action, FileAccess):
            stamp = tick_timestamp(action.at)
            ev = FileAccessEvent(
                filename=action.path,
                process_id=action.process_id,
                process_name=action.process_name,
                last_read_time=stamp if action.kind is not AccessKind.WRITE else None,
                last_write_time=stamp if action.kind is AccessKind.WRITE else None,
                process_path=action.process_path,
            )
            self.storage.on_file_access(ev, action.kind)
        elif isinstance(action, NetConfigChange):
            self.net.on_net_config(action.new_config, self.host.clock)
            self.adapters_by_device.setdefault(key, action.new_config.adapter_id)
        elif isinstance(action, DnsAnswer):
            adapter_id = self.adapters_by_device.get(key, "")
            self.net.on_dns_answer(
                adapter_id, action.query, action.a_record, action.cname, self.host.clock
            )

    def escalate_block(self, device_key: str) -> None:
        """Operator/detector escalation: block and unmount an attached,
        previously allowed device."""
        info = self.infos.get(device_key)
        if info is not None and info.drive_letter:
            self.storage.release_drive(info.drive_letter)
        self.acl.block(device_key, info)

    # -- periodic work -----------------------------------------------------

    def on_tick(self, now: int) -> None:
        if self.watchdog.daemon_alive:
            self.watchdog.last_seen_daemon = now
        if self.watchdog.observer_alive:
            self.watchdog.last_seen_observer = now
        for member in watchdog_tick(self.watchdog, now, self.config.watchdog_interval):
            self.audit.emit(LogKind.SYSTEM, {"event": "watchdog_restart", "member": member})
        if self.transport is not None and now % self.config.heartbeat_interval == 0:
            if now >= self._retry_at:
                try:
                    self.sync()
                except ServerUnreachable:
                    pass

    def heartbeat_doc(self) -> dict:
        doc = Heartbeat(
            client_id=self.config.client_id,
            version=self.config.version,
            at=tick_timestamp(self.host.clock),
            allowlist_version=self.applied_allowlist_version,
            ruleset_version=self.applied_ruleset_version,
            status=self.status(),
        ).to_json()
        doc["pending_devices"] = [
            {"device": info_to_json(info), "requested_at": tick_timestamp(self.host.clock)}
            for info in self.acl.pending.values()
        ]
        return doc

    def sync(self) -> tuple[int, int]:
        """One heartbeat exchange: push status and buffered logs, pull newer
        allowlist/rule versions and operator decisions."""
        if self.transport is None:
            raise ServerUnreachable("offline mode: no server configured")
        try:
            response = self.transport.heartbeat(self.heartbeat_doc())
            self._apply_decisions(response.get("decisions", []))
            if int(response.get("allowlist_version", 0)) > self.applied_allowlist_version:
                doc = self.transport.get_allowlist()
                self._apply_allowlist(doc)
            if int(response.get("ruleset_version", 0)) > self.applied_ruleset_version:
                doc = self.transport.get_rules()
                self._apply_rules(doc)
            self._upload_logs()
        except ServerUnreachable:
            self._fail_streak = min(self._fail_streak + 1, 4)
            self._retry_at = self.host.clock + self.config.heartbeat_interval * (
                2**self._fail_streak
            )
            self.online = False
            raise
        self._fail_streak = 0
        self._retry_at = 0
        self.online = True
        return self.applied_allowlist_version, self.applied_ruleset_version

    def _apply_decisions(self, decisions: list[dict]) -> None:
        for decision in decisions:
            key = decision.get("device_key", "")
            verdict = decision.get("verdict", "block")
            if key in self.acl.pending:
                info = self.acl.pending[key]
                outcome = self.acl.resolve_pending(key, accept=verdict == "allow")
                if outcome is AccessDecision.ALLOWED:
                    self._activate_detectors(info)
            elif verdict == "block" and key in self.infos:
                self.escalate_block(key)

    def _apply_allowlist(self, doc: dict) -> None:
        version = int(doc.get("version", 0))
        if version <= self.applied_allowlist_version:
            return  # never move backwards
        self.acl.set_allowlist(allowlist_from_json(doc.get("entries", []), version))
        self.applied_allowlist_version = version
        self.audit.emit(LogKind.SYSTEM, {"event": "allowlist_applied", "version": version})

    def _apply_rules(self, doc: dict) -> None:
        version = int(doc.get("version", 0))
        if version <= self.applied_ruleset_version:
            return
        ruleset = ruleset_from_json(doc.get("body", {}), version)
        self.ruleset = ruleset
        self.storage.targets = ruleset.target_paths
        self.storage.no_execute = ruleset.no_execute
        self.net.resolvers = ruleset.resolvers
        self.applied_ruleset_version = version
        self.audit.emit(LogKind.SYSTEM, {"event": "ruleset_applied", "version": version})

    def _upload_logs(self) -> None:
        while self.audit.pending:
            batch = self.audit.peek_batch(500)
            self.transport.upload_logs([entry.to_json() for entry in batch])
            self.audit.ack(len(batch))
