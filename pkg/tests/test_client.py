"""Client daemon: lifecycle, watchdog pair, event routing, server sync."""

from __future__ import annotations

import random

import pytest

from usbips.access_control import AccessDecision, VersionedAllowlist, append
from usbips.bus import AccessKind, FileAccess, Keystroke, SimHost
from usbips.client import Client, ClientConfig, WatchdogPair, load_config, watchdog_tick
from usbips.devices import decode
from usbips.drbg import Drbg
from usbips.errors import AlreadyRunning
from usbips.hid_gate import GateState
from usbips.logs import LogKind
from usbips.net_guard import AdapterConfig
from usbips.rules import BehaviorRuleSet
from usbips.server import LocalTransport, ManagementServer, decision_id
from usbips.storage_guard import TargetPathSet

from conftest import badusb_descriptor, jetflash_descriptor, keyboard_descriptor, make_device


def file_access(path: str, kind: AccessKind, at: int) -> FileAccess:
    return FileAccess(
        path=path,
        kind=kind,
        process_name="explorer.exe",
        process_id=11076,
        process_path="C:\\Windows\\explorer.exe",
        at=at,
    )


def make_client(host, *, allowlist=None, rules=None, decider=None, transport=None,
                client_id="client-a", seed=1, **config_extra) -> Client:
    config = ClientConfig(client_id=client_id, **config_extra)
    client = Client(
        config,
        host,
        allowlist if allowlist is not None else VersionedAllowlist(),
        rules if rules is not None else BehaviorRuleSet(),
        decider=decider,
        transport=transport,
        drbg=Drbg(seed=seed),
    )
    return client.start()


def allow(*descriptors) -> VersionedAllowlist:
    allowlist = VersionedAllowlist()
    for desc in descriptors:
        allowlist = append(decode(desc), allowlist)
    return allowlist


class TestLifecycle:
    def test_start_sends_initial_heartbeat(self, host):
        server = ManagementServer()
        make_client(host, transport=LocalTransport(server))
        assert [c["client_id"] for c in server.list_clients()] == ["client-a"]

    def test_offline_start_is_fully_functional(self, host):
        client = make_client(host, allowlist=allow(jetflash_descriptor()))
        host.plug(make_device(jetflash_descriptor(), label="jetflash"))
        assert client.acl.mounted  # mounted without any server
        assert len(client.audit.pending) > 0  # logs buffered locally

    def test_unreachable_server_downgrades_to_offline(self, host):
        transport = LocalTransport(ManagementServer())
        transport.down = True
        client = make_client(host, transport=transport)
        assert not client.online
        notes = [e for e in client.audit.history if e.payload.get("event") == "server_unreachable"]
        assert len(notes) == 1

    def test_second_start_with_same_id_rejected(self, host):
        make_client(host)
        with pytest.raises(AlreadyRunning):
            make_client(host)

    def test_config_requires_positive_intervals(self):
        with pytest.raises(ValueError):
            ClientConfig(client_id="x", heartbeat_interval=0)

    def test_load_config_with_env_overrides(self, tmp_path):
        path = tmp_path / "client.json"
        path.write_text('{"client_id": "from-file", "heartbeat_interval": 7}')
        config = load_config(path, env={"USBIPS_CLIENT_ID": "from-env"})
        assert config.client_id == "from-env"
        assert config.heartbeat_interval == 7


class TestWatchdog:
    def test_killed_daemon_restarted_by_observer(self, host):
        client = make_client(host)
        client.watchdog.daemon_alive = False
        host.step(client.config.watchdog_interval * 2)
        assert client.watchdog.daemon_alive
        restarts = [
            e.payload for e in client.audit.history if e.payload.get("event") == "watchdog_restart"
        ]
        assert restarts == [{"event": "watchdog_restart", "member": "daemon"}]

    def test_killed_observer_restarted_by_daemon(self, host):
        client = make_client(host)
        client.watchdog.observer_alive = False
        host.step(client.config.watchdog_interval * 2)
        assert client.watchdog.observer_alive

    def test_both_alive_no_action(self):
        pair = WatchdogPair(last_seen_daemon=10, last_seen_observer=10)
        assert watchdog_tick(pair, 11, interval=5) == []

    def test_liveness_over_randomized_kill_schedules(self, host):
        interval = 3
        rng = random.Random(1234)
        for _ in range(100):
            host = SimHost()
            client = make_client(host, watchdog_interval=interval, heartbeat_interval=997)
            kill_at = rng.randrange(1, 30)
            member = rng.choice(["daemon", "observer"])
            down_since = None
            for tick in range(1, 60):
                host.step(tick)
                if tick == kill_at:
                    setattr(client.watchdog, f"{member}_alive", False)
                    down_since = tick
                if down_since is not None:
                    alive = client.watchdog.daemon_alive and client.watchdog.observer_alive
                    if alive:
                        assert tick - down_since <= 2 * interval
                        down_since = None
            assert down_since is None  # recovered within the run


class TestRouting:
    def test_composite_device_fans_out_to_both_detectors(self, host):
        desc = badusb_descriptor()
        script = (
            Keystroke("c", at=1),
            file_access("G:\\loot.txt", AccessKind.WRITE, at=2),
        )
        client = make_client(host, allowlist=allow(desc))
        host.plug(make_device(desc, script=script, label="badusb"))
        host.step(3)
        kinds = {e.kind for e in client.audit.history}
        assert LogKind.GATE_EVENT in kinds  # challenge issued for the keyboard half
        assert LogKind.FILE_ACCESS in kinds  # storage half observed

    def test_blocked_device_events_dropped_before_detectors(self, host):
        desc = badusb_descriptor()
        client = make_client(host, decider=lambda info: False)
        host.plug(make_device(desc, script=(Keystroke("x", at=1),), label="badusb"))
        host.step(5)
        assert client.suppressed_count == 1
        assert not [e for e in client.audit.history if e.kind is LogKind.GATE_EVENT]

    def test_pending_device_events_suppressed_until_decision(self, host):
        desc = badusb_descriptor()
        client = make_client(host)  # no decider: decision stays pending
        host.plug(make_device(desc, script=(Keystroke("x", at=1),), label="badusb"))
        host.step(2)
        assert client.suppressed_count == 1
        assert client.acl.states[decode(desc).device_key] is AccessDecision.PENDING

    def test_detector_alarm_carries_host_identity_and_timestamp(self, host):
        desc = jetflash_descriptor()
        rules = BehaviorRuleSet(target_paths=TargetPathSet(("F:\\",)))
        client = make_client(host, allowlist=allow(desc), rules=rules)
        host.plug(
            make_device(
                desc, script=(file_access("F:\\secret.txt", AccessKind.WRITE, at=1),),
                label="jetflash",
            )
        )
        host.step(2)
        alarm = [e for e in client.audit.alarms() if e.kind is LogKind.FILE_ACCESS][0]
        assert alarm.client_id == "client-a"
        assert alarm.at == "2021-01-01T00:00:01Z"

    def test_no_execute_enforced_for_mounted_drive(self, host):
        desc = jetflash_descriptor()
        client = make_client(host, allowlist=allow(desc))
        host.plug(
            make_device(
                desc, script=(file_access("F:\\evil.exe", AccessKind.EXECUTE, at=1),),
                label="jetflash",
            )
        )
        host.step(2)
        denied = [
            e for e in client.audit.alarms() if e.payload.get("verdict") == "execute_denied"
        ]
        assert len(denied) == 1

    def test_malformed_descriptor_logged_as_anomaly(self, host):
        import dataclasses

        client = make_client(host)
        bad = dataclasses.replace(jetflash_descriptor(), serial_number="", full_serial="X\\1")
        host.plug(make_device(bad, label="broken"))
        anomalies = [e for e in client.audit.history if e.payload.get("event") == "anomaly"]
        assert len(anomalies) == 1

    def test_pipeline_order_classify_then_acl_then_detect(self, host):
        desc = jetflash_descriptor()
        client = make_client(host, allowlist=allow(desc))
        host.plug(
            make_device(
                desc, script=(file_access("F:\\a", AccessKind.READ, at=1),), label="jetflash"
            )
        )
        host.step(2)
        key = decode(desc).device_key
        stages = [stage for k, stage in client.stage_trace if k == key]
        assert stages == ["classify", "access_control", "detect"]

    def test_escalated_block_suppresses_and_unmounts(self, host):
        desc = jetflash_descriptor()
        client = make_client(host, allowlist=allow(desc))
        host.plug(
            make_device(
                desc,
                script=(
                    file_access("F:\\a", AccessKind.READ, at=1),
                    file_access("F:\\b", AccessKind.READ, at=5),
                ),
                label="jetflash",
            )
        )
        host.step(2)
        client.escalate_block(decode(desc).device_key)
        host.step(6)
        assert client.suppressed_count == 1  # the tick-5 read never reached detectors
        unmounts = [
            e
            for e in client.audit.history
            if e.kind is LogKind.USAGE and e.payload["action"].startswith("removed")
        ]
        assert len(unmounts) == 1

    def test_network_device_registers_adapter_from_plug_event(self, host):
        from conftest import wifi_descriptor

        desc = wifi_descriptor()
        adapter = AdapterConfig("wlan0", "192.168.51.1", "192.168.51.1", "168.95.1.1", 3600)
        client = make_client(host, allowlist=allow(desc))
        host.plug(make_device(desc, label="wifi", adapter=adapter))
        assert client.net.adapters["wlan0"].dns_server == "168.95.1.1"
        assert client.net.baseline["wlan0"] == adapter


class TestSync:
    def test_allowlist_bump_applies_on_next_heartbeat(self, host):
        server = ManagementServer()
        client = make_client(host, transport=LocalTransport(server), heartbeat_interval=5)
        entries = allow(jetflash_descriptor()).to_json()
        server.put_allowlist(1, entries)
        host.step(5)
        assert client.applied_allowlist_version == 2
        host.plug(make_device(jetflash_descriptor(), label="jetflash"))
        assert client.acl.mounted

    def test_ruleset_bump_applies_atomically(self, host):
        server = ManagementServer()
        client = make_client(host, transport=LocalTransport(server))
        server.put_rules(1, {"target_paths": ["F:\\"], "no_execute": False})
        host.step(5)
        assert client.applied_ruleset_version == 2
        assert client.storage.targets.paths == ("F:\\",)
        assert client.storage.no_execute is False

    def test_same_versions_cause_no_state_change(self, host):
        server = ManagementServer()
        client = make_client(host, transport=LocalTransport(server))
        before = (client.applied_allowlist_version, client.applied_ruleset_version)
        host.step(10)
        assert (client.applied_allowlist_version, client.applied_ruleset_version) == before

    def test_offline_backlog_delivered_exactly_once_after_reconnect(self, host):
        server = ManagementServer()
        transport = LocalTransport(server)
        transport.down = True
        client = make_client(host, transport=transport, heartbeat_interval=5)
        for i in range(100):
            client.audit.emit(LogKind.SYSTEM, {"event": "offline-note", "i": i})
        host.step(40)  # heartbeats fail, backoff engaged
        assert server.list_logs(limit=10_000) == []
        transport.down = False
        host.step(200)
        notes = [
            r
            for r in server.list_logs(limit=10_000)
            if r["payload"].get("event") == "offline-note"
        ]
        assert len(notes) == 100
        sequences = [r["sequence"] for r in server.list_logs(limit=10_000)]
        assert sequences == sorted(set(sequences))  # gapless, no duplicates

    def test_sequences_gapless_at_server_after_sync(self, host):
        server = ManagementServer()
        client = make_client(host, transport=LocalTransport(server),
                             allowlist=allow(jetflash_descriptor()))
        host.plug(make_device(jetflash_descriptor(), label="jetflash"))
        host.step(20)
        rows = server.list_logs(client_id="client-a", limit=10_000)
        got = [r["sequence"] for r in rows]
        assert got == list(range(1, len(got) + 1))

    def test_server_resolution_allow_mounts_pending_device(self, host):
        server = ManagementServer()
        client = make_client(host, transport=LocalTransport(server), heartbeat_interval=5)
        desc = keyboard_descriptor()
        host.plug(make_device(desc, label="kb"))
        info = decode(desc)
        host.step(5)  # heartbeat carries the pending device
        assert server.list_decisions(status="pending")
        server.resolve_decision(decision_id("client-a", info.device_key), "allow")
        host.step(10)  # next heartbeat delivers the verdict
        assert client.acl.states[info.device_key] is AccessDecision.ALLOWED
        assert client.gate.state is GateState.CHALLENGE  # detector activated

    def test_server_resolution_block_fails_closed(self, host):
        server = ManagementServer(decision_timeout=0)  # expire immediately
        client = make_client(host, transport=LocalTransport(server), heartbeat_interval=5)
        desc = keyboard_descriptor()
        host.plug(make_device(desc, label="kb"))
        host.step(10)
        info = decode(desc)
        assert client.acl.states[info.device_key] is AccessDecision.BLOCKED
        blocked_alarms = [
            e for e in client.audit.alarms() if e.payload.get("action") == "device blocked"
        ]
        assert len(blocked_alarms) == 1

    def test_ruleset_parse_error_keeps_current_rules(self, host):
        server = ManagementServer()
        client = make_client(host, transport=LocalTransport(server))
        ok_body = {"target_paths": ["F:\\"]}
        server.put_rules(1, ok_body)

        class Tamper(LocalTransport):
            def get_rules(self):
                return {"version": 3, "body": {"captcha_policy": {"symbol_count": 3}}}

        client.transport = Tamper(server)
        with pytest.raises(Exception):
            client.sync()
        # nothing applied: version and rules unchanged
        assert client.applied_ruleset_version == 1
        assert client.ruleset.captcha.symbol_count == 8


class TestEndpointConfig:
    def test_config_endpoint_builds_a_wire_transport(self, host):
        from usbips.http_api import ApiServer, HttpTransport
        from usbips.server import ManagementServer

        api = ApiServer(ManagementServer(), token="cfg-tok").start()
        try:
            config = ClientConfig(
                client_id="wired", server_endpoint=api.address, server_token="cfg-tok"
            )
            client = Client(config, host, VersionedAllowlist(), BehaviorRuleSet(),
                            drbg=Drbg(seed=1)).start()
            assert isinstance(client.transport, HttpTransport)
            assert client.online
            assert [c["client_id"] for c in api.mgmt.list_clients()] == ["wired"]
        finally:
            api.close()
