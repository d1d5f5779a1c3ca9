"""Illegal-network-usage detection: adapter snapshots, DHCP/DNS change
watching, resolver cross-checks, and configuration remediation."""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, replace
from enum import Enum
from types import MappingProxyType
from typing import Mapping

from .errors import ReferenceUnavailable, SnapshotMissing, ValidationError
from .logs import AuditLog, LogKind, tick_timestamp


def _check_ipv4(value: str, field_name: str) -> str:
    try:
        ipaddress.IPv4Address(value)
    except (ipaddress.AddressValueError, ValueError) as exc:
        raise ValidationError(f"{field_name} is not a dotted quad: {value!r}") from exc
    return value


@dataclass(frozen=True)
class AdapterConfig:
    adapter_id: str
    dhcp_server: str
    gateway: str
    dns_server: str
    lease_time: int

    def __post_init__(self):
        for name in ("dhcp_server", "gateway", "dns_server"):
            _check_ipv4(getattr(self, name), name)

    def to_json(self) -> dict:
        return {
            "adapter_id": self.adapter_id,
            "dhcp_server": self.dhcp_server,
            "gateway": self.gateway,
            "dns_server": self.dns_server,
            "lease_time": self.lease_time,
        }


def adapter_from_json(doc: dict) -> AdapterConfig:
    return AdapterConfig(
        adapter_id=doc["adapter_id"],
        dhcp_server=doc["dhcp_server"],
        gateway=doc["gateway"],
        dns_server=doc["dns_server"],
        lease_time=int(doc.get("lease_time", 3600)),
    )


@dataclass(frozen=True)
class ConfigSnapshot:
    """Immutable copy of every adapter's configuration at one tick."""

    taken_at: int
    configs: Mapping[str, AdapterConfig]

    def __post_init__(self):
        object.__setattr__(self, "configs", MappingProxyType(dict(self.configs)))


def snapshot(adapters: Mapping[str, AdapterConfig], taken_at: int) -> ConfigSnapshot:
    return ConfigSnapshot(taken_at=taken_at, configs=dict(adapters))


class ChangeVerdict(Enum):
    WATCH = "watch"
    IGNORE = "ignore"


def on_config_change(old: AdapterConfig, new: AdapterConfig) -> ChangeVerdict:
    """Watch DHCP or DNS server changes; gateway/lease churn is ignored."""
    if old.adapter_id != new.adapter_id:
        raise ValueError("config change must stay on one adapter")
    if old.dhcp_server != new.dhcp_server or old.dns_server != new.dns_server:
        return ChangeVerdict.WATCH
    return ChangeVerdict.IGNORE


@dataclass(frozen=True)
class DnsQueryRecord:
    host_name: str
    port_number: int
    request_time: str
    response_code: str
    a_record: str
    cname: str
    source_address: str
    destination_address: str

    def to_json(self) -> dict:
        return {
            "host_name": self.host_name,
            "port_number": self.port_number,
            "request_time": self.request_time,
            "response_code": self.response_code,
            "a_record": self.a_record,
            "cname": self.cname,
            "source_address": self.source_address,
            "destination_address": self.destination_address,
        }


@dataclass(frozen=True)
class ReferenceResolver:
    """One reference endpoint with a scenario-provided answer table."""

    name: str
    answers: Mapping[str, tuple[tuple[str, ...], str]]

    def __post_init__(self):
        object.__setattr__(self, "answers", MappingProxyType(dict(self.answers)))

    def resolve(self, host_name: str) -> tuple[tuple[str, ...], str] | None:
        return self.answers.get(host_name)


class LiveResolver:
    """Resolves through the real OS stack; manual runs only."""

    name = "live"

    def resolve(self, host_name: str) -> tuple[tuple[str, ...], str] | None:
        import socket

        try:
            infos = socket.getaddrinfo(host_name, None, family=socket.AF_INET)
        except OSError:
            return None
        records = tuple(sorted({i[4][0] for i in infos}))
        return (records, host_name) if records else None


@dataclass(frozen=True)
class ReferenceResolverSet:
    resolvers: tuple = ()

    def lookup(self, host_name: str) -> tuple[str, ...]:
        """Union of A records across every resolver that answers.

        Raises ``ReferenceUnavailable`` when no resolver has an answer.
        """
        merged: list[str] = []
        answered = False
        for resolver in self.resolvers:
            answer = resolver.resolve(host_name)
            if answer is None:
                continue
            answered = True
            merged.extend(answer[0])
        if not answered:
            raise ReferenceUnavailable(f"no reference answer for {host_name!r}")
        return tuple(dict.fromkeys(merged))


@dataclass(frozen=True)
class DnsComparison:
    same: bool
    local_a: str
    reference_a: tuple[str, ...]


def compare_dns(name: str, local: DnsQueryRecord, refs: ReferenceResolverSet) -> DnsComparison:
    """Same iff the locally observed A record appears in any reference
    resolver's answer; CNAME is carried as evidence only."""
    reference = refs.lookup(name)
    return DnsComparison(
        same=local.a_record in reference,
        local_a=local.a_record,
        reference_a=reference,
    )


def remediate(
    live: dict[str, AdapterConfig], adapter_id: str, snap: ConfigSnapshot
) -> bool:
    """Restore dhcp/dns settings from the snapshot.  Returns ``True`` when
    anything changed; idempotent.  ``SnapshotMissing`` when the adapter was
    not present at snapshot time."""
    if adapter_id not in snap.configs:
        raise SnapshotMissing(f"adapter {adapter_id!r} absent from snapshot")
    baseline = snap.configs[adapter_id]
    current = live[adapter_id]
    restored = replace(
        current, dhcp_server=baseline.dhcp_server, dns_server=baseline.dns_server
    )
    if restored == current:
        return False
    live[adapter_id] = restored
    return True


class NetworkDetector:
    """Stateful wrapper wiring snapshots, change watching, and DNS checks
    to the audit log."""

    PORT_BASE = 50000

    def __init__(
        self,
        audit: AuditLog,
        resolvers: ReferenceResolverSet,
        host_address: str = "192.168.51.60",
    ):
        self.audit = audit
        self.resolvers = resolvers
        self.host_address = host_address
        self.adapters: dict[str, AdapterConfig] = {}
        self.baseline: dict[str, AdapterConfig] = {}
        self.watched: set[str] = set()
        self._port_seq = 0

    def register_adapter(self, cfg: AdapterConfig, tick: int) -> None:
        """First sight of an adapter fixes its baseline for remediation."""
        self.adapters[cfg.adapter_id] = cfg
        self.baseline.setdefault(cfg.adapter_id, cfg)
        self.audit.emit(
            LogKind.SYSTEM,
            {"event": "adapter_registered", "config": cfg.to_json(), "tick": tick},
        )

    def unregister_adapter(self, adapter_id: str) -> None:
        self.adapters.pop(adapter_id, None)
        self.watched.discard(adapter_id)

    def snapshot(self, tick: int) -> ConfigSnapshot:
        return snapshot(self.baseline, tick)

    def on_net_config(self, new: AdapterConfig, tick: int) -> ChangeVerdict:
        old = self.adapters.get(new.adapter_id)
        if old is None:
            self.register_adapter(new, tick)
            return ChangeVerdict.IGNORE
        verdict = on_config_change(old, new)
        self.adapters[new.adapter_id] = new
        if verdict is ChangeVerdict.WATCH:
            self.watched.add(new.adapter_id)
        self.audit.emit(
            LogKind.SYSTEM,
            {
                "event": "config_change",
                "verdict": verdict.value,
                "adapter_id": new.adapter_id,
                "old": old.to_json(),
                "new": new.to_json(),
            },
        )
        return verdict

    def _next_port(self) -> int:
        self._port_seq += 1
        return self.PORT_BASE + self._port_seq

    def on_dns_answer(
        self, adapter_id: str, query: str, a_record: str, cname: str, tick: int
    ) -> DnsComparison | None:
        """Check one observed answer against the reference set.  Returns the
        comparison, or ``None`` when the verdict had to be deferred."""
        adapter = self.adapters.get(adapter_id)
        record = DnsQueryRecord(
            host_name=query,
            port_number=self._next_port(),
            request_time=tick_timestamp(tick),
            response_code="Ok",
            a_record=a_record,
            cname=cname,
            source_address=adapter.dns_server if adapter else "0.0.0.0",
            destination_address=self.host_address,
        )
        try:
            comparison = compare_dns(query, record, self.resolvers)
        except ReferenceUnavailable:
            self.audit.emit(
                LogKind.DNS_QUERY, {**record.to_json(), "verdict": "deferred"}
            )
            return None
        if comparison.same:
            self.audit.emit(LogKind.DNS_QUERY, {**record.to_json(), "verdict": "same"})
            return comparison
        self._remediate_and_alarm(adapter_id, record, comparison, tick)
        return comparison

    def _remediate_and_alarm(
        self,
        adapter_id: str,
        record: DnsQueryRecord,
        comparison: DnsComparison,
        tick: int,
    ) -> None:
        restored = False
        snapshot_missing = False
        if adapter_id in self.watched:
            try:
                restored = remediate(self.adapters, adapter_id, self.snapshot(tick))
            except SnapshotMissing:
                snapshot_missing = True
            self.watched.discard(adapter_id)
        self.audit.alarm(
            LogKind.DNS_QUERY,
            {
                **record.to_json(),
                "verdict": "differ",
                "reference_a": list(comparison.reference_a),
                "restored": restored,
                "snapshot_missing": snapshot_missing,
            },
        )
