"""Allowlist-based access control: match decoded device information against
versioned allowlists, drive the user-decision flow for unknown devices, and
emit usage records.

Matching rule: a device is admitted by the first entry (lowest device_id)
of any of its class groups whose serial pattern matches the bus-qualified
serial -- exact, or prefix when the pattern ends in ``*`` -- and whose
volume number matches when the entry carries one.  Unknown devices are
never mounted without an explicit accept (fail-closed).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

from .devices import DeviceClass, DeviceInfo, info_to_json
from .errors import DeciderTimeout, NotAttached, ValidationError
from .logs import AuditLog, LogKind, Severity


def validate_serial_pattern(pattern: str) -> None:
    if not pattern:
        raise ValidationError("serial pattern must be non-empty")
    stars = pattern.count("*")
    if stars > 1 or (stars == 1 and not pattern.endswith("*")):
        raise ValidationError(
            f"wildcard permitted only as the final character: {pattern!r}"
        )


@dataclass(frozen=True)
class AllowlistEntry:
    device_id: int
    created_time: str
    device_name: str
    serial_pattern: str
    volume_number: str = ""
    device_class: DeviceClass = DeviceClass.STORAGE

    def __post_init__(self):
        validate_serial_pattern(self.serial_pattern)

    def to_json(self) -> dict:
        return {
            "device_id": self.device_id,
            "created_time": self.created_time,
            "device_name": self.device_name,
            "serial_pattern": self.serial_pattern,
            "volume_number": self.volume_number,
            "device_class": self.device_class.value,
        }


def entry_from_json(doc: dict) -> AllowlistEntry:
    try:
        return AllowlistEntry(
            device_id=int(doc["device_id"]),
            created_time=str(doc.get("created_time", "")),
            device_name=str(doc.get("device_name", "")),
            serial_pattern=str(doc["serial_pattern"]),
            volume_number=str(doc.get("volume_number", "")),
            device_class=DeviceClass(doc.get("device_class", "storage")),
        )
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"bad allowlist entry: {exc}") from exc


@dataclass(frozen=True)
class VersionedAllowlist:
    version: int = 0
    groups: tuple[tuple[DeviceClass, tuple[AllowlistEntry, ...]], ...] = ()

    @classmethod
    def from_entries(cls, entries: list[AllowlistEntry], version: int = 1) -> "VersionedAllowlist":
        seen: set[int] = set()
        for entry in entries:
            if entry.device_id in seen:
                raise ValidationError(f"duplicate device_id {entry.device_id}")
            seen.add(entry.device_id)
        grouped: dict[DeviceClass, list[AllowlistEntry]] = {}
        for entry in entries:
            grouped.setdefault(entry.device_class, []).append(entry)
        return cls(
            version=version,
            groups=tuple((cls_, tuple(group)) for cls_, group in grouped.items()),
        )

    def group(self, device_class: DeviceClass) -> tuple[AllowlistEntry, ...]:
        for cls_, entries in self.groups:
            if cls_ is device_class:
                return entries
        return ()

    def entries(self) -> list[AllowlistEntry]:
        return [entry for _, group in self.groups for entry in group]

    def to_json(self) -> list[dict]:
        return [entry.to_json() for entry in self.entries()]


def allowlist_from_json(entries: list[dict], version: int = 1) -> VersionedAllowlist:
    return VersionedAllowlist.from_entries([entry_from_json(e) for e in entries], version)


class AccessDecision(Enum):
    ALLOWED = "allowed"
    BLOCKED = "blocked"
    PENDING = "pending_user_decision"


def serial_matches(pattern: str, full_serial: str) -> bool:
    if pattern.endswith("*"):
        return full_serial.startswith(pattern[:-1])
    return pattern == full_serial


def bus_serial_of(info: DeviceInfo) -> str:
    """Bus-qualified serial used for matching; synthesized when the
    descriptor carried none, so match and append agree."""
    if info.full_serial:
        return info.full_serial
    return f"{info.bus_type.value.upper()}\\{info.vendor_id}&{info.product_id}\\{info.serial_number}"


def match(info: DeviceInfo, allowlist: VersionedAllowlist) -> AllowlistEntry | None:
    serial = bus_serial_of(info)
    candidates = [
        entry
        for cls in info.classes
        for entry in allowlist.group(cls)
        if serial_matches(entry.serial_pattern, serial)
        and (not entry.volume_number or entry.volume_number == info.volume_serial)
    ]
    if not candidates:
        return None
    return min(candidates, key=lambda e: e.device_id)


def append(info: DeviceInfo, allowlist: VersionedAllowlist, created_time: str = "") -> VersionedAllowlist:
    """Add exact-serial entries for the device's classes.  Re-appending a
    device that already has its exact entries is a no-op."""
    serial = bus_serial_of(info)
    existing = allowlist.entries()
    have = {
        (entry.device_class, entry.serial_pattern)
        for entry in existing
    }
    next_id = max((entry.device_id for entry in existing), default=0) + 1
    added = []
    for cls in sorted(info.classes, key=lambda c: c.value):
        if (cls, serial) in have:
            continue
        added.append(
            AllowlistEntry(
                device_id=next_id,
                created_time=created_time,
                device_name=info.device_name,
                serial_pattern=serial,
                volume_number=info.volume_serial,
                device_class=cls,
            )
        )
        next_id += 1
    if not added:
        return allowlist
    return VersionedAllowlist.from_entries(existing + added, allowlist.version + 1)


@dataclass
class UsageRecord:
    device_id: int
    created_time: str
    user_name: str
    remark: str
    device_name: str
    serial_number: str
    volume_no: str
    action: str

    def to_json(self) -> dict:
        return {
            "device_id": self.device_id,
            "created_time": self.created_time,
            "user_name": self.user_name,
            "remark": self.remark,
            "device_name": self.device_name,
            "serial_number": self.serial_number,
            "volume_no": self.volume_no,
            "action": self.action,
        }


#: Decision callback: returns True to accept, False to refuse, None to leave
#: the decision pending (e.g. escalated to the server console), or raises
#: DeciderTimeout which is treated as refuse.
Decider = Callable[[DeviceInfo], "bool | None"]


class AccessController:
    """Per-client controller owning decision state for attached devices."""

    def __init__(
        self,
        allowlist: VersionedAllowlist,
        audit: AuditLog,
        user_name: str = "operator",
        decider: Decider | None = None,
        store=None,
    ):
        self.allowlist = allowlist
        self.audit = audit
        self.user_name = user_name
        self.decider = decider
        self.store = store
        self.states: dict[str, AccessDecision] = {}
        self.mounted: dict[str, str] = {}
        self.pending: dict[str, DeviceInfo] = {}
        self._usage_seq = 0
        self._alarmed: set[str] = set()

    # -- usage records ------------------------------------------------

    def _usage(self, info: DeviceInfo, action: str, severity: Severity = Severity.INFO,
               remark: str = "") -> None:
        self._usage_seq += 1
        record = UsageRecord(
            device_id=self._usage_seq,
            created_time=self.audit.now(),
            user_name=self.user_name,
            remark=remark,
            device_name=info.device_name,
            serial_number=bus_serial_of(info),
            volume_no=info.volume_serial,
            action=action,
        )
        if self.store is not None:
            self.store.add_usage(record.to_json())
        self.audit.emit(LogKind.USAGE, record.to_json(), severity)

    @staticmethod
    def _with_drive(base: str, info: DeviceInfo) -> str:
        return f"{base}. {info.drive_letter}" if info.drive_letter else base

    # -- decision flow ------------------------------------------------

    def on_device(self, info: DeviceInfo, decider: Decider | None = None) -> AccessDecision:
        key = info.device_key
        entry = match(info, self.allowlist)
        if entry is not None:
            self._mount(info, matched=entry.device_id)
            return AccessDecision.ALLOWED
        self.states[key] = AccessDecision.PENDING
        self.pending[key] = info
        self.audit.emit(
            LogKind.DECISION,
            {"decision": "pending", "device": info_to_json(info)},
        )
        decide = decider or self.decider
        if decide is None:
            return AccessDecision.PENDING
        try:
            verdict = decide(info)
        except DeciderTimeout:
            verdict = False
        if verdict is None:
            return AccessDecision.PENDING
        return self.resolve_pending(key, accept=bool(verdict))

    def resolve_pending(self, device_key: str, accept: bool) -> AccessDecision:
        info = self.pending.pop(device_key, None)
        if info is None or self.states.get(device_key) is not AccessDecision.PENDING:
            raise NotAttached(f"no pending decision for {device_key!r}")
        if accept:
            self.set_allowlist(append(info, self.allowlist, self.audit.now()))
            self._mount(info, matched=None, accepted=True)
            return AccessDecision.ALLOWED
        self._block(info)
        return AccessDecision.BLOCKED

    def set_allowlist(self, allowlist: VersionedAllowlist) -> None:
        self.allowlist = allowlist
        if self.store is not None:
            self.store.save_allowlist(allowlist.version, allowlist.to_json())

    def _mount(self, info: DeviceInfo, matched: int | None, accepted: bool = False) -> None:
        key = info.device_key
        self.states[key] = AccessDecision.ALLOWED
        if info.drive_letter:
            self.mounted[key] = info.drive_letter
        self.audit.emit(
            LogKind.DECISION,
            {
                "decision": "allowed",
                "matched_entry": matched,
                "user_accepted": accepted,
                "device": info_to_json(info),
            },
        )
        self._usage(info, self._with_drive("attached device detected", info))

    def _block(self, info: DeviceInfo) -> None:
        key = info.device_key
        self.states[key] = AccessDecision.BLOCKED
        self.audit.emit(
            LogKind.DECISION,
            {"decision": "blocked", "device": info_to_json(info)},
        )
        if key not in self._alarmed:
            self._alarmed.add(key)
            self._usage(info, "device blocked", Severity.ALARM)
        if key in self.mounted:
            del self.mounted[key]
            self._usage(info, self._with_drive("removed device detected", info),
                        remark="unmounted")

    def block(self, device_key: str, info: DeviceInfo | None = None) -> None:
        """Block an attached device; detector escalations land here.  The
        bus layer refuses the mount and the router suppresses its events."""
        if device_key not in self.states:
            raise NotAttached(f"device {device_key!r} is not attached")
        if info is None:
            info = self.pending.get(device_key)
        if info is None:
            raise NotAttached(f"no device information for {device_key!r}")
        self.pending.pop(device_key, None)
        self._block(info)

    def on_unplug(self, info: DeviceInfo) -> None:
        key = info.device_key
        state = self.states.pop(key, None)
        self.pending.pop(key, None)
        self._alarmed.discard(key)
        if key in self.mounted:
            del self.mounted[key]
            self._usage(info, self._with_drive("removed device detected", info))
        elif state is AccessDecision.ALLOWED:
            self._usage(info, "removed device detected")

    def is_suppressed(self, device_key: str) -> bool:
        return self.states.get(device_key) is not AccessDecision.ALLOWED
