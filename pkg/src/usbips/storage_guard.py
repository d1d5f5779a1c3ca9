"""Illegal-storage-access detection: no-execute on USB drives, target-path
watching, post-hoc remediation of blocked writes.

Path comparison is case-insensitive with both separator styles normalized;
prefix matching is whole-component, so ``C:\\Conf`` never matches
``C:\\Confidential\\x``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

from .bus import AccessKind
from .errors import RemediationFailed, ValidationError
from .logs import AuditLog, LogKind

_ABSOLUTE = re.compile(r"^([A-Za-z]:[\\/]|[\\/])")


@lru_cache(maxsize=8192)
def normalize_path(path: str) -> tuple[str, ...]:
    """Canonical component tuple: one separator style, case folded."""
    return tuple(part.casefold() for part in path.replace("/", "\\").split("\\") if part)


@dataclass(frozen=True)
class TargetPathSet:
    paths: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        for path in self.paths:
            if not _ABSOLUTE.match(path):
                raise ValidationError(f"target path must be absolute: {path!r}")
        # normalized once; matching_prefix runs on every file event
        object.__setattr__(
            self, "_prefixes", tuple((normalize_path(p), p) for p in self.paths)
        )

    def matching_prefix(self, filename: str) -> str | None:
        """The configured target that covers *filename*, or None."""
        parts = normalize_path(filename)
        for prefix, target in self._prefixes:
            if parts[: len(prefix)] == prefix:
                return target
        return None


@dataclass(frozen=True)
class FileAccessEvent:
    filename: str
    process_id: int
    process_name: str
    last_read_time: str | None
    last_write_time: str | None
    process_path: str

    def __post_init__(self):
        if self.last_read_time is None and self.last_write_time is None:
            raise ValidationError("file access event needs a read or write time")

    def to_json(self) -> dict:
        return {
            "filename": self.filename,
            "process_id": self.process_id,
            "process_name": self.process_name,
            "last_read_time": self.last_read_time,
            "last_write_time": self.last_write_time,
            "process_path": self.process_path,
        }


class VerdictKind(Enum):
    PASS = "pass"
    BLOCK_AND_ALARM = "block_and_alarm"


@dataclass(frozen=True)
class StorageVerdict:
    kind: VerdictKind
    matched_prefix: str | None = None

    @property
    def blocked(self) -> bool:
        return self.kind is VerdictKind.BLOCK_AND_ALARM


PASS = StorageVerdict(VerdictKind.PASS)


def evaluate(ev: FileAccessEvent, targets: TargetPathSet) -> StorageVerdict:
    """Pure verdict: block iff the filename sits under a target path."""
    prefix = targets.matching_prefix(ev.filename)
    if prefix is None:
        return PASS
    return StorageVerdict(VerdictKind.BLOCK_AND_ALARM, matched_prefix=prefix)


class SimFilesystem:
    """Materialized files of the simulated drives and host volumes."""

    def __init__(self):
        self._files: set[tuple[str, ...]] = set()

    def write(self, path: str) -> None:
        self._files.add(normalize_path(path))

    def exists(self, path: str) -> bool:
        return normalize_path(path) in self._files

    def delete(self, path: str) -> None:
        try:
            self._files.remove(normalize_path(path))
        except KeyError:
            raise RemediationFailed(f"no such simulated file: {path}") from None


class StorageDetector:
    """Wires no-execute enforcement, target evaluation, and remediation to
    the audit log.  ``evaluate`` itself stays pure."""

    def __init__(
        self,
        audit: AuditLog,
        targets: TargetPathSet,
        fs: SimFilesystem | None = None,
        no_execute: bool = True,
    ):
        self.audit = audit
        self.targets = targets
        self.fs = fs if fs is not None else SimFilesystem()
        self.no_execute = no_execute
        self.usb_drives: set[tuple[str, ...]] = set()

    def enforce_no_execute(self, drive: str) -> None:
        """Register a mounted USB drive: execute access under it is denied
        before target-path evaluation."""
        self.usb_drives.add(normalize_path(drive))

    def release_drive(self, drive: str) -> None:
        self.usb_drives.discard(normalize_path(drive))

    def _under_usb_drive(self, filename: str) -> bool:
        parts = normalize_path(filename)
        return any(parts[: len(d)] == d for d in self.usb_drives)

    def on_file_access(self, ev: FileAccessEvent, kind: AccessKind) -> StorageVerdict:
        """Route one observed file access: materialize writes, apply the
        no-execute policy, evaluate targets, remediate blocked writes.
        Every event lands in the log stream exactly once."""
        if kind is AccessKind.WRITE:
            self.fs.write(ev.filename)

        if (
            kind is AccessKind.EXECUTE
            and self.no_execute
            and self._under_usb_drive(ev.filename)
        ):
            self.audit.alarm(
                LogKind.FILE_ACCESS,
                {**ev.to_json(), "verdict": "execute_denied"},
            )
            return StorageVerdict(VerdictKind.BLOCK_AND_ALARM, matched_prefix=None)

        verdict = evaluate(ev, self.targets)
        if not verdict.blocked:
            self.audit.emit(LogKind.FILE_ACCESS, {**ev.to_json(), "verdict": "pass"})
            return verdict

        remediation = None
        if kind is AccessKind.WRITE:
            remediation = "deleted" if self.block_transfer(ev) else "missing"
        self.audit.alarm(
            LogKind.FILE_ACCESS,
            {
                **ev.to_json(),
                "verdict": "block_and_alarm",
                "matched_prefix": verdict.matched_prefix,
                "remediation": remediation,
            },
        )
        return verdict

    def block_transfer(self, ev: FileAccessEvent) -> bool:
        """Delete the simulated file a blocked write produced.  A missing
        file is logged, not fatal."""
        try:
            self.fs.delete(ev.filename)
            return True
        except RemediationFailed as exc:
            self.audit.emit(
                LogKind.SYSTEM,
                {"event": "remediation_failed", "filename": ev.filename, "detail": str(exc)},
            )
            return False
