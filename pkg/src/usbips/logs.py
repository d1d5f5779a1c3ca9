"""Audit trail shared by every module: typed log entries with per-client
sequence numbers, an upload queue, and an optional append-only JSON-lines
mirror on disk."""

from __future__ import annotations

import json
from collections import deque
from functools import lru_cache
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Callable

#: Virtual-clock origin; one tick is one simulated second.
SIM_EPOCH = datetime(2021, 1, 1, tzinfo=timezone.utc)


@lru_cache(maxsize=8192)
def tick_timestamp(tick: int) -> str:
    """ISO 8601 UTC timestamp for a virtual-clock tick."""
    return (SIM_EPOCH + timedelta(seconds=tick)).strftime("%Y-%m-%dT%H:%M:%SZ")


class LogKind(Enum):
    USAGE = "Usage"
    FILE_ACCESS = "FileAccess"
    DNS_QUERY = "DnsQuery"
    GATE_EVENT = "GateEvent"
    DECISION = "Decision"
    SYSTEM = "System"


class Severity(Enum):
    INFO = "Info"
    ALARM = "Alarm"


@dataclass(frozen=True)
class LogEntry:
    client_id: str
    sequence: int
    at: str
    kind: LogKind
    payload: dict
    severity: Severity

    def to_json(self) -> dict:
        return {
            "client_id": self.client_id,
            "sequence": self.sequence,
            "at": self.at,
            "kind": self.kind.value,
            "payload": self.payload,
            "severity": self.severity.value,
        }


def entry_from_json(doc: dict) -> LogEntry:
    return LogEntry(
        client_id=doc["client_id"],
        sequence=int(doc["sequence"]),
        at=doc["at"],
        kind=LogKind(doc["kind"]),
        payload=doc.get("payload", {}),
        severity=Severity(doc.get("severity", "Info")),
    )


class AuditLog:
    """Assigns gapless sequence numbers and buffers entries for upload.

    The pending queue is bounded; when full, the oldest entry is evicted and
    the eviction itself is logged.  ``history`` keeps everything emitted in
    this process for report building.
    """

    MAX_PENDING = 100_000

    def __init__(
        self,
        client_id: str,
        clock: Callable[[], str],
        jsonl_path: str | Path | None = None,
        sequencer: Callable[[], int] | None = None,
    ):
        self.client_id = client_id
        self._clock = clock
        self._seq = 0
        self._sequencer = sequencer
        self.history: list[LogEntry] = []
        self.pending: deque[LogEntry] = deque()
        self._jsonl_path = Path(jsonl_path) if jsonl_path else None
        self._evicting = False

    def now(self) -> str:
        return self._clock()

    def emit(self, kind: LogKind, payload: dict, severity: Severity = Severity.INFO) -> LogEntry:
        # A persistent sequencer keeps numbering monotone across client
        # restarts, so the server's dedup never eats a new session's logs.
        self._seq = self._sequencer() if self._sequencer is not None else self._seq + 1
        entry = LogEntry(self.client_id, self._seq, self._clock(), kind, payload, severity)
        self.history.append(entry)
        evicted = 0
        while len(self.pending) >= self.MAX_PENDING:
            self.pending.popleft()
            evicted += 1
        self.pending.append(entry)
        if self._jsonl_path is not None:
            with self._jsonl_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry.to_json()) + "\n")
        if evicted and not self._evicting:
            self._evicting = True
            try:
                self.emit(LogKind.SYSTEM, {"event": "log_evicted", "count": evicted})
            finally:
                self._evicting = False
        return entry

    def alarm(self, kind: LogKind, payload: dict) -> LogEntry:
        return self.emit(kind, payload, Severity.ALARM)

    def alarms(self) -> list[LogEntry]:
        return [e for e in self.history if e.severity is Severity.ALARM]

    # Upload protocol: peek a batch, send, then ack what the server took.
    # Leaving entries queued until the ack gives at-least-once delivery.

    def peek_batch(self, limit: int = 500) -> list[LogEntry]:
        return [self.pending[i] for i in range(min(limit, len(self.pending)))]

    def ack(self, count: int) -> None:
        for _ in range(min(count, len(self.pending))):
            self.pending.popleft()
