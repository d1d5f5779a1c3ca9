"""Central management: client status monitoring, durable log ingestion,
versioned allowlist/rule distribution, and the operator decision inbox.

State lives in an embedded SQLite store; every acknowledged write is
committed before the caller sees a result, so acknowledged logs survive a
process kill.  Allowlist and rule updates are compare-and-swap on version.
"""

from __future__ import annotations

import hashlib
import json
import sqlite3
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from .access_control import allowlist_from_json
from .errors import NotFound, StorageFailure, ValidationError, VersionConflict
from .logs import Severity, entry_from_json
from .rules import ruleset_from_json

_SCHEMA = """
CREATE TABLE IF NOT EXISTS clients (
    client_id TEXT PRIMARY KEY,
    last_heartbeat TEXT NOT NULL,
    version TEXT NOT NULL,
    status TEXT NOT NULL,
    allowlist_version INTEGER NOT NULL,
    ruleset_version INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS logs (
    client_id TEXT NOT NULL,
    sequence INTEGER NOT NULL,
    at TEXT NOT NULL,
    kind TEXT NOT NULL,
    severity TEXT NOT NULL,
    payload TEXT NOT NULL,
    PRIMARY KEY (client_id, sequence)
);
CREATE TABLE IF NOT EXISTS documents (
    name TEXT PRIMARY KEY,
    version INTEGER NOT NULL,
    body TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS decisions (
    id TEXT PRIMARY KEY,
    client_id TEXT NOT NULL,
    device TEXT NOT NULL,
    created_at REAL NOT NULL,
    status TEXT NOT NULL,
    delivered INTEGER NOT NULL DEFAULT 0
);
"""


def decision_id(client_id: str, device_key: str) -> str:
    return hashlib.sha1(f"{client_id}\x00{device_key}".encode()).hexdigest()[:16]


class ManagementServer:
    """Single-node management center behind the wire API."""

    def __init__(
        self,
        storage_path: str | Path = ":memory:",
        decision_timeout: float = 300.0,
        clock: Callable[[], float] = time.time,
    ):
        self.storage_path = str(storage_path)
        self.decision_timeout = decision_timeout
        self.clock = clock
        # Threaded HTTP handlers share this connection behind ApiServer's
        # lock; single-threaded callers are unaffected.
        self._db = sqlite3.connect(self.storage_path, check_same_thread=False)
        self._db.executescript(_SCHEMA)
        if self.storage_path != ":memory:":
            self._db.execute("PRAGMA journal_mode=WAL")
            self._db.execute("PRAGMA synchronous=FULL")
        for name in ("allowlist", "ruleset"):
            self._db.execute(
                "INSERT OR IGNORE INTO documents (name, version, body) VALUES (?, 1, ?)",
                (name, "[]" if name == "allowlist" else "{}"),
            )
        self._db.commit()

    def close(self) -> None:
        self._db.close()

    def _now_iso(self) -> str:
        return datetime.fromtimestamp(self.clock(), tz=timezone.utc).strftime(
            "%Y-%m-%dT%H:%M:%SZ"
        )

    # -- heartbeats and decisions --------------------------------------

    def handle_heartbeat(self, doc: dict) -> dict:
        if not isinstance(doc, dict) or not str(doc.get("client_id", "")):
            raise ValidationError("heartbeat needs a client_id")
        try:
            client_id = str(doc["client_id"])
            allowlist_version = int(doc.get("allowlist_version", 0))
            ruleset_version = int(doc.get("ruleset_version", 0))
            status = str(doc.get("status", "Healthy"))
            version = str(doc.get("version", ""))
            pending = list(doc.get("pending_devices", []))
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"malformed heartbeat: {exc}") from exc

        self._db.execute(
            """INSERT INTO clients (client_id, last_heartbeat, version, status,
                                    allowlist_version, ruleset_version)
               VALUES (?, ?, ?, ?, ?, ?)
               ON CONFLICT(client_id) DO UPDATE SET
                   last_heartbeat=excluded.last_heartbeat,
                   version=excluded.version,
                   status=excluded.status,
                   allowlist_version=excluded.allowlist_version,
                   ruleset_version=excluded.ruleset_version""",
            (client_id, self._now_iso(), version, status, allowlist_version, ruleset_version),
        )
        for item in pending:
            device = item.get("device", {})
            key = str(device.get("device_key", ""))
            if not key:
                continue
            self._db.execute(
                """INSERT OR IGNORE INTO decisions (id, client_id, device, created_at, status)
                   VALUES (?, ?, ?, ?, 'pending')""",
                (decision_id(client_id, key), client_id, json.dumps(device), self.clock()),
            )
        self._expire_decisions()
        rows = self._db.execute(
            """SELECT id, device, status FROM decisions
               WHERE client_id = ? AND status != 'pending' AND delivered = 0
               ORDER BY created_at""",
            (client_id,),
        ).fetchall()
        resolutions = []
        for row in rows:
            device = json.loads(row[1])
            resolutions.append(
                {"id": row[0], "device_key": device.get("device_key", ""), "verdict": row[2]}
            )
            self._db.execute("UPDATE decisions SET delivered = 1 WHERE id = ?", (row[0],))
        self._db.commit()
        return {
            "allowlist_version": self._document_version("allowlist"),
            "ruleset_version": self._document_version("ruleset"),
            "decisions": resolutions,
        }

    def _expire_decisions(self) -> None:
        # Fail-closed: pending decisions past the timeout become Block.
        cutoff = self.clock() - self.decision_timeout
        self._db.execute(
            "UPDATE decisions SET status = 'block' WHERE status = 'pending' AND created_at <= ?",
            (cutoff,),
        )

    def list_decisions(self, status: str | None = None) -> list[dict]:
        self._expire_decisions()
        self._db.commit()
        query = "SELECT id, client_id, device, created_at, status, delivered FROM decisions"
        args: tuple = ()
        if status is not None:
            query += " WHERE status = ?"
            args = (status,)
        rows = self._db.execute(query + " ORDER BY created_at", args).fetchall()
        return [
            {
                "id": r[0],
                "client_id": r[1],
                "device": json.loads(r[2]),
                "created_at": r[3],
                "expires_at": r[3] + self.decision_timeout,
                "status": r[4],
                "delivered": bool(r[5]),
            }
            for r in rows
        ]

    def resolve_decision(self, decision_id_: str, verdict: str) -> dict:
        if verdict not in ("allow", "block"):
            raise ValidationError(f"verdict must be allow or block, got {verdict!r}")
        row = self._db.execute(
            "SELECT status FROM decisions WHERE id = ?", (decision_id_,)
        ).fetchone()
        if row is None:
            raise NotFound(f"no decision {decision_id_!r}")
        self._db.execute(
            "UPDATE decisions SET status = ?, delivered = 0 WHERE id = ?",
            (verdict, decision_id_),
        )
        self._db.commit()
        return {"id": decision_id_, "status": verdict}

    # -- log ingestion --------------------------------------------------

    def ingest_logs(self, batch: list[dict]) -> int:
        if not batch:
            raise ValidationError("empty batch")
        entries = [entry_from_json(doc) for doc in batch]
        client_ids = {e.client_id for e in entries}
        if len(client_ids) != 1:
            raise ValidationError(f"batch spans clients: {sorted(client_ids)}")
        accepted = 0
        try:
            before = self._db.total_changes
            for entry in entries:
                self._db.execute(
                    """INSERT OR IGNORE INTO logs
                       (client_id, sequence, at, kind, severity, payload)
                       VALUES (?, ?, ?, ?, ?, ?)""",
                    (
                        entry.client_id,
                        entry.sequence,
                        entry.at,
                        entry.kind.value,
                        entry.severity.value,
                        json.dumps(entry.payload),
                    ),
                )
            accepted = self._db.total_changes - before
            self._db.commit()
        except sqlite3.Error as exc:
            self._db.rollback()
            raise StorageFailure(str(exc)) from exc
        return accepted

    def list_logs(
        self,
        client_id: str | None = None,
        kind: str | None = None,
        severity: str | None = None,
        since_sequence: int | None = None,
        limit: int = 1000,
    ) -> list[dict]:
        query = "SELECT client_id, sequence, at, kind, severity, payload FROM logs"
        clauses, args = [], []
        if client_id is not None:
            clauses.append("client_id = ?")
            args.append(client_id)
        if kind is not None:
            clauses.append("kind = ?")
            args.append(kind)
        if severity is not None:
            clauses.append("severity = ?")
            args.append(severity)
        if since_sequence is not None:
            clauses.append("sequence > ?")
            args.append(since_sequence)
        if clauses:
            query += " WHERE " + " AND ".join(clauses)
        query += " ORDER BY client_id, sequence LIMIT ?"
        args.append(limit)
        rows = self._db.execute(query, tuple(args)).fetchall()
        return [
            {
                "client_id": r[0],
                "sequence": r[1],
                "at": r[2],
                "kind": r[3],
                "severity": r[4],
                "payload": json.loads(r[5]),
            }
            for r in rows
        ]

    def list_alarms(self, client_id: str | None = None, kind: str | None = None,
                    limit: int = 1000) -> list[dict]:
        return self.list_logs(
            client_id=client_id, kind=kind, severity=Severity.ALARM.value, limit=limit
        )

    def list_clients(self) -> list[dict]:
        rows = self._db.execute(
            """SELECT client_id, last_heartbeat, version, status,
                      allowlist_version, ruleset_version
               FROM clients ORDER BY client_id"""
        ).fetchall()
        return [
            {
                "client_id": r[0],
                "last_heartbeat": r[1],
                "version": r[2],
                "status": r[3],
                "applied_allowlist_version": r[4],
                "applied_ruleset_version": r[5],
            }
            for r in rows
        ]

    # -- versioned documents ---------------------------------------------

    def _document_version(self, name: str) -> int:
        row = self._db.execute(
            "SELECT version FROM documents WHERE name = ?", (name,)
        ).fetchone()
        return int(row[0])

    def _get_document(self, name: str) -> tuple[int, object]:
        row = self._db.execute(
            "SELECT version, body FROM documents WHERE name = ?", (name,)
        ).fetchone()
        return int(row[0]), json.loads(row[1])

    def _put_document(self, name: str, base_version: int, body: object) -> int:
        current = self._document_version(name)
        if int(base_version) != current:
            raise VersionConflict(f"{name} is at version {current}, put based on {base_version}")
        new_version = current + 1
        self._db.execute(
            "UPDATE documents SET version = ?, body = ? WHERE name = ?",
            (new_version, json.dumps(body), name),
        )
        self._db.commit()
        return new_version

    def get_allowlist(self) -> dict:
        version, entries = self._get_document("allowlist")
        return {"version": version, "entries": entries}

    def put_allowlist(self, base_version: int, entries: list[dict]) -> dict:
        allowlist_from_json(entries)  # full validation, including wildcards
        version = self._put_document("allowlist", base_version, entries)
        return {"version": version}

    def get_rules(self) -> dict:
        version, body = self._get_document("ruleset")
        return {"version": version, "body": body}

    def put_rules(self, base_version: int, body: dict) -> dict:
        ruleset_from_json(body)
        version = self._put_document("ruleset", base_version, body)
        return {"version": version}


class LocalTransport:
    """In-process transport used by hermetic scenarios and tests; the wire
    transport in http_api mirrors this surface."""

    def __init__(self, server: ManagementServer):
        self.server = server
        self.down = False

    def _check(self) -> None:
        if self.down:
            from .errors import ServerUnreachable

            raise ServerUnreachable("transport marked down")

    def heartbeat(self, doc: dict) -> dict:
        self._check()
        return self.server.handle_heartbeat(doc)

    def upload_logs(self, batch: list[dict]) -> int:
        self._check()
        return self.server.ingest_logs(batch)

    def get_allowlist(self) -> dict:
        self._check()
        return self.server.get_allowlist()

    def get_rules(self) -> dict:
        self._check()
        return self.server.get_rules()
