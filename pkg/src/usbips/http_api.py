"""Wire API: stateless request/response over TCP with JSON bodies.

Endpoints (all under /api/v1, bearer-token auth when configured):

    POST /heartbeat            client status + pending devices
    POST /logs                 batch log upload, deduplicated
    GET|PUT /allowlist         versioned allowlist document
    GET|PUT /rules             versioned behavior rule set
    GET  /clients              client status monitor
    GET  /alarms               alarm feed (filter: client_id, kind, limit)
    GET  /logs                 log query (filter: client_id, kind, severity, limit)
    GET  /decisions            decision inbox (filter: status)
    POST /decisions/{id}       operator verdict {"verdict": "allow"|"block"}

Handlers delegate to ManagementServer under one lock; see docs/api.md for
request/response schemas.
"""

from __future__ import annotations

import json
import threading
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .errors import (
    NotFound,
    ServerUnreachable,
    StorageFailure,
    ValidationError,
    VersionConflict,
)
from .server import ManagementServer

_STATUS_OF = {
    ValidationError: 400,
    NotFound: 404,
    VersionConflict: 409,
    StorageFailure: 503,
}


class _Handler(BaseHTTPRequestHandler):
    server_version = "usbips/0.1"
    protocol_version = "HTTP/1.1"

    # quiet by default; the CLI enables logging with --verbose
    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        if self.server.verbose:  # type: ignore[attr-defined]
            super().log_message(format, *args)

    @property
    def mgmt(self) -> ManagementServer:
        return self.server.mgmt  # type: ignore[attr-defined]

    def _send(self, status: int, doc: object) -> None:
        body = json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self._cors()
        self.end_headers()
        self.wfile.write(body)

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Authorization, Content-Type")

    def _error(self, status: int, message: str) -> None:
        self._send(status, {"error": message})

    def _authorized(self) -> bool:
        token = self.server.token  # type: ignore[attr-defined]
        if not token:
            return True
        return self.headers.get("Authorization", "") == f"Bearer {token}"

    def _body(self) -> object:
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b"{}"
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"body is not valid JSON: {exc}") from exc

    def _dispatch(self, method: str) -> None:
        if not self._authorized():
            self._error(401, "missing or invalid bearer token")
            return
        url = urlparse(self.path)
        if not url.path.startswith("/api/v1/"):
            self._error(404, "unknown path")
            return
        route = url.path[len("/api/v1/") :].rstrip("/")
        query = {k: v[0] for k, v in parse_qs(url.query).items()}
        try:
            with self.server.lock:  # type: ignore[attr-defined]
                result = self._route(method, route, query)
        except tuple(_STATUS_OF) as exc:
            self._error(_STATUS_OF[type(exc)], str(exc))
        except Exception as exc:  # pragma: no cover - defensive
            self._error(500, f"internal error: {exc}")
        else:
            if result is None:
                self._error(404, f"no route {method} /api/v1/{route}")
            else:
                self._send(200, result)

    def _route(self, method: str, route: str, query: dict) -> object | None:
        mgmt = self.mgmt
        if method == "POST" and route == "heartbeat":
            return mgmt.handle_heartbeat(self._body())
        if method == "POST" and route == "logs":
            return {"accepted": mgmt.ingest_logs(self._body())}
        if method == "GET" and route == "allowlist":
            return mgmt.get_allowlist()
        if method == "PUT" and route == "allowlist":
            body = self._body()
            return mgmt.put_allowlist(body.get("base_version", -1), body.get("entries", []))
        if method == "GET" and route == "rules":
            return mgmt.get_rules()
        if method == "PUT" and route == "rules":
            body = self._body()
            return mgmt.put_rules(body.get("base_version", -1), body.get("body", {}))
        if method == "GET" and route == "clients":
            return mgmt.list_clients()
        if method == "GET" and route == "alarms":
            return mgmt.list_alarms(
                client_id=query.get("client_id"),
                kind=query.get("kind"),
                limit=int(query.get("limit", 1000)),
            )
        if method == "GET" and route == "logs":
            return mgmt.list_logs(
                client_id=query.get("client_id"),
                kind=query.get("kind"),
                severity=query.get("severity"),
                limit=int(query.get("limit", 1000)),
            )
        if method == "GET" and route == "decisions":
            return mgmt.list_decisions(status=query.get("status"))
        if method == "POST" and route.startswith("decisions/"):
            decision = route.split("/", 1)[1]
            return mgmt.resolve_decision(decision, self._body().get("verdict", ""))
        return None

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PUT(self):
        self._dispatch("PUT")

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()


class ApiServer:
    """ThreadingHTTPServer wrapper owning the management core."""

    def __init__(
        self,
        mgmt: ManagementServer,
        bind: str = "127.0.0.1",
        port: int = 0,
        token: str = "",
        verbose: bool = False,
    ):
        self.mgmt = mgmt
        self.httpd = ThreadingHTTPServer((bind, port), _Handler)
        self.httpd.mgmt = mgmt  # type: ignore[attr-defined]
        self.httpd.token = token  # type: ignore[attr-defined]
        self.httpd.lock = threading.Lock()  # type: ignore[attr-defined]
        self.httpd.verbose = verbose  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "ApiServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self.httpd.serve_forever()

    def close(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
        self.mgmt.close()


class HttpTransport:
    """Client-side transport speaking the wire API; mirrors LocalTransport."""

    def __init__(self, base_url: str, token: str = "", timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.token = token
        self.timeout = timeout

    def _request(self, method: str, path: str, body: object | None = None) -> object:
        data = json.dumps(body).encode() if body is not None else None
        request = urllib.request.Request(
            f"{self.base_url}/api/v1{path}", data=data, method=method
        )
        request.add_header("Content-Type", "application/json")
        if self.token:
            request.add_header("Authorization", f"Bearer {self.token}")
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                return json.loads(response.read())
        except urllib.error.HTTPError as exc:
            detail = exc.read().decode(errors="replace")
            if exc.code == 409:
                raise VersionConflict(detail) from exc
            if exc.code == 404:
                raise NotFound(detail) from exc
            raise ValidationError(f"{exc.code}: {detail}") from exc
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            raise ServerUnreachable(str(exc)) from exc

    def heartbeat(self, doc: dict) -> dict:
        return self._request("POST", "/heartbeat", doc)

    def upload_logs(self, batch: list[dict]) -> int:
        return self._request("POST", "/logs", batch)["accepted"]

    def get_allowlist(self) -> dict:
        return self._request("GET", "/allowlist")

    def get_rules(self) -> dict:
        return self._request("GET", "/rules")
