"""HTTP front end for the gateway: JSON endpoints, the newline-delimited
match stream, and optional static hosting for the operator console.

Runs on the stdlib threading server; every request is translated to the
gateway's in-process ApiRequest/ApiResponse pair, so the HTTP layer stays a
thin shim over logic that is tested without sockets.
"""

from __future__ import annotations

import json
import mimetypes
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, urlparse

from .gateway import ApiRequest, Gateway

STREAM_PATH = "/api/v1/events"
STREAM_POLL_S = 0.25


class ApiHttpServer:
    """Threaded HTTP server bound to one gateway instance."""

    def __init__(self, gateway: Gateway, host: str = "127.0.0.1", port: int = 0,
                 static_dir: Optional[str] = None):
        self.gateway = gateway
        self.static_dir = Path(static_dir).resolve() if static_dir else None
        self._stopping = threading.Event()
        handler = _make_handler(self)
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self.host, self.port = self.httpd.server_address[:2]
        self._thread: Optional[threading.Thread] = None

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever,
                                        name="vcsim-http", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stopping.set()
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)


def _make_handler(server: ApiHttpServer):
    gateway = server.gateway

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # keep the console quiet
            pass

        def _cors(self):
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")

        def _respond(self, status: int, body: bytes, content_type: str):
            self.send_response(status)
            self._cors()
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _handle_api(self, method: str):
            parsed = urlparse(self.path)
            query = {k: v[0] for k, v in parse_qs(parsed.query).items()}
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length) if length else b""
            resp = gateway.serve_api(ApiRequest(method, parsed.path, query, body))
            self._respond(resp.status, resp.body, resp.content_type)

        def _handle_stream(self):
            parsed = urlparse(self.path)
            query = {k: v[0] for k, v in parse_qs(parsed.query).items()}
            since = int(query.get("since", 0))
            self.send_response(200)
            self._cors()
            self.send_header("Content-Type", "application/x-ndjson")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Connection", "close")
            self.end_headers()
            sub = gateway.subscribe(since=since)
            try:
                while not server._stopping.is_set():
                    events = gateway.matcher.wait_for_matches(sub.cursor, STREAM_POLL_S)
                    if not events:
                        # heartbeat so a dead socket surfaces as an exception
                        self.wfile.write(b"\n")
                        self.wfile.flush()
                        continue
                    for event in events:
                        sub.cursor = event.match_id
                        line = json.dumps(event.to_dict(), sort_keys=True) + "\n"
                        self.wfile.write(line.encode())
                    self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError):
                pass  # client went away; that is a clean end of stream

        def _handle_static(self):
            if server.static_dir is None:
                self._respond(404, b'{"error": "not found"}', "application/json")
                return
            rel = urlparse(self.path).path.lstrip("/") or "index.html"
            target = (server.static_dir / rel).resolve()
            if not str(target).startswith(str(server.static_dir)) or not target.is_file():
                self._respond(404, b'{"error": "not found"}', "application/json")
                return
            ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
            self._respond(200, target.read_bytes(), ctype)

        def do_OPTIONS(self):
            self.send_response(204)
            self._cors()
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_GET(self):
            path = urlparse(self.path).path
            if path == STREAM_PATH:
                self._handle_stream()
            elif path.startswith("/api/"):
                self._handle_api("GET")
            else:
                self._handle_static()

        def do_POST(self):
            self._handle_api("POST")

        def do_DELETE(self):
            self._handle_api("DELETE")

    return Handler
