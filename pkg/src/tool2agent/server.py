"""Read-only JSON-over-HTTP routing endpoint.

GET /route?q=<text>&k=<int>[&explain=1]  -> query result JSON
GET /healthz                             -> index fingerprints
"""

from __future__ import annotations

import json
import logging
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .errors import Tool2AgentError
from .retrieval import Engine, QuerySpec, query_result_to_dict, run_query

logger = logging.getLogger(__name__)


class RoutingServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, engine: Engine | None, metadata: dict | None = None):
        super().__init__(address, _Handler)
        self.engine = engine
        self.metadata = metadata or {}


class _Handler(BaseHTTPRequestHandler):
    server: RoutingServer

    def log_message(self, fmt, *args):
        logger.info("%s - " + fmt, self.address_string(), *args)

    def _send(self, status: int, payload: dict):
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        url = urlparse(self.path)
        engine = self.server.engine
        if url.path == "/healthz":
            if engine is None:
                return self._send(503, {"status": "index not loaded"})
            return self._send(200, {"status": "ok", **engine.fingerprints(), "run": self.server.metadata})
        if url.path != "/route":
            return self._send(404, {"error": f"no route {url.path}"})
        if engine is None:
            return self._send(503, {"error": "index not loaded"})

        params = parse_qs(url.query)
        query = params.get("q", [""])[0]
        if not query.strip():
            return self._send(400, {"error": "missing query parameter 'q'"})
        raw_k = params.get("k", [str(engine.config.top_k)])[0]
        try:
            k = int(raw_k)
            if k < 1:
                raise ValueError
        except ValueError:
            return self._send(400, {"error": f"k must be a positive integer, got {raw_k!r}"})
        explain = params.get("explain", ["0"])[0].lower() in ("1", "true", "yes")

        spec = QuerySpec.direct(query, params.get("id", [""])[0])
        try:
            selections = run_query(spec, engine, k)
        except ValueError as exc:
            return self._send(400, {"error": str(exc)})
        except Tool2AgentError as exc:
            logger.exception("routing failed")
            return self._send(502, {"error": str(exc)})
        self._send(200, {**query_result_to_dict(spec, selections, explain), "run": self.server.metadata})


def make_server(engine: Engine | None, host: str = "127.0.0.1", port: int = 8080,
                metadata: dict | None = None) -> RoutingServer:
    return RoutingServer((host, port), engine, metadata)
