"""HTTP search service over an inverted index.

GET /search?q=...&k=5 returns {"hits": [{"doc_id", "score", "snippet"}, ...]}
with scores fixed to 6 decimals; GET /healthz returns "ok". Responses are
produced by the same serializer as in-process search, byte for byte.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .retrieval import (
    DEFAULT_TOP_K,
    InvertedIndex,
    RetrievalError,
    bm25_search,
    hits_to_json,
)

logger = logging.getLogger(__name__)


class SearchService:
    """A running HTTP search endpoint; stop() shuts it down cleanly."""

    def __init__(
        self,
        index: InvertedIndex,
        host: str = "127.0.0.1",
        port: int = 0,
        default_top_k: int = DEFAULT_TOP_K,
    ):
        handler = _make_handler(index, default_top_k)
        self._server = ThreadingHTTPServer((host, port), handler)
        self._thread = threading.Thread(
            target=self._server.serve_forever, name="ramp-forge-search", daemon=True
        )

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._server.server_address[:2]
        return str(host), int(port)

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> "SearchService":
        self._thread.start()
        logger.info("search service listening on %s", self.url)
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)


def serve_search(
    index: InvertedIndex, bind_address: str, default_top_k: int = DEFAULT_TOP_K
) -> SearchService:
    """Start a service on "host:port" (port 0 picks a free port)."""
    host, _, port_text = bind_address.rpartition(":")
    if not host or not port_text.isdigit():
        raise ValueError(f"bind address must be host:port, got {bind_address!r}")
    return SearchService(index, host, int(port_text), default_top_k).start()


def _make_handler(index: InvertedIndex, default_top_k: int):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # route to logging, not stderr
            logger.debug("%s %s", self.address_string(), fmt % args)

        def _reply(self, status: int, body: str, content_type: str) -> None:
            data = body.encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _reply_json(self, status: int, body: str) -> None:
            self._reply(status, body, "application/json; charset=utf-8")

        def _error(self, status: int, message: str) -> None:
            self._reply_json(status, json.dumps({"error": message}))

        def do_GET(self):  # noqa: N802 (http.server API)
            parsed = urlparse(self.path)
            if parsed.path == "/healthz":
                self._reply(200, "ok", "text/plain; charset=utf-8")
                return
            if parsed.path != "/search":
                self._error(404, f"no such path {parsed.path!r}")
                return
            params = parse_qs(parsed.query)
            if "q" not in params:
                self._error(400, "missing query parameter q")
                return
            query = params["q"][-1]
            top_k = default_top_k
            if "k" in params:
                try:
                    top_k = int(params["k"][-1])
                except ValueError:
                    self._error(400, f"k must be an integer, got {params['k'][-1]!r}")
                    return
            try:
                hits = bm25_search(index, query, top_k)
            except RetrievalError as exc:
                self._error(400, str(exc))
                return
            self._reply_json(200, hits_to_json(hits))

    return Handler
