"""Review service: task queues and decision recording over local HTTP.

Wire protocol v1 (JSON over HTTP, documented in the README; the browser
UI is the reference client):

    GET  /api/v1/progress                      canonical progress report
    GET  /api/v1/queues                        queue summaries
    GET  /api/v1/queues/{id}/next?reviewer=R   lease + return next task
                                               (optional &skip=TASK_ID)
    POST /api/v1/decisions                     {task_id, reviewer_id, value}
    GET  /api/v1/columns/{id}/image            column image bytes

Tasks are leased, not assigned: a lease expires after a bounded duration
so an abandoned session never blocks the queue. Decisions are appended
to the project's decision log before they are acknowledged.
"""

from __future__ import annotations

import json
import mimetypes
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .consensus import JuryTask
from .errors import NotFoundError
from .project import ProjectState

WIRE_VERSION = 1
DEFAULT_LEASE_SECONDS = 300.0


class ReviewService:
    """Queue/lease/decision logic, independent of the HTTP layer."""

    def __init__(
        self,
        root: str | Path,
        *,
        lease_seconds: float = DEFAULT_LEASE_SECONDS,
        clock=time.monotonic,
    ):
        self._lock = threading.RLock()
        self._clock = clock
        self.lease_seconds = lease_seconds
        self.state = ProjectState.load(root)
        self._leases: dict[str, tuple[str, float]] = {}  # task -> (reviewer, expiry)

    def _lease_blocks(self, task_id: str, reviewer: str) -> bool:
        lease = self._leases.get(task_id)
        if lease is None:
            return False
        holder, expiry = lease
        if expiry <= self._clock():
            del self._leases[task_id]
            return False
        return holder != reviewer

    def next_task(self, queue_id: str, reviewer: str, skip_task_id: str | None = None):
        """Lease and return the lowest-ordered pending task, or None.

        A task already leased to the requesting reviewer is returned
        again (stable across page reloads). With skip_task_id, that
        task's lease is released and scanning starts after its position,
        wrapping around, so "skip" cycles rather than hides work.
        """
        with self._lock:
            pending = self.state.pending_tasks(queue_id)
            if skip_task_id is not None:
                lease = self._leases.get(skip_task_id)
                if lease and lease[0] == reviewer:
                    del self._leases[skip_task_id]
                order = [t.task_id for t in pending]
                if skip_task_id in order:
                    at = order.index(skip_task_id)
                    pending = pending[at + 1 :] + pending[: at + 1]
            for task in pending:
                if task.task_id == skip_task_id and len(pending) > 1:
                    continue
                if not self._lease_blocks(task.task_id, reviewer):
                    self._leases[task.task_id] = (
                        reviewer,
                        self._clock() + self.lease_seconds,
                    )
                    return task
            return None

    def submit(self, task_id: str, reviewer: str, value: str) -> dict:
        with self._lock:
            ack = self.state.submit(task_id, reviewer, value)
            self._leases.pop(task_id, None)
            remaining = self.state.pending_tasks(ack["queue_id"])
            ack["queue_pending"] = len(remaining)
            return ack

    def progress(self) -> str:
        with self._lock:
            return self.state.render_progress()

    def queue_summaries(self) -> list[dict]:
        with self._lock:
            return [
                {
                    "queue_id": v.queue_id,
                    "total": v.total,
                    "completed": v.completed,
                    "pending": v.pending,
                }
                for v in self.state.queue_views()
            ]

    def image(self, column_id: str) -> tuple[bytes, str]:
        with self._lock:
            path = self.state.paths.column_image(column_id)
        if path is None:
            raise NotFoundError(f"no image registered for column {column_id!r}")
        content_type = mimetypes.guess_type(str(path))[0] or "application/octet-stream"
        return path.read_bytes(), content_type

    def task_payload(self, task: JuryTask) -> dict:
        queue_id = self.state.task_index.get(task.task_id, "")
        has_image = self.state.paths.column_image(task.key.column) is not None
        return {
            "version": WIRE_VERSION,
            "task_id": task.task_id,
            "queue_id": queue_id,
            "kind": task.kind.value,
            "key": {
                "column": task.key.column,
                "ordinal": task.key.ordinal,
                "field": task.key.field,
            },
            "value_a": task.value_a,
            "value_b": task.value_b,
            "spans_a": [list(s) for s in task.spans_a],
            "spans_b": [list(s) for s in task.spans_b],
            "image_url": (
                f"/api/v1/columns/{task.key.column}/image" if has_image else None
            ),
        }


def _make_handler(service: ReviewService, ui_dir: Path | None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _send(self, status: int, body: bytes, content_type: str):
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.end_headers()
            self.wfile.write(body)

        def _send_json(self, status: int, doc) -> None:
            self._send(
                status,
                json.dumps(doc, ensure_ascii=False).encode("utf-8"),
                "application/json; charset=utf-8",
            )

        def _error(self, status: int, message: str) -> None:
            self._send_json(status, {"error": message})

        def do_OPTIONS(self):
            self._send(204, b"", "text/plain")

        def do_GET(self):
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            try:
                if parts[:2] == ["api", "v1"]:
                    self._api_get(parts[2:], parse_qs(url.query))
                else:
                    self._static(url.path)
            except NotFoundError as exc:
                self._error(404, str(exc))
            except Exception as exc:  # pragma: no cover - defensive
                self._error(500, f"internal error: {exc}")

        def _api_get(self, parts: list, query: dict) -> None:
            if parts == ["progress"]:
                self._send(
                    200, service.progress().encode("utf-8"), "application/json; charset=utf-8"
                )
            elif parts == ["queues"]:
                self._send_json(200, {"version": WIRE_VERSION, "queues": service.queue_summaries()})
            elif len(parts) == 3 and parts[0] == "queues" and parts[2] == "next":
                reviewer = (query.get("reviewer") or [""])[0]
                if not reviewer:
                    self._error(400, "reviewer query parameter is required")
                    return
                skip = (query.get("skip") or [None])[0]
                task = service.next_task(parts[1], reviewer, skip_task_id=skip)
                if task is None:
                    self._send_json(200, {"version": WIRE_VERSION, "task": None})
                else:
                    self._send_json(
                        200, {"version": WIRE_VERSION, "task": service.task_payload(task)}
                    )
            elif len(parts) == 3 and parts[0] == "columns" and parts[2] == "image":
                body, content_type = service.image(parts[1])
                self._send(200, body, content_type)
            else:
                self._error(404, f"no such endpoint: {'/'.join(parts)}")

        def _static(self, path: str) -> None:
            if ui_dir is None:
                self._error(404, "no UI bundle configured (start with --ui)")
                return
            rel = path.lstrip("/") or "index.html"
            target = (ui_dir / rel).resolve()
            if not str(target).startswith(str(ui_dir.resolve())) or not target.is_file():
                self._error(404, f"not found: {path}")
                return
            content_type = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
            self._send(200, target.read_bytes(), content_type)

        def do_POST(self):
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            if parts != ["api", "v1", "decisions"]:
                self._error(404, f"no such endpoint: {url.path}")
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                doc = json.loads(self.rfile.read(length).decode("utf-8"))
            except (ValueError, json.JSONDecodeError):
                self._error(400, "body must be a JSON object")
                return
            task_id = doc.get("task_id")
            reviewer = doc.get("reviewer_id")
            value = doc.get("value")
            if not task_id or not reviewer or value is None:
                self._error(400, "task_id, reviewer_id and value are required")
                return
            try:
                ack = service.submit(task_id, reviewer, value)
            except NotFoundError as exc:
                self._error(404, str(exc))
                return
            self._send_json(200, {"version": WIRE_VERSION, **ack})

    return Handler


def serve(
    root: str | Path,
    host: str = "127.0.0.1",
    port: int = 8765,
    *,
    ui_dir: str | Path | None = None,
    lease_seconds: float = DEFAULT_LEASE_SECONDS,
) -> ThreadingHTTPServer:
    """Create (but do not start) the HTTP server; caller runs serve_forever."""
    service = ReviewService(root, lease_seconds=lease_seconds)
    handler = _make_handler(service, Path(ui_dir) if ui_dir else None)
    server = ThreadingHTTPServer((host, port), handler)
    server.service = service  # type: ignore[attr-defined]
    return server


def serve_forever(
    root: str | Path,
    host: str = "127.0.0.1",
    port: int = 8765,
    *,
    ui_dir: str | Path | None = None,
) -> None:
    server = serve(root, host, port, ui_dir=ui_dir)
    actual_port = server.server_address[1]
    print(f"review service listening on http://{host}:{actual_port}/", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
