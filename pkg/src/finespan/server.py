"""HTTP backend for the annotation workbench.

Serves tasks (one image reference, one prompt, a fixed number of candidate
responses) and accepts span annotations per response. Accepted annotations are
persisted to a single JSONL file through an atomic temp-file rename, and the
export endpoint emits the canonical corpus JSONL of every completed task, so
anything the API accepts ingests cleanly downstream.

Routes:
    GET  /api/tasks?status=pending|done|all   task summaries
    GET  /api/tasks/{id}                      one task with its annotations
    POST /api/tasks/{id}/annotations          submit spans (?overwrite=true to redo)
    GET  /api/export                          canonical corpus JSONL of done tasks
    GET  /...                                 static UI files when configured
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Sequence
from urllib.parse import parse_qs, urlparse

from . import corpus
from .corpus import AnnotatedResponse, Label, SpanAnnotation

DEFAULT_RESPONSES_PER_TASK = 4

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".json": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
}

_FALLBACK_PAGE = b"""<!doctype html>
<html><head><meta charset="utf-8"><title>annotation backend</title></head>
<body><h1>Annotation backend is running</h1>
<p>No UI bundle is configured. Point --ui-dir at a built frontend, or use the
JSON API directly: <code>GET /api/tasks</code>, <code>GET /api/tasks/{id}</code>,
<code>POST /api/tasks/{id}/annotations</code>, <code>GET /api/export</code>.</p>
</body></html>
"""


@dataclass
class TaskRecord:
    """One annotation task: an image, a prompt, and its candidate responses."""

    task_id: str
    image_ref: str
    prompt: str
    responses: list[str]
    split: str = "train"


class SubmissionError(ValueError):
    """Invalid annotation payload; carries per-response violations."""

    def __init__(self, violations: list[dict]):
        super().__init__("invalid annotations")
        self.violations = violations


class TaskConflict(RuntimeError):
    """Task already completed and overwrite was not requested."""


def load_tasks(path: str | Path, responses_per_task: int = DEFAULT_RESPONSES_PER_TASK) -> list[TaskRecord]:
    tasks: list[TaskRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            obj = json.loads(line)
            for key in ("task_id", "image_ref", "prompt"):
                if key not in obj or not isinstance(obj[key], str):
                    raise ValueError(f"line {line_no}: missing or non-string field {key!r}")
            responses = obj.get("responses")
            if not isinstance(responses, list) or not all(isinstance(r, str) for r in responses):
                raise ValueError(f"line {line_no}: 'responses' must be a list of strings")
            if len(responses) != responses_per_task:
                raise ValueError(
                    f"line {line_no}: task {obj['task_id']!r} has {len(responses)} "
                    f"responses, expected {responses_per_task}"
                )
            if obj["task_id"] in seen:
                raise ValueError(f"line {line_no}: duplicate task id {obj['task_id']!r}")
            seen.add(obj["task_id"])
            tasks.append(
                TaskRecord(
                    obj["task_id"],
                    obj["image_ref"],
                    obj["prompt"],
                    responses,
                    obj.get("split", "train"),
                )
            )
    return tasks


class TaskStore:
    """Tasks plus their submitted annotations, persisted as one JSONL file.

    All writes go through one lock and an atomic rename, so a crash mid-POST
    never leaves a half-written file.
    """

    def __init__(self, tasks: Sequence[TaskRecord], out_path: str | Path):
        self.tasks = {t.task_id: t for t in tasks}
        self.order = [t.task_id for t in tasks]
        self.out_path = Path(out_path)
        self._lock = threading.Lock()
        self._annotations: dict[str, list[list[SpanAnnotation]]] = {}
        if self.out_path.exists():
            self._load_existing()

    def _load_existing(self) -> None:
        with open(self.out_path, encoding="utf-8") as fh:
            for line in fh:
                obj = json.loads(line)
                task_id = obj["task_id"]
                if task_id not in self.tasks:
                    continue
                self._annotations[task_id] = [
                    [SpanAnnotation(s["start"], s["end"], Label(s["label"])) for s in spans]
                    for spans in obj["annotations"]
                ]

    def status(self, task_id: str) -> str:
        return "done" if task_id in self._annotations else "pending"

    def summaries(self, status: str | None = None) -> list[dict]:
        out = []
        for task_id in self.order:
            task = self.tasks[task_id]
            st = self.status(task_id)
            if status in (None, "all") or st == status:
                out.append(
                    {
                        "task_id": task_id,
                        "image_ref": task.image_ref,
                        "prompt": task.prompt,
                        "num_responses": len(task.responses),
                        "status": st,
                    }
                )
        return out

    def task_detail(self, task_id: str) -> dict | None:
        task = self.tasks.get(task_id)
        if task is None:
            return None
        annotations = self._annotations.get(task_id)
        return {
            "task_id": task.task_id,
            "image_ref": task.image_ref,
            "prompt": task.prompt,
            "responses": list(task.responses),
            "status": self.status(task_id),
            "annotations": [
                [{"start": s.start, "end": s.end, "label": s.label.value} for s in spans]
                for spans in annotations
            ]
            if annotations is not None
            else None,
        }

    @staticmethod
    def _parse_spans(raw: list, response_index: int) -> list[SpanAnnotation]:
        spans = []
        for s in raw:
            if (
                not isinstance(s, dict)
                or not isinstance(s.get("start"), int)
                or not isinstance(s.get("end"), int)
                or not isinstance(s.get("label"), str)
            ):
                raise SubmissionError(
                    [
                        {
                            "response_index": response_index,
                            "code": "schema",
                            "message": "each span needs integer start/end and a string label",
                        }
                    ]
                )
            try:
                label = Label(s["label"])
            except ValueError:
                label = s["label"]
            spans.append(SpanAnnotation(s["start"], s["end"], label))
        return sorted(spans, key=lambda s: (s.start, s.end))

    def submit(self, task_id: str, payload: dict, overwrite: bool = False) -> None:
        task = self.tasks.get(task_id)
        if task is None:
            raise KeyError(task_id)
        raw = payload.get("annotations")
        if not isinstance(raw, list) or len(raw) != len(task.responses):
            raise SubmissionError(
                [
                    {
                        "response_index": -1,
                        "code": "schema",
                        "message": f"'annotations' must be a list of {len(task.responses)} span lists",
                    }
                ]
            )
        parsed: list[list[SpanAnnotation]] = []
        violations: list[dict] = []
        for k, spans_raw in enumerate(raw):
            if not isinstance(spans_raw, list):
                violations.append(
                    {"response_index": k, "code": "schema", "message": "span list expected"}
                )
                continue
            spans = self._parse_spans(spans_raw, k)
            record = AnnotatedResponse(
                f"{task_id}-{k}", task.image_ref, task.prompt, task.responses[k], spans, task.split
            )
            for v in corpus.validate(record):
                violations.append({"response_index": k, "code": v.code, "message": v.message})
            parsed.append(spans)
        if violations:
            raise SubmissionError(violations)
        with self._lock:
            if task_id in self._annotations and not overwrite:
                raise TaskConflict(task_id)
            self._annotations[task_id] = parsed
            self._persist_locked()

    def _persist_locked(self) -> None:
        tmp = self.out_path.with_name(self.out_path.name + ".tmp")
        lines = []
        for task_id in self.order:
            spans_lists = self._annotations.get(task_id)
            if spans_lists is None:
                continue
            obj = {
                "task_id": task_id,
                "annotations": [
                    [{"start": s.start, "end": s.end, "label": s.label.value} for s in spans]
                    for spans in spans_lists
                ],
            }
            lines.append(corpus.dumps_canonical(obj))
        data = ("\n".join(lines) + "\n") if lines else ""
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.out_path)

    def export_records(self) -> list[AnnotatedResponse]:
        records = []
        for task_id in self.order:
            spans_lists = self._annotations.get(task_id)
            if spans_lists is None:
                continue
            task = self.tasks[task_id]
            for k, spans in enumerate(spans_lists):
                records.append(
                    AnnotatedResponse(
                        f"{task_id}-{k}",
                        task.image_ref,
                        task.prompt,
                        task.responses[k],
                        list(spans),
                        task.split,
                    )
                )
        return records

    def export_bytes(self) -> bytes:
        return corpus.export(self.export_records())


class _Handler(BaseHTTPRequestHandler):
    server_version = "finespan-annotator/0.1"
    store: TaskStore  # set on the server
    ui_dir: Path | None

    # -- helpers -------------------------------------------------------

    def _send_json(self, status: int, obj) -> None:
        body = json.dumps(obj, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_bytes(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_json_body(self):
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b""
        try:
            return json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            return None

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        if getattr(self.server, "verbose", False):
            super().log_message(format, *args)

    # -- routing -------------------------------------------------------

    def do_GET(self):  # noqa: N802 - stdlib naming
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        store: TaskStore = self.server.store  # type: ignore[attr-defined]

        if parts[:2] == ["api", "tasks"] and len(parts) == 2:
            status = parse_qs(url.query).get("status", [None])[0]
            if status not in (None, "all", "pending", "done"):
                self._send_json(400, {"error": f"unknown status filter {status!r}"})
                return
            self._send_json(200, store.summaries(status))
            return
        if parts[:2] == ["api", "tasks"] and len(parts) == 3:
            detail = store.task_detail(parts[2])
            if detail is None:
                self._send_json(404, {"error": f"unknown task {parts[2]!r}"})
                return
            self._send_json(200, detail)
            return
        if parts == ["api", "export"]:
            self._send_bytes(200, store.export_bytes(), "application/jsonl; charset=utf-8")
            return
        if parts[:1] == ["api"]:
            self._send_json(404, {"error": "unknown endpoint"})
            return
        self._serve_static(url.path)

    def do_POST(self):  # noqa: N802 - stdlib naming
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        store: TaskStore = self.server.store  # type: ignore[attr-defined]

        if parts[:2] == ["api", "tasks"] and len(parts) == 4 and parts[3] == "annotations":
            task_id = parts[2]
            overwrite = parse_qs(url.query).get("overwrite", ["false"])[0].lower() == "true"
            payload = self._read_json_body()
            if not isinstance(payload, dict):
                self._send_json(400, {"error": "request body must be a JSON object"})
                return
            try:
                store.submit(task_id, payload, overwrite=overwrite)
            except KeyError:
                self._send_json(404, {"error": f"unknown task {task_id!r}"})
                return
            except SubmissionError as exc:
                self._send_json(400, {"error": "invalid annotations", "violations": exc.violations})
                return
            except TaskConflict:
                self._send_json(
                    409,
                    {"error": f"task {task_id!r} already annotated; retry with ?overwrite=true"},
                )
                return
            self._send_json(200, {"task_id": task_id, "status": "done"})
            return
        self._send_json(404, {"error": "unknown endpoint"})

    def _serve_static(self, path: str) -> None:
        ui_dir: Path | None = getattr(self.server, "ui_dir", None)  # type: ignore[attr-defined]
        if ui_dir is None:
            if path in ("/", "/index.html"):
                self._send_bytes(200, _FALLBACK_PAGE, "text/html; charset=utf-8")
            else:
                self._send_json(404, {"error": "no static UI configured"})
            return
        rel = path.lstrip("/") or "index.html"
        target = (ui_dir / rel).resolve()
        if not target.is_relative_to(ui_dir.resolve()) or not target.is_file():
            self._send_json(404, {"error": "not found"})
            return
        content_type = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        self._send_bytes(200, target.read_bytes(), content_type)


def create_server(
    tasks_path: str | Path,
    out_path: str | Path,
    port: int = 0,
    ui_dir: str | Path | None = None,
    responses_per_task: int = DEFAULT_RESPONSES_PER_TASK,
    verbose: bool = False,
) -> ThreadingHTTPServer:
    """Build the HTTP server; ``port=0`` picks a free port (see ``server_address``)."""
    tasks = load_tasks(tasks_path, responses_per_task)
    store = TaskStore(tasks, out_path)
    server = ThreadingHTTPServer(("127.0.0.1", port), _Handler)
    server.store = store  # type: ignore[attr-defined]
    server.ui_dir = Path(ui_dir) if ui_dir is not None else None  # type: ignore[attr-defined]
    server.verbose = verbose  # type: ignore[attr-defined]
    return server
