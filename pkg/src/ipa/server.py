"""Local HTTP API for driving a repair session from the workbench.

One session per process; state transitions are serialized.  Endpoints:

  GET  /session           current round, conflict, candidates, history
  POST /session/choice    {"pairId": "a|b", "candidateIndex": n}
  POST /session/flag      {"pairId": "a|b"}
  GET  /trace/<id>        per-step trace previously written by validate

Double-submitting the same choice is idempotent; choices against a stale
pairId answer 409.  Loopback only.
"""

from __future__ import annotations

import json
import threading
from dataclasses import replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .logic import Universe
from .model import AppSpec
from .printer import print_spec
from .repair import RoundLimitExceeded, SessionEngine


def pair_id(names: tuple[str, str]) -> str:
    return "|".join(names)


class SessionService:
    def __init__(self, spec: AppSpec, universe: Universe, numeric_window: int, out_dir: Path):
        self.lock = threading.Lock()
        self.engine = SessionEngine(spec, universe, numeric_window)
        self.out_dir = out_dir
        self.last_action: tuple[str, int] | None = None
        self._checkpoint()

    def view(self) -> dict:
        from .cli import session_to_json

        engine = self.engine
        body = session_to_json(engine, "interactive")
        body["done"] = engine.done
        if engine.done:
            body["repairedSpec"] = print_spec(self._final_spec())
            body["currentConflict"] = None
            body["candidates"] = []
        else:
            report = engine.current_report
            assert report is not None
            body["currentConflict"] = report.to_json()
            body["currentPairId"] = pair_id(report.pair_names())
            body["candidates"] = [c.to_json() for c in engine.current_candidates]
        return body

    def _final_spec(self) -> AppSpec:
        session = self.engine.session
        return replace(
            session.spec,
            compensations=session.spec.compensations + tuple(session.compensations),
            flagged_pairs=session.spec.flagged_pairs
            + tuple(f.pair for f in session.flagged),
        )

    def choose(self, pid: str, index: int) -> tuple[int, dict]:
        with self.lock:
            engine = self.engine
            if engine.done:
                if self.last_action == (pid, index):
                    return 200, self.view()
                return 409, {"error": "session complete"}
            current = pair_id(engine.current_report.pair_names())
            if pid != current:
                if self.last_action == (pid, index):
                    return 200, self.view()  # idempotent re-submit
                return 409, {"error": f"current pair is {current}"}
            if not 0 <= index < len(engine.current_candidates):
                return 400, {"error": f"candidate index {index} out of range"}
            try:
                engine.choose(index)
            except RoundLimitExceeded as exc:
                return 500, {"error": str(exc)}
            self.last_action = (pid, index)
            self._checkpoint()
            return 200, self.view()

    def flag(self, pid: str) -> tuple[int, dict]:
        with self.lock:
            engine = self.engine
            if engine.done:
                return 409, {"error": "session complete"}
            current = pair_id(engine.current_report.pair_names())
            if pid != current:
                return 409, {"error": f"current pair is {current}"}
            engine.flag_current()
            self.last_action = (pid, -1)
            self._checkpoint()
            return 200, self.view()

    def trace(self, schedule_id: str) -> tuple[int, object]:
        safe = "".join(c for c in schedule_id if c.isalnum() or c in "-_")
        path = self.out_dir / f"trace-{safe}.jsonl"
        if not path.exists():
            return 404, {"error": f"no trace for schedule {schedule_id}"}
        events = [json.loads(line) for line in path.read_text().splitlines() if line]
        return 200, events

    def _checkpoint(self) -> None:
        from .cli import session_to_json

        payload = session_to_json(self.engine, "interactive")
        payload["done"] = self.engine.done
        (self.out_dir / "session.json").write_text(json.dumps(payload, indent=2) + "\n")


class _Handler(BaseHTTPRequestHandler):
    service: SessionService

    def _send(self, status: int, body: object) -> None:
        data = json.dumps(body, indent=2).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()

    def do_GET(self):
        if self.path == "/session":
            with self.service.lock:
                self._send(200, self.service.view())
        elif self.path.startswith("/trace/"):
            status, body = self.service.trace(self.path[len("/trace/"):])
            self._send(status, body)
        else:
            self._send(404, {"error": "unknown endpoint"})

    def do_POST(self):
        length = int(self.headers.get("Content-Length") or 0)
        try:
            payload = json.loads(self.rfile.read(length) or b"{}")
        except json.JSONDecodeError:
            self._send(400, {"error": "invalid JSON body"})
            return
        if self.path == "/session/choice":
            pid = payload.get("pairId")
            index = payload.get("candidateIndex")
            if not isinstance(pid, str) or not isinstance(index, int):
                self._send(400, {"error": "pairId (string) and candidateIndex (int) required"})
                return
            status, body = self.service.choose(pid, index)
            self._send(status, body)
        elif self.path == "/session/flag":
            pid = payload.get("pairId")
            if not isinstance(pid, str):
                self._send(400, {"error": "pairId (string) required"})
                return
            status, body = self.service.flag(pid)
            self._send(status, body)
        else:
            self._send(404, {"error": "unknown endpoint"})


def make_server(
    spec: AppSpec,
    universe: Universe,
    numeric_window: int,
    port: int,
    out_dir: Path,
) -> ThreadingHTTPServer:
    service = SessionService(spec, universe, numeric_window, out_dir)
    handler = type("Handler", (_Handler,), {"service": service})
    return ThreadingHTTPServer(("127.0.0.1", port), handler)


def serve(spec, universe, numeric_window, port, out_dir) -> int:
    try:
        httpd = make_server(spec, universe, numeric_window, port, out_dir)
    except OSError as exc:
        print(f"error: cannot bind port {port}: {exc}")
        return 1
    print(f"session API on http://127.0.0.1:{httpd.server_port}/session", flush=True)
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
    return 0
