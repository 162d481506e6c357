"""Local HTTP service exposing the controller to an operator console.

The controller stays single-owner: only the simulation loop thread touches
it. HTTP handlers enqueue commands (applied FIFO between ticks) and read
immutable snapshots. Telemetry is decimated to 50 Hz from the 1 kHz core;
a lagging stream consumer loses frames, never delays the simulation, and
sees its cumulative drop count in every line it does receive.

Endpoints (all JSON): GET /state, POST /command, GET /telemetry (NDJSON
stream), GET /plan, GET /log, GET /transitions. Default port 7430.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any

from .controller import Controller, TelemetryFrame, load_transition_table
from .plan import plan_doc

_STREAM_QUEUE_SIZE = 64


class _PendingCommand:
    def __init__(self, cmd: str, args: dict[str, Any], client: str):
        self.cmd = cmd
        self.args = args
        self.client = client
        self.done = threading.Event()
        self.result = None

    def resolve(self, result) -> None:
        self.result = result
        self.done.set()


class _Subscriber:
    def __init__(self):
        self.frames: queue.Queue = queue.Queue(maxsize=_STREAM_QUEUE_SIZE)
        self.dropped = 0


class ControlService:
    """Runs the simulation loop and the HTTP front end."""

    def __init__(self, controller: Controller, port: int = 7430, time_scale: float = 1.0,
                 ui_dir: str | None = None):
        if time_scale <= 0:
            raise ValueError("time_scale must be positive")
        self.controller = controller
        self.time_scale = time_scale
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self.latest: TelemetryFrame = controller.frame()
        self.commands: queue.Queue[_PendingCommand] = queue.Queue()
        self._subscribers: list[_Subscriber] = []
        self._sub_lock = threading.Lock()
        self._stop = threading.Event()
        self._decimation = max(1, round(0.02 / controller.config.dt))

        service = self

        class Handler(BaseHTTPRequestHandler):
            # Quiet by default; the procedure log is the record that matters.
            def log_message(self, fmt, *args):
                pass

            def _json(self, code: int, doc: Any) -> None:
                body = json.dumps(doc).encode("utf-8")
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(body)

            def do_OPTIONS(self):
                self.send_response(204)
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
                self.send_header("Access-Control-Allow-Headers", "Content-Type")
                self.end_headers()

            def do_GET(self):
                if self.path == "/state":
                    self._json(200, service.latest.to_doc())
                elif self.path == "/plan":
                    plan = service.controller.plan
                    if plan is None:
                        self._json(404, {"error": "no plan loaded"})
                    else:
                        self._json(200, plan_doc(plan))
                elif self.path == "/log":
                    body = b"".join(ev.to_json().encode("utf-8") + b"\n"
                                    for ev in service.controller.log.events)
                    self.send_response(200)
                    self.send_header("Content-Type", "application/x-ndjson")
                    self.send_header("Content-Length", str(len(body)))
                    self.send_header("Access-Control-Allow-Origin", "*")
                    self.end_headers()
                    self.wfile.write(body)
                elif self.path == "/transitions":
                    self._json(200, load_transition_table())
                elif self.path.startswith("/access"):
                    self._access()
                elif self.path == "/telemetry":
                    self._stream()
                elif self.path == "/" or self.path.startswith("/ui"):
                    self._static()
                else:
                    self._json(404, {"error": f"unknown path {self.path}"})

            def _access(self):
                # What-if arch-avoidance preview for the console: pure
                # computation over immutable plan/geometry snapshots.
                from urllib.parse import parse_qs, urlparse

                from .errors import NoAccess
                from .workspace import ArchObstacle, plan_access

                q = parse_qs(urlparse(self.path).query)
                try:
                    target = (float(q["x"][0]), float(q["y"][0]), float(q["z"][0]))
                    margin = float(q.get("min_clearance", ["0.5"])[0])
                except (KeyError, ValueError):
                    self._json(400, {"error": "need numeric x, y, z query parameters"})
                    return
                plan = service.controller.plan
                arch = plan.arch if plan is not None else ArchObstacle()
                try:
                    sol = plan_access(target, arch, service.controller.geom, margin)
                except NoAccess as e:
                    self._json(200, {"ok": False, "reason": str(e)})
                    return
                except ValueError as e:
                    self._json(400, {"error": str(e)})
                    return
                self._json(200, {
                    "ok": True,
                    "pose": {"entry_x": sol.pose.entry_x, "entry_y": sol.pose.entry_y,
                             "pitch": sol.pose.pitch, "yaw": sol.pose.yaw},
                    "inclination": sol.inclination,
                    "clearance": sol.clearance if sol.clearance != float("inf") else None,
                })

            def _stream(self):
                sub = _Subscriber()
                with service._sub_lock:
                    service._subscribers.append(sub)
                try:
                    self.send_response(200)
                    self.send_header("Content-Type", "application/x-ndjson")
                    self.send_header("Cache-Control", "no-store")
                    self.send_header("Access-Control-Allow-Origin", "*")
                    self.end_headers()
                    while not service._stop.is_set():
                        try:
                            frame = sub.frames.get(timeout=0.5)
                        except queue.Empty:
                            continue
                        doc = frame.to_doc()
                        doc["frame"] = frame.tick
                        doc["dropped"] = sub.dropped
                        self.wfile.write((json.dumps(doc) + "\n").encode("utf-8"))
                        self.wfile.flush()
                except (BrokenPipeError, ConnectionResetError):
                    pass
                finally:
                    with service._sub_lock:
                        service._subscribers.remove(sub)

            def _static(self):
                if service.ui_dir is None:
                    self._json(404, {"error": "no console bundled; start with --ui"})
                    return
                rel = self.path[3:] if self.path.startswith("/ui") else self.path
                rel = rel.lstrip("/") or "index.html"
                target = (service.ui_dir / rel).resolve()
                if not str(target).startswith(str(service.ui_dir.resolve())) or not target.is_file():
                    self._json(404, {"error": "not found"})
                    return
                ctype = {
                    ".html": "text/html", ".js": "text/javascript", ".css": "text/css",
                    ".map": "application/json", ".json": "application/json",
                }.get(target.suffix, "application/octet-stream")
                body = target.read_bytes()
                self.send_response(200)
                self.send_header("Content-Type", ctype)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_POST(self):
                if self.path != "/command":
                    self._json(404, {"error": f"unknown path {self.path}"})
                    return
                try:
                    length = int(self.headers.get("Content-Length", "0"))
                    raw = json.loads(self.rfile.read(length).decode("utf-8"))
                except (ValueError, UnicodeDecodeError) as e:
                    self._json(400, {"error": f"malformed command: {e}"})
                    return
                if not isinstance(raw, dict) or not isinstance(raw.get("cmd"), str):
                    self._json(400, {"error": "command must be an object with string 'cmd'"})
                    return
                args = raw.get("args", {})
                if not isinstance(args, dict):
                    self._json(400, {"error": "'args' must be an object"})
                    return
                pending = _PendingCommand(raw["cmd"], args, f"{self.client_address[0]}:{self.client_address[1]}")
                service.commands.put(pending)
                if not pending.done.wait(timeout=10.0):
                    self._json(503, {"error": "controller did not respond"})
                    return
                doc = {"id": raw.get("id"), "ok": pending.result.ok}
                if pending.result.reason is not None:
                    doc["reason"] = pending.result.reason
                self._json(200, doc)

        self._server = ThreadingHTTPServer(("127.0.0.1", port), Handler)
        self._server.daemon_threads = True
        self.port = self._server.server_address[1]
        self._loop_thread = threading.Thread(target=self._loop, name="sim-loop", daemon=True)
        self._http_thread = threading.Thread(target=self._server.serve_forever, name="http", daemon=True)

    def start(self) -> None:
        self._loop_thread.start()
        self._http_thread.start()

    def wait(self) -> None:
        while not self._stop.is_set():
            time.sleep(0.2)

    def stop(self) -> None:
        self._stop.set()
        self._server.shutdown()
        self._server.server_close()
        self._loop_thread.join(timeout=2.0)

    def _publish(self, frame: TelemetryFrame) -> None:
        with self._sub_lock:
            subs = list(self._subscribers)
        for sub in subs:
            try:
                sub.frames.put_nowait(frame)
            except queue.Full:
                sub.dropped += 1

    def _loop(self) -> None:
        dt = self.controller.config.dt
        start = time.monotonic()
        ticks = 0
        while not self._stop.is_set():
            # Commands land between ticks, in arrival order.
            while True:
                try:
                    pending = self.commands.get_nowait()
                except queue.Empty:
                    break
                result = self.controller.handle_command(pending.cmd, pending.args, client=pending.client)
                pending.resolve(result)
                self.latest = self.controller.frame()
            self.controller.tick()
            ticks += 1
            if self.controller.tick_count % self._decimation == 0:
                frame = self.controller.frame()
                self.latest = frame
                self._publish(frame)
            # Pace to wall time; check in batches to keep sleep calls coarse.
            if ticks % 10 == 0:
                target = start + (ticks * dt) / self.time_scale
                delay = target - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
