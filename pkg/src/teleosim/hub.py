"""HTTP surface: data-hub API, scene/model manifest, UI bridge.

Endpoints (JSON bodies unless noted; episode bodies are raw binary):

    POST /api/v1/log                 Bearer auth; body = .dxe bytes
    GET  /api/v1/get-my-data         Bearer auth; caller's episodes
    GET  /api/v1/episodes/{id}       Bearer auth; owner or curated
    GET  /api/v1/get-global-data     Bearer auth; curated episodes only
    POST /api/v1/admin/curate/{id}   admin token; sets the curated flag
    GET  /api/v1/manifest            scenes + digested robot models
    GET  /api/v1/sessions/{id}/timing  profiler summary
    GET  /ws                         websocket bridge carrying the binary
                                     stream frames verbatim
    GET  /...                        static UI bundle when configured

The websocket side is a minimal RFC 6455 server: handshake, binary
messages, ping/pong, close. Messages carry the same length-prefixed frames
as the TCP stream, so one codec serves both transports.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import struct
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .server import REJECTED
from .session import InsufficientSamples
from .store import StoreError
from .wire import DecodeError, FrameSplitter

log = logging.getLogger("teleosim.hub")

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".png": "image/png",
    ".svg": "image/svg+xml",
}


def model_manifest(model) -> dict:
    return {
        "name": model.name,
        "dof": model.dof,
        "links": [l.name for l in model.links],
        "joints": [{
            "name": j.name, "kind": j.kind,
            "parent": j.parent, "child": j.child,
            "origin": list(j.origin.pos) + list(j.origin.quat),
            "axis": list(j.axis),
            "limits": [j.q_lo, j.q_hi],
            "vlimit": j.v_lim,
            "dof_index": j.dof_index,
        } for j in model.joints],
        "sites": [{"name": s.name, "link": s.link, "offset": list(s.offset)}
                  for s in model.sites],
        "spheres": [{"link": s.link, "center": list(s.center), "radius": s.radius}
                    for s in model.collision_spheres],
        "grippers": [{"kind": g.kind, "sites": g.sites,
                      "aperture_joint": g.aperture_joint,
                      "range": list(g.aperture_range)}
                     for g in model.grippers],
    }


def scene_manifest(scene) -> dict:
    return {
        "scene_id": scene.scene_id,
        "robots": [{"model": model_id,
                    "base": list(base.pos) + list(base.quat)}
                   for model_id, base in scene.robot_refs],
        "objects": [{
            "object_id": o.object_id, "shape": o.shape,
            "dims": list(o.dims),
            "pose": list(o.pose.pos) + list(o.pose.quat),
            "graspable": o.graspable, "support": o.support,
        } for o in scene.objects],
        "success": None if scene.success is None else {
            "object_id": scene.success.object_id,
            "center": list(scene.success.region_center),
            "half_extents": list(scene.success.region_half_extents),
        },
    }


# ---------------------------------------------------------------------------
# Minimal RFC 6455 websocket plumbing
# ---------------------------------------------------------------------------

def ws_accept_value(key: str) -> str:
    digest = hashlib.sha1((key + WS_GUID).encode()).digest()
    return base64.b64encode(digest).decode()


def _read_exact(sock, count: int) -> bytes | None:
    buf = b""
    while len(buf) < count:
        chunk = sock.recv(count - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def read_ws_message(sock, send_lock: threading.Lock) -> bytes | None:
    """Next binary message (reassembling fragments); None on close/EOF."""
    message = b""
    while True:
        head = _read_exact(sock, 2)
        if head is None:
            return None
        fin = head[0] & 0x80
        opcode = head[0] & 0x0F
        masked = head[1] & 0x80
        length = head[1] & 0x7F
        if length == 126:
            ext = _read_exact(sock, 2)
            if ext is None:
                return None
            (length,) = struct.unpack(">H", ext)
        elif length == 127:
            ext = _read_exact(sock, 8)
            if ext is None:
                return None
            (length,) = struct.unpack(">Q", ext)
        mask = b"\x00" * 4
        if masked:
            mask = _read_exact(sock, 4)
            if mask is None:
                return None
        payload = _read_exact(sock, length) if length else b""
        if payload is None:
            return None
        if masked:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))

        if opcode == 0x8:  # close
            try:
                write_ws_frame(sock, send_lock, payload[:2], opcode=0x8)
            except OSError:
                pass
            return None
        if opcode == 0x9:  # ping -> pong
            write_ws_frame(sock, send_lock, payload, opcode=0xA)
            continue
        if opcode == 0xA:  # pong
            continue
        if opcode in (0x1, 0x2, 0x0):
            message += payload
            if fin:
                return message
            continue
        return None  # unknown opcode: drop the connection


def write_ws_frame(sock, send_lock: threading.Lock, payload: bytes,
                   opcode: int = 0x2) -> None:
    header = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        header += bytes([n])
    elif n < (1 << 16):
        header += bytes([126]) + struct.pack(">H", n)
    else:
        header += bytes([127]) + struct.pack(">Q", n)
    with send_lock:
        sock.sendall(header + payload)


class WsTransport:
    """Adapts a websocket connection to the server's Transport contract."""

    def __init__(self, sock):
        self.sock = sock
        self.send_lock = threading.Lock()

    def send_frame(self, data: bytes) -> None:
        write_ws_frame(self.sock, self.send_lock, data)

    def close(self) -> None:
        try:
            write_ws_frame(self.sock, self.send_lock, b"", opcode=0x8)
            self.sock.close()
        except OSError:
            pass


# ---------------------------------------------------------------------------
# HTTP handler
# ---------------------------------------------------------------------------

def make_handler(server):
    """Bind a handler class to a TeleopServer instance."""

    store = server.store
    tokens = server.tokens
    registry = server.registry
    ui_dir: Path | None = server.config.ui_dir

    class HubHandler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            log.debug("%s - %s", self.address_string(), fmt % args)

        # -- helpers ------------------------------------------------------

        def _send_json(self, obj, status: int = 200) -> None:
            body = json.dumps(obj).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _send_bytes(self, data: bytes,
                        content_type: str = "application/octet-stream") -> None:
            self.send_response(200)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _error(self, status: int, message: str) -> None:
            self._send_json({"error": message}, status)

        def _auth(self):
            header = self.headers.get("Authorization", "")
            token = header[7:] if header.startswith("Bearer ") else None
            return tokens.authenticate(token)

        def _read_body(self) -> bytes:
            length = int(self.headers.get("Content-Length", "0"))
            return self.rfile.read(length) if length else b""

        @staticmethod
        def _listing(entries) -> list[dict]:
            return [{
                "episode_id": e.episode_id,
                "url": f"/api/v1/episodes/{e.episode_id}",
                "scene_id": e.scene_id,
                "size": e.size,
                "created_at": e.created_at,
            } for e in entries]

        # -- routes ---------------------------------------------------------

        def do_GET(self):
            try:
                if self.path == "/ws":
                    self._handle_websocket()
                    return
                if self.path == "/api/v1/get-my-data":
                    info = self._auth()
                    self._send_json(self._listing(store.list_user(info.user_id)))
                elif self.path == "/api/v1/get-global-data":
                    self._auth()
                    self._send_json(self._listing(store.list_curated()))
                elif self.path.startswith("/api/v1/episodes/"):
                    info = self._auth()
                    episode_id = self.path.rsplit("/", 1)[1]
                    data = store.fetch(episode_id, user_id=info.user_id)
                    self._send_bytes(data)
                elif self.path == "/api/v1/manifest":
                    self._send_json({
                        "default_scene": server.config.default_scene,
                        "stream_port": server.config.stream_port,
                        "scenes": [scene_manifest(s)
                                   for s in registry.scenes.values()],
                        "models": {name: model_manifest(m)
                                   for name, m in registry.models.items()},
                    })
                elif self.path == "/api/v1/sessions":
                    with server._sessions_lock:
                        ids = sorted(server.sessions)
                    self._send_json({"sessions": ids})
                elif self.path.startswith("/api/v1/sessions/") and \
                        self.path.endswith("/timing"):
                    sid = int(self.path.split("/")[4])
                    runtime = server.get_session(sid)
                    if runtime is None:
                        self._error(404, f"unknown session {sid}")
                        return
                    try:
                        self._send_json(runtime.session.profiler.summary())
                    except InsufficientSamples as exc:
                        self._error(409, str(exc))
                else:
                    self._serve_static()
            except StoreError as exc:
                self._error(exc.status, str(exc))
            except (ConnectionError, BrokenPipeError):
                pass

        def do_POST(self):
            try:
                if self.path == "/api/v1/log":
                    info = self._auth()
                    episode_id = store.upload(info, self._read_body())
                    self._send_json({"episode_id": episode_id})
                elif self.path.startswith("/api/v1/admin/curate/"):
                    info = self._auth()
                    if not info.admin:
                        self._error(403, "admin token required")
                        return
                    episode_id = self.path.rsplit("/", 1)[1]
                    store.set_curated(episode_id, True)
                    self._send_json({"episode_id": episode_id, "curated": True})
                else:
                    self._error(404, f"no such endpoint {self.path}")
            except StoreError as exc:
                self._error(exc.status, str(exc))
            except (ConnectionError, BrokenPipeError):
                pass

        # -- websocket bridge ----------------------------------------------

        def _handle_websocket(self):
            key = self.headers.get("Sec-WebSocket-Key")
            if self.headers.get("Upgrade", "").lower() != "websocket" or not key:
                self._error(400, "websocket upgrade required")
                return
            self.send_response(101, "Switching Protocols")
            self.send_header("Upgrade", "websocket")
            self.send_header("Connection", "Upgrade")
            self.send_header("Sec-WebSocket-Accept", ws_accept_value(key))
            self.end_headers()
            self.wfile.flush()

            sock = self.connection
            transport = WsTransport(sock)
            runtime = None
            splitter = FrameSplitter()
            try:
                while True:
                    message = read_ws_message(sock, transport.send_lock)
                    if message is None:
                        break
                    try:
                        frames = splitter.feed(message)
                    except DecodeError:
                        log.warning("ws framing desync; dropping bridge")
                        break
                    for body in frames:
                        runtime = server.route_frame(body, transport, runtime)
                        if runtime is REJECTED:
                            return
            except (ConnectionError, OSError):
                pass
            finally:
                if runtime is not None and hasattr(runtime, "unbind_transport"):
                    runtime.unbind_transport(transport)
                self.close_connection = True

        # -- static UI --------------------------------------------------------

        def _serve_static(self):
            if ui_dir is None:
                self._error(404, "no UI bundle configured")
                return
            rel = self.path.split("?")[0].lstrip("/") or "index.html"
            target = (ui_dir / rel).resolve()
            if not str(target).startswith(str(Path(ui_dir).resolve())) or \
                    not target.is_file():
                self._error(404, f"not found: {self.path}")
                return
            ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
            self._send_bytes(target.read_bytes(), ctype)

    return HubHandler


def start_http(server, host: str, port: int) -> ThreadingHTTPServer:
    httpd = ThreadingHTTPServer((host, port), make_handler(server))
    httpd.daemon_threads = True
    thread = threading.Thread(target=httpd.serve_forever, daemon=True,
                              name="hub-http")
    thread.start()
    server.http_server = httpd
    return httpd
