"""Combined teleoperation server: binary stream port + session hosting.

One Session per operator. Each session's ticker thread is the sole owner
of simulation state; transports (TCP or the UI's websocket bridge) only
deposit packets into the mailbox/control queue and receive state frames.
Sessions survive transport loss for a reconnect window, then are finalized.
"""

from __future__ import annotations

import logging
import queue
import socket
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .config import (
    ServerConfig,
    bundled_asset_text,
    bundled_robot_names,
    bundled_scene_names,
)
from .geometry import Transform
from .model import RobotModel, SceneSpec
from .parsing import parse_robot, parse_scene
from .session import Session, now_us
from .store import EpisodeStore, TokenRegistry
from .wire import (
    ACK_ERROR,
    ACK_OK,
    Ack,
    DecodeError,
    FrameSplitter,
    Header,
    KIND_ACK,
    KIND_CONTROL,
    KIND_STATE,
    KIND_TRACKING,
    OP_END_EPISODE,
    OP_RESET,
    OP_START_EPISODE,
    OP_SWITCH_TASK,
    decode_control,
    decode_packet,
    encode_ack,
    encode_state,
    frame_packet,
)

log = logging.getLogger("teleosim.server")


class CapacityError(RuntimeError):
    pass


class UnknownSceneError(KeyError):
    pass


class Registry:
    """Robot models and scenes known to this server."""

    def __init__(self):
        self.models: dict[str, RobotModel] = {}
        self.scenes: dict[str, SceneSpec] = {}

    def add_robot_text(self, text: str) -> RobotModel:
        model = parse_robot(text)
        self.models[model.name] = model
        return model

    def add_scene_text(self, text: str) -> SceneSpec:
        scene = parse_scene(text)
        for model_id, _base in scene.robot_refs:
            if model_id not in self.models:
                raise UnknownSceneError(
                    f"scene '{scene.scene_id}' references unknown robot "
                    f"'{model_id}'")
        self.scenes[scene.scene_id] = scene
        return scene

    def load_bundled(self) -> None:
        for name in bundled_robot_names():
            self.add_robot_text(bundled_asset_text(f"{name}.robot"))
        for name in bundled_scene_names():
            self.add_scene_text(bundled_asset_text(f"{name}.scene"))

    def scene_model(self, scene_id: str) -> tuple[SceneSpec, RobotModel, Transform]:
        scene = self.scenes.get(scene_id)
        if scene is None:
            raise UnknownSceneError(f"scene not found: '{scene_id}'")
        if len(scene.robot_refs) != 1:
            raise UnknownSceneError(
                f"scene '{scene_id}' must reference exactly one robot")
        model_id, base = scene.robot_refs[0]
        return scene, self.models[model_id], base


class Transport:
    """Thread-safe frame sink over some byte channel."""

    def send_frame(self, data: bytes) -> None:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class TcpTransport(Transport):
    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._lock = threading.Lock()

    def send_frame(self, data: bytes) -> None:
        with self._lock:
            self.sock.sendall(data)

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class SessionRuntime:
    """Ticker thread plus transport binding for one session."""

    def __init__(self, server: "TeleopServer", session: Session):
        self.server = server
        self.session = session
        self.transport: Transport | None = None
        self._transport_lock = threading.Lock()
        self.disconnected_at: float | None = time.monotonic()
        self.state_seq = 0
        self._stop = threading.Event()
        self.thread = threading.Thread(target=self._run, daemon=True,
                                       name=f"session-{session.session_id}")

    # -- transport binding --------------------------------------------------

    def bind_transport(self, transport: Transport) -> bool:
        with self._transport_lock:
            if self.transport is not None:
                return False
            self.transport = transport
            self.disconnected_at = None
        self.session.mailbox.reset_seq()
        return True

    def unbind_transport(self, transport: Transport | None = None) -> None:
        with self._transport_lock:
            if transport is not None and self.transport is not transport:
                return
            self.transport = None
            self.disconnected_at = time.monotonic()

    def _send(self, data: bytes) -> None:
        with self._transport_lock:
            transport = self.transport
        if transport is None:
            return
        try:
            transport.send_frame(data)
        except OSError:
            self.unbind_transport(transport)

    # -- ticking --------------------------------------------------------------

    def start(self) -> None:
        self.thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self.thread.is_alive() and threading.current_thread() is not self.thread:
            self.thread.join(timeout=5.0)

    def _run(self) -> None:
        dt = self.session.ik_params.dt
        next_t = time.monotonic()
        while not self._stop.is_set():
            next_t += dt
            self._process_controls()
            state = self.session.step()
            self._drain_episodes()
            self.state_seq += 1
            header = Header(KIND_STATE, self.session.session_id,
                            self.state_seq, now_us())
            self._send(frame_packet(header, encode_state(state.to_wire())))

            if self.disconnected_at is not None and \
                    time.monotonic() - self.disconnected_at > \
                    self.server.config.reconnect_window:
                self.server.destroy_session(self.session.session_id)
                return
            delay = next_t - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            else:
                next_t = time.monotonic()

    def _drain_episodes(self) -> None:
        while self.session.finished_episodes:
            self.server.flush_queue.put(self.session.finished_episodes.popleft())

    def _process_controls(self) -> None:
        for header, control in self.session.drain_controls():
            ack = self._execute_control(control)
            self.state_seq += 1
            self._send(frame_packet(
                Header(KIND_ACK, self.session.session_id, self.state_seq,
                       now_us()),
                encode_ack(ack)))

    def _open_episode_id(self) -> str:
        rec = self.session.recorder
        return rec.episode_id if rec is not None else ""

    def _pending_episode_id(self) -> str:
        rec = self.session.recorder
        return rec.episode_id if rec is not None and len(rec) else ""

    def _execute_control(self, control) -> Ack:
        session = self.session
        if control.op == OP_RESET:
            prev = self._pending_episode_id()
            session.reset(control.seed)
            arg = f"ep={self._open_episode_id()}"
            if prev:
                arg += f";prev={prev}"
            return Ack(control.op, ACK_OK, arg)
        if control.op == OP_SWITCH_TASK:
            try:
                scene, model, base = self.server.registry.scene_model(control.arg)
            except (UnknownSceneError, KeyError):
                return Ack(control.op, ACK_ERROR, "scene not found")
            prev = self._pending_episode_id()
            session.switch_task(scene, model, base, control.seed)
            arg = f"ep={self._open_episode_id()}"
            if prev:
                arg += f";prev={prev}"
            return Ack(control.op, ACK_OK, arg)
        if control.op == OP_START_EPISODE:
            prev = self._pending_episode_id()
            session._finalize_episode()
            session._open_episode(session._last_reset_seed)
            arg = f"ep={self._open_episode_id()}"
            if prev:
                arg += f";prev={prev}"
            return Ack(control.op, ACK_OK, arg)
        if control.op == OP_END_EPISODE:
            prev = self._pending_episode_id()
            session._finalize_episode()
            return Ack(control.op, ACK_OK, f"prev={prev}" if prev else "")
        return Ack(control.op, ACK_ERROR, f"unknown op {control.op}")

    def finalize(self) -> None:
        self.session._finalize_episode()
        self._drain_episodes()


class TeleopServer:
    def __init__(self, config: ServerConfig, registry: Registry | None = None):
        self.config = config
        self.registry = registry or Registry()
        if registry is None:
            if config.robot_paths or config.scene_paths:
                for p in config.robot_paths:
                    self.registry.add_robot_text(Path(p).read_text())
                for p in config.scene_paths:
                    self.registry.add_scene_text(Path(p).read_text())
            else:
                self.registry.load_bundled()
        store_dir = config.resolve_store_dir()
        self.store = EpisodeStore(store_dir, config.max_store_bytes)
        self.tokens = TokenRegistry(store_dir / "tokens.txt")

        self.sessions: dict[int, SessionRuntime] = {}
        self._sessions_lock = threading.Lock()
        self._next_session_id = 1
        self.flush_queue: queue.Queue = queue.Queue()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._listener: socket.socket | None = None
        self.http_server = None  # set by serve() via hub.attach_http

    # -- session lifecycle ----------------------------------------------------

    def create_session(self, scene_id: str | None = None,
                       seed: int = 0) -> SessionRuntime:
        scene_id = scene_id or self.config.default_scene
        scene, model, base = self.registry.scene_model(scene_id)
        with self._sessions_lock:
            if len(self.sessions) >= self.config.max_sessions:
                raise CapacityError(
                    f"session capacity {self.config.max_sessions} reached")
            session_id = self._next_session_id
            self._next_session_id += 1
            session = Session(session_id, scene, model, base,
                              self.config.ik, self.config.grasp,
                              user_id=self.config.session_user,
                              tracking_mode=self.config.tracking_mode,
                              seed=seed)
            runtime = SessionRuntime(self, session)
            self.sessions[session_id] = runtime
        runtime.start()
        log.info("session %d created (scene %s)", session_id, scene_id)
        return runtime

    def destroy_session(self, session_id: int) -> None:
        with self._sessions_lock:
            runtime = self.sessions.pop(session_id, None)
        if runtime is None:
            return
        runtime._stop.set()
        runtime.finalize()
        log.info("session %d destroyed", session_id)

    def get_session(self, session_id: int) -> SessionRuntime | None:
        with self._sessions_lock:
            return self.sessions.get(session_id)

    # -- flush worker -----------------------------------------------------------

    def _flush_worker(self) -> None:
        while not self._stop.is_set() or not self.flush_queue.empty():
            try:
                episode_id, data = self.flush_queue.get(timeout=0.2)
            except queue.Empty:
                continue
            try:
                self.store.store_bytes(self.config.session_user, data)
                log.info("episode %s stored (%d bytes)", episode_id, len(data))
            except Exception:
                log.exception("failed to store episode %s", episode_id)

    # -- network ------------------------------------------------------------------

    def start(self) -> None:
        """Bind the stream port and start the workers (HTTP attaches separately)."""
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.config.host, self.config.stream_port))
        listener.listen(16)
        listener.settimeout(0.25)  # closing won't wake accept(); poll instead
        self._listener = listener

        accept_thread = threading.Thread(target=self._accept_loop, daemon=True,
                                         name="stream-accept")
        flush_thread = threading.Thread(target=self._flush_worker, daemon=True,
                                        name="episode-flush")
        self._threads = [accept_thread, flush_thread]
        for t in self._threads:
            t.start()

    @property
    def stream_port(self) -> int:
        return self._listener.getsockname()[1]

    def stop(self) -> None:
        self._stop.set()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._sessions_lock:
            runtimes = list(self.sessions.values())
            self.sessions.clear()
        for rt in runtimes:
            rt.stop()
            rt.finalize()
        for t in self._threads:
            t.join(timeout=5.0)

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            conn.settimeout(None)
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            threading.Thread(target=self._serve_connection, daemon=True,
                             args=(conn, addr),
                             name=f"stream-conn-{addr[1]}").start()

    def _serve_connection(self, conn: socket.socket, addr) -> None:
        transport = TcpTransport(conn)
        runtime: SessionRuntime | None = None
        splitter = FrameSplitter()
        try:
            while not self._stop.is_set():
                data = conn.recv(65536)
                if not data:
                    break
                try:
                    frames = splitter.feed(data)
                except DecodeError:
                    log.warning("framing desync from %s; dropping transport", addr)
                    break  # session survives for the reconnect window
                for body in frames:
                    runtime = self._route_frame(body, transport, runtime)
                    if runtime is REJECTED:
                        return
        except (ConnectionError, OSError):
            pass
        finally:
            if isinstance(runtime, SessionRuntime):
                runtime.unbind_transport(transport)
            transport.close()

    def route_frame(self, body: bytes, transport: Transport,
                    runtime: SessionRuntime | None):
        """Shared packet routing for TCP and the websocket bridge."""
        return self._route_frame(body, transport, runtime)

    def _route_frame(self, body, transport, runtime):
        try:
            header, payload = decode_packet(body)
        except DecodeError as exc:
            log.warning("bad packet: %s", exc)
            return runtime

        if runtime is None:
            if header.session_id == 0:
                try:
                    runtime = self.create_session()
                except (CapacityError, UnknownSceneError) as exc:
                    log.warning("rejecting connection: %s", exc)
                    transport.close()
                    return REJECTED
            else:
                existing = self.get_session(header.session_id)
                if existing is None:
                    log.warning("unknown session %d; closing", header.session_id)
                    transport.close()
                    return REJECTED
                runtime = existing
            if not runtime.bind_transport(transport):
                log.warning("session %d already has a live transport",
                            runtime.session.session_id)
                transport.close()
                return REJECTED

        if header.kind == KIND_TRACKING:
            runtime.session.feed_tracking(header, payload, now_us())
        elif header.kind == KIND_CONTROL:
            try:
                control = decode_control(payload)
            except DecodeError as exc:
                log.warning("bad control payload: %s", exc)
                return runtime
            runtime.session.enqueue_control(header, control)
        # state/ack from a client are ignored
        return runtime


class _Rejected:
    """Sentinel: the router closed this transport; stop reading it."""


REJECTED = _Rejected()
