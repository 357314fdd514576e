"""Headless synthetic operator: scripted hand motion over the live protocol.

Script files are line-based, one directive per line ('#' comments):

    move_hand x y z qw qx qy qz duration    # wrist glide, slerp + lerp
    set_grip value duration                 # grip ramp in [0, 1]
    press_reset seed                        # one-click reset (0 = server picks)
    switch scene_id [seed]
    wait duration

The rig holds its last pose between directives and keeps emitting frames
at the sample rate, like an idle human hand would.
"""

from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import Transform, quat_normalize, quat_slerp
from .hands import hand_template
from .wire import (
    Ack,
    Control,
    FrameSplitter,
    Header,
    KIND_ACK,
    KIND_CONTROL,
    KIND_STATE,
    KIND_TRACKING,
    OP_END_EPISODE,
    OP_RESET,
    OP_SWITCH_TASK,
    decode_ack,
    decode_packet,
    decode_state,
    encode_ack,
    encode_control,
    encode_tracking,
    frame_packet,
)

DEFAULT_RATE_HZ = 90.0


class ScriptError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class Directive:
    kind: str
    pose: Transform | None = None
    value: float = 0.0
    duration: float = 0.0
    scene_id: str = ""
    seed: int = 0


def parse_script(text: str) -> list[Directive]:
    directives: list[Directive] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#")[0].strip()
        if not line:
            continue
        parts = line.split()
        op, args = parts[0], parts[1:]
        try:
            if op == "move_hand":
                if len(args) != 8:
                    raise ScriptError("move_hand needs x y z qw qx qy qz duration",
                                      lineno)
                vals = [float(a) for a in args]
                if vals[7] <= 0:
                    raise ScriptError("duration must be > 0", lineno)
                directives.append(Directive(
                    "move_hand",
                    pose=Transform(vals[:3], quat_normalize(np.array(vals[3:7]))),
                    duration=vals[7]))
            elif op == "set_grip":
                if len(args) != 2:
                    raise ScriptError("set_grip needs value duration", lineno)
                value, duration = float(args[0]), float(args[1])
                if not 0.0 <= value <= 1.0:
                    raise ScriptError("grip value must be in [0, 1]", lineno)
                if duration <= 0:
                    raise ScriptError("duration must be > 0", lineno)
                directives.append(Directive("set_grip", value=value,
                                            duration=duration))
            elif op == "press_reset":
                if len(args) != 1:
                    raise ScriptError("press_reset needs a seed", lineno)
                directives.append(Directive("press_reset", seed=int(args[0])))
            elif op == "switch":
                if len(args) not in (1, 2):
                    raise ScriptError("switch needs scene_id [seed]", lineno)
                directives.append(Directive(
                    "switch", scene_id=args[0],
                    seed=int(args[1]) if len(args) == 2 else 0))
            elif op == "wait":
                if len(args) != 1:
                    raise ScriptError("wait needs a duration", lineno)
                duration = float(args[0])
                if duration <= 0:
                    raise ScriptError("duration must be > 0", lineno)
                directives.append(Directive("wait", duration=duration))
            else:
                raise ScriptError(f"unknown directive '{op}'", lineno)
        except ValueError as exc:
            if isinstance(exc, ScriptError):
                raise
            raise ScriptError(f"bad number in '{line}'", lineno) from exc
    return directives


@dataclass
class RigEvent:
    t: float                      # seconds from script start
    frame_wrist: Transform | None = None
    grip: float = 0.0
    control: Control | None = None


def script_events(directives: list[Directive],
                  rate_hz: float = DEFAULT_RATE_HZ,
                  start_pose: Transform | None = None) -> list[RigEvent]:
    """Expand directives into a timed sample/control event list."""
    period = 1.0 / rate_hz
    pose = start_pose or Transform((1.2, 0.4, 0.0))
    grip = 0.0
    t = 0.0
    events: list[RigEvent] = []

    def emit_motion(duration, pose_to=None, grip_to=None):
        nonlocal t, pose, grip
        start_pose_local = pose.copy()
        start_grip = grip
        steps = max(int(round(duration * rate_hz)), 1)
        for k in range(1, steps + 1):
            s = min(k / steps, 1.0)
            if pose_to is not None:
                cur = Transform(
                    start_pose_local.pos + s * (pose_to.pos - start_pose_local.pos),
                    quat_slerp(start_pose_local.quat, pose_to.quat, s))
            else:
                cur = start_pose_local
            cur_grip = start_grip + s * (grip_to - start_grip) \
                if grip_to is not None else start_grip
            events.append(RigEvent(t + k * period, frame_wrist=cur,
                                   grip=cur_grip))
        t += steps * period
        if pose_to is not None:
            pose = pose_to.copy()
        if grip_to is not None:
            grip = grip_to

    for d in directives:
        if d.kind == "move_hand":
            emit_motion(d.duration, pose_to=d.pose)
        elif d.kind == "set_grip":
            emit_motion(d.duration, grip_to=d.value)
        elif d.kind == "wait":
            emit_motion(d.duration)
        elif d.kind == "press_reset":
            events.append(RigEvent(t, control=Control(OP_RESET, "", d.seed)))
        elif d.kind == "switch":
            events.append(RigEvent(t, control=Control(OP_SWITCH_TASK,
                                                      d.scene_id, d.seed)))
    return events


@dataclass
class SynthResult:
    episode_ids: list[str]
    states: int
    acks: list
    session_id: int
    last_state: object | None = None
    directives: int = 0


class SynthClient:
    """Drives a live server through the binary stream like a thin client."""

    def __init__(self, host: str, port: int, connect_timeout: float = 5.0,
                 session_id: int = 0):
        self.sock = socket.create_connection((host, port),
                                             timeout=connect_timeout)
        self.sock.settimeout(None)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._send_lock = threading.Lock()
        self._seq = 0
        self.session_id = session_id  # 0 asks the server for a new session
        self._session_known = threading.Event()
        self.states = 0
        self.acks: list = []
        self.episode_ids: list[str] = []
        self.last_state = None
        self._done = threading.Event()
        self._ack_cv = threading.Condition()
        self._recv_thread = threading.Thread(target=self._recv_loop,
                                             daemon=True, name="synth-recv")
        self._recv_thread.start()
        # Hello: any well-formed frame binds the transport (session_id 0
        # creates a session). A client->server ack carries no side effects.
        self._send_frame(KIND_ACK, encode_ack(Ack(0, 0, "hello")))

    def _send_frame(self, kind: int, payload: bytes) -> None:
        with self._send_lock:
            self._seq += 1
            header = Header(kind, self.session_id, self._seq,
                            time.time_ns() // 1000)
            self.sock.sendall(frame_packet(header, payload))

    def _recv_loop(self) -> None:
        splitter = FrameSplitter()
        try:
            while not self._done.is_set():
                data = self.sock.recv(65536)
                if not data:
                    break
                for body in splitter.feed(data):
                    header, payload = decode_packet(body)
                    if header.kind == KIND_STATE:
                        self.states += 1
                        self.session_id = header.session_id
                        self.last_state = decode_state(payload)
                        self._session_known.set()
                    elif header.kind == KIND_ACK:
                        ack = decode_ack(payload)
                        with self._ack_cv:
                            self.acks.append(ack)
                            for part in ack.arg.split(";"):
                                if part.startswith("prev="):
                                    self.episode_ids.append(part[5:])
                            self._ack_cv.notify_all()
        except (OSError, ValueError):
            pass

    def wait_for_session(self, timeout: float = 5.0) -> bool:
        return self._session_known.wait(timeout)

    def wait_for_acks(self, count: int, timeout: float = 10.0) -> bool:
        deadline = time.monotonic() + timeout
        with self._ack_cv:
            while len(self.acks) < count:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                self._ack_cv.wait(remaining)
        return True

    def run_script(self, directives: list[Directive],
                   rate_hz: float = DEFAULT_RATE_HZ) -> SynthResult:
        events = script_events(directives, rate_hz)
        controls_sent = 0
        start = time.monotonic()
        for ev in events:
            delay = ev.t - (time.monotonic() - start)
            if delay > 0:
                time.sleep(delay)
            if ev.control is not None:
                self._send_frame(KIND_CONTROL, encode_control(ev.control))
                controls_sent += 1
            else:
                frame = hand_template(ev.frame_wrist, ev.grip,
                                      timestamp_us=time.time_ns() // 1000)
                self._send_frame(KIND_TRACKING, encode_tracking(frame))
        # Trailing episode boundary, then collect every ack.
        self._send_frame(KIND_CONTROL, encode_control(Control(OP_END_EPISODE)))
        controls_sent += 1
        self.wait_for_acks(controls_sent, timeout=10.0)
        time.sleep(0.05)
        return SynthResult(list(self.episode_ids), self.states, list(self.acks),
                           self.session_id, self.last_state, len(directives))

    def close(self) -> None:
        self._done.set()
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()
