"""Binary packet formats and framing.

Every multi-byte value is little-endian; quaternions are scalar-first.
A frame on the wire is:

    u32 length | header (20 B) | payload (length - 20 B)

Header: magic "DX" (0x44 0x58) | version u8 (=1) | kind u8 | session_id u32
        | seq u32 | timestamp_us u64.

Payloads:
    tracking (kind 1): 25 x (3 f32 position + 4 f32 quaternion) = 700 B
    state    (kind 2): u16 n | u16 m | n x f32 q | m x 28 B poses
    control  (kind 3): u8 op | u8 arg_len | arg bytes | u64 seed
    ack      (kind 4): u8 op | u8 status | u8 arg_len | arg bytes

Header and length prefix are framing, not payload: the packet-size report
accounts payload data content only.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .hands import KEYPOINT_COUNT, HandFrame

MAGIC = b"DX"
VERSION = 1

KIND_TRACKING = 1
KIND_STATE = 2
KIND_CONTROL = 3
KIND_ACK = 4

OP_RESET = 1
OP_SWITCH_TASK = 2
OP_START_EPISODE = 3
OP_END_EPISODE = 4

ACK_OK = 0
ACK_ERROR = 1

HEADER = struct.Struct("<2sBBIIQ")
HEADER_SIZE = HEADER.size  # 20
TRACKING_PAYLOAD_SIZE = KEYPOINT_COUNT * 28  # 700
MAX_FRAME_SIZE = 1 << 20

DEFAULT_STREAM_PORT = 7447

# Table comparison constants: one stereo RGB pair at 480x640, and the
# extra head pose a head-tracked client would append to the hand packet.
STEREO_BASELINE_BYTES = 2 * 480 * 640 * 3
TRACKING_WITH_HEAD_SIZE = (KEYPOINT_COUNT + 1) * 28


class DecodeError(ValueError):
    """Malformed packet; ``code`` is stable for tests and logs."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass
class Header:
    kind: int
    session_id: int
    seq: int
    timestamp_us: int

    def pack(self) -> bytes:
        return HEADER.pack(MAGIC, VERSION, self.kind, self.session_id,
                           self.seq, self.timestamp_us)


def parse_header(buf: bytes) -> Header:
    if len(buf) < HEADER_SIZE:
        raise DecodeError("truncated", f"header needs {HEADER_SIZE} bytes, got {len(buf)}")
    magic, version, kind, session_id, seq, ts = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise DecodeError("bad-magic", f"magic {magic!r}")
    if version != VERSION:
        raise DecodeError("bad-version", f"version {version}")
    if kind not in (KIND_TRACKING, KIND_STATE, KIND_CONTROL, KIND_ACK):
        raise DecodeError("bad-kind", f"kind {kind}")
    return Header(kind, session_id, seq, ts)


# ---------------------------------------------------------------------------
# tracking
# ---------------------------------------------------------------------------

def encode_tracking(frame: HandFrame) -> bytes:
    """700-byte keypoint payload; timestamp rides in the header."""
    data = np.empty((KEYPOINT_COUNT, 7), dtype="<f4")
    data[:, :3] = frame.positions
    data[:, 3:] = frame.quats
    return data.tobytes()


def decode_tracking(payload: bytes, timestamp_us: int = 0,
                    handedness: str = "right") -> HandFrame:
    if len(payload) != TRACKING_PAYLOAD_SIZE:
        raise DecodeError("truncated",
                          f"tracking payload is {len(payload)} B, "
                          f"expected {TRACKING_PAYLOAD_SIZE}")
    data = np.frombuffer(payload, dtype="<f4").reshape(KEYPOINT_COUNT, 7)
    frame = HandFrame(data[:, :3].astype(float), data[:, 3:].astype(float),
                      timestamp_us, handedness)
    norms = np.linalg.norm(frame.quats, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-3):
        raise DecodeError("bad-quaternion", "keypoint quaternion far from unit")
    return frame


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------

@dataclass
class WireState:
    q: np.ndarray             # (n,) joint values
    object_poses: np.ndarray  # (m, 7) position + quaternion rows

    @property
    def n(self) -> int:
        return len(self.q)

    @property
    def m(self) -> int:
        return len(self.object_poses)


def state_payload_size(n: int, m: int) -> int:
    return 4 + 4 * n + 28 * m


def encode_state(state) -> bytes:
    """state is anything exposing .q (n,) and .object_poses (m, 7)."""
    q = np.asarray(state.q)
    poses = np.asarray(state.object_poses, dtype=float).reshape(-1, 7)
    n, m = len(q), len(poses)
    if n > 0xFFFF or m > 0xFFFF:
        raise ValueError("joint/object count exceeds u16")
    return (struct.pack("<HH", n, m)
            + q.astype("<f4").tobytes()
            + poses.astype("<f4").tobytes())


def decode_state(payload: bytes) -> WireState:
    if len(payload) < 4:
        raise DecodeError("truncated", "state payload shorter than its counts")
    n, m = struct.unpack_from("<HH", payload)
    expected = state_payload_size(n, m)
    if len(payload) != expected:
        raise DecodeError("truncated",
                          f"state payload is {len(payload)} B, expected {expected}")
    q = np.frombuffer(payload, dtype="<f4", count=n, offset=4).astype(float)
    poses = np.frombuffer(payload, dtype="<f4", count=7 * m,
                          offset=4 + 4 * n).astype(float).reshape(m, 7)
    return WireState(q, poses)


# ---------------------------------------------------------------------------
# control / ack
# ---------------------------------------------------------------------------

@dataclass
class Control:
    op: int
    arg: str = ""
    seed: int = 0


def encode_control(control: Control) -> bytes:
    arg = control.arg.encode("utf-8")
    if len(arg) > 255:
        raise ValueError("control arg exceeds 255 bytes")
    return struct.pack("<BB", control.op, len(arg)) + arg + struct.pack("<Q", control.seed)


def decode_control(payload: bytes) -> Control:
    if len(payload) < 10:
        raise DecodeError("truncated", "control payload shorter than 10 B")
    op, arg_len = struct.unpack_from("<BB", payload)
    if op not in (OP_RESET, OP_SWITCH_TASK, OP_START_EPISODE, OP_END_EPISODE):
        raise DecodeError("bad-op", f"control op {op}")
    if len(payload) != 2 + arg_len + 8:
        raise DecodeError("truncated", "control payload length mismatch")
    arg = payload[2:2 + arg_len].decode("utf-8")
    seed = struct.unpack_from("<Q", payload, 2 + arg_len)[0]
    return Control(op, arg, seed)


@dataclass
class Ack:
    op: int
    status: int = ACK_OK
    arg: str = ""


def encode_ack(ack: Ack) -> bytes:
    arg = ack.arg.encode("utf-8")
    if len(arg) > 255:
        raise ValueError("ack arg exceeds 255 bytes")
    return struct.pack("<BBB", ack.op, ack.status, len(arg)) + arg


def decode_ack(payload: bytes) -> Ack:
    if len(payload) < 3:
        raise DecodeError("truncated", "ack payload shorter than 3 B")
    op, status, arg_len = struct.unpack_from("<BBB", payload)
    if len(payload) != 3 + arg_len:
        raise DecodeError("truncated", "ack payload length mismatch")
    return Ack(op, status, payload[3:].decode("utf-8"))


# ---------------------------------------------------------------------------
# framing
# ---------------------------------------------------------------------------

def pack_packet(header: Header, payload: bytes) -> bytes:
    return header.pack() + payload


def frame_packet(header: Header, payload: bytes) -> bytes:
    body = pack_packet(header, payload)
    return struct.pack("<I", len(body)) + body


def decode_packet(body: bytes, expect_kind: int | None = None) -> tuple[Header, bytes]:
    header = parse_header(body)
    if expect_kind is not None and header.kind != expect_kind:
        raise DecodeError("kind-mismatch",
                          f"expected kind {expect_kind}, got {header.kind}")
    return header, body[HEADER_SIZE:]


class FrameSplitter:
    """Incremental length-prefixed frame splitter for a byte stream."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[bytes]:
        self._buf.extend(data)
        frames = []
        while True:
            if len(self._buf) < 4:
                return frames
            (length,) = struct.unpack_from("<I", self._buf)
            if length < HEADER_SIZE or length > MAX_FRAME_SIZE:
                raise DecodeError("desync", f"frame length {length}")
            if len(self._buf) < 4 + length:
                return frames
            frames.append(bytes(self._buf[4:4 + length]))
            del self._buf[:4 + length]


# ---------------------------------------------------------------------------
# packet size accounting
# ---------------------------------------------------------------------------

def packet_size_report(n: int, m: int) -> dict:
    """Payload sizes in bytes plus the stereo-stream comparison ratio.

    State counts data content (4n + 28m); an empty state still costs its
    4-byte count prefix on the wire, which floors the figure.
    """
    if n < 0 or m < 0:
        raise ValueError("counts must be >= 0")
    state = (4 * n + 28 * m) or 4
    return {
        "tracking": TRACKING_PAYLOAD_SIZE,
        "tracking_with_head": TRACKING_WITH_HEAD_SIZE,
        "state": state,
        "stereo_baseline": STEREO_BASELINE_BYTES,
        "ratio": STEREO_BASELINE_BYTES / state,
    }
