"""Demonstration episode container (.dxe files).

A file is self-describing:

    magic "DXE1" | u32 metadata_length | metadata text | records

Metadata is UTF-8 "key value" lines. Records are fixed-stride binary, one
per tick (little-endian):

    u32 tick | f64 sim_time | n f32 q | n f32 v_cmd | G f32 apertures
    | u32 tracking_flag | tracking field | m x 28 B object poses | u8 status

The tracking field is an 8-byte digest of the consumed packet payload, or
the full 700-byte payload inline (metadata tracking_mode). Inline episodes
replay bit-exactly; digest episodes trade that for stride.
"""

from __future__ import annotations

import hashlib
import struct
import uuid
from dataclasses import dataclass, field

import numpy as np

from .wire import TRACKING_PAYLOAD_SIZE

MAGIC = b"DXE1"
FORMAT_VERSION = 1

MODE_DIGEST = "digest"
MODE_INLINE = "inline"

STATUS_CODE = {"converged": 0, "iteration_capped": 1,
               "infeasible_relaxed": 2, "hold": 3}
STATUS_NAME = {v: k for k, v in STATUS_CODE.items()}


class EpisodeError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def tracking_digest(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=8).digest()


def record_stride(n: int, m: int, g: int, mode: str) -> int:
    tracking = 8 if mode == MODE_DIGEST else TRACKING_PAYLOAD_SIZE
    return 4 + 8 + 4 * n + 4 * n + 4 * g + 4 + tracking + 28 * m + 1


@dataclass
class Record:
    tick: int
    sim_time: float
    q: np.ndarray
    v_cmd: np.ndarray
    apertures: np.ndarray
    tracking_flag: int
    tracking: bytes          # 8-byte digest or 700-byte payload
    object_poses: np.ndarray  # (m, 7) float32-precision values
    status: int


@dataclass
class EpisodeLog:
    metadata: dict[str, str]
    records: list[Record]

    @property
    def episode_id(self) -> str:
        return self.metadata["episode_id"]

    @property
    def n(self) -> int:
        return int(self.metadata["n"])

    @property
    def m(self) -> int:
        return int(self.metadata["m"])

    @property
    def gripper_count(self) -> int:
        return int(self.metadata["g"])

    @property
    def mode(self) -> str:
        return self.metadata["tracking_mode"]


class Recorder:
    """Accumulates per-tick records for one episode."""

    def __init__(self, *, user_id: str, scene_id: str, model_hash: str,
                 n: int, m: int, gripper_count: int, dt: float,
                 mode: str = MODE_INLINE, started_us: int = 0,
                 token_fingerprint: str = "", seed: int = 0,
                 object_ids: list[str] | None = None,
                 initial_state_hex: str = "", attachments_text: str = ""):
        if mode not in (MODE_DIGEST, MODE_INLINE):
            raise EpisodeError("bad-mode", f"tracking mode '{mode}'")
        self.episode_id = uuid.uuid4().hex
        self.meta = {
            "format_version": str(FORMAT_VERSION),
            "episode_id": self.episode_id,
            "user_id": user_id,
            "token_fingerprint": token_fingerprint,
            "scene_id": scene_id,
            "model_hash": model_hash,
            "n": str(n), "m": str(m), "g": str(gripper_count),
            "dt": repr(dt),
            "tracking_mode": mode,
            "started_us": str(started_us),
            "seed": str(seed),
            "object_ids": ",".join(object_ids or []),
            "initial_state_hex": initial_state_hex,
            "attachments": attachments_text,
        }
        self.n, self.m, self.g = n, m, gripper_count
        self.mode = mode
        self._chunks: list[bytes] = []
        self._last_tick: int | None = None
        self._stride = record_stride(n, m, gripper_count, mode)

    def __len__(self) -> int:
        return len(self._chunks)

    def append(self, tick: int, sim_time: float, q, v_cmd, apertures,
               tracking_payload: bytes | None, status: int,
               object_poses) -> None:
        if self._last_tick is not None and tick != self._last_tick + 1:
            raise EpisodeError("tick-gap",
                               f"tick {tick} after {self._last_tick}")
        self._last_tick = tick
        flag = 0 if tracking_payload is None else 1
        if self.mode == MODE_DIGEST:
            field_bytes = tracking_digest(tracking_payload) if flag else bytes(8)
        else:
            field_bytes = tracking_payload if flag else bytes(TRACKING_PAYLOAD_SIZE)
        rec = b"".join((
            struct.pack("<I", tick),
            struct.pack("<d", sim_time),
            np.asarray(q).astype("<f4").tobytes(),
            np.asarray(v_cmd).astype("<f4").tobytes(),
            np.asarray(apertures).astype("<f4").tobytes(),
            struct.pack("<I", flag),
            field_bytes,
            np.asarray(object_poses, dtype=float).reshape(-1, 7).astype("<f4").tobytes(),
            struct.pack("<B", status),
        ))
        assert len(rec) == self._stride
        self._chunks.append(rec)

    def finalize(self, ended_us: int = 0) -> bytes | None:
        """Serialize; zero-record episodes are discarded (returns None)."""
        if not self._chunks:
            return None
        meta = dict(self.meta)
        meta["ended_us"] = str(ended_us)
        meta["tick_count"] = str(len(self._chunks))
        meta["record_stride"] = str(self._stride)
        text = "".join(f"{k} {v}\n" for k, v in sorted(meta.items()))
        blob = text.encode("utf-8")
        return b"".join((MAGIC, struct.pack("<I", len(blob)), blob,
                         *self._chunks))


def parse_episode(data: bytes) -> EpisodeLog:
    if len(data) < 8 or data[:4] != MAGIC:
        raise EpisodeError("bad-magic", "not an episode file")
    (meta_len,) = struct.unpack_from("<I", data, 4)
    meta_end = 8 + meta_len
    if meta_end > len(data):
        raise EpisodeError("truncated", f"metadata overruns file at byte {len(data)}")
    metadata: dict[str, str] = {}
    for line in data[8:meta_end].decode("utf-8").splitlines():
        if not line:
            continue
        key, _, value = line.partition(" ")
        metadata[key] = value

    for key in ("episode_id", "n", "m", "g", "tracking_mode",
                "tick_count", "record_stride"):
        if key not in metadata:
            raise EpisodeError("bad-metadata", f"missing '{key}'")
    n, m, g = int(metadata["n"]), int(metadata["m"]), int(metadata["g"])
    mode = metadata["tracking_mode"]
    count = int(metadata["tick_count"])
    stride = record_stride(n, m, g, mode)
    if stride != int(metadata["record_stride"]):
        raise EpisodeError("bad-metadata", "record_stride mismatch")
    if meta_end + stride * count != len(data):
        raise EpisodeError(
            "truncated",
            f"expected {meta_end + stride * count} bytes, file has {len(data)} "
            f"(record section starts at byte {meta_end})")

    tracking_size = 8 if mode == MODE_DIGEST else TRACKING_PAYLOAD_SIZE
    records: list[Record] = []
    prev_tick: int | None = None
    off = meta_end
    for _ in range(count):
        pos = off
        (tick,) = struct.unpack_from("<I", data, pos)
        pos += 4
        (sim_time,) = struct.unpack_from("<d", data, pos)
        pos += 8
        q = np.frombuffer(data, dtype="<f4", count=n, offset=pos).astype(float)
        pos += 4 * n
        v = np.frombuffer(data, dtype="<f4", count=n, offset=pos).astype(float)
        pos += 4 * n
        ap = np.frombuffer(data, dtype="<f4", count=g, offset=pos).astype(float)
        pos += 4 * g
        (flag,) = struct.unpack_from("<I", data, pos)
        pos += 4
        tracking = data[pos:pos + tracking_size]
        pos += tracking_size
        poses = np.frombuffer(data, dtype="<f4", count=7 * m,
                              offset=pos).astype(float).reshape(m, 7)
        pos += 28 * m
        status = data[pos]
        off += stride
        if prev_tick is not None and tick != prev_tick + 1:
            raise EpisodeError("tick-gap", f"tick {tick} after {prev_tick}")
        prev_tick = tick
        records.append(Record(tick, sim_time, q, v, ap, flag, tracking,
                              poses, status))
    return EpisodeLog(metadata, records)


def serialize_episode(log: EpisodeLog) -> bytes:
    """Inverse of parse_episode; parse -> serialize is byte-identical."""
    n, m, g = log.n, log.m, log.gripper_count
    text = "".join(f"{k} {v}\n" for k, v in sorted(log.metadata.items()))
    blob = text.encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", len(blob)), blob]
    for r in log.records:
        chunks.append(b"".join((
            struct.pack("<I", r.tick),
            struct.pack("<d", r.sim_time),
            np.asarray(r.q).astype("<f4").tobytes(),
            np.asarray(r.v_cmd).astype("<f4").tobytes(),
            np.asarray(r.apertures).astype("<f4").tobytes(),
            struct.pack("<I", r.tracking_flag),
            r.tracking,
            np.asarray(r.object_poses, dtype=float).reshape(-1, 7).astype("<f4").tobytes(),
            struct.pack("<B", r.status),
        )))
    return b"".join(chunks)
