"""Deterministic episode replay against a fresh session.

Replay reseeds a session from the episode's full-precision metadata
snapshot, re-feeds the recorded tracking stream tick by tick, and compares
the freshly recorded bytes of every record against the stored ones. A
match therefore covers joint state, commanded velocities, apertures,
object poses and solver status to the bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .episode import EpisodeLog, MODE_INLINE, Recorder, parse_episode
from .geometry import Transform
from .hands import Calibration
from .ik import IkParams
from .session import Attachment, GraspParams, Session
from .wire import Header, KIND_TRACKING, decode_tracking


class ReplayError(RuntimeError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass
class ReplayResult:
    episode_id: str
    scene_id: str
    total_ticks: int
    diverging_ticks: int
    first_divergence: int | None

    @property
    def match(self) -> bool:
        return self.diverging_ticks == 0


def _params_from_meta(meta: dict) -> tuple[IkParams, GraspParams, Calibration]:
    ik_vals = [float(v) for v in meta["ik_params"].split(",")]
    ik = IkParams(alpha=ik_vals[0], damping=ik_vals[1], dt=ik_vals[2],
                  d_margin=ik_vals[3], limit_horizon=ik_vals[4],
                  qp_max_iter=int(ik_vals[5]), qp_tol=ik_vals[6])
    g_vals = [float(v) for v in meta["grasp_params"].split(",")]
    grasp = GraspParams(*g_vals)
    c_vals = [float(v) for v in meta["calibration"].split(",")]
    cal = Calibration(Transform(c_vals[0:3], c_vals[3:7]), c_vals[7])
    return ik, grasp, cal


def build_replay_session(log: EpisodeLog, registry) -> Session:
    meta = log.metadata
    scene, model, base = registry.scene_model(meta["scene_id"])
    live_hash = meta["model_hash"]
    here_hash = model.content_hash()
    if live_hash != here_hash:
        raise ReplayError(
            "hash-mismatch",
            f"episode recorded against model {live_hash}, registry has "
            f"{here_hash} for '{model.name}'")
    if log.mode != MODE_INLINE:
        raise ReplayError("digest-mode",
                          "digest-mode episodes carry no tracking payloads "
                          "and cannot be replayed")
    if model.dof != log.n or scene.object_count != log.m:
        raise ReplayError("shape-mismatch",
                          f"episode ({log.n}, {log.m}) vs scene "
                          f"({model.dof}, {scene.object_count})")

    ik, grasp, cal = _params_from_meta(meta)
    session = Session(0, scene, model, base, ik, grasp,
                      user_id=meta.get("user_id", "replay"),
                      tracking_mode=MODE_INLINE, calibration=cal, seed=1)

    # Overwrite the session with the recorded starting point.
    session.recorder = None
    session.state.q = np.frombuffer(bytes.fromhex(meta["initial_q_hex"]),
                                    dtype="<f8").copy()
    session.state.object_poses = np.frombuffer(
        bytes.fromhex(meta["initial_poses_hex"]),
        dtype="<f8").reshape(-1, 7).copy()
    session.state.tick = int(meta["initial_tick"])
    session.state.sim_time = session.state.tick * ik.dt

    session.state.attached = {}
    if meta.get("attachments"):
        for part in meta["attachments"].split(";"):
            obj_id, gripper, offset_hex = part.split(":")
            vals = struct.unpack("<7d", bytes.fromhex(offset_hex))
            session.state.attached[obj_id] = Attachment(
                int(gripper), Transform(vals[:3], vals[3:]))
    session._falling = {}
    if meta.get("falling"):
        for part in meta["falling"].split(";"):
            obj_id, rest_hex = part.split(":")
            session._falling[obj_id] = struct.unpack(
                "<d", bytes.fromhex(rest_hex))[0]
    if meta.get("initial_tracking_hex"):
        payload = bytes.fromhex(meta["initial_tracking_hex"])
        session._last_payload = payload
        session._last_frame = decode_tracking(payload)
    return session


def replay_episode(data: bytes, registry,
                   compare: bool = True) -> ReplayResult:
    log = parse_episode(data)
    session = build_replay_session(log, registry)

    shadow = Recorder(user_id="replay", scene_id=log.metadata["scene_id"],
                      model_hash=log.metadata["model_hash"],
                      n=log.n, m=log.m, gripper_count=log.gripper_count,
                      dt=session.ik_params.dt, mode=MODE_INLINE)
    shadow._last_tick = session.state.tick
    session.recorder = shadow

    reference = data
    meta_len = struct.unpack_from("<I", reference, 4)[0]
    stride = int(log.metadata["record_stride"])
    records_start = 8 + meta_len

    diverging = 0
    first = None
    seq = 0
    for i, rec in enumerate(log.records):
        if rec.tracking_flag:
            seq += 1
            session.feed_tracking(
                Header(KIND_TRACKING, 0, seq, rec.tick), rec.tracking,
                recv_us=rec.tick)
        session.step()
        if compare:
            got = shadow._chunks[-1]
            want = reference[records_start + i * stride:
                             records_start + (i + 1) * stride]
            if got != want:
                diverging += 1
                if first is None:
                    first = rec.tick
    return ReplayResult(log.episode_id, log.metadata["scene_id"],
                        len(log.records), diverging, first)


def trajectory_summary(data: bytes) -> str:
    """Compact textual description of an episode (non-verifying mode)."""
    log = parse_episode(data)
    q = np.array([r.q for r in log.records])
    lines = [
        f"episode {log.episode_id}",
        f"scene {log.metadata.get('scene_id', '?')} | model "
        f"{log.metadata.get('model_hash', '?')}",
        f"ticks {log.records[0].tick}..{log.records[-1].tick} "
        f"({len(log.records)} records, dt {log.metadata.get('dt')})",
        f"joints n={log.n} m={log.m} grippers={log.gripper_count}",
        f"q range per joint: min {np.round(q.min(axis=0), 4).tolist()}",
        f"                   max {np.round(q.max(axis=0), 4).tolist()}",
        f"tracking packets consumed: "
        f"{sum(r.tracking_flag for r in log.records)}",
        f"status counts: " + ", ".join(
            f"{s}={n}" for s, n in zip(*np.unique(
                [r.status for r in log.records], return_counts=True))),
    ]
    return "\n".join(lines)
