"""Per-user simulation sessions.

A session owns a kinematic world (one robot + scene objects), consumes the
freshest tracking packet per tick, runs the retarget -> velocity solve ->
integrate pipeline, applies the quasi-static grasp model, records every
tick into the open episode, and accumulates the timing profile.

Threading: the step loop is the single owner of session state. Transports
deposit packets into the mailbox and controls into the control queue; both
are the only cross-thread touch points and are internally locked.
"""

from __future__ import annotations

import secrets
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .episode import MODE_INLINE, Recorder, STATUS_CODE
from .geometry import Transform, quat_about_z
from .hands import Calibration, TargetSet, map_hand_to_targets
from .ik import IkParams, solve_velocity, velocity_bounds
from .kinematics import forward_kinematics
from .model import RobotModel, SceneSpec
from .wire import Header, WireState, decode_tracking

now_us = lambda: time.time_ns() // 1000


@dataclass
class GraspParams:
    """Quasi-static grasp backend tuning (scene-overridable via config)."""

    reach: float = 0.04            # fingertip-midpoint capture radius, m
    attach_below: float = 0.3      # aperture command thresholds with
    release_above: float = 0.6     # hysteresis in between
    descent_speed: float = 1.0     # m/s after release


@dataclass
class Attachment:
    gripper: int
    offset: Transform              # gripper palm frame -> object frame


@dataclass
class SimState:
    tick: int
    sim_time: float
    q: np.ndarray
    object_poses: np.ndarray                 # (m, 7)
    attached: dict[str, Attachment] = field(default_factory=dict)

    def to_wire(self) -> WireState:
        return WireState(self.q, self.object_poses)

    def copy(self) -> "SimState":
        return SimState(self.tick, self.sim_time, self.q.copy(),
                        self.object_poses.copy(),
                        {k: Attachment(a.gripper, a.offset.copy())
                         for k, a in self.attached.items()})


class Mailbox:
    """Depth-1 freshest-wins slot for tracking packets."""

    def __init__(self):
        self._lock = threading.Lock()
        self._slot: tuple[Header, bytes, int] | None = None
        self.received = 0
        self.dropped_stale = 0      # out-of-order seq
        self.overwritten = 0        # fresher packet replaced an unread one
        self._last_seq: int | None = None

    def put(self, header: Header, payload: bytes, recv_us: int) -> bool:
        """Deposit a packet; returns False when dropped as stale."""
        with self._lock:
            if self._last_seq is not None and header.seq <= self._last_seq:
                self.dropped_stale += 1
                return False
            self._last_seq = header.seq
            if self._slot is not None:
                self.overwritten += 1
            self._slot = (header, payload, recv_us)
            self.received += 1
            return True

    def take(self) -> tuple[Header, bytes, int] | None:
        with self._lock:
            slot = self._slot
            self._slot = None
            return slot

    def reset_seq(self) -> None:
        """A fresh transport starts a fresh monotonic seq stream."""
        with self._lock:
            self._last_seq = None


class InsufficientSamples(RuntimeError):
    pass


class Profiler:
    """Rolling per-tick timing samples, microseconds."""

    def __init__(self, window: int = 4096):
        self.travel = deque(maxlen=window)
        self.step = deque(maxlen=window)
        self.total = deque(maxlen=window)
        self.ticks = 0

    def record(self, travel_us: int | None, step_us: float) -> None:
        self.ticks += 1
        self.step.append(step_us)
        if travel_us is not None:
            self.travel.append(travel_us)
            self.total.append(travel_us + step_us)
        else:
            self.total.append(step_us)

    @staticmethod
    def _stats(samples) -> dict:
        arr = np.asarray(samples, dtype=float)
        return {
            "mean": float(arr.mean()) if arr.size else float("nan"),
            "p50": float(np.percentile(arr, 50)) if arr.size else float("nan"),
            "p99": float(np.percentile(arr, 99)) if arr.size else float("nan"),
            "count": int(arr.size),
        }

    def summary(self, min_ticks: int = 100) -> dict:
        if self.ticks < min_ticks:
            raise InsufficientSamples(
                f"{self.ticks} ticks observed, need {min_ticks}")
        return {
            "Packet Travel Time": self._stats(self.travel),
            "Simulation Step": self._stats(self.step),
            "Total": self._stats(self.total),
        }


def _initial_object_poses(scene: SceneSpec) -> np.ndarray:
    poses = np.zeros((scene.object_count, 7))
    for i, obj in enumerate(scene.objects):
        poses[i, :3] = obj.pose.pos
        poses[i, 3:] = obj.pose.quat
    return poses


class Session:
    """One simulated workspace driven by one operator hand stream."""

    def __init__(self, session_id: int, scene: SceneSpec, model: RobotModel,
                 base: Transform, ik_params: IkParams,
                 grasp: GraspParams | None = None,
                 user_id: str = "operator",
                 tracking_mode: str = MODE_INLINE,
                 calibration: Calibration | None = None,
                 seed: int = 0):
        self.session_id = session_id
        self.scene = scene
        self.model = model
        self.base = base
        self.ik_params = ik_params.with_overrides(scene.ik_overrides)
        self.grasp = grasp or GraspParams()
        self.user_id = user_id
        self.tracking_mode = tracking_mode
        self.calibration = calibration or Calibration()
        self.active_gripper = 0

        self.mailbox = Mailbox()
        self.controls: deque = deque()
        self._controls_lock = threading.Lock()
        self.profiler = Profiler()
        self.finished_episodes: deque = deque()   # handoff to the flush worker

        self.state = SimState(0, 0.0, model.home_q(),
                              _initial_object_poses(scene))
        self._falling: dict[str, float] = {}      # object_id -> rest z
        self._last_frame = None
        self._last_payload: bytes | None = None
        self._aperture_cmd = np.ones(max(len(model.grippers), 0))
        self.recorder: Recorder | None = None
        self._last_reset_seed = seed
        self.reset(seed)

    # -- episode plumbing ---------------------------------------------------

    def _attachments_text(self) -> str:
        parts = []
        for obj_id, att in self.state.attached.items():
            vals = tuple(att.offset.pos) + tuple(att.offset.quat)
            parts.append(f"{obj_id}:{att.gripper}:{struct.pack('<7d', *vals).hex()}")
        return ";".join(parts)

    def _open_episode(self, seed: int) -> None:
        from .wire import encode_state
        self.recorder = Recorder(
            user_id=self.user_id,
            scene_id=self.scene.scene_id,
            model_hash=self.model.content_hash(),
            n=self.model.dof,
            m=self.scene.object_count,
            gripper_count=len(self.model.grippers),
            dt=self.ik_params.dt,
            mode=self.tracking_mode,
            started_us=now_us(),
            seed=seed,
            object_ids=[o.object_id for o in self.scene.objects],
            initial_state_hex=encode_state(self.state.to_wire()).hex(),
            attachments_text=self._attachments_text(),
        )
        meta = self.recorder.meta
        meta["initial_tick"] = str(self.state.tick)
        # Full-precision snapshot so replay reproduces the live run bit for
        # bit: wire-format f32 state is not enough to reseed the integrator.
        meta["initial_q_hex"] = self.state.q.astype("<f8").tobytes().hex()
        meta["initial_poses_hex"] = \
            self.state.object_poses.astype("<f8").tobytes().hex()
        meta["falling"] = ";".join(
            f"{oid}:{struct.pack('<d', rest).hex()}"
            for oid, rest in self._falling.items())
        meta["initial_tracking_hex"] = \
            self._last_payload.hex() if self._last_payload else ""
        p = self.ik_params
        meta["ik_params"] = ",".join(repr(v) for v in (
            p.alpha, p.damping, p.dt, p.d_margin, p.limit_horizon,
            float(p.qp_max_iter), p.qp_tol))
        g = self.grasp
        meta["grasp_params"] = ",".join(repr(v) for v in (
            g.reach, g.attach_below, g.release_above, g.descent_speed))
        c = self.calibration
        meta["calibration"] = ",".join(repr(float(v)) for v in (
            *c.transform.pos, *c.transform.quat, c.scale))

    def _finalize_episode(self) -> str | None:
        """Close the open episode; hand non-empty ones to the flush queue."""
        if self.recorder is None:
            return None
        recorder, self.recorder = self.recorder, None
        data = recorder.finalize(ended_us=now_us())
        if data is None:
            return None
        self.finished_episodes.append((recorder.episode_id, data))
        return recorder.episode_id

    # -- controls -----------------------------------------------------------

    def enqueue_control(self, header: Header, control) -> None:
        with self._controls_lock:
            self.controls.append((header, control))

    def drain_controls(self) -> list:
        with self._controls_lock:
            items = list(self.controls)
            self.controls.clear()
        return items

    # -- state transitions --------------------------------------------------

    def reset(self, seed: int = 0) -> SimState:
        """Home the robot and redraw object poses; one-tick turnaround."""
        if seed == 0:
            seed = secrets.randbits(63) or 1
        self._last_reset_seed = seed
        self._finalize_episode()
        rng = np.random.default_rng(seed)
        poses = _initial_object_poses(self.scene)
        for i, obj in enumerate(self.scene.objects):
            rand = self.scene.randomization_for(obj.object_id)
            if rand is None:
                continue
            pos = rng.uniform(rand.pos_lo, rand.pos_hi)
            yaw = rng.uniform(rand.yaw_lo, rand.yaw_hi)
            poses[i, :3] = pos
            poses[i, 3:] = quat_about_z(yaw)
        self.state.q = self.model.home_q()
        self.state.object_poses = poses
        self.state.attached = {}
        self._falling = {}
        self._last_frame = None
        self._last_payload = None
        self._aperture_cmd = np.ones(max(len(self.model.grippers), 0))
        self._open_episode(seed)
        return self.state

    def switch_task(self, scene: SceneSpec, model: RobotModel,
                    base: Transform, seed: int = 0) -> SimState:
        """Swap in a different scene (possibly a different robot)."""
        self._finalize_episode()
        self.scene = scene
        self.model = model
        self.base = base
        self.ik_params = self.ik_params.with_overrides(scene.ik_overrides)
        self.state = SimState(self.state.tick, self.state.sim_time,
                              model.home_q(), _initial_object_poses(scene))
        self.active_gripper = 0
        self.recorder = None
        self.reset(seed)
        return self.state

    # -- stepping -----------------------------------------------------------

    def feed_tracking(self, header: Header, payload: bytes,
                      recv_us: int | None = None) -> bool:
        return self.mailbox.put(header, payload,
                                now_us() if recv_us is None else recv_us)

    def step(self) -> SimState:
        t_start = time.perf_counter()
        dt = self.ik_params.dt
        travel_us = None

        slot = self.mailbox.take()
        consumed_payload = None
        if slot is not None:
            header, payload, recv_us = slot
            travel_us = max(recv_us - header.timestamp_us, 0)
            self._last_frame = decode_tracking(payload, header.timestamp_us)
            self._last_payload = payload
            consumed_payload = payload

        status_code = STATUS_CODE["hold"]
        v = np.zeros(self.model.dof)
        targets = None
        if self._last_frame is not None:
            if self.model.grippers:
                targets = map_hand_to_targets(self._last_frame, self.model,
                                              self.calibration,
                                              self.active_gripper)
                self._aperture_cmd[self.active_gripper] = targets.aperture_command
            elif self.model.sites:
                # Gripperless model: the wrist keypoint drives the tool site.
                tool = "tip" if self.model.has_site("tip") \
                    else self.model.sites[-1].name
                targets = TargetSet([(tool, self.calibration.apply(
                    self._last_frame.positions[0]))])
        if targets is not None:
            cmd = solve_velocity(self.model, self.state.q, targets,
                                 self.ik_params, self.base)
            v = cmd.v.copy()
            status_code = STATUS_CODE[cmd.status]
            if self.model.grippers:
                v = self._drive_apertures(v)

        lo, hi = self.model.joint_limits()
        self.state.q = np.clip(self.state.q + v * dt, lo, hi)
        self._grasp_update()
        self.state.tick += 1
        self.state.sim_time = self.state.tick * dt

        if self.recorder is not None:
            self.recorder.append(
                self.state.tick, self.state.sim_time, self.state.q, v,
                self._aperture_cmd, consumed_payload, status_code,
                self.state.object_poses)

        self.profiler.record(travel_us,
                             (time.perf_counter() - t_start) * 1e6)
        return self.state

    def _drive_apertures(self, v: np.ndarray) -> np.ndarray:
        """Aperture joints follow their command channel at their vlimit."""
        v_lo, v_hi = velocity_bounds(self.model, self.state.q, self.ik_params)
        for gi, g in enumerate(self.model.grippers):
            joint = self.model.joints[g.aperture_joint]
            di = joint.dof_index
            if di < 0:
                continue
            a_min, a_max = g.aperture_range
            target = a_min + self._aperture_cmd[gi] * (a_max - a_min)
            want = (target - self.state.q[di]) / self.ik_params.dt
            v[di] = min(max(want, v_lo[di]), v_hi[di])
        return v

    # -- grasp model ----------------------------------------------------------

    def _gripper_palm_pose(self, fk, gripper_index: int) -> Transform:
        site = self.model.site(self.model.grippers[gripper_index].sites[0])
        return fk.link_poses[site.link]

    def _fingertip_midpoint(self, fk, gripper_index: int) -> np.ndarray:
        g = self.model.grippers[gripper_index]
        return 0.5 * (fk.site_position(g.sites[0]) + fk.site_position(g.sites[2]))

    def _support_rest_z(self, object_index: int, x: float, y: float,
                        z_now: float) -> float:
        rest = 0.0
        for i, obj in enumerate(self.scene.objects):
            if not obj.support or i == object_index:
                continue
            cx, cy, cz = self.state.object_poses[i, :3]
            top = cz + obj.dims[2] / 2.0
            if abs(x - cx) <= obj.dims[0] / 2.0 and abs(y - cy) <= obj.dims[1] / 2.0 \
                    and rest < top <= z_now + 1e-9:
                rest = top
        return max(rest, 0.0)

    def _grasp_update(self) -> None:
        if not self.model.grippers:
            self._update_falling()
            return
        fk = forward_kinematics(self.model, self.state.q, self.base)

        # Attached objects ride their gripper rigidly.
        for obj_id, att in self.state.attached.items():
            idx = self._object_index(obj_id)
            pose = self._gripper_palm_pose(fk, att.gripper).compose(att.offset)
            self.state.object_poses[idx, :3] = pose.pos
            self.state.object_poses[idx, 3:] = pose.quat

        for gi in range(len(self.model.grippers)):
            cmd = self._aperture_cmd[gi]
            holding = [oid for oid, att in self.state.attached.items()
                       if att.gripper == gi]
            if holding:
                if cmd > self.grasp.release_above:
                    for oid in holding:
                        idx = self._object_index(oid)
                        del self.state.attached[oid]
                        x, y, z = self.state.object_poses[idx, :3]
                        self._falling[oid] = self._support_rest_z(idx, x, y, z)
                continue
            if cmd >= self.grasp.attach_below:
                continue
            midpoint = self._fingertip_midpoint(fk, gi)
            best, best_d = None, self.grasp.reach
            for i, obj in enumerate(self.scene.objects):
                if not obj.graspable or obj.object_id in self.state.attached \
                        or obj.object_id in self._falling:
                    continue
                d = float(np.linalg.norm(self.state.object_poses[i, :3] - midpoint))
                if d <= best_d:
                    best, best_d = i, d
            if best is not None:
                obj_id = self.scene.objects[best].object_id
                palm = self._gripper_palm_pose(fk, gi)
                obj_pose = Transform(self.state.object_poses[best, :3],
                                     self.state.object_poses[best, 3:])
                self.state.attached[obj_id] = Attachment(
                    gi, palm.inverse().compose(obj_pose))
        self._update_falling()

    def _update_falling(self) -> None:
        landed = []
        for obj_id, rest_z in self._falling.items():
            idx = self._object_index(obj_id)
            z = self.state.object_poses[idx, 2] - \
                self.grasp.descent_speed * self.ik_params.dt
            if z <= rest_z + 1e-12:
                z = rest_z
                landed.append(obj_id)
            self.state.object_poses[idx, 2] = z
        for obj_id in landed:
            del self._falling[obj_id]

    def _object_index(self, object_id: str) -> int:
        for i, obj in enumerate(self.scene.objects):
            if obj.object_id == object_id:
                return i
        raise KeyError(object_id)
