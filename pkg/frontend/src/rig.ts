/**
 * Virtual hand rig: mouse/keyboard state in, 25-keypoint frames out.
 *
 * Pointer motion slides the wrist in workspace x/y, the wheel (or
 * modifier drag) moves depth, Q/E yaw the wrist, and holding Space ramps
 * the grip closed (released: ramps open). The keypoint template matches
 * the server's synthetic operator: thumb-index separation shrinks
 * linearly from 0.12 m at grip 0 to zero at grip 1, so the aperture
 * command the robot sees is exactly 1 - grip.
 */

import { Quat, Vec3, quatAboutZ, quatRotate } from "./math3.js";
import { HandFrame, KEYPOINT_COUNT } from "./protocol.js";

export const APERTURE_REF = 0.12;
export const GRIP_RATE = 2.0;      // full-range grip ramp per second held
export const YAW_RATE = 1.8;       // rad/s while Q/E held

export const THUMB_INTER = 3;
export const THUMB_TIP = 4;
export const INDEX_INTER = 7;
export const INDEX_TIP = 8;

// Static keypoint offsets for an open right hand; thumb and index chains
// are re-posed from the grip value. Mirrors the server's template.
const STATIC_TEMPLATE: Record<number, Vec3> = {
  1: [0.03, -0.02, 0.0], 2: [0.05, -0.03, 0.0],
  5: [0.03, 0.02, 0.0], 6: [0.05, 0.03, 0.0],
  9: [0.03, 0.01, -0.01], 10: [0.06, 0.012, -0.012],
  11: [0.085, 0.014, -0.014], 12: [0.105, 0.015, -0.015],
  13: [0.028, 0.0, -0.018], 14: [0.055, 0.0, -0.022],
  15: [0.078, 0.0, -0.025], 16: [0.095, 0.0, -0.027],
  17: [0.025, -0.012, -0.02], 18: [0.048, -0.014, -0.026],
  19: [0.066, -0.015, -0.03], 20: [0.08, -0.016, -0.033],
  21: [-0.03, 0.0, 0.0], 22: [-0.06, 0.0, 0.0],
  23: [-0.02, 0.015, -0.005], 24: [-0.02, -0.015, -0.005],
};

export function templateFrame(
  wristPos: Vec3,
  wristQuat: Quat,
  grip: number,
): HandFrame {
  const g = Math.min(Math.max(grip, 0), 1);
  const sep = APERTURE_REF * (1 - g);
  const local: Vec3[] = [];
  for (let k = 0; k < KEYPOINT_COUNT; k++) {
    local.push(STATIC_TEMPLATE[k] ? [...STATIC_TEMPLATE[k]] as Vec3 : [0, 0, 0]);
  }
  local[THUMB_INTER] = [0.07, -0.35 * sep, 0];
  local[THUMB_TIP] = [0.10, -0.5 * sep, 0];
  local[INDEX_INTER] = [0.07, 0.35 * sep, 0];
  local[INDEX_TIP] = [0.10, 0.5 * sep, 0];

  const positions = new Float64Array(KEYPOINT_COUNT * 3);
  const quats = new Float64Array(KEYPOINT_COUNT * 4);
  for (let k = 0; k < KEYPOINT_COUNT; k++) {
    const r = quatRotate(wristQuat, local[k]);
    positions[k * 3] = wristPos[0] + r[0];
    positions[k * 3 + 1] = wristPos[1] + r[1];
    positions[k * 3 + 2] = wristPos[2] + r[2];
    quats[k * 4] = wristQuat[0];
    quats[k * 4 + 1] = wristQuat[1];
    quats[k * 4 + 2] = wristQuat[2];
    quats[k * 4 + 3] = wristQuat[3];
  }
  return { positions, quats };
}

export interface RigInputEvent {
  /** milliseconds, caller-supplied so replays are deterministic */
  t: number;
  type: "pointer" | "wheel" | "keydown" | "keyup";
  /** pointer deltas in canvas pixels */
  dx?: number;
  dy?: number;
  key?: string; // "grip" | "yaw_left" | "yaw_right" | "depth" modifier
}

export interface WorkspaceBounds {
  lo: Vec3;
  hi: Vec3;
}

const DEFAULT_BOUNDS: WorkspaceBounds = {
  lo: [0.1, -0.6, 0.0],
  hi: [1.3, 0.6, 0.8],
};

/** Pixels of pointer motion per meter of workspace motion. */
export const POINTER_SCALE = 600;

export class VirtualHandRig {
  pos: Vec3 = [0.45, 0.1, 0.3];
  yaw = 0;
  grip = 0;
  private gripHeld = false;
  private yawDir = 0;
  private depthHeld = false;
  private lastT: number | null = null;

  constructor(private bounds: WorkspaceBounds = DEFAULT_BOUNDS) {}

  /** Feed one input event; events must arrive in time order. */
  handle(ev: RigInputEvent): void {
    this.advance(ev.t);
    switch (ev.type) {
      case "pointer": {
        const dx = (ev.dx ?? 0) / POINTER_SCALE;
        const dy = (ev.dy ?? 0) / POINTER_SCALE;
        if (this.depthHeld) {
          this.pos[2] -= dy; // modifier drag moves depth
          this.pos[1] -= dx;
        } else {
          this.pos[0] -= dy; // screen up = away from the operator
          this.pos[1] -= dx;
        }
        this.clamp();
        break;
      }
      case "wheel":
        this.pos[2] -= (ev.dy ?? 0) / 1000;
        this.clamp();
        break;
      case "keydown":
        if (ev.key === "grip") this.gripHeld = true;
        else if (ev.key === "yaw_left") this.yawDir = 1;
        else if (ev.key === "yaw_right") this.yawDir = -1;
        else if (ev.key === "depth") this.depthHeld = true;
        break;
      case "keyup":
        if (ev.key === "grip") this.gripHeld = false;
        else if (ev.key === "yaw_left" || ev.key === "yaw_right") this.yawDir = 0;
        else if (ev.key === "depth") this.depthHeld = false;
        break;
    }
  }

  /** Integrate held-key ramps up to time t (ms). */
  advance(t: number): void {
    if (this.lastT !== null && t > this.lastT) {
      const dt = (t - this.lastT) / 1000;
      this.grip += (this.gripHeld ? 1 : -1) * GRIP_RATE * dt;
      this.grip = Math.min(Math.max(this.grip, 0), 1);
      this.yaw += this.yawDir * YAW_RATE * dt;
    }
    this.lastT = Math.max(t, this.lastT ?? t);
  }

  /** Sample the rig at time t into a full keypoint frame. */
  sample(t: number): HandFrame {
    this.advance(t);
    return templateFrame([...this.pos] as Vec3, quatAboutZ(this.yaw), this.grip);
  }

  private clamp(): void {
    for (let i = 0; i < 3; i++) {
      this.pos[i] = Math.min(Math.max(this.pos[i], this.bounds.lo[i]),
                             this.bounds.hi[i]);
    }
  }
}
