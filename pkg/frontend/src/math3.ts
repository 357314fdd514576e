/** Small 3D helpers: scalar-first quaternions and an orbit camera. */

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number]; // w, x, y, z

export function quatMul(a: Quat, b: Quat): Quat {
  const [aw, ax, ay, az] = a;
  const [bw, bx, by, bz] = b;
  return [
    aw * bw - ax * bx - ay * by - az * bz,
    aw * bx + ax * bw + ay * bz - az * by,
    aw * by - ax * bz + ay * bw + az * bx,
    aw * bz + ax * by - ay * bx + az * bw,
  ];
}

export function quatRotate(q: Quat, v: Vec3): Vec3 {
  const [w, x, y, z] = q;
  const ux = y * v[2] - z * v[1];
  const uy = z * v[0] - x * v[2];
  const uz = x * v[1] - y * v[0];
  const wx = y * uz - z * uy;
  const wy = z * ux - x * uz;
  const wz = x * uy - y * ux;
  return [
    v[0] + 2 * (w * ux + wx),
    v[1] + 2 * (w * uy + wy),
    v[2] + 2 * (w * uz + wz),
  ];
}

export function quatNormalize(q: Quat): Quat {
  const n = Math.hypot(q[0], q[1], q[2], q[3]);
  return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
}

export function quatAboutZ(yaw: number): Quat {
  return [Math.cos(yaw / 2), 0, 0, Math.sin(yaw / 2)];
}

export function quatAxisAngle(axis: Vec3, angle: number): Quat {
  const h = angle / 2;
  const s = Math.sin(h);
  return [Math.cos(h), s * axis[0], s * axis[1], s * axis[2]];
}

export function add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export interface Pose {
  pos: Vec3;
  quat: Quat;
}

export function composePose(a: Pose, b: Pose): Pose {
  return {
    pos: add(a.pos, quatRotate(a.quat, b.pos)),
    quat: quatMul(a.quat, b.quat),
  };
}

export function applyPose(p: Pose, v: Vec3): Vec3 {
  return add(p.pos, quatRotate(p.quat, v));
}

export const IDENTITY_POSE: Pose = { pos: [0, 0, 0], quat: [1, 0, 0, 0] };

/**
 * User-owned orbit camera. Projection is a simple perspective with z-up
 * world: the camera orbits `target` at `dist`, looking inward.
 */
export class OrbitCamera {
  yaw = -2.3;
  pitch = 0.5;
  dist = 1.6;
  target: Vec3 = [0.4, 0.0, 0.2];
  fov = 900; // focal length in canvas pixels

  orbit(dYaw: number, dPitch: number): void {
    this.yaw += dYaw;
    this.pitch = Math.min(Math.max(this.pitch + dPitch, -1.45), 1.45);
  }

  zoom(factor: number): void {
    this.dist = Math.min(Math.max(this.dist * factor, 0.3), 8.0);
  }

  pan(dx: number, dy: number): void {
    const cy = Math.cos(this.yaw);
    const sy = Math.sin(this.yaw);
    this.target = add(this.target, [
      -dx * sy - dy * cy,
      dx * cy - dy * sy,
      0,
    ]);
  }

  eye(): Vec3 {
    const cp = Math.cos(this.pitch);
    return add(this.target, [
      this.dist * cp * Math.cos(this.yaw),
      this.dist * cp * Math.sin(this.yaw),
      this.dist * Math.sin(this.pitch),
    ]);
  }

  /** World point -> canvas {x, y, depth}; depth <= 0 means behind us. */
  project(p: Vec3, width: number, height: number):
      { x: number; y: number; depth: number } {
    const eye = this.eye();
    const d = sub(p, eye);
    // camera basis: forward toward target, right, up
    const f = sub(this.target, eye);
    const fn = Math.hypot(...f);
    const fwd: Vec3 = [f[0] / fn, f[1] / fn, f[2] / fn];
    const right: Vec3 = quatRotate(quatAboutZ(-Math.PI / 2),
                                   [fwd[0], fwd[1], 0]);
    const rn = Math.hypot(...right) || 1;
    const r: Vec3 = [right[0] / rn, right[1] / rn, 0];
    const up: Vec3 = [
      r[1] * fwd[2] - r[2] * fwd[1],
      r[2] * fwd[0] - r[0] * fwd[2],
      r[0] * fwd[1] - r[1] * fwd[0],
    ];
    const depth = d[0] * fwd[0] + d[1] * fwd[1] + d[2] * fwd[2];
    const px = d[0] * r[0] + d[1] * r[1] + d[2] * r[2];
    const py = d[0] * up[0] + d[1] * up[1] + d[2] * up[2];
    const safe = Math.max(depth, 1e-3);
    return {
      x: width / 2 + (this.fov * px) / safe,
      y: height / 2 - (this.fov * py) / safe,
      depth,
    };
  }
}
