/**
 * Wireframe scene renderer.
 *
 * Pure part: turn (manifest, state, camera) into flat draw primitives.
 * Impure part: paint primitives onto a 2D canvas context. Tests exercise
 * the pure part with no DOM.
 */

import { OrbitCamera, Pose, Vec3, applyPose, quatAboutZ, quatRotate } from "./math3.js";
import { Manifest, ModelManifest, SceneManifest, forwardKinematics } from "./model.js";
import { WireState } from "./protocol.js";

export interface LinePrim {
  kind: "line";
  a: Vec3;
  b: Vec3;
  color: string;
  width: number;
}

export interface DotPrim {
  kind: "dot";
  p: Vec3;
  px: number;
  color: string;
}

export interface CirclePrim {
  kind: "circle";
  p: Vec3;
  radius: number; // meters; projected per depth
  color: string;
}

export type Primitive = LinePrim | DotPrim | CirclePrim;

const BOX_EDGES: [number, number][] = [
  [0, 1], [1, 3], [3, 2], [2, 0],
  [4, 5], [5, 7], [7, 6], [6, 4],
  [0, 4], [1, 5], [2, 6], [3, 7],
];

function boxCorners(pose: Pose, dims: number[]): Vec3[] {
  const [lx, ly, lz] = dims;
  const corners: Vec3[] = [];
  for (const sx of [-0.5, 0.5]) {
    for (const sy of [-0.5, 0.5]) {
      for (const sz of [-0.5, 0.5]) {
        corners.push(applyPose(pose, [sx * lx, sy * ly, sz * lz]));
      }
    }
  }
  return corners;
}

export function groundGrid(extent = 0.9, step = 0.15): Primitive[] {
  const prims: Primitive[] = [];
  for (let v = -extent; v <= extent + 1e-9; v += step) {
    prims.push({ kind: "line", a: [v, -extent, 0], b: [v, extent, 0],
                 color: "#233", width: 1 });
    prims.push({ kind: "line", a: [-extent, v, 0], b: [extent, v, 0],
                 color: "#233", width: 1 });
  }
  return prims;
}

export function robotPrimitives(
  model: ModelManifest,
  q: ArrayLike<number>,
  base: Pose,
): Primitive[] {
  const poses = forwardKinematics(model, q, base);
  const prims: Primitive[] = [];
  for (const joint of model.joints) {
    prims.push({
      kind: "line",
      a: poses[joint.parent].pos,
      b: poses[joint.child].pos,
      color: "#7fd4ff",
      width: 3,
    });
  }
  for (const sphere of model.spheres) {
    prims.push({
      kind: "circle",
      p: applyPose(poses[sphere.link], sphere.center as Vec3),
      radius: sphere.radius,
      color: "#3a5f6f",
    });
  }
  for (const site of model.sites) {
    prims.push({
      kind: "dot",
      p: applyPose(poses[site.link], site.offset as Vec3),
      px: 3,
      color: "#ffd166",
    });
  }
  return prims;
}

export function objectPrimitives(
  scene: SceneManifest,
  state: WireState,
): Primitive[] {
  const prims: Primitive[] = [];
  for (let i = 0; i < scene.objects.length && i < state.m; i++) {
    const obj = scene.objects[i];
    const pose: Pose = {
      pos: [state.objectPoses[i * 7], state.objectPoses[i * 7 + 1],
            state.objectPoses[i * 7 + 2]],
      quat: [state.objectPoses[i * 7 + 3], state.objectPoses[i * 7 + 4],
             state.objectPoses[i * 7 + 5], state.objectPoses[i * 7 + 6]],
    };
    const color = obj.graspable ? "#9ef01a" : "#f4845f";
    if (obj.shape === "box") {
      const corners = boxCorners(pose, obj.dims);
      for (const [a, b] of BOX_EDGES) {
        prims.push({ kind: "line", a: corners[a], b: corners[b], color,
                     width: 1.5 });
      }
    } else if (obj.shape === "sphere") {
      prims.push({ kind: "circle", p: pose.pos, radius: obj.dims[0], color });
    } else {
      // cylinder: radius circle at both caps plus an axis line
      const half = obj.dims[1] / 2;
      const top = applyPose(pose, [0, 0, half]);
      const bottom = applyPose(pose, [0, 0, -half]);
      prims.push({ kind: "circle", p: top, radius: obj.dims[0], color });
      prims.push({ kind: "circle", p: bottom, radius: obj.dims[0], color });
      prims.push({ kind: "line", a: bottom, b: top, color, width: 1.5 });
    }
  }
  return prims;
}

export function scenePrimitives(
  manifest: Manifest,
  sceneId: string,
  state: WireState,
): Primitive[] {
  const scene = manifest.scenes.find((s) => s.scene_id === sceneId);
  if (!scene) return groundGrid();
  const prims = groundGrid();
  let qOffset = 0;
  for (const ref of scene.robots) {
    const model = manifest.models[ref.model];
    const base: Pose = {
      pos: [ref.base[0], ref.base[1], ref.base[2]],
      quat: [ref.base[3], ref.base[4], ref.base[5], ref.base[6]],
    };
    if (state.n >= qOffset + model.dof) {
      prims.push(...robotPrimitives(
        model, Array.from(state.q.slice(qOffset, qOffset + model.dof)), base));
      qOffset += model.dof;
    }
  }
  prims.push(...objectPrimitives(scene, state));
  return prims;
}

/** Marker for the operator's own virtual hand. */
export function handPrimitives(pos: Vec3, yaw: number, grip: number):
    Primitive[] {
  const quat = quatAboutZ(yaw);
  const sep = 0.12 * (1 - grip);
  const thumb = applyPose({ pos, quat }, [0.10, -sep / 2, 0]);
  const index = applyPose({ pos, quat }, [0.10, sep / 2, 0]);
  return [
    { kind: "dot", p: pos, px: 5, color: "#ff5d8f" },
    { kind: "line", a: pos, b: thumb, color: "#ff5d8f", width: 2 },
    { kind: "line", a: pos, b: index, color: "#ff5d8f", width: 2 },
  ];
}

export interface Context2DLike {
  clearRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fill(): void;
  strokeStyle: string;
  fillStyle: string;
  lineWidth: number;
}

export function paint(
  ctx: Context2DLike,
  camera: OrbitCamera,
  prims: Primitive[],
  width: number,
  height: number,
): number {
  ctx.clearRect(0, 0, width, height);
  let drawn = 0;
  for (const prim of prims) {
    if (prim.kind === "line") {
      const a = camera.project(prim.a, width, height);
      const b = camera.project(prim.b, width, height);
      if (a.depth <= 0 && b.depth <= 0) continue;
      ctx.strokeStyle = prim.color;
      ctx.lineWidth = prim.width;
      ctx.beginPath();
      ctx.moveTo(a.x, a.y);
      ctx.lineTo(b.x, b.y);
      ctx.stroke();
      drawn++;
    } else if (prim.kind === "dot") {
      const p = camera.project(prim.p, width, height);
      if (p.depth <= 0) continue;
      ctx.fillStyle = prim.color;
      ctx.beginPath();
      ctx.arc(p.x, p.y, prim.px, 0, Math.PI * 2);
      ctx.fill();
      drawn++;
    } else {
      const p = camera.project(prim.p, width, height);
      if (p.depth <= 0) continue;
      const edge = camera.project(
        [prim.p[0], prim.p[1] + prim.radius, prim.p[2]], width, height);
      const r = Math.max(Math.hypot(edge.x - p.x, edge.y - p.y), 1);
      ctx.strokeStyle = prim.color;
      ctx.lineWidth = 1;
      ctx.beginPath();
      ctx.arc(p.x, p.y, r, 0, Math.PI * 2);
      ctx.stroke();
      drawn++;
    }
  }
  return drawn;
}
