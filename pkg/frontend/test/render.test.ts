/** Client-side FK parity and wireframe projection sanity. */

import { describe, expect, it } from "vitest";

import { OrbitCamera } from "../src/math3.js";
import { ModelManifest, forwardKinematics, sitePosition } from "../src/model.js";
import { groundGrid, paint, robotPrimitives } from "../src/render.js";

const PLANAR2: ModelManifest = {
  name: "planar2", dof: 2, links: ["base", "upper", "lower"],
  joints: [
    { name: "shoulder", kind: "hinge", parent: 0, child: 1,
      origin: [0, 0, 0, 1, 0, 0, 0], axis: [0, 0, 1],
      limits: [-3.14, 3.14], vlimit: 2, dof_index: 0 },
    { name: "elbow", kind: "hinge", parent: 1, child: 2,
      origin: [1, 0, 0, 1, 0, 0, 0], axis: [0, 0, 1],
      limits: [-3.14, 3.14], vlimit: 2, dof_index: 1 },
  ],
  sites: [{ name: "tip", link: 2, offset: [1, 0, 0] }],
  spheres: [{ link: 2, center: [0.5, 0, 0], radius: 0.1 }],
  grippers: [],
};

describe("client-side forward kinematics", () => {
  it("matches the analytic planar solution at rest", () => {
    const poses = forwardKinematics(PLANAR2, [0, 0]);
    const tip = sitePosition(PLANAR2, poses, "tip");
    expect(tip[0]).toBeCloseTo(2, 12);
    expect(tip[1]).toBeCloseTo(0, 12);
  });

  it("matches the analytic planar solution at a quarter turn", () => {
    const poses = forwardKinematics(PLANAR2, [Math.PI / 2, 0]);
    const tip = sitePosition(PLANAR2, poses, "tip");
    expect(tip[0]).toBeCloseTo(0, 12);
    expect(tip[1]).toBeCloseTo(2, 12);
  });

  it("general configuration matches cos/sin composition", () => {
    for (const [q1, q2] of [[0.3, -0.7], [1.1, 0.4], [-2.0, 1.5]]) {
      const poses = forwardKinematics(PLANAR2, [q1, q2]);
      const tip = sitePosition(PLANAR2, poses, "tip");
      expect(tip[0]).toBeCloseTo(Math.cos(q1) + Math.cos(q1 + q2), 10);
      expect(tip[1]).toBeCloseTo(Math.sin(q1) + Math.sin(q1 + q2), 10);
    }
  });
});

class FakeContext {
  ops: string[] = [];
  strokeStyle = "";
  fillStyle = "";
  lineWidth = 0;
  clearRect() { this.ops.push("clear"); }
  beginPath() { this.ops.push("begin"); }
  moveTo() { this.ops.push("move"); }
  lineTo() { this.ops.push("line"); }
  arc() { this.ops.push("arc"); }
  stroke() { this.ops.push("stroke"); }
  fill() { this.ops.push("fill"); }
}

describe("wireframe painting", () => {
  it("projects and draws the skeleton without touching the network", () => {
    const prims = [
      ...groundGrid(),
      ...robotPrimitives(PLANAR2, [0.4, -0.2],
                         { pos: [0, 0, 0], quat: [1, 0, 0, 0] }),
    ];
    const ctx = new FakeContext();
    const camera = new OrbitCamera();
    const drawn = paint(ctx as never, camera, prims, 800, 600);
    expect(drawn).toBeGreaterThan(prims.length / 2);
    expect(ctx.ops[0]).toBe("clear");
    expect(ctx.ops.filter((o) => o === "stroke").length).toBeGreaterThan(10);
  });

  it("camera projection keeps the look-at target near canvas center", () => {
    const camera = new OrbitCamera();
    const p = camera.project(camera.target, 800, 600);
    expect(Math.abs(p.x - 400)).toBeLessThan(1e-6);
    expect(Math.abs(p.y - 300)).toBeLessThan(1e-6);
    expect(p.depth).toBeCloseTo(camera.dist, 9);
  });

  it("points behind the camera are culled", () => {
    const camera = new OrbitCamera();
    const eye = camera.eye();
    const behind: [number, number, number] = [
      eye[0] * 2 - camera.target[0],
      eye[1] * 2 - camera.target[1],
      eye[2] * 2 - camera.target[2],
    ];
    const ctx = new FakeContext();
    const drawn = paint(ctx as never, camera,
                        [{ kind: "dot", p: behind, px: 3, color: "#fff" }],
                        800, 600);
    expect(drawn).toBe(0);
  });
});
