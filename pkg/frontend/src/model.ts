/**
 * Digested robot/scene manifest types (served at /api/v1/manifest) and the
 * client-side forward kinematics used to pose the wireframe skeleton.
 */

import { IDENTITY_POSE, Pose, Vec3, applyPose, composePose, quatAxisAngle, scale } from "./math3.js";

export interface JointManifest {
  name: string;
  kind: "hinge" | "slide" | "fixed";
  parent: number;
  child: number;
  origin: number[]; // x y z qw qx qy qz
  axis: number[];
  limits: number[];
  vlimit: number;
  dof_index: number;
}

export interface ModelManifest {
  name: string;
  dof: number;
  links: string[];
  joints: JointManifest[];
  sites: { name: string; link: number; offset: number[] }[];
  spheres: { link: number; center: number[]; radius: number }[];
  grippers: { kind: string; sites: string[]; aperture_joint: number;
              range: number[] }[];
}

export interface SceneManifest {
  scene_id: string;
  robots: { model: string; base: number[] }[];
  objects: { object_id: string; shape: string; dims: number[];
             pose: number[]; graspable: boolean; support: boolean }[];
}

export interface Manifest {
  default_scene: string;
  stream_port: number;
  scenes: SceneManifest[];
  models: Record<string, ModelManifest>;
}

function poseFrom(seven: number[]): Pose {
  return {
    pos: [seven[0], seven[1], seven[2]],
    quat: [seven[3], seven[4], seven[5], seven[6]],
  };
}

/** World pose of every link, composing origin then joint motion. */
export function forwardKinematics(
  model: ModelManifest,
  q: ArrayLike<number>,
  base: Pose = IDENTITY_POSE,
): Pose[] {
  const poses: (Pose | null)[] = model.links.map(() => null);
  poses[0] = base;
  // joints are topologically parseable by repeated sweeps (trees are tiny)
  let remaining = model.joints.slice();
  while (remaining.length) {
    const next: JointManifest[] = [];
    for (const j of remaining) {
      const parent = poses[j.parent];
      if (parent === null) {
        next.push(j);
        continue;
      }
      const frame = composePose(parent, poseFrom(j.origin));
      let child = frame;
      if (j.kind === "hinge") {
        const rot = quatAxisAngle(j.axis as Vec3, Number(q[j.dof_index]));
        child = composePose(frame, { pos: [0, 0, 0], quat: rot });
      } else if (j.kind === "slide") {
        child = composePose(frame, {
          pos: scale(j.axis as Vec3, Number(q[j.dof_index])),
          quat: [1, 0, 0, 0],
        });
      }
      poses[j.child] = child;
    }
    if (next.length === remaining.length) {
      throw new Error(`model ${model.name} is not a tree`);
    }
    remaining = next;
  }
  return poses as Pose[];
}

export function sitePosition(
  model: ModelManifest,
  linkPoses: Pose[],
  siteName: string,
): Vec3 {
  const site = model.sites.find((s) => s.name === siteName);
  if (!site) throw new Error(`unknown site ${siteName}`);
  return applyPose(linkPoses[site.link], site.offset as Vec3);
}
