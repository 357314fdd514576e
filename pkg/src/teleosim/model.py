"""Robot and scene domain types.

Instances are built by the parser (see ``parsing``) and are immutable by
convention after ``validate()``; all downstream code treats them as shared
read-only data.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .geometry import Transform

HINGE = "hinge"
SLIDE = "slide"
FIXED = "fixed"

PARALLEL_JAW = "parallel_jaw"
DEXTEROUS = "dexterous"

# Tracking-site counts forced by the retargeting schemes: 4 finger keypoints
# for a parallel jaw, 5 fingertips + wrist for a dexterous hand.
GRIPPER_SITE_COUNT = {PARALLEL_JAW: 4, DEXTEROUS: 6}


class ModelError(ValueError):
    """Semantic defect in a robot/scene description. ``code`` is stable."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass
class Link:
    name: str


@dataclass
class Joint:
    name: str
    kind: str                 # hinge | slide | fixed
    parent: int               # parent link index
    child: int                # child link index
    origin: Transform         # parent link frame -> joint frame
    axis: np.ndarray          # unit 3-vector in the joint frame
    q_lo: float = 0.0
    q_hi: float = 0.0
    v_lim: float = 0.0        # > 0 for non-fixed joints
    dof_index: int = -1       # filled by RobotModel.validate


@dataclass
class CollisionSphere:
    link: int
    center: np.ndarray
    radius: float


@dataclass
class Site:
    name: str
    link: int
    offset: np.ndarray


@dataclass
class Gripper:
    kind: str                 # parallel_jaw | dexterous
    sites: list[str]          # tracking keypoint sites, in retarget order
    aperture_joint: int       # joint index driven by the aperture channel
    aperture_range: tuple[float, float]


@dataclass
class RobotModel:
    name: str
    links: list[Link]
    joints: list[Joint]
    collision_spheres: list[CollisionSphere] = field(default_factory=list)
    sites: list[Site] = field(default_factory=list)
    grippers: list[Gripper] = field(default_factory=list)
    source_text: str = ""

    # filled by validate()
    dof: int = 0
    _site_index: dict[str, int] = field(default_factory=dict, repr=False)
    _children: list[list[int]] = field(default_factory=list, repr=False)
    _parent_joint: list[int] = field(default_factory=list, repr=False)
    _adjacent: set[tuple[int, int]] = field(default_factory=set, repr=False)

    def validate(self) -> "RobotModel":
        n_links = len(self.links)
        if n_links == 0:
            raise ModelError("empty-model", f"robot '{self.name}' has no links")

        parent_joint = [-1] * n_links
        children: list[list[int]] = [[] for _ in range(n_links)]
        for ji, j in enumerate(self.joints):
            for idx, role in ((j.parent, "parent"), (j.child, "child")):
                if not (0 <= idx < n_links):
                    raise ModelError(
                        "dangling-link",
                        f"joint '{j.name}' references invalid {role} link index {idx}")
            if j.child == j.parent:
                raise ModelError("kinematic-cycle",
                                 f"joint '{j.name}' connects link {j.child} to itself")
            if j.child == 0:
                raise ModelError("kinematic-cycle",
                                 f"joint '{j.name}' makes the root link a child")
            if parent_joint[j.child] != -1:
                raise ModelError(
                    "multiple-parents",
                    f"link '{self.links[j.child].name}' has more than one parent joint")
            parent_joint[j.child] = ji
            children[j.parent].append(ji)

            if j.kind not in (HINGE, SLIDE, FIXED):
                raise ModelError("bad-joint-kind", f"joint '{j.name}' kind '{j.kind}'")
            if j.kind != FIXED:
                norm = float(np.linalg.norm(j.axis))
                if abs(norm - 1.0) > 1e-3:
                    raise ModelError(
                        "non-unit-axis",
                        f"joint '{j.name}' axis norm {norm:.6g} beyond tolerance")
                j.axis = j.axis / norm
                if not j.q_lo < j.q_hi:
                    raise ModelError(
                        "bad-limits",
                        f"joint '{j.name}' limits [{j.q_lo}, {j.q_hi}] need lo < hi")
                if not j.v_lim > 0:
                    raise ModelError("bad-vlimit", f"joint '{j.name}' vlimit {j.v_lim}")

        # Reachability from the root proves the parent graph is a tree.
        depth = [-1] * n_links
        depth[0] = 0
        stack = [0]
        while stack:
            li = stack.pop()
            for ji in children[li]:
                ci = self.joints[ji].child
                if depth[ci] != -1:
                    raise ModelError("kinematic-cycle",
                                     f"link '{self.links[ci].name}' reached twice")
                depth[ci] = depth[li] + 1
                stack.append(ci)
        for li in range(1, n_links):
            if depth[li] == -1:
                if parent_joint[li] == -1:
                    raise ModelError(
                        "orphan-link",
                        f"link '{self.links[li].name}' has no parent joint")
                raise ModelError(
                    "kinematic-cycle",
                    f"link '{self.links[li].name}' is not reachable from the root "
                    "(its ancestry forms a cycle)")

        dof = 0
        for j in self.joints:
            if j.kind == FIXED:
                j.dof_index = -1
            else:
                j.dof_index = dof
                dof += 1
        self.dof = dof

        self._site_index = {}
        for si, s in enumerate(self.sites):
            if not (0 <= s.link < n_links):
                raise ModelError("dangling-link",
                                 f"site '{s.name}' references link index {s.link}")
            if s.name in self._site_index:
                raise ModelError("duplicate-site", f"site '{s.name}' defined twice")
            self._site_index[s.name] = si
        for sp in self.collision_spheres:
            if not (0 <= sp.link < n_links):
                raise ModelError("dangling-link",
                                 f"collision sphere references link index {sp.link}")
            if sp.radius <= 0:
                raise ModelError("bad-radius", f"sphere radius {sp.radius} must be > 0")

        for g in self.grippers:
            expected = GRIPPER_SITE_COUNT.get(g.kind)
            if expected is None:
                raise ModelError("bad-gripper-kind", f"gripper kind '{g.kind}'")
            if len(g.sites) != expected:
                raise ModelError(
                    "bad-gripper-sites",
                    f"{g.kind} gripper declares {len(g.sites)} sites, needs {expected}")
            for name in g.sites:
                if name not in self._site_index:
                    raise ModelError("unknown-site",
                                     f"gripper site '{name}' is not defined")
            if not (0 <= g.aperture_joint < len(self.joints)):
                raise ModelError("unknown-joint",
                                 f"gripper aperture joint index {g.aperture_joint}")
            a, b = g.aperture_range
            if not a < b:
                raise ModelError("bad-gripper-range", f"aperture range [{a}, {b}]")

        self._children = children
        self._parent_joint = parent_joint
        self._adjacent = set()
        for j in self.joints:
            self._adjacent.add((min(j.parent, j.child), max(j.parent, j.child)))
        return self

    # -- lookups -------------------------------------------------------------

    def site(self, name: str) -> Site:
        try:
            return self.sites[self._site_index[name]]
        except KeyError:
            raise KeyError(f"unknown site '{name}' on robot '{self.name}'") from None

    def has_site(self, name: str) -> bool:
        return name in self._site_index

    def links_adjacent(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self._adjacent

    @property
    def non_fixed_joints(self) -> list[Joint]:
        return [j for j in self.joints if j.kind != FIXED]

    def joint_limits(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([j.q_lo for j in self.non_fixed_joints])
        hi = np.array([j.q_hi for j in self.non_fixed_joints])
        return lo, hi

    def velocity_limits(self) -> np.ndarray:
        return np.array([j.v_lim for j in self.non_fixed_joints])

    def home_q(self) -> np.ndarray:
        lo, hi = self.joint_limits()
        return np.clip(np.zeros(self.dof), lo, hi)

    def check_q(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dof,):
            raise ValueError(f"expected q of length {self.dof}, got shape {q.shape}")
        return q

    def content_hash(self) -> str:
        """Digest of the source description; identifies the model in logs."""
        return hashlib.sha256(self.source_text.encode("utf-8")).hexdigest()[:16]


@dataclass
class ObjectSpec:
    object_id: str
    shape: str                      # box | sphere | cylinder
    dims: np.ndarray                # box: (lx, ly, lz); sphere: (r,); cylinder: (r, h)
    pose: Transform
    graspable: bool = False
    support: bool = False           # top face acts as a resting surface


@dataclass
class PoseRandomization:
    object_id: str
    pos_lo: np.ndarray
    pos_hi: np.ndarray
    yaw_lo: float = 0.0
    yaw_hi: float = 0.0


@dataclass
class SuccessPredicate:
    object_id: str
    region_center: np.ndarray
    region_half_extents: np.ndarray


@dataclass
class SceneSpec:
    scene_id: str
    robot_refs: list[tuple[str, Transform]]       # (model id, base pose)
    objects: list[ObjectSpec] = field(default_factory=list)
    randomizations: list[PoseRandomization] = field(default_factory=list)
    success: SuccessPredicate | None = None
    ik_overrides: dict[str, float] = field(default_factory=dict)

    def validate(self) -> "SceneSpec":
        ids = [o.object_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ModelError("duplicate-object", f"scene '{self.scene_id}' repeats object ids")
        known = set(ids)
        for r in self.randomizations:
            if r.object_id not in known:
                raise ModelError("unknown-object",
                                 f"randomize block references '{r.object_id}'")
            if np.any(r.pos_lo > r.pos_hi) or r.yaw_lo > r.yaw_hi:
                raise ModelError("bad-range",
                                 f"randomize bounds for '{r.object_id}' need lo <= hi")
        if self.success is not None and self.success.object_id not in known:
            raise ModelError("unknown-object",
                             f"success block references '{self.success.object_id}'")
        return self

    @property
    def object_count(self) -> int:
        return len(self.objects)

    def randomization_for(self, object_id: str) -> PoseRandomization | None:
        for r in self.randomizations:
            if r.object_id == object_id:
                return r
        return None
