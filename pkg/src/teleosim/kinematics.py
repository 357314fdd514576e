"""Forward kinematics, task Jacobians and self-collision distance.

All functions are pure in (model, q, base); RobotModel is treated as
immutable shared data, so everything here is safe to call concurrently.

The inner loops run on plain Python floats: the simulation step budget is a
few milliseconds and these trees are small (tens of joints), where scalar
math beats numpy's per-op dispatch by more than an order of magnitude. A
flattened traversal program is compiled once per model and cached on it.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import cos, inf, sin, sqrt

import numpy as np

from .geometry import Transform
from .model import FIXED, HINGE, RobotModel

FD_STEP = 1e-6  # central-difference step for collision gradients

_KIND_FIXED, _KIND_HINGE, _KIND_SLIDE = 0, 1, 2


def _qmul(aw, ax, ay, az, bw, bx, by, bz):
    return (aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw)


def _qrot(qw, qx, qy, qz, vx, vy, vz):
    # v + 2w(u x v) + 2(u x (u x v))
    ux = qy * vz - qz * vy
    uy = qz * vx - qx * vz
    uz = qx * vy - qy * vx
    wx = qy * uz - qz * uy
    wy = qz * ux - qx * uz
    wz = qx * uy - qy * ux
    return (vx + 2.0 * (qw * ux + wx),
            vy + 2.0 * (qw * uy + wy),
            vz + 2.0 * (qw * uz + wz))


class _FkProgram:
    """Flattened, topologically ordered traversal of a RobotModel."""

    def __init__(self, model: RobotModel):
        self.n_links = len(model.links)
        kind_code = {FIXED: _KIND_FIXED, HINGE: _KIND_HINGE}
        entries = []
        order: list[int] = []
        stack = [0]
        while stack:
            li = stack.pop()
            for ji in model._children[li]:
                j = model.joints[ji]
                entries.append((
                    kind_code.get(j.kind, _KIND_SLIDE),
                    j.parent, j.child,
                    (float(j.origin.pos[0]), float(j.origin.pos[1]), float(j.origin.pos[2])),
                    (float(j.origin.quat[0]), float(j.origin.quat[1]),
                     float(j.origin.quat[2]), float(j.origin.quat[3])),
                    (float(j.axis[0]), float(j.axis[1]), float(j.axis[2])),
                    j.dof_index, ji,
                ))
                order.append(ji)
                stack.append(j.child)
        self.entries = entries
        self.joint_to_slot = {ji: slot for slot, ji in enumerate(order)}

        # Root-to-link entry slots, for chain-restricted evaluation.
        self.link_chain: list[tuple[int, ...]] = []
        for li in range(self.n_links):
            chain = []
            cur = li
            while cur != 0:
                ji = model._parent_joint[cur]
                chain.append(self.joint_to_slot[ji])
                cur = model.joints[ji].parent
            chain.reverse()
            self.link_chain.append(tuple(chain))

        self.spheres = [(s.link, float(s.center[0]), float(s.center[1]),
                         float(s.center[2]), float(s.radius))
                        for s in model.collision_spheres]
        pairs = []
        for a in range(len(self.spheres)):
            for b in range(a + 1, len(self.spheres)):
                la, lb = self.spheres[a][0], self.spheres[b][0]
                if la == lb or model.links_adjacent(la, lb):
                    continue
                pairs.append((a, b))
        self.eligible_pairs = pairs
        # dof indices that can move a pair: union of both chains.
        self.pair_dofs = {}
        for a, b in pairs:
            dofs = set()
            for slot in self.link_chain[self.spheres[a][0]] + self.link_chain[self.spheres[b][0]]:
                e = self.entries[slot]
                if e[6] >= 0:
                    dofs.add(e[6])
            self.pair_dofs[(a, b)] = sorted(dofs)


def _program(model: RobotModel) -> _FkProgram:
    prog = getattr(model, "_fk_program", None)
    if prog is None:
        prog = _FkProgram(model)
        model._fk_program = prog
    return prog


def _run_fk(prog: _FkProgram, q, base: Transform | None):
    pos = [None] * prog.n_links
    quat = [None] * prog.n_links
    fpos = [None] * len(prog.entries)
    fquat = [None] * len(prog.entries)
    if base is None:
        pos[0] = (0.0, 0.0, 0.0)
        quat[0] = (1.0, 0.0, 0.0, 0.0)
    else:
        pos[0] = (float(base.pos[0]), float(base.pos[1]), float(base.pos[2]))
        quat[0] = (float(base.quat[0]), float(base.quat[1]),
                   float(base.quat[2]), float(base.quat[3]))
    for slot, (kind, parent, child, opos, oquat, axis, dof, _ji) in enumerate(prog.entries):
        pw, px, py, pz = quat[parent]
        bx, by, bz = pos[parent]
        rx, ry, rz = _qrot(pw, px, py, pz, opos[0], opos[1], opos[2])
        fx, fy, fz = bx + rx, by + ry, bz + rz
        fw, fxq, fyq, fzq = _qmul(pw, px, py, pz, oquat[0], oquat[1], oquat[2], oquat[3])
        fpos[slot] = (fx, fy, fz)
        fquat[slot] = (fw, fxq, fyq, fzq)
        if kind == _KIND_HINGE:
            half = 0.5 * q[dof]
            c, s = cos(half), sin(half)
            mw, mx, my, mz = _qmul(fw, fxq, fyq, fzq, c, s * axis[0], s * axis[1], s * axis[2])
            pos[child] = (fx, fy, fz)
            quat[child] = (mw, mx, my, mz)
        elif kind == _KIND_SLIDE:
            d = q[dof]
            tx, ty, tz = _qrot(fw, fxq, fyq, fzq, axis[0] * d, axis[1] * d, axis[2] * d)
            pos[child] = (fx + tx, fy + ty, fz + tz)
            quat[child] = (fw, fxq, fyq, fzq)
        else:
            pos[child] = (fx, fy, fz)
            quat[child] = (fw, fxq, fyq, fzq)
    return pos, quat, fpos, fquat


class FkResult:
    """World poses of every link plus the pre-motion joint frames."""

    __slots__ = ("model", "_prog", "_pos", "_quat", "_fpos", "_fquat", "_poses")

    def __init__(self, model, prog, pos, quat, fpos, fquat):
        self.model = model
        self._prog = prog
        self._pos = pos
        self._quat = quat
        self._fpos = fpos
        self._fquat = fquat
        self._poses = None

    @property
    def link_poses(self) -> list[Transform]:
        if self._poses is None:
            self._poses = [Transform(p, r) for p, r in zip(self._pos, self._quat)]
        return self._poses

    def link_position(self, link: int) -> np.ndarray:
        return np.array(self._pos[link])

    def site_pose(self, name: str) -> Transform:
        s = self.model.site(name)
        return Transform(self.site_position(name), self._quat[s.link])

    def site_position(self, name: str) -> np.ndarray:
        s = self.model.site(name)
        qw, qx, qy, qz = self._quat[s.link]
        ox, oy, oz = _qrot(qw, qx, qy, qz, s.offset[0], s.offset[1], s.offset[2])
        bx, by, bz = self._pos[s.link]
        return np.array((bx + ox, by + oy, bz + oz))

    def sphere_center(self, index: int) -> np.ndarray:
        link, cx, cy, cz, _r = self._prog.spheres[index]
        qw, qx, qy, qz = self._quat[link]
        ox, oy, oz = _qrot(qw, qx, qy, qz, cx, cy, cz)
        bx, by, bz = self._pos[link]
        return np.array((bx + ox, by + oy, bz + oz))


def forward_kinematics(model: RobotModel, q: np.ndarray,
                       base: Transform | None = None) -> FkResult:
    """World poses of every link, composing origin o joint motion root-to-leaf."""
    q = model.check_q(q)
    prog = _program(model)
    qt = tuple(float(v) for v in q)
    return FkResult(model, prog, *_run_fk(prog, qt, base))


def site_chain(model: RobotModel, site_name: str) -> list[int]:
    """Joint indices on the root-to-site path (all kinds, root first)."""
    prog = _program(model)
    chain = prog.link_chain[model.site(site_name).link]
    return [prog.entries[slot][7] for slot in chain]


def site_jacobian(model: RobotModel, q: np.ndarray, site_name: str,
                  base: Transform | None = None,
                  fk: FkResult | None = None) -> np.ndarray:
    """3 x dof position Jacobian of a site, assembled analytically.

    Hinge columns are axis x moment-arm, slide columns are the axis; joints
    off the site's ancestor chain contribute exact zeros.
    """
    if fk is None:
        fk = forward_kinematics(model, q, base)
    prog = fk._prog
    px, py, pz = fk.site_position(site_name)
    jac = np.zeros((3, model.dof))
    for slot in prog.link_chain[model.site(site_name).link]:
        kind, _parent, _child, _opos, _oquat, axis, dof, _ji = prog.entries[slot]
        if kind == _KIND_FIXED:
            continue
        fw, fx, fy, fz = fk._fquat[slot]
        ax, ay, az = _qrot(fw, fx, fy, fz, axis[0], axis[1], axis[2])
        if kind == _KIND_HINGE:
            ox, oy, oz = fk._fpos[slot]
            mx, my, mz = px - ox, py - oy, pz - oz
            jac[0, dof] = ay * mz - az * my
            jac[1, dof] = az * mx - ax * mz
            jac[2, dof] = ax * my - ay * mx
        else:  # slide
            jac[0, dof] = ax
            jac[1, dof] = ay
            jac[2, dof] = az
    return jac


@dataclass
class CollisionReport:
    min_distance: float
    gradient: np.ndarray                  # d(min_distance)/dq, length dof
    witness: tuple[int, int] | None       # collision sphere indices


def eligible_sphere_pairs(model: RobotModel) -> list[tuple[int, int]]:
    """Sphere pairs on distinct, non-adjacent links.

    Pairs sharing a joint (and spheres on one link) are exempt; otherwise
    every articulated model would self-collide at rest.
    """
    return list(_program(model).eligible_pairs)


def _chain_point(prog: _FkProgram, q, base, link: int, lx, ly, lz):
    """World position of a link-local point via its ancestor chain only."""
    if base is None:
        bw, bx, by, bz = 1.0, 0.0, 0.0, 0.0
        tx, ty, tz = 0.0, 0.0, 0.0
    else:
        tx, ty, tz = float(base.pos[0]), float(base.pos[1]), float(base.pos[2])
        bw, bx, by, bz = (float(base.quat[0]), float(base.quat[1]),
                          float(base.quat[2]), float(base.quat[3]))
    for slot in prog.link_chain[link]:
        kind, _parent, _child, opos, oquat, axis, dof, _ji = prog.entries[slot]
        rx, ry, rz = _qrot(bw, bx, by, bz, opos[0], opos[1], opos[2])
        tx, ty, tz = tx + rx, ty + ry, tz + rz
        bw, bx, by, bz = _qmul(bw, bx, by, bz, oquat[0], oquat[1], oquat[2], oquat[3])
        if kind == _KIND_HINGE:
            half = 0.5 * q[dof]
            c, s = cos(half), sin(half)
            bw, bx, by, bz = _qmul(bw, bx, by, bz, c, s * axis[0], s * axis[1], s * axis[2])
        elif kind == _KIND_SLIDE:
            d = q[dof]
            mx, my, mz = _qrot(bw, bx, by, bz, axis[0] * d, axis[1] * d, axis[2] * d)
            tx, ty, tz = tx + mx, ty + my, tz + mz
    rx, ry, rz = _qrot(bw, bx, by, bz, lx, ly, lz)
    return tx + rx, ty + ry, tz + rz


def _pair_distance(prog: _FkProgram, q, base, pair: tuple[int, int]) -> float:
    a, b = pair
    la, ax, ay, az, ra = prog.spheres[a]
    lb, bx, by, bz, rb = prog.spheres[b]
    pa = _chain_point(prog, q, base, la, ax, ay, az)
    pb = _chain_point(prog, q, base, lb, bx, by, bz)
    dx, dy, dz = pa[0] - pb[0], pa[1] - pb[1], pa[2] - pb[2]
    return sqrt(dx * dx + dy * dy + dz * dz) - ra - rb


def min_distance_only(model: RobotModel, q: np.ndarray,
                      base: Transform | None = None,
                      fk: FkResult | None = None) -> float:
    """Just the clearance value; the cheap everyday-tick query."""
    if fk is None:
        fk = forward_kinematics(model, q, base)
    prog = fk._prog
    if not prog.eligible_pairs:
        return inf
    centers = []
    for link, cx, cy, cz, r in prog.spheres:
        qw, qx, qy, qz = fk._quat[link]
        ox, oy, oz = _qrot(qw, qx, qy, qz, cx, cy, cz)
        bx, by, bz = fk._pos[link]
        centers.append((bx + ox, by + oy, bz + oz, r))
    best = inf
    for a, b in prog.eligible_pairs:
        xa, ya, za, ra = centers[a]
        xb, yb, zb, rb = centers[b]
        dx, dy, dz = xa - xb, ya - yb, za - zb
        d = sqrt(dx * dx + dy * dy + dz * dz) - ra - rb
        if d < best:
            best = d
    return best


def min_self_distance(model: RobotModel, q: np.ndarray,
                      base: Transform | None = None,
                      fk: FkResult | None = None) -> CollisionReport:
    """Signed clearance between the closest eligible sphere pair.

    The gradient is a central finite difference of the witness pair's
    distance (the min is nonsmooth exactly at witness switches, where any
    subgradient serves equally well for the safety constraint). Dofs off
    both witness chains get exact zeros.
    """
    q = model.check_q(q)
    if fk is None:
        fk = forward_kinematics(model, q, base)
    prog = fk._prog
    if not prog.eligible_pairs:
        return CollisionReport(inf, np.zeros(model.dof), None)

    centers = [fk.sphere_center(i) for i in range(len(prog.spheres))]
    best = None
    best_d = inf
    for a, b in prog.eligible_pairs:
        d = float(np.linalg.norm(centers[a] - centers[b])
                  - prog.spheres[a][4] - prog.spheres[b][4])
        if d < best_d:
            best_d = d
            best = (a, b)

    qt = list(float(v) for v in q)
    grad = np.zeros(model.dof)
    for i in prog.pair_dofs[best]:
        qi = qt[i]
        qt[i] = qi + FD_STEP
        hi = _pair_distance(prog, qt, base, best)
        qt[i] = qi - FD_STEP
        lo = _pair_distance(prog, qt, base, best)
        qt[i] = qi
        grad[i] = (hi - lo) / (2.0 * FD_STEP)
    return CollisionReport(best_d, grad, best)
